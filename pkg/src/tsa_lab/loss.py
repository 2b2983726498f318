"""Implicit semantic augmentation loss and mutual-information regulariser.

For a source sample with features ``f``, label ``y`` and logits
``yhat = W f + b``, augmented features follow
``N(f + lam * dmu[y], lam * Sigma[y])``. The expected cross-entropy over that
distribution is bounded above by a cross-entropy on shifted logits::

    Z[c] = yhat[c] + lam * (w_c - w_y) . dmu[y]
                   + lam / 2 * (w_c - w_y)^T Sigma[y] (w_c - w_y)

``dmu`` and ``Sigma`` come from detached cached features and are constants
for differentiation; ``W`` enters both correction terms and receives
gradient through them.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .network import log_softmax, softmax


def lambda_schedule(t, T, lambda0):
    """Linear ramp ``(t / T) * lambda0``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    return t / T * lambda0


def _check_labels(labels, class_count):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise IndexError(f"label out of range [0, {class_count})")
    return labels


def _directions(labels, head_W):
    # (n, C, K): w_c - w_{y_i}
    return head_W[None, :, :] - head_W[labels][:, None, :]


def augmented_logits(logits, labels, head_W, stats, lam):
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, head_W.shape[0])
    if lam == 0:
        return logits.copy()
    d = _directions(labels, head_W)
    on = stats.enabled[labels].astype(np.float64)[:, None]
    dmu = stats.delta_mu[labels]
    sig = stats.sigma_t[labels]
    shift = np.einsum("nck,nk->nc", d, dmu)
    quad = np.einsum("nck,nkl,ncl->nc", d, sig, d)
    return logits + on * (lam * shift + 0.5 * lam * quad)


def cross_entropy(logits, labels):
    """Mean negative log-softmax at the labels, and its gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    lsm = log_softmax(logits)
    value = -lsm[np.arange(n), labels].sum() / n
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return float(value), grad / n


@dataclass
class LInf:
    value: float
    grad_Z: np.ndarray
    grad_logits: np.ndarray
    grad_head_W: np.ndarray
    grad_head_b: np.ndarray


def l_inf(logits, labels, head_W, stats, lam):
    """Surrogate loss on augmented logits.

    ``grad_logits`` is dL/dyhat (equal to dL/dZ since Z is yhat plus terms
    free of yhat). ``grad_head_W`` holds only the contribution of the two
    augmentation terms; the usual head gradient comes from backpropagating
    ``grad_logits``. The bias does not appear in the correction terms, so
    ``grad_head_b`` is zero.
    """
    labels = _check_labels(labels, head_W.shape[0])
    Z = augmented_logits(logits, labels, head_W, stats, lam)
    value, gZ = cross_entropy(Z, labels)
    gW = np.zeros_like(head_W)
    if lam != 0:
        on = stats.enabled[labels].astype(np.float64)
        d = _directions(labels, head_W)
        # dZ[i,c]/dw_c = lam * (dmu + Sigma d_ic); dZ[i,c]/dw_y = -(same)
        a = lam * (stats.delta_mu[labels][:, None, :]
                   + np.einsum("nkl,ncl->nck", stats.sigma_t[labels], d))
        weighted = (gZ * on[:, None])[:, :, None] * a
        gW += weighted.sum(axis=0)
        np.add.at(gW, labels, -weighted.sum(axis=1))
    return LInf(value, gZ, gZ, gW, np.zeros(head_W.shape[0]))


def entropy_terms(probs):
    p = np.asarray(probs, dtype=np.float64)
    p_bar = p.mean(axis=0)
    return p_bar, float(xlogy(p_bar, p_bar).sum()), float(-xlogy(p, p).sum(axis=1).mean())


def mi_loss(target_probs):
    """Negative mutual information between inputs and predictions over a
    batch: ``sum_c pbar_c log pbar_c + mean_j H(p_j)`` with ``pbar`` the batch
    mean prediction and ``0 log 0 = 0``.

    Returns ``(value, grad)`` where ``grad`` is w.r.t. the target logits that
    produced ``target_probs`` through a softmax.
    """
    p = np.asarray(target_probs, dtype=np.float64)
    n = p.shape[0]
    p_bar, neg_marginal, cond = entropy_terms(p)
    value = neg_marginal + cond
    # dL/dp_jc = (log pbar_c - log p_jc) / n, pushed through the softmax
    # Jacobian; p * log p is evaluated with xlogy so zero entries stay finite.
    pg = (xlogy(p, p_bar[None, :]) - xlogy(p, p)) / n
    grad = pg - p * pg.sum(axis=1, keepdims=True)
    return float(value), grad


def total_loss(l_inf_value, l_mi_value, beta):
    return l_inf_value + beta * l_mi_value


@dataclass
class LossReport:
    """Loss values for one step and the gradients the runner backpropagates.

    ``grad_logits_target`` already carries the ``beta`` factor.
    ``grad_features_source`` is the direct feature-level term (zero here:
    the correction terms do not depend on the features).
    """

    l_inf: float
    l_mi: float
    total: float
    lam: float
    grad_logits_source: np.ndarray
    grad_features_source: np.ndarray
    grad_head_W: np.ndarray
    grad_head_b: np.ndarray
    grad_logits_target: np.ndarray


def tsa_loss(source_record, source_labels, target_record, stats, lam, beta):
    head_W = source_record.params.head_W
    li = l_inf(source_record.logits, source_labels, head_W, stats, lam)
    mi, g_t = 0.0, None
    if target_record is not None:
        mi, g_t = mi_loss(softmax(target_record.logits))
        g_t = beta * g_t
    return LossReport(li.value, mi, total_loss(li.value, mi, beta), lam,
                      li.grad_logits, np.zeros_like(source_record.features),
                      li.grad_head_W, li.grad_head_b, g_t)
