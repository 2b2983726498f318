"""Brute-force checks for the augmentation loss.

Everything here is deliberately independent of :mod:`tsa_lab.loss`: the
Monte-Carlo estimator samples augmented features explicitly and averages a
plain cross-entropy, so comparing it with the closed-form loss tests the
derivation rather than re-running it.
"""
import csv
from dataclasses import dataclass

import numpy as np

from . import linalg
from .stats import ClassStats

ORACLE_JITTER = 1e-6
VERIFY_COLUMNS = ["instance_id", "lambda", "l_inf", "mc_value", "mc_stderr",
                  "margin", "holds"]


@dataclass
class McEstimate:
    value: float
    std_error: float
    draws: int


def _logits(features, head_W, head_b):
    return features @ head_W.T + head_b


def _ce_rows(logits, labels):
    # per-row -log softmax at the label, via log-sum-exp
    m = logits.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=-1))
    return lse - np.take_along_axis(logits, labels[..., None], axis=-1)[..., 0]


def monte_carlo_loss(features, labels, head_W, head_b, stats, lam, M, rng):
    """Average cross-entropy over ``M`` explicit augmentations per sample.

    Draw ``m`` gives one augmented copy of every sample; its batch-mean loss is
    one observation, and ``std_error`` is the sample std of those observations
    over ``sqrt(M)``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    per_draw = np.zeros(M)
    stochastic = False
    for i in range(n):
        y = labels[i]
        on = bool(stats.enabled[y]) and lam > 0
        center = features[i] + lam * stats.delta_mu[y] if on else features[i]
        cov = lam * stats.sigma_t[y] if on else None
        if cov is None or not np.any(cov):
            loss_i = _ce_rows(_logits(center[None, :], head_W, head_b), labels[i:i + 1])
            per_draw += loss_i[0]
            continue
        stochastic = True
        chol = linalg.cholesky(cov, ORACLE_JITTER)
        draws = linalg.sample_mvn(center, chol, rng, size=M)
        per_draw += _ce_rows(_logits(draws, head_W, head_b), np.full(M, y))
    per_draw /= n
    value = float(per_draw.mean()) if stochastic else float(per_draw[0])
    se = float(per_draw.std(ddof=1) / np.sqrt(M)) if stochastic and M > 1 else 0.0
    return McEstimate(value, se, M)


def closed_form_bound(features, labels, head_W, head_b, stats, lam):
    """Upper bound evaluated straight from its Gaussian moment formula,
    ``mean_i log sum_c E[exp((w_c - w_y) . f~ + b_c - b_y)]``, one sample at a
    time."""
    total = 0.0
    for f, y in zip(np.asarray(features, dtype=np.float64), labels):
        on = bool(stats.enabled[y]) and lam > 0
        mu = f + lam * stats.delta_mu[y] if on else f
        cov = lam * stats.sigma_t[y] if on else np.zeros((f.size, f.size))
        expo = []
        for c in range(head_W.shape[0]):
            d = head_W[c] - head_W[y]
            expo.append(d @ mu + head_b[c] - head_b[y] + 0.5 * d @ cov @ d)
        expo = np.array(expo)
        m = expo.max()
        total += m + np.log(np.exp(expo - m).sum())
    return total / len(labels)


@dataclass
class BoundInstance:
    features: np.ndarray
    labels: np.ndarray
    head_W: np.ndarray
    head_b: np.ndarray
    stats: ClassStats
    lam: float


@dataclass
class BoundReport:
    holds: bool
    l_inf: float
    mc: McEstimate
    margin: float


def random_instance(rng, max_classes=5, max_dim=8, n_samples=4, lam=None,
                    sigma_scale=1.0):
    """Random problem with PSD target covariances and random mean shifts."""
    C = int(rng.integers(2, max_classes + 1))
    K = int(rng.integers(1, max_dim + 1))
    if lam is None:
        lam = float(rng.choice([0.1, 0.25, 1.0]))
    stats = ClassStats.zeros(C, K)
    stats.count_s[:] = 1
    stats.count_t[:] = 1
    stats.mu_s = rng.normal(size=(C, K))
    stats.mu_t = stats.mu_s + rng.normal(size=(C, K))
    A = rng.normal(size=(C, K, K))
    stats.sigma_t = sigma_scale * np.einsum("cij,ckj->cik", A, A) / K
    stats.finalize()
    return BoundInstance(rng.normal(size=(n_samples, K)),
                         rng.integers(0, C, size=n_samples),
                         rng.normal(size=(C, K)), rng.normal(size=C), stats, lam)


def verify_bound(instance, M, rng, bound_fn=None):
    """Compare a Monte-Carlo estimate of the expected loss with the
    closed-form surrogate. The bound holds if the estimate does not exceed it
    by more than three standard errors.

    ``bound_fn(logits, labels, head_W, stats, lam) -> float`` defaults to the
    production surrogate loss.
    """
    if bound_fn is None:
        from .loss import l_inf

        def bound_fn(logits, labels, head_W, stats, lam):
            return l_inf(logits, labels, head_W, stats, lam).value

    inst = instance
    logits = _logits(inst.features, inst.head_W, inst.head_b)
    bound = float(bound_fn(logits, inst.labels, inst.head_W, inst.stats, inst.lam))
    mc = monte_carlo_loss(inst.features, inst.labels, inst.head_W, inst.head_b,
                          inst.stats, inst.lam, M, rng)
    return BoundReport(mc.value <= bound + 3 * mc.std_error, bound, mc,
                       bound - mc.value)


def run_bound_suite(n_instances, M, seed, lambdas=(0.1, 0.25, 1.0)):
    """Bound reports for ``n_instances`` random instances, cycling through
    ``lambdas``, as rows matching :data:`VERIFY_COLUMNS`."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        inst = random_instance(rng, lam=lambdas[k % len(lambdas)])
        rep = verify_bound(inst, M, rng)
        rows.append({"instance_id": k, "lambda": inst.lam, "l_inf": rep.l_inf,
                     "mc_value": rep.mc.value, "mc_stderr": rep.mc.std_error,
                     "margin": rep.margin, "holds": int(rep.holds)})
    return rows


def write_verify_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=VERIFY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def mgf_check(a, mu, sigma, M, rng):
    """Relative error between the sample mean of ``exp(a X)``,
    ``X ~ N(mu, sigma)`` (``sigma`` is the variance), and
    ``exp(a mu + a^2 sigma / 2)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if sigma < 0:
        raise ValueError("sigma is a variance and must be >= 0")
    exact = np.exp(a * mu + 0.5 * a * a * sigma)
    if a == 0 or sigma == 0:
        empirical = np.exp(a * mu)
    else:
        x = mu + np.sqrt(sigma) * rng.standard_normal(M)
        empirical = np.exp(a * x).mean()
    return float(abs(empirical - exact) / exact)


@dataclass
class AuditResult:
    max_rel_error: float
    checked: int
    excluded: int
    worst: tuple = None


KINK_MARGIN = 1e-4


def finite_diff_audit(loss_evaluator, params, epsilon=1e-5, kink_margin=KINK_MARGIN):
    """Compare analytic gradients with central differences, entry by entry.

    ``loss_evaluator(arrays)`` returns ``(value, grads)`` or
    ``(value, grads, pre_activations)``. When pre-activations are reported, an
    entry is skipped if perturbing it moves some pre-activation that sits
    within ``kink_margin`` of zero or changes sign, i.e. the loss is not
    smooth there. Relative error uses ``max(|analytic|, |numeric|, 1e-12)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    arrays = [np.array(a, dtype=np.float64) for a in params]
    base = loss_evaluator(arrays)
    grads = base[1]
    base_pre = base[2] if len(base) > 2 else None
    worst, worst_at, checked, excluded = 0.0, None, 0, 0
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        g = np.asarray(grads[k]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_evaluator(arrays)
            flat[j] = orig - epsilon
            down = loss_evaluator(arrays)
            flat[j] = orig
            if base_pre is not None and _near_kink(base_pre, up[2], down[2], kink_margin):
                excluded += 1
                continue
            numeric = (up[0] - down[0]) / (2 * epsilon)
            err = abs(g[j] - numeric) / max(abs(g[j]), abs(numeric), 1e-12)
            checked += 1
            if err > worst:
                worst, worst_at = err, (k, j, float(g[j]), float(numeric))
    return AuditResult(worst, checked, excluded, worst_at)


def _near_kink(base, up, down, margin):
    for z0, z1, z2 in zip(base, up, down):
        moved = (z1 != z0) | (z2 != z0)
        if not moved.any():
            continue
        near = np.abs(z0) < margin
        flipped = (np.sign(z1) != np.sign(z0)) | (np.sign(z2) != np.sign(z0))
        if np.any(moved & (near | flipped)):
            return True
    return False
