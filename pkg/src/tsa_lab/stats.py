"""Per-class feature statistics for semantic augmentation.

Two estimators are provided. :class:`MemoryModule` caches the latest feature
and (pseudo-)label of every sample in both domains and recomputes class
statistics from the cache. :class:`IterativeState` accumulates batch
statistics over the whole history with the running mean/covariance merge.
"""
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionError, UndefinedBias
from .network import forward, softmax

SOURCE_SLOT = 0
TARGET_SLOT = 1


@dataclass
class MemoryModule:
    features: np.ndarray
    labels: np.ndarray
    domain: np.ndarray
    initialized: np.ndarray

    @classmethod
    def empty(cls, n_source, n_target, feature_dim):
        n = n_source + n_target
        domain = np.r_[np.full(n_source, SOURCE_SLOT), np.full(n_target, TARGET_SLOT)]
        return cls(np.zeros((n, feature_dim)), np.full(n, -1, dtype=np.int64),
                   domain.astype(np.int8), np.zeros(n, dtype=bool))

    @property
    def n_source(self):
        return int(np.count_nonzero(self.domain == SOURCE_SLOT))

    def target_slots(self, target_indices):
        """Slot numbers of target rows ``target_indices``."""
        return self.n_source + np.asarray(target_indices, dtype=np.int64)


def pseudo_label(probs):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=1)


def fresh_features(params, source, target):
    """Features of every source and target row under the current model, plus
    source labels and target pseudo-labels, in memory-slot order."""
    rs = forward(params, source.inputs)
    rt = forward(params, target.inputs)
    feats = np.vstack([rs.features, rt.features])
    labels = np.r_[source.labels, pseudo_label(softmax(rt.logits))]
    return feats, labels


def memory_init(source, target, params):
    mem = MemoryModule.empty(len(source), len(target), params.feature_dim)
    feats, labels = fresh_features(params, source, target)
    memory_update(mem, np.arange(len(labels)), feats, labels)
    return mem


def memory_update(mem, indices, features, labels):
    """Overwrite the addressed slots in place (last write wins for repeated
    indices) and return ``mem``."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size == 0:
        return mem
    n = mem.features.shape[0]
    if indices.min() < 0 or indices.max() >= n:
        raise IndexError(f"slot index out of range [0, {n})")
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (indices.size, mem.features.shape[1]):
        raise DimensionError(
            f"features shape {features.shape} does not match "
            f"{(indices.size, mem.features.shape[1])}")
    mem.features[indices] = features
    mem.labels[indices] = labels
    mem.initialized[indices] = True
    return mem


@dataclass
class ClassStats:
    """Per class: source mean, target mean, their difference (target minus
    source), target covariance and sample counts. ``enabled[c]`` is False when
    either domain has no samples of class ``c``; such classes carry zeros."""

    mu_s: np.ndarray
    mu_t: np.ndarray
    delta_mu: np.ndarray
    sigma_t: np.ndarray
    count_s: np.ndarray
    count_t: np.ndarray

    @property
    def enabled(self):
        return (self.count_s > 0) & (self.count_t > 0)

    @property
    def class_count(self):
        return self.mu_s.shape[0]

    @classmethod
    def zeros(cls, class_count, feature_dim):
        return cls(np.zeros((class_count, feature_dim)),
                   np.zeros((class_count, feature_dim)),
                   np.zeros((class_count, feature_dim)),
                   np.zeros((class_count, feature_dim, feature_dim)),
                   np.zeros(class_count, dtype=np.int64),
                   np.zeros(class_count, dtype=np.int64))

    def finalize(self):
        """Recompute ``delta_mu`` and zero out disabled classes."""
        on = self.enabled
        self.delta_mu = np.where(on[:, None], self.mu_t - self.mu_s, 0.0)
        self.sigma_t = np.where(on[:, None, None], self.sigma_t, 0.0)
        return self


def stats_from_arrays(features, labels, is_target, class_count):
    """Class statistics from feature rows tagged by domain."""
    feature_dim = features.shape[1]
    out = ClassStats.zeros(class_count, feature_dim)
    for c in range(class_count):
        src = features[(labels == c) & ~is_target]
        tgt = features[(labels == c) & is_target]
        out.count_s[c] = src.shape[0]
        out.count_t[c] = tgt.shape[0]
        if src.shape[0]:
            out.mu_s[c] = linalg.mean(src)
        if tgt.shape[0]:
            out.mu_t[c] = linalg.mean(tgt)
            out.sigma_t[c] = linalg.covariance(tgt, out.mu_t[c])
    return out.finalize()


def estimate_class_stats(mem, class_count):
    live = mem.initialized
    return stats_from_arrays(mem.features[live], mem.labels[live],
                             mem.domain[live] == TARGET_SLOT, class_count)


def ideal_class_stats(params, source, target):
    """Statistics from a full fresh forward pass of both domains, with target
    pseudo-labels from the same pass. Serves as the reference estimator."""
    feats, labels = fresh_features(params, source, target)
    is_target = np.r_[np.zeros(len(source), bool), np.ones(len(target), bool)]
    return stats_from_arrays(feats, labels, is_target, source.class_count)


@dataclass
class RunningMoments:
    """Running per-class mean/covariance with sample count."""

    mean: np.ndarray
    cov: np.ndarray
    count: np.ndarray

    @classmethod
    def zeros(cls, class_count, feature_dim):
        return cls(np.zeros((class_count, feature_dim)),
                   np.zeros((class_count, feature_dim, feature_dim)),
                   np.zeros(class_count, dtype=np.int64))

    def update(self, features, labels):
        for c in np.unique(labels):
            x = features[labels == c]
            b = x.shape[0]
            eta = b / (self.count[c] + b)
            mu_b = linalg.mean(x)
            cov_b = linalg.covariance(x, mu_b)
            d = self.mean[c] - mu_b
            self.cov[c] = ((1 - eta) * self.cov[c] + eta * cov_b
                           + eta * (1 - eta) * np.outer(d, d))
            self.mean[c] = (1 - eta) * self.mean[c] + eta * mu_b
            self.count[c] += b
        return self


@dataclass
class IterativeState:
    """History-accumulating estimator: source means and target
    means/covariances merged batch by batch."""

    source: RunningMoments
    target: RunningMoments

    @classmethod
    def zeros(cls, class_count, feature_dim):
        return cls(RunningMoments.zeros(class_count, feature_dim),
                   RunningMoments.zeros(class_count, feature_dim))

    def to_class_stats(self):
        s, t = self.source, self.target
        return ClassStats(s.mean.copy(), t.mean.copy(), None, t.cov.copy(),
                          s.count.copy(), t.count.copy()).finalize()


def iterative_update(state, features, labels, domain=TARGET_SLOT):
    """Merge one batch into the running moments of ``domain``.

    Per class present in the batch, with ``eta = B / (N + B)``::

        cov  <- (1-eta) cov + eta cov_b + eta (1-eta) (mu - mu_b)(mu - mu_b)^T
        mu   <- (1-eta) mu + eta mu_b
        N    <- N + B

    The covariance merge uses the mean from before this batch.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    moments = state.target if domain == TARGET_SLOT else state.source
    moments.update(features, labels)
    return state


def estimation_bias(practical, ideal):
    """Mean over classes of ``||delta_mu_p - delta_mu_i||_2`` and of the
    Frobenius distance between target covariances.

    Classes disabled in either estimate are skipped.
    """
    if practical.delta_mu.shape != ideal.delta_mu.shape:
        raise DimensionError("class stats disagree on shape")
    on = practical.enabled & ideal.enabled
    if not on.any():
        raise UndefinedBias("no class is enabled in both estimates")
    dm = np.linalg.norm(practical.delta_mu[on] - ideal.delta_mu[on], axis=1)
    ds = np.linalg.norm(practical.sigma_t[on] - ideal.sigma_t[on], axis=(1, 2))
    return float(dm.mean()), float(ds.mean())
