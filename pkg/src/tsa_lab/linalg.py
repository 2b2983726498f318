"""Dense helpers: sample means, population covariance, Cholesky with jitter
and multivariate normal draws.

Vectors and matrices are plain float64 ``numpy`` arrays.
"""
import numpy as np

from .errors import DimensionError, EmptyClass, SingularCovariance

MAX_JITTER = 1e-4


def _as_samples(samples):
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0 or x.shape[0] == 0:
        raise EmptyClass("cannot summarise an empty sample set")
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"expected a sequence of vectors, got shape {x.shape}")
    return x


def mean(samples):
    """Component-wise arithmetic mean of a non-empty sequence of vectors."""
    x = _as_samples(samples)
    return x.sum(axis=0) / x.shape[0]


def covariance(samples, center):
    """Population covariance ``(1/n) sum (x - center)(x - center)^T``.

    The result is symmetrised by copying the upper triangle onto the lower one,
    so ``S[i, j] == S[j, i]`` holds bit-for-bit.
    """
    x = _as_samples(samples)
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (x.shape[1],):
        raise DimensionError(
            f"center has shape {center.shape}, samples have dim {x.shape[1]}")
    d = x - center
    s = (d.T @ d) / x.shape[0]
    iu = np.triu_indices_from(s, k=1)
    s.T[iu] = s[iu]
    return s


def cholesky(S, jitter=0.0):
    """Lower-triangular factor of ``S + jitter * I``.

    If the factorisation fails, the jitter is escalated by factors of ten up to
    ``MAX_JITTER`` before giving up with :class:`SingularCovariance`.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"cholesky needs a square matrix, got {S.shape}")
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-10):
        raise DimensionError("cholesky needs a symmetric matrix")
    eye = np.eye(S.shape[0])
    j = float(jitter)
    while True:
        try:
            return np.linalg.cholesky(S + j * eye)
        except np.linalg.LinAlgError:
            j = 1e-10 if j <= 0.0 else j * 10.0
            if j > MAX_JITTER * (1 + 1e-12):
                raise SingularCovariance(
                    "matrix is not positive definite even with jitter "
                    f"{MAX_JITTER:g}") from None


def sample_mvn(mean_vec, chol, rng, size=None):
    """Draw ``mean + chol @ z`` with ``z ~ N(0, I)``.

    With ``size=None`` a single vector is returned, otherwise an array of
    shape ``(size, dim)``.
    """
    mean_vec = np.asarray(mean_vec, dtype=np.float64)
    chol = np.asarray(chol, dtype=np.float64)
    if chol.shape != (mean_vec.shape[0], mean_vec.shape[0]):
        raise DimensionError(
            f"chol shape {chol.shape} does not match mean dim {mean_vec.shape[0]}")
    if size is None:
        return mean_vec + chol @ rng.standard_normal(mean_vec.shape[0])
    z = rng.standard_normal((size, mean_vec.shape[0]))
    return mean_vec + z @ chol.T
