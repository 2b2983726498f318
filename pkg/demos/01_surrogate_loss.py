"""Implicit augmentation: the closed-form loss versus explicit sampling.

Run with ``python demos/01_surrogate_loss.py``.
"""
# %% A one-dimensional feature, two classes.
# w = (1, -1), b = 0, f = 0.5, true class 0; the class-0 target mean sits 0.2
# away from the source mean and the target variance is 0.1.
import math

import numpy as np

from tsa_lab import oracle
from tsa_lab.loss import augmented_logits, l_inf
from tsa_lab.stats import ClassStats

W = np.array([[1.0], [-1.0]])
b = np.zeros(2)
f = np.array([[0.5]])
y = np.array([0])
stats = ClassStats.zeros(2, 1)
stats.count_s[:] = stats.count_t[:] = 1
stats.mu_t[0] = [0.2]
stats.sigma_t[0] = [[0.1]]
stats.finalize()

# %% Augmented logits and the surrogate loss for lambda = 1.
logits = f @ W.T + b
print("logits         ", logits)
print("augmented       ", augmented_logits(logits, y, W, stats, 1.0))
bound = l_inf(logits, y, W, stats, 1.0).value
print(f"surrogate loss  {bound:.6f}  (log(1 + e^-1.2) = {math.log1p(math.exp(-1.2)):.6f})")

# %% Sample augmented features explicitly and average the plain cross-entropy.
# The expectation sits below the surrogate: it is an upper bound.
for M in (1_000, 10_000, 100_000):
    est = oracle.monte_carlo_loss(f, y, W, b, stats, 1.0, M, np.random.default_rng(M))
    print(f"M={M:>7}: sampled loss {est.value:.5f} +- {est.std_error:.5f}")

# %% The Gaussian moment identity behind the bound: E[exp(aX)] = exp(a mu + a^2 s / 2).
rng = np.random.default_rng(0)
for a in (-1.0, 0.5, 1.0):
    err = oracle.mgf_check(a, 0.3, 2.0, 1_000_000, rng)
    print(f"a={a:+.1f}: relative error of the sample mean {err:.2e}")

# %% Many random problems at once (what `tsa-lab verify` runs).
rows = oracle.run_bound_suite(20, 20_000, seed=1)
print(f"bound holds on {sum(r['holds'] for r in rows)}/{len(rows)} random instances; "
      f"smallest margin {min(r['margin'] for r in rows):.4f}")
