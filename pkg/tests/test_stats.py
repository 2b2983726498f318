import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsa_lab import network as nn
from tsa_lab import stats as S
from tsa_lab.dataset import DomainDataset, two_moons_task
from tsa_lab.errors import UndefinedBias


def _mem(n_s=3, n_t=2, K=2):
    return S.MemoryModule.empty(n_s, n_t, K)


def test_pseudo_label_ties_and_examples():
    assert S.pseudo_label([[0.1, 0.7, 0.2]]).tolist() == [1]
    assert S.pseudo_label([[0.5, 0.5]]).tolist() == [0]
    assert S.pseudo_label(np.eye(4)[[2, 0, 3]]).tolist() == [2, 0, 3]


def test_memory_init():
    src, tgt = two_moons_task(n_per_class=5)
    src = src.subset([0, 1, 9])
    tgt = tgt.subset([0, 9])
    p = nn.init_params(2, (8, 4), 2, np.random.default_rng(0))
    mem = S.memory_init(src, tgt, p)
    assert mem.features.shape == (5, 4) and mem.initialized.all()
    again = S.memory_init(src, tgt, p)
    assert np.array_equal(mem.features, again.features)
    assert np.array_equal(mem.labels, again.labels)
    assert mem.labels[:3].tolist() == src.labels.tolist()


def test_memory_update_basics():
    mem = _mem()
    before = mem.features.copy()
    S.memory_update(mem, [], np.zeros((0, 2)), [])
    assert np.array_equal(mem.features, before)
    S.memory_update(mem, [0], [[1.0, 2.0]], [1])
    S.memory_update(mem, [0], [[3.0, 4.0]], [0])
    assert mem.features[0].tolist() == [3.0, 4.0] and mem.labels[0] == 0
    with pytest.raises(IndexError):
        S.memory_update(mem, [5], [[0.0, 0.0]], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 9), max_size=10), st.integers(0, 2**32 - 1))
def test_memory_update_touches_only_addressed_slots(idx, seed):
    rng = np.random.default_rng(seed)
    mem = S.MemoryModule.empty(6, 4, 3)
    S.memory_update(mem, np.arange(10), rng.normal(size=(10, 3)), rng.integers(0, 2, 10))
    before = mem.features.copy()
    new = rng.normal(size=(len(idx), 3))
    S.memory_update(mem, idx, new, np.zeros(len(idx), int))
    untouched = np.setdiff1d(np.arange(10), idx)
    assert np.array_equal(mem.features[untouched], before[untouched])
    for k, i in enumerate(idx):
        if i not in idx[k + 1:]:
            assert np.array_equal(mem.features[i], new[k])


def test_estimate_class_stats_hand_example():
    mem = S.MemoryModule.empty(1, 1, 2)
    S.memory_update(mem, [0, 1], [[1.0, 0.0], [2.0, 0.0]], [0, 0])
    cs = S.estimate_class_stats(mem, 2)
    assert cs.delta_mu[0].tolist() == [1.0, 0.0]
    assert not cs.sigma_t[0].any()
    assert cs.enabled.tolist() == [True, False]
    assert not cs.delta_mu[1].any() and not cs.sigma_t[1].any()


def test_identical_caches_zero_delta(rng):
    mem = S.MemoryModule.empty(6, 6, 3)
    f = rng.normal(size=(6, 3))
    y = np.array([0, 1, 2, 0, 1, 2])
    S.memory_update(mem, np.arange(12), np.vstack([f, f]), np.r_[y, y])
    cs = S.estimate_class_stats(mem, 3)
    assert not cs.delta_mu.any()
    assert all(np.array_equal(s, s.T) for s in cs.sigma_t)


def test_iterative_first_batch_is_batch_statistics(rng):
    state = S.IterativeState.zeros(2, 3)
    x = rng.normal(size=(7, 3))
    y = np.array([0, 0, 0, 1, 1, 1, 1])
    S.iterative_update(state, x, y)
    for c in (0, 1):
        xc = x[y == c]
        mu = xc.mean(axis=0)
        assert np.allclose(state.target.mean[c], mu, rtol=0, atol=1e-15)
        assert np.allclose(state.target.cov[c], np.cov(xc.T, bias=True), rtol=0, atol=1e-14)
        assert state.target.count[c] == (y == c).sum()


def test_iterative_absent_class_unchanged(rng):
    state = S.IterativeState.zeros(3, 2)
    S.iterative_update(state, rng.normal(size=(4, 2)), [0, 1, 2, 2])
    snap = state.target.mean[2].copy(), state.target.cov[2].copy()
    S.iterative_update(state, rng.normal(size=(4, 2)), [0, 0, 1, 1])
    assert np.array_equal(state.target.mean[2], snap[0])
    assert np.array_equal(state.target.cov[2], snap[1])
    assert state.target.count[2] == 2


def test_iterative_equal_batches_same_statistics():
    batch = np.array([[1.0, 2.0], [3.0, 0.0], [2.0, 1.0]])
    state = S.IterativeState.zeros(1, 2)
    S.iterative_update(state, batch, [0, 0, 0])
    S.iterative_update(state, batch, [0, 0, 0])
    assert np.allclose(state.target.mean[0], [2.0, 1.0])
    assert np.allclose(state.target.cov[0], np.cov(batch.T, bias=True))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_iterative_matches_pooled_statistics(sizes, seed):
    # pooled-statistics oracle: merging batches equals statistics of the concatenation
    rng = np.random.default_rng(seed)
    batches = [rng.normal(loc=i, size=(n, 3)) for i, n in enumerate(sizes)]
    state = S.IterativeState.zeros(1, 3)
    for b in batches:
        S.iterative_update(state, b, np.zeros(len(b), int))
    allx = np.vstack(batches)
    assert np.allclose(state.target.mean[0], allx.mean(axis=0), atol=1e-10)
    assert np.allclose(state.target.cov[0], np.cov(allx.T, bias=True), atol=1e-10)
    assert state.target.count[0] == len(allx)


def _stats_with(delta, sigma):
    cs = S.ClassStats.zeros(1, len(delta))
    cs.count_s[:] = 1
    cs.count_t[:] = 1
    cs.mu_t = np.array([delta], dtype=float)
    cs.sigma_t = np.array([sigma], dtype=float)
    return cs.finalize()


def test_estimation_bias_examples():
    a = _stats_with([1.0, 1.0], np.eye(2))
    assert S.estimation_bias(a, a) == (0.0, 0.0)
    b = _stats_with([4.0, 5.0], np.eye(2))
    assert S.estimation_bias(b, a)[0] == 5.0
    c = _stats_with([1.0, 1.0], 2 * np.eye(2))
    assert S.estimation_bias(c, a)[1] == pytest.approx(np.sqrt(2), rel=1e-15)
    with pytest.raises(UndefinedBias):
        S.estimation_bias(S.ClassStats.zeros(2, 2), S.ClassStats.zeros(2, 2))


def test_frozen_model_full_pass_equals_ideal():
    src, tgt = two_moons_task()
    p0 = nn.init_params(2, (32, 32), 2, np.random.default_rng(1))
    mem = S.memory_init(src, tgt, p0)
    p = nn.init_params(2, (32, 32), 2, np.random.default_rng(2))
    perm = np.random.default_rng(3).permutation(len(src))
    for s in range(0, len(src), 32):
        i = perm[s:s + 32]
        S.memory_update(mem, i, nn.forward(p, src.inputs[i]).features, src.labels[i])
        r = nn.forward(p, tgt.inputs[i])
        S.memory_update(mem, mem.target_slots(i), r.features, S.pseudo_label(r.logits))
    got = S.estimate_class_stats(mem, 2)
    ideal = S.ideal_class_stats(p, src, tgt)
    for name in ("mu_s", "mu_t", "delta_mu", "sigma_t", "count_s", "count_t"):
        assert np.array_equal(getattr(got, name), getattr(ideal, name)), name
