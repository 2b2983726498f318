"""Training loop and experiment harnesses.

One training iteration, in order: set the augmentation strength, sample a
source and a target batch, forward both, pseudo-label the target batch,
write both batches into the memory module, re-estimate class statistics,
then take one SGD step on the surrogate loss plus the weighted MI term.
"""
import csv
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import dataset as ds_mod
from . import network as nn
from . import stats as st
from .errors import ConfigError, DimensionError, EvalError, TrainingDiverged
from .loss import lambda_schedule, tsa_loss

METRICS_COLUMNS = ["iter", "lambda", "loss_total", "loss_inf", "loss_mi",
                   "src_acc", "tgt_acc", "bias_mu", "bias_sigma"]
BIAS_COLUMNS = ["epoch", "bias_mu_memory", "bias_sigma_memory",
                "bias_mu_iterative", "bias_sigma_iterative"]


@dataclass
class TrainConfig:
    lambda0: float = 0.25
    beta: float = 0.1
    total_iters: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    hidden_widths: tuple = (32, 32)
    seed: int = 0
    stats_refresh_k: int = 1
    estimator: str = "memory"
    rho: float = 1.0
    eval_interval: int = 50

    def validate(self):
        problems = []
        if not self.lambda0 >= 0:
            problems.append("lambda0 must be >= 0")
        if not self.beta >= 0:
            problems.append("beta must be >= 0")
        if self.total_iters < 1:
            problems.append("total_iters must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            problems.append("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must lie in [0, 1)")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            problems.append("hidden_widths must be non-empty positive counts")
        if self.stats_refresh_k < 1:
            problems.append("stats_refresh_k must be >= 1")
        if self.estimator not in ("memory", "iterative"):
            problems.append("estimator must be 'memory' or 'iterative'")
        if not 0 < self.rho <= 1:
            problems.append("rho must lie in (0, 1]")
        if self.eval_interval < 1:
            problems.append("eval_interval must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @classmethod
    def from_mapping(cls, values):
        """Build from string values (config file / CLI), ignoring ``None``."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if raw is None:
                continue
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            default = known[name].default
            try:
                if isinstance(raw, str):
                    if isinstance(default, tuple):
                        raw = tuple(int(v) for v in raw.replace(",", " ").split())
                    elif isinstance(default, bool):
                        raw = raw.lower() in ("1", "true", "yes")
                    elif isinstance(default, int):
                        raw = int(raw)
                    elif isinstance(default, float):
                        raw = float(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
            kwargs[name] = raw
        return cls(**kwargs)


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


@dataclass
class MetricsRow:
    iter: int
    lam: float
    loss_total: float
    loss_inf: float
    loss_mi: float
    src_acc: float
    tgt_acc: float
    bias_mu: float
    bias_sigma: float

    def as_list(self):
        return list(asdict(self).values())


@dataclass
class TrainResult:
    params: nn.ModelParams
    metrics: list
    bias: list = field(default_factory=list)


pseudo_label = st.pseudo_label


def predict(params, inputs):
    return st.pseudo_label(nn.forward(params, inputs).logits)


def evaluate(params, ds):
    """Fraction of rows whose argmax prediction matches the label."""
    if not ds.is_labeled:
        raise EvalError("cannot evaluate on unlabeled rows")
    return float(np.mean(predict(params, ds.inputs) == ds.labels))


def _safe_bias(practical, ideal):
    try:
        return st.estimation_bias(practical, ideal)
    except st.UndefinedBias:
        return float("nan"), float("nan")


def train(source, target, config, track_bias=False):
    """Run the adaptation loop; returns a :class:`TrainResult`.

    Target labels are read only for accuracy reporting. With ``track_bias``
    the history-accumulating estimator is run alongside the memory module and
    both are compared with a fresh full-data estimate once per epoch.
    """
    config.validate()
    if source.dim != target.dim:
        raise DimensionError("source and target input dims differ")
    C = source.class_count
    rng = np.random.default_rng(config.seed)
    target_train = target
    if config.rho < 1:
        target_train = ds_mod.subsample_stratified(
            target, config.rho, np.random.default_rng([config.seed, 1]))
    params = nn.init_params(source.dim, config.hidden_widths, C, rng)
    opt = nn.OptimizerState.zeros_like(params, config.learning_rate, config.momentum)

    mem = st.memory_init(source, target_train, params)
    use_iterative = config.estimator == "iterative"
    iterative = None
    if use_iterative or track_bias:
        iterative = st.IterativeState.zeros(C, params.feature_dim)
        n_s = len(source)
        st.iterative_update(iterative, mem.features[:n_s], mem.labels[:n_s], st.SOURCE_SLOT)
        st.iterative_update(iterative, mem.features[n_s:], mem.labels[n_s:], st.TARGET_SLOT)
    stats = iterative.to_class_stats() if use_iterative else st.estimate_class_stats(mem, C)

    B, T = config.batch_size, config.total_iters
    epoch_len = math.ceil(max(len(source), len(target_train)) / B)
    bias_rows = []
    if track_bias:
        bias_rows.append(_bias_row(0, params, source, target_train, mem, iterative, C))
    metrics = []
    for t in range(1, T + 1):
        lam = lambda_schedule(t, T, config.lambda0)
        i_s = ds_mod.sample_batch(source, B, rng)
        i_t = ds_mod.sample_batch(target_train, B, rng)
        ys = source.labels[i_s]
        rs = nn.forward(params, source.inputs[i_s])
        rt = nn.forward(params, target_train.inputs[i_t])
        yt = st.pseudo_label(nn.softmax(rt.logits))

        st.memory_update(mem, i_s, rs.features, ys)
        st.memory_update(mem, mem.target_slots(i_t), rt.features, yt)
        if iterative is not None:
            st.iterative_update(iterative, rs.features, ys, st.SOURCE_SLOT)
            st.iterative_update(iterative, rt.features, yt, st.TARGET_SLOT)
        if t % config.stats_refresh_k == 0:
            stats = (iterative.to_class_stats() if use_iterative
                     else st.estimate_class_stats(mem, C))

        rep = tsa_loss(rs, ys, rt, stats, lam, config.beta)
        if not np.isfinite(rep.total):
            raise TrainingDiverged(f"non-finite loss at iteration {t}")
        grads = nn.backward(rs, rep.grad_logits_source, rep.grad_features_source)
        grads[-2] = grads[-2] + rep.grad_head_W
        grads[-1] = grads[-1] + rep.grad_head_b
        if config.beta != 0:
            for g, gt in zip(grads, nn.backward(rt, rep.grad_logits_target)):
                g += gt
        nn.sgd_step(params, grads, opt)

        if t % config.eval_interval == 0 or t == T:
            ideal = st.ideal_class_stats(params, source, target_train)
            b_mu, b_sig = _safe_bias(stats, ideal)
            tgt_acc = evaluate(params, target) if target.is_labeled else float("nan")
            metrics.append(MetricsRow(t, lam, rep.total, rep.l_inf, rep.l_mi,
                                      evaluate(params, source), tgt_acc, b_mu, b_sig))
        if track_bias and t % epoch_len == 0:
            bias_rows.append(_bias_row(t // epoch_len, params, source, target_train,
                                       mem, iterative, C))
    return TrainResult(params, metrics, bias_rows)


def _bias_row(epoch, params, source, target, mem, iterative, C):
    ideal = st.ideal_class_stats(params, source, target)
    m_mu, m_sig = _safe_bias(st.estimate_class_stats(mem, C), ideal)
    i_mu, i_sig = _safe_bias(iterative.to_class_stats(), ideal)
    return [epoch, m_mu, m_sig, i_mu, i_sig]


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def write_metrics_csv(metrics, path):
    _write_rows(path, METRICS_COLUMNS, [m.as_list() for m in metrics])


def bias_experiment(source, target, config, path=None):
    """Train with both estimators tracked; rows follow :data:`BIAS_COLUMNS`."""
    result = train(source, target, config, track_bias=True)
    if path is not None:
        _write_rows(path, BIAS_COLUMNS, result.bias)
    return result


def rho_sweep(source, target, config, rhos=(0.2, 0.4, 0.6, 0.8, 1.0), seeds=None,
              path=None):
    """Target accuracy (on the full target set) per target fraction ``rho``.

    Returns rows ``[rho, mean_acc, acc_seed0, acc_seed1, ...]``.
    """
    seeds = [config.seed] if seeds is None else list(seeds)
    for rho in rhos:
        if not 0 < rho <= 1:
            raise ConfigError(f"rho {rho} outside (0, 1]")
    rows = []
    for rho in rhos:
        accs = [evaluate(train(source, target, replace(config, rho=rho, seed=s)).params,
                         target) for s in seeds]
        rows.append([float(rho), float(np.mean(accs))] + accs)
    if path is not None:
        _write_rows(path, ["rho", "mean_tgt_acc"] + [f"seed{s}" for s in seeds], rows)
    return rows


def dump_boundary(params, bounds, resolution, path=None):
    """Predicted class on an inclusive grid over ``(xmin, xmax, ymin, ymax)``.

    ``resolution`` is a point count per axis (int or ``(nx, ny)``). Returns the
    ``(x, y, pred)`` rows and writes them as CSV when ``path`` is given.
    """
    if params.input_dim != 2:
        raise DimensionError("boundary dumps need a 2D-input model")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    xmin, xmax, ymin, ymax = bounds
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    rows = [[float(x), float(y), int(p)] for (x, y), p in zip(pts, predict(params, pts))]
    if path is not None:
        _write_rows(path, ["x", "y", "pred"], rows)
    return rows


def padded_bounds(*datasets, pad=0.5):
    x = np.vstack([d.inputs for d in datasets])
    lo, hi = x.min(axis=0) - pad, x.max(axis=0) + pad
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
