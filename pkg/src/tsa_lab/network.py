"""Feed-forward feature extractor with a linear classification head.

Affine maps in the forward pass use ``einsum`` with ``optimize=False`` rather
than BLAS ``matmul``: BLAS blocking depends on the batch size, so the same row
can come out with different rounding in a batch of 32 and a batch of 600.
Memory-cached features must match a full fresh pass bit for bit.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

CHECKPOINT_MAGIC = "tsa-checkpoint 1"


def _affine(x, w, b):
    return np.einsum("bi,oi->bo", x, w, optimize=False) + b


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class ModelParams:
    """Extractor layers ``[(W, b), ...]`` and the head ``head_W`` (C x K),
    ``head_b`` (C).

    A ReLU sits between consecutive extractor layers; the last extractor layer
    is affine, so features can take either sign.
    """

    layers: list
    head_W: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        width = None
        for w, b in self.layers:
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError("layer weight/bias shapes disagree")
            if width is not None and w.shape[1] != width:
                raise DimensionError("extractor layer widths do not chain")
            width = w.shape[0]
        if self.head_W.ndim != 2 or self.head_b.shape != (self.head_W.shape[0],):
            raise DimensionError("head weight/bias shapes disagree")
        if width is not None and self.head_W.shape[1] != width:
            raise DimensionError("head width must equal the feature width")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[1] if self.layers else self.head_W.shape[1]

    @property
    def feature_dim(self):
        return self.head_W.shape[1]

    @property
    def class_count(self):
        return self.head_W.shape[0]

    def arrays(self):
        """Parameters as a flat list, extractor first, head last."""
        out = []
        for w, b in self.layers:
            out += [w, b]
        return out + [self.head_W, self.head_b]

    def names(self):
        out = []
        for i in range(len(self.layers)):
            out += [f"layer{i}.W", f"layer{i}.b"]
        return out + ["head.W", "head.b"]

    @classmethod
    def from_arrays(cls, arrays):
        *ext, hw, hb = arrays
        layers = [(ext[i], ext[i + 1]) for i in range(0, len(ext), 2)]
        return cls(layers, hw, hb)

    def copy(self):
        return ModelParams.from_arrays([a.copy() for a in self.arrays()])


def init_params(input_dim, hidden_widths, class_count, rng):
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases.

    The last entry of ``hidden_widths`` is the feature dimension K.
    """
    layers = []
    fan_in = input_dim
    for width in hidden_widths:
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in))
        layers.append((w, np.zeros(width)))
        fan_in = width
    head_W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(class_count, fan_in))
    return ModelParams(layers, head_W, np.zeros(class_count))


@dataclass
class ForwardRecord:
    inputs: np.ndarray
    pre_activations: list
    activations: list
    features: np.ndarray
    logits: np.ndarray
    params: ModelParams = field(repr=False)

    @property
    def rectifier_inputs(self):
        """Pre-activations that pass through a ReLU (all but the last layer)."""
        return self.pre_activations[:-1]


def forward(params, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(
            f"inputs of shape {x.shape} do not fit input dim {params.input_dim}")
    pre, act = [], []
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        z = _affine(h, w, b)
        h = z if i == last else relu(z)
        pre.append(z)
        act.append(h)
    logits = _affine(h, params.head_W, params.head_b)
    return ForwardRecord(x, pre, act, h, logits, params)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def backward(record, grad_logits, grad_features=None):
    """Gradients of a scalar loss w.r.t. every parameter.

    ``grad_logits`` is dL/dlogits. ``grad_features`` (optional) is a direct
    dL/dfeatures term, added to what flows back through the head.
    Returns a list aligned with :meth:`ModelParams.arrays`.
    """
    p = record.params
    n = record.inputs.shape[0]
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != (n, p.class_count):
        raise DimensionError(f"grad_logits shape {grad_logits.shape} != {(n, p.class_count)}")
    g_head_W = grad_logits.T @ record.features
    g_head_b = grad_logits.sum(axis=0)
    g = grad_logits @ p.head_W
    if grad_features is not None:
        grad_features = np.asarray(grad_features, dtype=np.float64)
        if grad_features.shape != g.shape:
            raise DimensionError(
                f"grad_features shape {grad_features.shape} != {g.shape}")
        g = g + grad_features
    grads = [None] * (2 * len(p.layers))
    last = len(p.layers) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (record.pre_activations[i] > 0)
        h_in = record.activations[i - 1] if i > 0 else record.inputs
        grads[2 * i] = g.T @ h_in
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = g @ p.layers[i][0]
    return grads + [g_head_W, g_head_b]


@dataclass
class OptimizerState:
    velocity: list
    learning_rate: float
    momentum: float

    @classmethod
    def zeros_like(cls, params, learning_rate, momentum):
        return cls([np.zeros_like(a) for a in params.arrays()], learning_rate, momentum)


def sgd_step(params, grads, state):
    """Heavy-ball SGD: ``v <- m*v + g``; ``p <- p - lr*v``. Updates in place
    and returns ``(params, state)``."""
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise DimensionError("gradient list does not match parameters")
    for p, g, v in zip(arrays, grads, state.velocity):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter {p.shape}")
        v *= state.momentum
        v += g
        p -= state.learning_rate * v
    return params, state


def save_checkpoint(params, path):
    """Text checkpoint: a magic line, then per array a ``name ndim shape...``
    header followed by one row per line, values in 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for name, a in zip(params.names(), params.arrays()):
            m = a.reshape(a.shape[0], -1) if a.ndim == 2 else a.reshape(1, -1)
            fh.write(f"{name} {a.ndim} {' '.join(map(str, a.shape))}\n")
            for row in m:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    arrays, i = [], 1
    while i < len(lines):
        parts = lines[i].split()
        ndim = int(parts[1])
        shape = tuple(int(s) for s in parts[2:2 + ndim])
        nrows = shape[0] if ndim == 2 else 1
        rows = [[float(v) for v in lines[i + 1 + r].split()] for r in range(nrows)]
        arrays.append(np.array(rows, dtype=np.float64).reshape(shape))
        i += 1 + nrows
    return ModelParams.from_arrays(arrays)
