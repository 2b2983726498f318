"""Two-domain classification datasets: two-moons generation, rotation,
CSV loading/saving and minibatch index sampling."""
import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, EmptyDataset, ParseError

SOURCE = "source"
TARGET = "target"
UNLABELED = -1


@dataclass(frozen=True)
class DomainDataset:
    """Feature rows of one domain.

    ``labels`` holds ``-1`` for unlabeled rows. Target labels, when present,
    are only ever used for evaluation.
    """

    inputs: np.ndarray
    labels: np.ndarray
    domain: str
    class_count: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise EmptyDataset("dataset needs at least one row")
        if labels.shape != (inputs.shape[0],):
            raise DimensionError("labels must have one entry per row")
        if self.domain not in (SOURCE, TARGET):
            raise ValueError(f"unknown domain {self.domain!r}")
        if np.any(labels >= self.class_count) or np.any(labels < UNLABELED):
            raise ValueError("labels out of range")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def is_labeled(self):
        return bool(np.all(self.labels >= 0))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, inputs=self.inputs[indices], labels=self.labels[indices])


def make_moons(n_per_class, noise_sd, rng):
    """Two interleaving half circles in 2D.

    Class 0 is the upper arc ``(cos t, sin t)`` and class 1 the lower shifted
    arc ``(1 - cos t, 0.5 - sin t)`` for ``t`` evenly spaced on ``[0, pi]``.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    t = np.linspace(0.0, np.pi, n_per_class)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.vstack([upper, lower])
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, size=x.shape)
    y = np.repeat([0, 1], n_per_class)
    return DomainDataset(x, y, SOURCE, 2)


def rotate(ds, degrees):
    """Rotate every input about the dataset centroid; the result is tagged as
    the target domain."""
    if ds.dim != 2:
        raise DimensionError(f"rotate needs 2D inputs, got d={ds.dim}")
    if degrees == 0:
        return replace(ds, domain=TARGET)
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    center = ds.inputs.mean(axis=0)
    x = (ds.inputs - center) @ rot.T + center
    return replace(ds, inputs=x, domain=TARGET)


def two_moons_task(n_per_class=150, noise_sd=0.1, degrees=30.0, seed=0):
    """Default adaptation task: noisy moons as source, the same points rotated
    about their centroid as target."""
    source = make_moons(n_per_class, noise_sd, np.random.default_rng(seed))
    return source, rotate(source, degrees)


def load_csv(path, class_count=None):
    """Read a ``domain,label,x1,...,xd`` file.

    Returns ``(source, target)``; either may be ``None`` when the file has no
    rows of that domain. Empty or ``-1`` labels mark unlabeled rows.
    """
    rows = {SOURCE: ([], []), TARGET: ([], [])}
    dim = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path}: file is empty")
        header = [h.strip() for h in header]
        if len(header) < 3 or header[:2] != ["domain", "label"]:
            raise ParseError("header must start with 'domain,label,x1'", 1)
        width = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width + 2:
                raise ParseError(
                    f"expected {width + 2} fields, got {len(row)}", lineno)
            domain = row[0].strip()
            if domain not in rows:
                raise ParseError(f"unknown domain tag {domain!r}", lineno)
            label_text = row[1].strip()
            try:
                label = UNLABELED if label_text == "" else int(label_text)
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if label < UNLABELED:
                raise ParseError(f"invalid label {label}", lineno)
            if domain == SOURCE and label == UNLABELED:
                raise ParseError("source rows must be labeled", lineno)
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite feature value", lineno)
            if dim is None:
                dim = len(values)
            rows[domain][0].append(values)
            rows[domain][1].append(label)
    if dim is None:
        raise EmptyDataset(f"{path}: no data rows")
    if class_count is None:
        class_count = max(max(r[1], default=-1) for r in rows.values()) + 1
        class_count = max(class_count, 1)
    out = []
    for domain in (SOURCE, TARGET):
        x, y = rows[domain]
        out.append(DomainDataset(np.array(x), np.array(y), domain, class_count)
                   if x else None)
    return tuple(out)


def save_csv(path, *datasets):
    """Write datasets in the ``domain,label,x1,...,xd`` format using the
    shortest repr of each float, so a reload is bit-identical."""
    datasets = [d for d in datasets if d is not None]
    if not datasets:
        raise EmptyDataset("nothing to write")
    dim = datasets[0].dim
    if any(d.dim != dim for d in datasets):
        raise DimensionError("datasets disagree on input dimension")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "label"] + [f"x{i + 1}" for i in range(dim)])
        for d in datasets:
            for x, y in zip(d.inputs, d.labels):
                w.writerow([d.domain, int(y)] + [repr(float(v)) for v in x])


def sample_batch(ds, batch_size, rng):
    """Uniform random row indices; without replacement when the batch fits."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(ds)
    return rng.choice(n, size=batch_size, replace=batch_size > n)


def subsample_stratified(ds, rho, rng):
    """Keep a fraction ``rho`` of rows within each class (at least one per
    non-empty class). Unlabeled data is subsampled uniformly."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    if rho == 1:
        return ds
    groups = [np.flatnonzero(ds.labels == c) for c in range(ds.class_count)]
    if not ds.is_labeled:
        groups = [np.arange(len(ds))]
    keep = []
    for idx in groups:
        if idx.size == 0:
            continue
        k = max(1, int(round(rho * idx.size)))
        keep.append(rng.choice(idx, size=k, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)))
