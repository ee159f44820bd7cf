"""Dataset ingestion, label scaling, the hypercube benchmark and prediction output."""

from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .state import EnsembleState
from .tree import Dataset, LabelTransform

# beta_s giving roughly 2**D expected leaves on hypercube-D
HYPERCUBE_BETA = {2: 1.0, 3: 0.5, 4: 0.4, 5: 0.3, 7: 0.25}


class DataFormatError(ValueError):
    pass


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: int | str | None = None) -> Dataset:
    """Read a numeric CSV; one column is the label, the rest are features.

    A first row containing any non-numeric cell is taken as a header.
    ``label_column`` is a header name or 0-based column index (negative
    indices allowed); by default the last column is the label.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0]) if header is None else len(header)
    if width < 2:
        raise DataFormatError(f"{path}: need at least one feature and one label column")

    if label_column is None:
        label = width - 1
    elif isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r}")
        label = header.index(label_column)
    else:
        label = int(label_column)
        if not -width <= label < width:
            raise DataFormatError(f"{path}: label column {label} out of range for {width} columns")
        label %= width

    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        lineno = first_line + i
        if len(row) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}:{j + 1}: non-numeric value {cell!r}") from None
    if not np.all(np.isfinite(values)):
        i, j = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(f"{path}:{first_line + i}:{j + 1}: non-finite value")
    features = [j for j in range(width) if j != label]
    names = [header[j] for j in features] if header is not None else None
    return Dataset(values[:, features], values[:, label], feature_names=names)


def write_csv(dataset: Dataset, path, label_name: str = "y") -> None:
    """Write features and original-unit labels with a header row."""
    names = dataset.feature_names or [f"x{j + 1}" for j in range(dataset.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, label_name])
        for x, y in zip(dataset.X, dataset.y_original):
            writer.writerow([*(repr(float(v)) for v in x), repr(float(y))])


def scale_labels(dataset: Dataset) -> tuple[Dataset, LabelTransform]:
    """Shift and rescale labels so they span exactly ``[-0.5, 0.5]``."""
    y = dataset.y_original
    lo, hi = float(y.min()), float(y.max())
    if not hi > lo:
        raise ValueError("labels are constant; cannot scale to [-0.5, 0.5]")
    transform = LabelTransform(shift=0.5 * (lo + hi), scale=hi - lo)
    scaled = transform.forward(y)
    # pin the extremes so the span is exact despite rounding
    scaled[y == lo] = -0.5
    scaled[y == hi] = 0.5
    return Dataset(dataset.X, scaled, transform, dataset.feature_names), transform


def apply_transform(dataset: Dataset, transform: LabelTransform) -> Dataset:
    """Express ``dataset`` labels in the units of an existing transform (e.g. test data)."""
    return Dataset(dataset.X, transform.forward(dataset.y_original), transform, dataset.feature_names)


@dataclass(frozen=True)
class HypercubeSpec:
    d: int
    points_per_vertex: int = 10
    offset_sd: float = 0.1
    value_sd: float = 3.0
    noise_sd: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if self.points_per_vertex < 1:
            raise ValueError("points_per_vertex must be at least 1")
        if not (self.offset_sd > 0 and self.value_sd > 0 and self.noise_sd > 0):
            raise ValueError("all standard deviations must be positive")


@dataclass
class HypercubeData:
    train: Dataset
    test: Dataset
    vertices: np.ndarray
    values: np.ndarray
    train_f: np.ndarray
    test_f: np.ndarray


def gen_hypercube(spec: HypercubeSpec) -> HypercubeData:
    """Noisy piecewise-constant data clustered around the vertices of ``[-1, 1]^D``.

    Each vertex gets a value ``f ~ N(0, value_sd^2)`` shared by train and test;
    points are ``vertex + N(0, offset_sd^2 I)`` with labels ``f + N(0, noise_sd^2)``.
    """
    rng = np.random.default_rng(spec.seed)
    vertices = np.array(list(itertools.product([-1.0, 1.0], repeat=spec.d)))
    values = rng.normal(0.0, spec.value_sd, len(vertices))
    which = np.repeat(np.arange(len(vertices)), spec.points_per_vertex)

    def draw():
        X = vertices[which] + rng.normal(0.0, spec.offset_sd, (len(which), spec.d))
        f = values[which]
        y = f + rng.normal(0.0, spec.noise_sd, len(which))
        return Dataset(X, y), f

    train, train_f = draw()
    test, test_f = draw()
    return HypercubeData(train, test, vertices, values, train_f, test_f)


def hypercube_metadata(spec: HypercubeSpec, beta_s: float | None = None) -> dict[str, object]:
    """Flat metadata for a generated dataset, including the matching BART settings."""
    meta: dict[str, object] = {f"hypercube.{k}": v for k, v in asdict(spec).items()}
    if beta_s is None:
        beta_s = HYPERCUBE_BETA.get(spec.d)
    meta["m"] = 1
    meta["alpha_s"] = 0.95
    if beta_s is not None:
        meta["beta_s"] = beta_s
    return meta


def write_keyvalue(path, items: dict[str, object]) -> None:
    with open(path, "w") as fh:
        for key, value in items.items():
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key}={value}\n")


def read_keyvalue(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def predict(
    samples: EnsembleState | Iterable[EnsembleState],
    X,
    transform: LabelTransform | None = None,
    n_features: int | None = None,
) -> np.ndarray:
    """Posterior-mean sum-of-trees prediction in original label units.

    ``n_features`` is the training dimension; when given, ``X`` must match it.
    """
    if isinstance(samples, EnsembleState):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one posterior sample")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} columns, the model was trained on {n_features}")
    for state in samples:
        for tree in state.trees:
            if tree.splits and max(k for k, _ in tree.splits.values()) >= X.shape[1]:
                raise ValueError(f"X has {X.shape[1]} columns but the trees split on more")
    out = np.mean([state.predict(X) for state in samples], axis=0)
    return transform.inverse(out) if transform is not None else out
