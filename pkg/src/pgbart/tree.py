"""Decision trees with axis-aligned splits and the datasets they are fit to.

Nodes are addressed by binary strings: the root is ``""`` and the children of
``eta`` are ``eta + "0"`` (left) and ``eta + "1"`` (right), so the depth of a
node is the length of its address. Split dimensions are 0-based column indices.
A point goes left at node ``eta`` iff ``x[dim] <= tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

ROOT = ""

Split = tuple[int, float]


def left(node: str) -> str:
    return node + "0"


def right(node: str) -> str:
    return node + "1"


def parent(node: str) -> str:
    if node == ROOT:
        raise ValueError("the root has no parent")
    return node[:-1]


def depth(node: str) -> int:
    return len(node)


def breadth_first_key(node: str) -> tuple[int, str]:
    return (len(node), node)


@dataclass
class LabelTransform:
    """Affine map between original labels and the scaled ``[-0.5, 0.5]`` range."""

    shift: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def forward(self, y):
        return (np.asarray(y, dtype=float) - self.shift) / self.scale

    def inverse(self, y):
        return np.asarray(y, dtype=float) * self.scale + self.shift

    @classmethod
    def identity(cls) -> LabelTransform:
        return cls(0.0, 1.0)


@dataclass(eq=False)
class Dataset:
    """Feature matrix ``X`` (N x D), labels ``y`` and an optional label transform.

    When ``transform`` is set, ``y`` holds the *scaled* labels and
    ``transform.inverse(y)`` recovers the original ones.
    """

    X: np.ndarray
    y: np.ndarray
    transform: LabelTransform | None = None
    feature_names: list[str] | None = None
    _root_bounds: tuple[np.ndarray, np.ndarray] | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        self.y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional, got shape {self.X.shape}")
        n, d = self.X.shape
        if n < 1 or d < 1:
            raise ValueError(f"need N >= 1 and D >= 1, got N={n}, D={d}")
        if self.y.shape != (n,):
            raise ValueError(f"y has shape {self.y.shape}, expected ({n},)")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature values must be finite")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def y_original(self) -> np.ndarray:
        if self.transform is None:
            return self.y
        return self.transform.inverse(self.y)

    def bounds(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension min and max of the points in ``idx``.

        The full index set is cached because every particle starts at the root.
        """
        if len(idx) == self.n:
            if self._root_bounds is None:
                self._root_bounds = (self.X.min(axis=0), self.X.max(axis=0))
            return self._root_bounds
        sub = self.X[idx]
        return sub.min(axis=0), sub.max(axis=0)


@dataclass(eq=False)
class DecisionTree:
    """Finite rooted strictly binary tree with a split rule on every internal node.

    ``splits`` maps each internal node address to ``(dim, tau)``. Trees compare
    equal when their split maps are equal. The optional ``index`` caches the
    training indices of every node; it is only valid for the dataset it was
    built from and never takes part in equality.
    """

    splits: dict[str, Split] = field(default_factory=dict)
    index: dict[str, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for node in self.splits:
            if node != ROOT and parent(node) not in self.splits:
                raise ValueError(f"internal node {node!r} has no internal parent")

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return self.splits == other.splits

    def __hash__(self):
        return hash(tuple(sorted(self.splits.items())))

    def __contains__(self, node: str) -> bool:
        return node == ROOT or node[:-1] in self.splits

    def nodes(self) -> list[str]:
        """All nodes in breadth-first order."""
        out = [ROOT]
        for node in sorted(self.splits, key=breadth_first_key):
            out += [left(node), right(node)]
        return sorted(out, key=breadth_first_key)

    def leaves(self) -> list[str]:
        return [node for node in self.nodes() if node not in self.splits]

    def internal(self) -> list[str]:
        return sorted(self.splits, key=breadth_first_key)

    def is_leaf(self, node: str) -> bool:
        return node in self and node not in self.splits

    def n_leaves(self) -> int:
        return len(self.splits) + 1

    def prunable(self) -> list[str]:
        """Internal nodes whose two children are both leaves."""
        return [
            node
            for node in self.internal()
            if left(node) not in self.splits and right(node) not in self.splits
        ]

    def max_depth(self) -> int:
        return max((depth(node) for node in self.leaves()), default=0)

    def copy(self) -> DecisionTree:
        return DecisionTree(dict(self.splits))

    def __repr__(self):
        rules = ", ".join(f"{n or 'e'}:x{k}<={t:.4g}" for n, (k, t) in sorted(self.splits.items()))
        return f"DecisionTree({rules})"


def leaf_of(tree: DecisionTree, x) -> str:
    """The unique leaf whose block contains ``x``."""
    node = ROOT
    splits = tree.splits
    while node in splits:
        dim, tau = splits[node]
        node = node + ("0" if x[dim] <= tau else "1")
    return node


def response(tree: DecisionTree, params: Mapping[str, float], x) -> float:
    leaf = leaf_of(tree, x)
    try:
        return params[leaf]
    except KeyError:
        raise KeyError(f"no leaf parameter for leaf {leaf!r}") from None


def partition(tree: DecisionTree, X: np.ndarray, idx: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Row indices of ``X`` falling in every node of ``tree``."""
    if idx is None:
        idx = np.arange(X.shape[0])
    out = {ROOT: idx}
    splits = tree.splits
    for node in sorted(splits, key=breadth_first_key):
        dim, tau = splits[node]
        rows = out[node]
        go_left = X[rows, dim] <= tau
        out[left(node)] = rows[go_left]
        out[right(node)] = rows[~go_left]
    return out


def training_index(tree: DecisionTree, dataset: Dataset) -> dict[str, np.ndarray]:
    """Cached per-node training indices for ``tree``."""
    if tree.index is None:
        tree.index = partition(tree, dataset.X)
    return tree.index


def node_data(tree: DecisionTree, node: str, dataset: Dataset) -> np.ndarray:
    if node not in tree:
        raise KeyError(f"node {node!r} is not in the tree")
    return training_index(tree, dataset)[node]


def valid_split_range(dataset: Dataset, tree: DecisionTree, node: str, dim: int) -> tuple[float, float] | None:
    """Half-open interval ``[lo, hi)`` of split locations leaving both children non-empty.

    Returns ``None`` when no such location exists along ``dim``.
    """
    if not 0 <= dim < dataset.d:
        raise ValueError(f"dim must be in [0, {dataset.d}), got {dim}")
    idx = node_data(tree, node, dataset)
    if len(idx) < 2:
        return None
    values = dataset.X[idx, dim]
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return None
    return lo, hi


def predict_tree(tree: DecisionTree, params: Mapping[str, float], X: np.ndarray) -> np.ndarray:
    """Vectorised response of one tree on every row of ``X``."""
    out = np.empty(X.shape[0])
    for node, rows in partition(tree, X).items():
        if node not in tree.splits:
            out[rows] = params[node]
    return out


def fit_from_index(index: Mapping[str, np.ndarray], tree: DecisionTree, params: Mapping[str, float], n: int) -> np.ndarray:
    out = np.empty(n)
    for leaf in tree.leaves():
        out[index[leaf]] = params[leaf]
    return out

