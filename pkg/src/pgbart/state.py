"""Full Gibbs state of a sum-of-trees model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import Dataset, DecisionTree, fit_from_index, predict_tree, training_index


@dataclass
class EnsembleState:
    """``m`` trees, their leaf parameters and the noise variance.

    ``fits`` caches the per-tree training predictions (shape ``(m, N)``); the
    Gibbs sweep keeps it in sync, anything else should call
    :meth:`refresh_fits` after mutating trees or leaf parameters.
    Everything is in scaled-label units.
    """

    trees: list[DecisionTree]
    leaf_params: list[dict[str, float]]
    sigma2: float
    iteration: int = 0
    fits: np.ndarray | None = None

    def __post_init__(self):
        if len(self.trees) != len(self.leaf_params):
            raise ValueError("need one leaf-parameter map per tree")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def m(self) -> int:
        return len(self.trees)

    def refresh_fits(self, dataset: Dataset) -> np.ndarray:
        self.fits = np.vstack([
            fit_from_index(training_index(tree, dataset), tree, params, dataset.n)
            for tree, params in zip(self.trees, self.leaf_params)
        ])
        return self.fits

    def train_fit(self, dataset: Dataset) -> np.ndarray:
        if self.fits is None or self.fits.shape != (self.m, dataset.n):
            self.refresh_fits(dataset)
        return self.fits.sum(axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for tree, params in zip(self.trees, self.leaf_params):
            out += predict_tree(tree, params, X)
        return out

    def total_leaves(self) -> int:
        return sum(tree.n_leaves() for tree in self.trees)

    def copy(self) -> EnsembleState:
        return EnsembleState(
            trees=[DecisionTree(dict(t.splits), t.index) for t in self.trees],
            leaf_params=[dict(p) for p in self.leaf_params],
            sigma2=self.sigma2,
            iteration=self.iteration,
            fits=None if self.fits is None else self.fits.copy(),
        )
