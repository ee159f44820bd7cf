"""Priors, likelihoods and conjugate updates of the BART model.

All densities are returned in log space. Leaf parameters use a normal prior
``N(m_mu, sigma_mu**2)`` and the noise variance an inverse-gamma prior
``IG(nu / 2, nu * lam / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammaincc

from .tree import ROOT, Dataset, DecisionTree, depth, left, right, training_index

if TYPE_CHECKING:
    from .state import EnsembleState

LOG_2PI = math.log(2.0 * math.pi)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BartHyperParams:
    """BART hyperparameters; the defaults are the usual recommended ones."""

    nu: float = 3.0
    q: float = 0.9
    k: float = 2.0
    m: int = 200
    alpha_s: float = 0.95
    beta_s: float = 2.0
    m_mu: float = 0.0
    sigma_hat_mode: str = "unconditional"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0 < self.alpha_s < 1:
            raise ValueError(f"alpha_s must lie in (0, 1), got {self.alpha_s}")
        if not self.beta_s >= 0:
            raise ValueError(f"beta_s must be non-negative, got {self.beta_s}")
        if self.sigma_hat_mode not in ("unconditional", "least_squares"):
            raise ValueError(f"unknown sigma_hat_mode {self.sigma_hat_mode!r}")

    @property
    def sigma_mu(self) -> float:
        return 0.5 / (self.k * math.sqrt(self.m))


@dataclass(frozen=True)
class NoisePrior:
    """Inverse-gamma prior on the noise variance, ``IG(nu/2, nu*lam/2)``."""

    nu: float
    lam: float
    sigma_hat: float = float("nan")
    q: float = float("nan")

    @property
    def shape(self) -> float:
        return 0.5 * self.nu

    @property
    def rate(self) -> float:
        return 0.5 * self.nu * self.lam

    def cdf_sigma(self, s: float) -> float:
        """``Pr(sigma <= s)`` under the prior."""
        return float(gammaincc(self.shape, self.rate / (s * s)))


@dataclass(frozen=True)
class SufficientStats:
    """Count, sum and sum of squares of the residuals in a node."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0

    @classmethod
    def of(cls, values) -> SufficientStats:
        values = np.asarray(values, dtype=float)
        return cls(len(values), float(values.sum()), float(values @ values))

    def __add__(self, other: SufficientStats) -> SufficientStats:
        return SufficientStats(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2)


# -- tree prior ---------------------------------------------------------------


def split_probability(depth: int, has_valid_split: bool, hp: BartHyperParams) -> float:
    if not has_valid_split:
        return 0.0
    return math.exp(log_split_prob(depth, hp))


def log_split_prob(d: int, hp: BartHyperParams) -> float:
    return math.log(hp.alpha_s) - hp.beta_s * math.log1p(d)


def log_stop_prob(d: int, has_valid_split: bool, hp: BartHyperParams) -> float:
    if not has_valid_split:
        return 0.0
    return math.log1p(-math.exp(log_split_prob(d, hp)))


def valid_dims(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.flatnonzero(hi > lo)


def draw_split(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> tuple[int, float, float]:
    """Uniform ``(dim, tau)`` over the valid splits of a node with bounds ``lo, hi``.

    Returns the split and the log proposal density ``log U(dim) + log U(tau | dim)``.
    """
    dims = valid_dims(lo, hi)
    if len(dims) == 0:
        raise ValueError("node has no valid split")
    dim = int(dims[rng.integers(len(dims))])
    a, b = float(lo[dim]), float(hi[dim])
    tau = rng.uniform(a, b)
    while tau >= b:  # guard against rounding up to the excluded endpoint
        tau = rng.uniform(a, b)
    return dim, tau, -math.log(len(dims)) - math.log(b - a)


def log_split_density(lo: np.ndarray, hi: np.ndarray, dim: int, tau: float) -> float:
    """``log U(dim) + log U(tau | dim)``, or ``-inf`` if the split is invalid."""
    a, b = lo[dim], hi[dim]
    if not a <= tau < b:
        return -math.inf
    return -math.log(np.count_nonzero(hi > lo)) - math.log(b - a)


def sample_split(rng: np.random.Generator, dataset: Dataset, tree: DecisionTree, node: str) -> tuple[int, float]:
    lo, hi = dataset.bounds(training_index(tree, dataset)[node])
    dim, tau, _ = draw_split(rng, lo, hi)
    return dim, tau


# -- marginal likelihood ------------------------------------------------------


def _log_ml(n: int, s1: float, s2: float, sigma2: float, m_mu: float, var_mu: float) -> float:
    if n == 0:
        return 0.0
    mean = s1 / n
    ssw = max(s2 - s1 * mean, 0.0)
    return (
        -0.5 * n * (LOG_2PI + math.log(sigma2))
        - 0.5 * math.log1p(n * var_mu / sigma2)
        - 0.5 * ssw / sigma2
        - 0.5 * (mean - m_mu) ** 2 / (var_mu + sigma2 / n)
    )


def log_marginal_leaf(stats: SufficientStats, sigma2: float, hp: BartHyperParams) -> float:
    """Log of the leaf-parameter-integrated likelihood of a node's residuals."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    return _log_ml(stats.n, stats.s1, stats.s2, sigma2, hp.m_mu, hp.sigma_mu**2)


def node_log_marginal(residual: np.ndarray, idx: np.ndarray, sigma2: float, hp: BartHyperParams) -> float:
    n = len(idx)
    if n == 0:
        return 0.0
    r = residual[idx]
    s1 = float(r.sum())
    return _log_ml(n, s1, float(r @ r), sigma2, hp.m_mu, hp.sigma_mu**2)


# -- tree posterior -----------------------------------------------------------


def subtree_log_density(
    splits: dict,
    node: str,
    idx: np.ndarray,
    dataset: Dataset,
    hp: BartHyperParams,
    residual: np.ndarray | None = None,
    sigma2: float | None = None,
) -> float:
    """Log prior (plus leaf marginal likelihoods when ``residual`` is given) of a subtree.

    Returns ``-inf`` as soon as some split leaves a child empty.
    """
    total = 0.0
    stack = [(node, idx)]
    X = dataset.X
    while stack:
        eta, rows = stack.pop()
        d = depth(eta)
        if len(rows) >= 2:
            lo, hi = dataset.bounds(rows)
            has_valid = bool(np.any(hi > lo))
        else:
            has_valid = False
        if eta in splits:
            if not has_valid:
                return -math.inf
            dim, tau = splits[eta]
            dens = log_split_density(lo, hi, dim, tau)
            if dens == -math.inf:
                return -math.inf
            total += log_split_prob(d, hp) + dens
            go_left = X[rows, dim] <= tau
            stack.append((left(eta), rows[go_left]))
            stack.append((right(eta), rows[~go_left]))
        else:
            total += log_stop_prob(d, has_valid, hp)
            if residual is not None:
                total += node_log_marginal(residual, rows, sigma2, hp)
    return total


def log_tree_prior(tree: DecisionTree, dataset: Dataset, hp: BartHyperParams) -> float:
    return subtree_log_density(tree.splits, ROOT, np.arange(dataset.n), dataset, hp)


def log_conditional_posterior(
    tree: DecisionTree, residual: np.ndarray, sigma2: float, dataset: Dataset, hp: BartHyperParams
) -> float:
    """Unnormalised log posterior of one tree given the residual it must explain."""
    residual = np.asarray(residual, dtype=float)
    if residual.shape != (dataset.n,):
        raise ValueError(f"residual must have length {dataset.n}")
    return subtree_log_density(tree.splits, ROOT, np.arange(dataset.n), dataset, hp, residual, sigma2)


# -- noise prior --------------------------------------------------------------


def calibrate_noise_prior(nu: float, q: float, sigma_hat: float, tol: float = 1e-10, max_iter: int = 4000) -> NoisePrior:
    """Choose ``lam`` so that ``Pr(sigma <= sigma_hat) = q`` under ``IG(nu/2, nu*lam/2)``.

    The CDF at ``sigma_hat`` decreases in ``lam``; a bracket is grown
    geometrically from ``lam = 1`` and then bisected.
    """
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if not sigma_hat > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma_hat}")

    def excess(lam):
        return NoisePrior(nu, lam).cdf_sigma(sigma_hat) - q

    lo = hi = 1.0
    for _ in range(2000):
        if excess(hi) < 0:
            break
        hi *= 2.0
    else:
        raise CalibrationError(f"could not bracket root from above: hi={hi}, excess={excess(hi)}")
    for _ in range(2000):
        if excess(lo) > 0:
            break
        lo *= 0.5
    else:
        raise CalibrationError(f"could not bracket root from below: lo={lo}, excess={excess(lo)}")

    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        f = excess(mid)
        if abs(f) < tol:
            return NoisePrior(nu, mid, sigma_hat, q)
        if f > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    f = excess(mid)
    if abs(f) < tol:
        return NoisePrior(nu, mid, sigma_hat, q)
    raise CalibrationError(f"bisection did not converge: lo={lo}, hi={hi}, excess={f}")


def estimate_sigma_hat(dataset: Dataset, mode: str = "unconditional") -> float:
    """Rough overestimate of the noise sd on the (scaled) labels."""
    y = dataset.y
    if mode == "least_squares" and dataset.n > dataset.d + 1:
        design = np.column_stack([np.ones(dataset.n), dataset.X])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        return float(math.sqrt(resid @ resid / (dataset.n - dataset.d - 1)))
    if mode not in ("unconditional", "least_squares"):
        raise ValueError(f"unknown sigma_hat mode {mode!r}")
    sd = float(np.std(y, ddof=1)) if dataset.n > 1 else 0.0
    if not sd > 0:
        raise ValueError("labels have zero variance; cannot calibrate the noise prior")
    return sd


def noise_prior_for(dataset: Dataset, hp: BartHyperParams) -> NoisePrior:
    return calibrate_noise_prior(hp.nu, hp.q, estimate_sigma_hat(dataset, hp.sigma_hat_mode))


# -- conjugate updates and likelihood -----------------------------------------


def sample_sigma2(rng: np.random.Generator, state: EnsembleState, dataset: Dataset, prior: NoisePrior) -> float:
    err = dataset.y - state.train_fit(dataset)
    shape = prior.shape + 0.5 * dataset.n
    rate = prior.rate + 0.5 * float(err @ err)
    return rate / rng.gamma(shape)


def sample_leaf_params(
    rng: np.random.Generator,
    tree: DecisionTree,
    residual: np.ndarray,
    sigma2: float,
    dataset: Dataset,
    hp: BartHyperParams,
) -> dict[str, float]:
    index = training_index(tree, dataset)
    var_mu = hp.sigma_mu**2
    params = {}
    for leaf in tree.leaves():
        rows = index[leaf]
        prec = 1.0 / var_mu + len(rows) / sigma2
        mean = (hp.m_mu / var_mu + float(residual[rows].sum()) / sigma2) / prec
        params[leaf] = mean + rng.standard_normal() / math.sqrt(prec)
    return params


def log_likelihood(state: EnsembleState, dataset: Dataset) -> float:
    err = dataset.y - state.train_fit(dataset)
    return float(-0.5 * dataset.n * (LOG_2PI + math.log(state.sigma2)) - 0.5 * (err @ err) / state.sigma2)
