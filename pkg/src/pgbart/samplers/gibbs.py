"""Bayesian backfitting: the outer Gibbs loop over noise variance, trees and leaves."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from ..diagnostics import ChainTrace, mse
from ..model import (
    BartHyperParams,
    NoisePrior,
    log_likelihood,
    noise_prior_for,
    sample_leaf_params,
    sample_sigma2,
)
from ..state import EnsembleState
from ..tree import ROOT, Dataset, DecisionTree, fit_from_index, training_index
from .config import MoveStats, SamplerConfig
from .mh import cgm_move, growprune_move
from .pg import conditional_smc

TreeKernel = Callable[..., DecisionTree]

KERNELS: dict[str, TreeKernel] = {
    "pg": conditional_smc,
    "cgm": cgm_move,
    "growprune": growprune_move,
}


def compute_residual(state: EnsembleState, j: int, dataset: Dataset) -> np.ndarray:
    """Labels minus the fit of every tree except tree ``j`` (0-based)."""
    if not 0 <= j < state.m:
        raise IndexError(f"tree index {j} out of range for {state.m} trees")
    total = state.train_fit(dataset)
    return dataset.y - (total - state.fits[j])


def initial_state(rng: np.random.Generator, dataset: Dataset, hp: BartHyperParams, prior: NoisePrior) -> EnsembleState:
    """Stumps with leaf values drawn from the leaf prior; sigma^2 starts at sigma_hat^2."""
    trees = [DecisionTree() for _ in range(hp.m)]
    params = [{ROOT: hp.m_mu + hp.sigma_mu * rng.standard_normal()} for _ in range(hp.m)]
    state = EnsembleState(trees, params, sigma2=prior.sigma_hat**2)
    state.refresh_fits(dataset)
    return state


def gibbs_sweep(
    rng: np.random.Generator,
    state: EnsembleState,
    dataset: Dataset,
    hp: BartHyperParams,
    cfg: SamplerConfig,
    prior: NoisePrior | None = None,
    kernel: TreeKernel | None = None,
    stats: MoveStats | None = None,
) -> EnsembleState:
    """One backfitting sweep, updating ``state`` in place and returning it.

    ``kernel`` overrides the tree move selected by ``cfg.kernel``; it is called
    as ``kernel(rng, tree, residual, sigma2, dataset, hp, cfg, stats)``.
    """
    if prior is None:
        prior = noise_prior_for(dataset, hp)
    if kernel is None:
        kernel = KERNELS[cfg.kernel]
    fits = state.fits if state.fits is not None and state.fits.shape == (state.m, dataset.n) else state.refresh_fits(dataset)
    total = fits.sum(axis=0)

    state.sigma2 = sample_sigma2(rng, state, dataset, prior)
    for j in range(state.m):
        residual = dataset.y - (total - fits[j])
        tree = kernel(rng, state.trees[j], residual, state.sigma2, dataset, hp, cfg, stats)
        params = sample_leaf_params(rng, tree, residual, state.sigma2, dataset, hp)
        new_fit = fit_from_index(training_index(tree, dataset), tree, params, dataset.n)
        total += new_fit - fits[j]
        fits[j] = new_fit
        state.trees[j] = tree
        state.leaf_params[j] = params
    state.iteration += 1
    return state


def run_chain(
    dataset: Dataset,
    test_dataset: Dataset | None,
    hp: BartHyperParams,
    cfg: SamplerConfig,
    kernel: TreeKernel | None = None,
    callback: Callable[[int, EnsembleState], None] | None = None,
) -> ChainTrace:
    """Run ``cfg.iterations`` sweeps from stumps and record the trace.

    MSEs are in original label units. The posterior-mean test prediction over
    iterations after ``cfg.burn_in`` is stored on the trace (the last
    state's prediction if the chain is shorter than the burn-in).
    """
    if test_dataset is not None and test_dataset.d != dataset.d:
        raise ValueError(f"test data has {test_dataset.d} features, training data {dataset.d}")
    rng = np.random.default_rng(cfg.seed)
    prior = noise_prior_for(dataset, hp)
    state = initial_state(rng, dataset, hp, prior)
    stats = MoveStats()
    scale = dataset.transform.scale if dataset.transform is not None else 1.0
    y_train = dataset.y_original
    y_test = test_dataset.y_original if test_dataset is not None else None
    trace = ChainTrace()
    pred_sum = None if test_dataset is None else np.zeros(test_dataset.n)
    n_kept = 0
    last_pred = [None]

    def to_original(values):
        return dataset.transform.inverse(values) if dataset.transform is not None else values

    def record(i, elapsed):
        nonlocal pred_sum, n_kept
        train_pred = to_original(state.train_fit(dataset))
        if test_dataset is not None:
            test_pred = to_original(state.predict(test_dataset.X))
            test_err = mse(test_pred, y_test)
            if i > cfg.burn_in:
                pred_sum += test_pred
                n_kept += 1
            last_pred[0] = test_pred
        else:
            test_err = float("nan")
        trace.append(
            iter=i,
            loglik=log_likelihood(state, dataset),
            sigma=float(np.sqrt(state.sigma2) * scale),
            total_leaves=state.total_leaves(),
            train_mse=mse(train_pred, y_train),
            test_mse=test_err,
            elapsed_s=elapsed,
            leaf_counts=[t.n_leaves() for t in state.trees],
        )

    elapsed = 0.0
    record(0, elapsed)
    for i in range(1, cfg.iterations + 1):
        start = time.perf_counter()
        gibbs_sweep(rng, state, dataset, hp, cfg, prior, kernel, stats)
        elapsed += time.perf_counter() - start
        record(i, elapsed)
        if callback is not None:
            callback(i, state)

    trace.meta.update(stats.as_dict())
    if pred_sum is not None:
        trace.test_prediction = pred_sum / n_kept if n_kept else last_pred[0]
    trace.final_state = state
    return trace
