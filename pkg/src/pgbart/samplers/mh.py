"""Local Metropolis-Hastings tree moves: grow, prune, change and swap.

Every move is accepted with the exact Metropolis-Hastings ratio for the
conditional tree posterior, so the kernel leaves it invariant for any choice of
move probabilities. A move that cannot be applied (prune on a stump, grow on a
leaf without valid splits, ...) counts as a rejection.
"""

from __future__ import annotations

import math

import numpy as np

from ..model import (
    BartHyperParams,
    draw_split,
    log_split_density,
    log_split_prob,
    log_stop_prob,
    node_log_marginal,
    subtree_log_density,
)
from ..tree import ROOT, Dataset, DecisionTree, depth, left, parent, right, training_index
from .config import MOVES, MoveStats, SamplerConfig

GROWPRUNE_PROBS = (0.5, 0.5, 0.0, 0.0)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _has_valid(dataset: Dataset, rows: np.ndarray) -> bool:
    if len(rows) < 2:
        return False
    lo, hi = dataset.bounds(rows)
    return bool(np.any(hi > lo))


def _n_prunable(splits: dict) -> int:
    return sum(1 for node in splits if left(node) not in splits and right(node) not in splits)


def _grow_log_ratio(d, valid_left, valid_right, lml_parent, lml_left, lml_right, hp):
    """Posterior ratio of splitting a leaf, without the split-density term.

    The split density in the prior cancels against the grow proposal density.
    """
    return (
        log_split_prob(d, hp)
        - log_stop_prob(d, True, hp)
        + log_stop_prob(d + 1, valid_left, hp)
        + log_stop_prob(d + 1, valid_right, hp)
        + lml_left
        + lml_right
        - lml_parent
    )


def mh_move(
    rng: np.random.Generator,
    tree: DecisionTree,
    residual: np.ndarray,
    sigma2: float,
    dataset: Dataset,
    hp: BartHyperParams,
    move_probs=(0.25, 0.25, 0.40, 0.10),
    stats: MoveStats | None = None,
) -> DecisionTree:
    """Propose one local move and accept or reject it."""
    p_grow, p_prune, _, _ = move_probs
    cum = np.cumsum(move_probs)
    move = MOVES[int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))]
    if stats is not None:
        stats.proposed[move] += 1
    index = training_index(tree, dataset)
    splits = tree.splits
    X = dataset.X

    def lml(rows):
        return node_log_marginal(residual, rows, sigma2, hp)

    if move == "grow":
        leaves = tree.leaves()
        eta = leaves[rng.integers(len(leaves))]
        rows = index[eta]
        if len(rows) < 2:
            return tree
        lo, hi = dataset.bounds(rows)
        if not np.any(hi > lo):
            return tree
        dim, tau, _ = draw_split(rng, lo, hi)
        go_left = X[rows, dim] <= tau
        rows_l, rows_r = rows[go_left], rows[~go_left]
        new_splits = dict(splits)
        new_splits[eta] = (dim, tau)
        log_r = _grow_log_ratio(
            depth(eta), _has_valid(dataset, rows_l), _has_valid(dataset, rows_r),
            lml(rows), lml(rows_l), lml(rows_r), hp,
        )
        log_r += _log(p_prune) - math.log(_n_prunable(new_splits)) - _log(p_grow) + math.log(len(leaves))
        if math.log(rng.random()) < log_r:
            new_index = dict(index)
            new_index[left(eta)] = rows_l
            new_index[right(eta)] = rows_r
            return _accept(stats, move, DecisionTree(new_splits, new_index))
        return tree

    if move == "prune":
        candidates = tree.prunable()
        if not candidates:
            return tree
        eta = candidates[rng.integers(len(candidates))]
        rows, rows_l, rows_r = index[eta], index[left(eta)], index[right(eta)]
        log_r = -_grow_log_ratio(
            depth(eta), _has_valid(dataset, rows_l), _has_valid(dataset, rows_r),
            lml(rows), lml(rows_l), lml(rows_r), hp,
        )
        log_r += _log(p_grow) - math.log(tree.n_leaves() - 1) - _log(p_prune) + math.log(len(candidates))
        if math.log(rng.random()) < log_r:
            new_splits = dict(splits)
            del new_splits[eta]
            new_index = dict(index)
            del new_index[left(eta)], new_index[right(eta)]
            return _accept(stats, move, DecisionTree(new_splits, new_index))
        return tree

    if move == "change":
        internal = tree.internal()
        if not internal:
            return tree
        eta = internal[rng.integers(len(internal))]
        rows = index[eta]
        lo, hi = dataset.bounds(rows)
        dim, tau, log_q_fwd = draw_split(rng, lo, hi)
        new_splits = dict(splits)
        new_splits[eta] = (dim, tau)
        old_dim, old_tau = splits[eta]
        log_q_rev = log_split_density(lo, hi, old_dim, old_tau)
        log_new = subtree_log_density(new_splits, eta, rows, dataset, hp, residual, sigma2)
        if log_new == -math.inf:
            return tree
        log_old = subtree_log_density(splits, eta, rows, dataset, hp, residual, sigma2)
        log_r = log_new - log_old + log_q_rev - log_q_fwd
        if math.log(rng.random()) < log_r:
            return _accept(stats, move, DecisionTree(new_splits))
        return tree

    # swap
    pairs = [node for node in tree.internal() if node != ROOT]
    if not pairs:
        return tree
    child = pairs[rng.integers(len(pairs))]
    top = parent(child)
    new_splits = dict(splits)
    new_splits[top], new_splits[child] = splits[child], splits[top]
    rows = index[top]
    log_new = subtree_log_density(new_splits, top, rows, dataset, hp, residual, sigma2)
    if log_new == -math.inf:
        return tree
    log_old = subtree_log_density(splits, top, rows, dataset, hp, residual, sigma2)
    if math.log(rng.random()) < log_new - log_old:
        return _accept(stats, move, DecisionTree(new_splits))
    return tree


def _accept(stats: MoveStats | None, move: str, tree: DecisionTree) -> DecisionTree:
    if stats is not None:
        stats.accepted[move] += 1
    return tree


def cgm_move(rng, tree, residual, sigma2, dataset, hp, cfg: SamplerConfig | None = None, stats=None) -> DecisionTree:
    probs = cfg.move_probs if cfg is not None else SamplerConfig().move_probs
    return mh_move(rng, tree, residual, sigma2, dataset, hp, probs, stats)


def growprune_move(rng, tree, residual, sigma2, dataset, hp, cfg: SamplerConfig | None = None, stats=None) -> DecisionTree:
    return mh_move(rng, tree, residual, sigma2, dataset, hp, GROWPRUNE_PROBS, stats)
