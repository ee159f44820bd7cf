"""Sequential (breadth-first, one node per stage) generative process for trees.

A :class:`PartialTree` holds the splits made so far, the FIFO queue of nodes
still eligible for expansion and the stage counter. States are treated as
immutable values: :func:`advance` always returns a new state, and unchanged
containers are shared between the old and the new state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BartHyperParams,
    draw_split,
    log_split_density,
    log_split_prob,
    log_stop_prob,
    split_probability,
)
from .tree import ROOT, Dataset, DecisionTree, depth, left, right


@dataclass(eq=False)
class PartialTree:
    splits: dict
    queue: tuple[str, ...]
    stage: int
    index: dict[str, np.ndarray] = field(repr=False)
    truncated: bool = False

    @property
    def terminal(self) -> bool:
        return not self.queue

    @property
    def tree(self) -> DecisionTree:
        """The partial tree with every queued node read as a leaf."""
        return DecisionTree(dict(self.splits), dict(self.index))

    def __eq__(self, other):
        if not isinstance(other, PartialTree):
            return NotImplemented
        return (self.splits, self.queue, self.stage) == (other.splits, other.queue, other.stage)


def init_partial(dataset: Dataset | None = None) -> PartialTree:
    index = {} if dataset is None else {ROOT: np.arange(dataset.n)}
    return PartialTree(splits={}, queue=(ROOT,), stage=0, index=index)


def _has_valid_split(dataset: Dataset, rows: np.ndarray):
    if len(rows) < 2:
        return False, None, None
    lo, hi = dataset.bounds(rows)
    return bool(np.any(hi > lo)), lo, hi


def advance(rng: np.random.Generator, state: PartialTree, dataset: Dataset, hp: BartHyperParams) -> PartialTree:
    """Pop the head of the queue and decide stop/split for it from the prior."""
    if state.terminal:
        raise RuntimeError("advance called on a terminal state")
    eta, rest = state.queue[0], state.queue[1:]
    rows = state.index[eta]
    valid, lo, hi = _has_valid_split(dataset, rows)
    p = split_probability(depth(eta), valid, hp)
    if p > 0 and rng.random() < p:
        dim, tau, _ = draw_split(rng, lo, hi)
        go_left = dataset.X[rows, dim] <= tau
        splits = dict(state.splits)
        splits[eta] = (dim, tau)
        index = dict(state.index)
        index[left(eta)] = rows[go_left]
        index[right(eta)] = rows[~go_left]
        return PartialTree(splits, rest + (left(eta), right(eta)), state.stage + 1, index)
    return PartialTree(state.splits, rest, state.stage + 1, state.index)


def advance_noop(state: PartialTree) -> PartialTree:
    if not state.terminal:
        raise RuntimeError("advance_noop requires a terminal state")
    return state


def transition_log_prob(prev: PartialTree, nxt: PartialTree, dataset: Dataset, hp: BartHyperParams) -> float:
    """Log probability (density in ``tau``) that :func:`advance` maps ``prev`` to ``nxt``."""
    if prev.terminal:
        return 0.0 if nxt == prev else -math.inf
    eta = prev.queue[0]
    valid, lo, hi = _has_valid_split(dataset, prev.index[eta])
    if eta in nxt.splits:
        if not valid:
            return -math.inf
        dim, tau = nxt.splits[eta]
        return log_split_prob(depth(eta), hp) + log_split_density(lo, hi, dim, tau)
    return log_stop_prob(depth(eta), valid, hp)


def finalize(state: PartialTree) -> PartialTree:
    """Force termination: every queued node becomes a leaf and the state is flagged."""
    if state.terminal:
        return state
    return PartialTree(state.splits, (), state.stage, state.index, truncated=True)


@dataclass
class TreeDraw:
    tree: DecisionTree
    stages: int
    truncated: bool


def sample_tree_prior(
    rng: np.random.Generator, dataset: Dataset, hp: BartHyperParams, max_stages: int = 5000
) -> TreeDraw:
    state = init_partial(dataset)
    while not state.terminal and state.stage < max_stages:
        state = advance(rng, state, dataset, hp)
    state = finalize(state)
    return TreeDraw(state.tree, state.stage, state.truncated)


def replay_sequence(tree: DecisionTree, dataset: Dataset) -> list[PartialTree]:
    """Deterministic stage-by-stage reconstruction of ``tree``.

    Uses the same queue discipline as :func:`advance`, so element ``t`` is the
    partial tree the sequential process would hold after ``t`` stages.
    """
    state = init_partial(dataset)
    states = [state]
    X = dataset.X
    while not state.terminal:
        eta, rest = state.queue[0], state.queue[1:]
        if eta in tree.splits:
            dim, tau = tree.splits[eta]
            rows = state.index[eta]
            go_left = X[rows, dim] <= tau
            n_left = int(go_left.sum())
            if n_left == 0 or n_left == len(rows):
                raise ValueError(f"split at node {eta!r} leaves a child without training data")
            splits = dict(state.splits)
            splits[eta] = (dim, tau)
            index = dict(state.index)
            index[left(eta)] = rows[go_left]
            index[right(eta)] = rows[~go_left]
            state = PartialTree(splits, rest + (left(eta), right(eta)), state.stage + 1, index)
        else:
            state = PartialTree(state.splits, rest, state.stage + 1, state.index)
        states.append(state)
    return states
