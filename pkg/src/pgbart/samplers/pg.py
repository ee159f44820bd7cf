"""Conditional SMC over the sequential tree process (the particle Gibbs kernel)."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from ..model import BartHyperParams, node_log_marginal
from ..sequence import PartialTree, advance, finalize, init_partial, replay_sequence
from ..tree import Dataset, DecisionTree, left, right
from .config import MoveStats, SamplerConfig


def _logsumexp(x: np.ndarray) -> float:
    top = x.max()
    return float(top + math.log(np.exp(x - top).sum()))


class _MarginalCache:
    """Node log marginal likelihoods keyed by the identity of the index array.

    Index arrays are shared between a state and its successors, so the same
    node is never re-summed. The cache holds a reference to every array so
    ids cannot be recycled while it lives.
    """

    def __init__(self, residual, sigma2, hp):
        self.residual = residual
        self.sigma2 = sigma2
        self.hp = hp
        self._store: dict[int, tuple[np.ndarray, float]] = {}

    def __call__(self, rows: np.ndarray) -> float:
        hit = self._store.get(id(rows))
        if hit is not None:
            return hit[1]
        value = node_log_marginal(self.residual, rows, self.sigma2, self.hp)
        self._store[id(rows)] = (rows, value)
        return value


def log_weight_increment(prev: PartialTree, nxt: PartialTree, lml: Callable[[np.ndarray], float]) -> float:
    """Log of the multiplicative weight update for one stage.

    Zero when the previous state was terminal or the popped node stopped;
    otherwise children-over-parent marginal likelihood ratio.
    """
    if prev.terminal:
        return 0.0
    eta = prev.queue[0]
    if eta not in nxt.splits:
        return 0.0
    return lml(nxt.index[left(eta)]) + lml(nxt.index[right(eta)]) - lml(prev.index[eta])


def conditional_smc(
    rng: np.random.Generator,
    old_tree: DecisionTree,
    residual: np.ndarray,
    sigma2: float,
    dataset: Dataset,
    hp: BartHyperParams,
    cfg: SamplerConfig,
    stats: MoveStats | None = None,
    monitor: Callable[..., None] | None = None,
) -> DecisionTree:
    """One conditional-SMC pass returning a new tree for the given residual.

    Particle 0 is clamped to the stage-wise replay of ``old_tree``; the others
    are proposed from the prior and reweighted by marginal-likelihood ratios.
    Particles 1..C-1 are multinomially resampled after every stage. When every
    particle is terminal, the returned tree is drawn from the normalised weights.

    ``monitor``, if given, is called after every stage with keyword arguments
    ``stage``, ``proposed``, ``log_weights`` (before resampling), ``log_norm``,
    ``resampled`` and ``resampled_log_weights`` (``None`` on the final stage).
    """
    C = cfg.particles
    if C < 2:
        raise ValueError("conditional SMC needs at least 2 particles")
    reference = replay_sequence(old_tree, dataset)
    lml = _MarginalCache(residual, sigma2, hp)
    root = init_partial(dataset)
    particles = [reference[0]] + [root] * (C - 1)
    log_w = np.full(C, lml(root.index[""]))
    log_c = math.log(C)

    for t in range(1, cfg.max_stages + 1):
        proposed = [reference[min(t, len(reference) - 1)]]
        for p in particles[1:]:
            proposed.append(p if p.terminal else advance(rng, p, dataset, hp))
        for c in range(C):
            log_w[c] += log_weight_increment(particles[c], proposed[c], lml)

        log_norm = _logsumexp(log_w)
        w_bar = np.exp(log_w - log_norm)
        w_bar /= w_bar.sum()
        done = all(p.terminal for p in proposed)
        if done or t == cfg.max_stages:
            if monitor is not None:
                monitor(stage=t, proposed=proposed, log_weights=log_w.copy(), log_norm=log_norm,
                        resampled=None, resampled_log_weights=None)
            pick = int(rng.choice(C, p=w_bar))
            final = finalize(proposed[pick])
            if stats is not None:
                stats.smc_sweeps += 1
                stats.smc_stages += t
                stats.smc_truncated += int(not done)
            return final.tree

        ancestors = rng.choice(C, size=C - 1, p=w_bar)
        particles = [proposed[0]] + [proposed[a] for a in ancestors]
        if monitor is not None:
            monitor(stage=t, proposed=proposed, log_weights=log_w.copy(), log_norm=log_norm,
                    resampled=particles, resampled_log_weights=np.full(C, log_norm - log_c))
        log_w = np.full(C, log_norm - log_c)
    raise AssertionError("unreachable")
