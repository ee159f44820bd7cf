from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

KERNELS = ("pg", "cgm", "growprune")
MOVES = ("grow", "prune", "change", "swap")


@dataclass(frozen=True)
class SamplerConfig:
    """Tree-move kernel and chain settings.

    ``move_probs`` are the (grow, prune, change, swap) proposal probabilities
    of the CGM kernel; GrowPrune always uses (0.5, 0.5, 0, 0).
    """

    kernel: str = "pg"
    particles: int = 10
    max_stages: int = 5000
    move_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.40, 0.10)
    iterations: int = 2000
    burn_in: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.kernel == "pg" and self.particles < 2:
            raise ValueError(f"particle Gibbs needs at least 2 particles, got {self.particles}")
        if self.max_stages < 1:
            raise ValueError(f"max_stages must be positive, got {self.max_stages}")
        if len(self.move_probs) != 4 or any(p < 0 for p in self.move_probs):
            raise ValueError(f"move_probs must be 4 non-negative numbers, got {self.move_probs}")
        if not math.isclose(sum(self.move_probs), 1.0, abs_tol=1e-9):
            raise ValueError(f"move_probs must sum to 1, got {sum(self.move_probs)}")
        if self.iterations < 0 or self.burn_in < 0:
            raise ValueError("iterations and burn_in must be non-negative")


@dataclass
class MoveStats:
    """Counters accumulated by the tree kernels over a chain."""

    proposed: Counter = field(default_factory=Counter)
    accepted: Counter = field(default_factory=Counter)
    smc_sweeps: int = 0
    smc_stages: int = 0
    smc_truncated: int = 0

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for move in MOVES:
            if self.proposed[move]:
                out[f"{move}_proposed"] = self.proposed[move]
                out[f"{move}_accepted"] = self.accepted[move]
        if self.smc_sweeps:
            out["smc_sweeps"] = self.smc_sweeps
            out["smc_mean_stages"] = self.smc_stages / self.smc_sweeps
            out["smc_truncated"] = self.smc_truncated
        return out
