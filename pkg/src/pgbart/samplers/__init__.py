from .config import KERNELS as KERNEL_NAMES
from .config import MoveStats, SamplerConfig
from .gibbs import KERNELS, compute_residual, gibbs_sweep, initial_state, run_chain
from .mh import cgm_move, growprune_move, mh_move
from .pg import conditional_smc

__all__ = [
    "KERNELS",
    "KERNEL_NAMES",
    "MoveStats",
    "SamplerConfig",
    "cgm_move",
    "compute_residual",
    "conditional_smc",
    "gibbs_sweep",
    "growprune_move",
    "initial_state",
    "mh_move",
    "run_chain",
]
