"""Continual learning with LoRA updates confined to a minor gradient subspace.

The subspace size is chosen per layer and per task by trading the expected
interference with old tasks against the room left for the new one.
"""

from .errors import SplitLoraError
from .metrics import AccuracyMatrix, caa, faa, forgetting, plasticity
from .subspace import SolverConfig, solve_k_split, solve_k_threshold
from .trainer import NetworkConfig, TrainConfig, run_stream

__version__ = "0.1.0"

__all__ = ["AccuracyMatrix", "NetworkConfig", "SolverConfig", "SplitLoraError", "TrainConfig", "caa", "faa",
           "forgetting", "plasticity", "run_stream", "solve_k_split", "solve_k_threshold"]
