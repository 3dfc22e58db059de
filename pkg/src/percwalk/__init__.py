"""Biased random walk on supercritical bond percolation: lazy environments,
regeneration times, trap geometry, heavy-tailed sums and tail estimators."""
from .env import Direction, EdgeId, Environment, sample_conditioned, stream_seed
from .errors import BudgetExceeded, ConditioningError, MismatchError
from .walk import Trajectory, simulate

__version__ = "0.1.0"

__all__ = [
    "Direction", "EdgeId", "Environment", "sample_conditioned", "stream_seed",
    "BudgetExceeded", "ConditioningError", "MismatchError", "Trajectory", "simulate",
]
