"""Cubic spline smoothing compensation for ODE-RNN interpolation."""

from .core import CsscError, RunConfig, TimeGrid, Trajectory, validate_trajectory
from .odernn import OdeRnnModel, compensated_output, forward
from .spline import KnotData, natural_spline, solve_compensation
from .train import evaluate, train

__all__ = [
    "CsscError", "KnotData", "OdeRnnModel", "RunConfig", "TimeGrid", "Trajectory",
    "compensated_output", "evaluate", "forward", "natural_spline", "solve_compensation",
    "train", "validate_trajectory",
]
__version__ = "0.1.0"
