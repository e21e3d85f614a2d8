"""Shared domain types: time grids, trajectories and run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class CsscError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(CsscError, ValueError):
    pass


class NonMonotoneTime(InvariantViolation):
    pass


class DimensionMismatch(InvariantViolation):
    pass


class EndpointNotObserved(InvariantViolation):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time stamps ``t_0 < ... < t_n`` in seconds."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 2:
            raise NonMonotoneTime("a time grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise NonMonotoneTime("time stamps must be finite")
        if np.any(np.diff(pts) <= 0):
            bad = int(np.argmax(np.diff(pts) <= 0))
            raise NonMonotoneTime(
                f"time stamps must be strictly increasing (t[{bad}]={pts[bad]!r}, "
                f"t[{bad + 1}]={pts[bad + 1]!r})")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def n(self) -> int:
        """Number of intervals (one less than the number of points)."""
        return self.points.size - 1

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def end(self) -> float:
        return float(self.points[-1])

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class Trajectory:
    """Samples ``x(t_k)`` on a grid, with a mask of which ones are observed.

    Construction normalises the arrays but does not check the mask rules;
    call :func:`validate_trajectory` for that.
    """

    grid: TimeGrid
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        observed = np.asarray(self.observed, dtype=bool)
        values.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    @classmethod
    def from_arrays(cls, t, x, observed=None) -> "Trajectory":
        t = np.asarray(t, dtype=np.float64)
        if observed is None:
            observed = np.ones(t.size, dtype=bool)
        return cls(TimeGrid(t), x, observed)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    @property
    def observed_indices(self) -> np.ndarray:
        return np.flatnonzero(self.observed)

    def observed_only(self) -> "Trajectory":
        idx = self.observed_indices
        return Trajectory(TimeGrid(self.times[idx]), self.values[idx],
                          np.ones(idx.size, dtype=bool))


def validate_trajectory(traj: Trajectory) -> None:
    """Raise the matching :class:`InvariantViolation` if ``traj`` is malformed."""
    t = np.asarray(traj.grid.points)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise NonMonotoneTime("time stamps must be strictly increasing")
    values, observed = traj.values, traj.observed
    if values.ndim != 2 or values.shape[0] != t.size:
        raise DimensionMismatch(
            f"values have shape {values.shape}, expected ({t.size}, d)")
    if values.shape[1] < 1:
        raise DimensionMismatch("values must have at least one dimension")
    if observed.shape != (t.size,):
        raise DimensionMismatch(
            f"observation mask has shape {observed.shape}, expected ({t.size},)")
    if not (observed[0] and observed[-1]):
        raise EndpointNotObserved("first and last points must be observed")


DERIVATIVE_MODES = ("analytical", "numerical")
COMPENSATION_SPACES = ("output", "hidden", "none")


@dataclass(frozen=True)
class RunConfig:
    """Model sizes, integration settings, loss weight and ablation switches.

    Defaults are the desk-scale sizes; ``RunConfig.full_scale()`` gives the
    large configuration (m=15, f with 5 layers of width 300, g with 2 layers).
    """

    hidden_dim: int = 16
    f_widths: tuple[int, ...] = (64, 64)
    g_widths: tuple[int, ...] = (64,)
    substeps: int = 2
    derivative_mode: str = "analytical"
    fd_delta: float = 1e-3
    alpha: float = 1000.0
    compensation_space: str = "output"
    strict_natural_boundary: bool = False
    block_dot_o: bool = False
    block_ddot_o: bool = False
    drop_ddot_o: bool = False
    prehoc: bool = False
    posthoc: bool = False
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    adamax_eps: float = 1e-8
    epochs: int = 50
    batch_size: int | None = None
    patience: int = 20
    init_scale: float = 1.0
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.derivative_mode not in DERIVATIVE_MODES:
            raise ValueError(f"derivative_mode must be one of {DERIVATIVE_MODES}")
        if self.compensation_space not in COMPENSATION_SPACES:
            raise ValueError(
                f"compensation_space must be one of {COMPENSATION_SPACES}")
        if self.prehoc and self.posthoc:
            raise ValueError("prehoc and posthoc are mutually exclusive")
        object.__setattr__(self, "f_widths", tuple(self.f_widths))
        object.__setattr__(self, "g_widths", tuple(self.g_widths))

    @classmethod
    def full_scale(cls, **kw) -> "RunConfig":
        kw.setdefault("hidden_dim", 15)
        kw.setdefault("f_widths", (300, 300, 300, 300))
        kw.setdefault("g_widths", (300,))
        return cls(**kw)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    @property
    def train_space(self) -> str:
        """Compensation used while training."""
        return "none" if self.posthoc else self.compensation_space

    @property
    def eval_space(self) -> str:
        """Compensation used at inference."""
        if self.prehoc:
            return "none"
        if self.posthoc:
            return "output"
        return self.compensation_space


def as_time_array(ts: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.atleast_1d(np.asarray(ts, dtype=np.float64))
