"""Synthetic datasets and JSON Lines trajectory files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (CsscError, InvariantViolation, NonMonotoneTime, TimeGrid, Trajectory,
                   validate_trajectory)


class InvalidSpec(CsscError, ValueError):
    pass


class UnknownFunction(CsscError, KeyError):
    pass


class ParseError(CsscError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ToySpec:
    """Sinusoid dataset: ``x(t) = A sin(2 pi nu t + phi)`` on a 100-point grid.

    ``phi`` comes from a standard-normal initial value ``x(0)`` through
    ``x(0) = A sin(phi)``.  Amplitude and frequency ranges are our own
    defaults: at most 0.5 Hz keeps every wave resolvable from the ten
    observations of a 10% mask on the 5 s horizon.
    """

    n_trajectories: int = 64
    points_per_traj: int = 100
    horizon: float = 5.0
    amplitude: tuple[float, float] = (0.5, 1.5)
    frequency: tuple[float, float] = (0.1, 0.5)
    observation_fraction: float = 0.5
    jitter: bool = False
    seed: int = 0

    @property
    def observed_count(self) -> int:
        return int(math.floor(self.observation_fraction * self.points_per_traj + 1e-9))

    def validate(self) -> None:
        if self.n_trajectories < 1:
            raise InvalidSpec("n_trajectories must be positive")
        if self.points_per_traj < 2 or self.horizon <= 0:
            raise InvalidSpec("need at least two points on a positive horizon")
        if not 0.0 < self.observation_fraction <= 1.0:
            raise InvalidSpec("observation_fraction must be in (0, 1]")
        if self.observed_count < 2:
            raise InvalidSpec("observation_fraction * points must be at least 2")
        lo, hi = self.amplitude
        if not 0 < lo <= hi:
            raise InvalidSpec("bad amplitude range")
        lo, hi = self.frequency
        if not 0 < lo <= hi:
            raise InvalidSpec("bad frequency range")


def observation_mask(rng: np.random.Generator, n_points: int, count: int) -> np.ndarray:
    mask = np.zeros(n_points, dtype=bool)
    mask[[0, -1]] = True
    inner = rng.choice(np.arange(1, n_points - 1), size=count - 2, replace=False)
    mask[inner] = True
    return mask


def generate_toy(spec: ToySpec = ToySpec(), return_params: bool = False):
    """Generate the sinusoid dataset.

    With ``return_params`` also returns an ``(n, 3)`` array of
    ``(amplitude, frequency, phase)`` per trajectory.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    base = np.linspace(0.0, spec.horizon, spec.points_per_traj)
    dt = spec.horizon / (spec.points_per_traj - 1)
    trajs, params = [], []
    for _ in range(spec.n_trajectories):
        amp = rng.uniform(*spec.amplitude)
        freq = rng.uniform(*spec.frequency)
        x0 = rng.standard_normal()
        phase = float(np.arcsin(np.clip(x0 / amp, -1.0, 1.0)))
        t = base
        if spec.jitter:
            t = base.copy()
            t[1:-1] += rng.uniform(-0.4 * dt, 0.4 * dt, size=t.size - 2)
        x = amp * np.sin(2 * np.pi * freq * t + phase)
        mask = observation_mask(rng, t.size, spec.observed_count)
        trajs.append(Trajectory(TimeGrid(t), x[:, None], mask))
        params.append((amp, freq, phase))
    if return_params:
        return trajs, np.array(params)
    return trajs


@dataclass(frozen=True)
class SmoothFunction:
    name: str
    domain: tuple[float, float]
    value: Callable
    derivative: Callable
    fourth_derivative_sup: float


SMOOTH_FUNCTIONS = {
    "sin": SmoothFunction("sin", (0.0, 2 * np.pi), np.sin, np.cos, 1.0),
    # fourth derivative (t^4 - 6 t^2 + 3) exp(-t^2 / 2) peaks in magnitude at t = 0
    "gauss_bump": SmoothFunction(
        "gauss_bump", (-6.0, 6.0), lambda t: np.exp(-0.5 * t * t),
        lambda t: -t * np.exp(-0.5 * t * t), 3.0),
    # t^5 - (10/3) t^3 has zero second derivative at both ends of [-1, 1]
    "poly5": SmoothFunction(
        "poly5", (-1.0, 1.0), lambda t: t ** 5 - (10.0 / 3.0) * t ** 3,
        lambda t: 5 * t ** 4 - 10.0 * t ** 2, 120.0),
}


@dataclass
class SmoothSuite:
    function: SmoothFunction
    levels: list = field(default_factory=list)  # Trajectory per knot count
    dense_t: np.ndarray | None = None
    dense_x: np.ndarray | None = None
    dense_dx: np.ndarray | None = None

    @property
    def taus(self) -> np.ndarray:
        return np.array([tr.grid.intervals.max() for tr in self.levels])


def generate_smooth_suite(function_id: str, knot_counts: Sequence[int] = (17, 33, 65, 129, 257),
                          dense_points: int = 10_000) -> SmoothSuite:
    """Noiseless samples at uniform knots plus a dense reference grid."""
    try:
        fn = SMOOTH_FUNCTIONS[function_id]
    except KeyError:
        raise UnknownFunction(f"unknown function {function_id!r}; "
                              f"choose from {sorted(SMOOTH_FUNCTIONS)}") from None
    a, b = fn.domain
    levels = []
    for count in knot_counts:
        t = np.linspace(a, b, int(count))
        levels.append(Trajectory.from_arrays(t, fn.value(t)[:, None]))
    dense = np.linspace(a, b, dense_points)
    return SmoothSuite(fn, levels, dense, fn.value(dense), fn.derivative(dense))


def trajectory_to_record(traj: Trajectory) -> dict:
    return {"t": traj.times.tolist(), "x": traj.values.tolist(),
            "observed": traj.observed_indices.tolist()}


def trajectory_from_record(rec: dict) -> Trajectory:
    t = np.asarray(rec["t"], dtype=np.float64)
    x = np.asarray(rec["x"], dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    obs = np.zeros(t.size, dtype=bool)
    idx = np.asarray(rec["observed"], dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= t.size):
        raise InvariantViolation("observed index out of range")
    obs[idx] = True
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise NonMonotoneTime("time stamps must be strictly increasing")
    traj = Trajectory(TimeGrid(t), x, obs)
    validate_trajectory(traj)
    return traj


def write_trajectories(path, dataset: Iterable[Trajectory]) -> None:
    """One JSON object per line; floats use ``repr`` so they round-trip."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in dataset:
            fh.write(json.dumps(trajectory_to_record(traj)) + "\n")


def read_trajectories(path) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict) or not {"t", "x", "observed"} <= rec.keys():
                    raise ValueError("expected keys t, x, observed")
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            try:
                out.append(trajectory_from_record(rec))
            except InvariantViolation as exc:
                raise type(exc)(f"line {lineno}: {exc}") from exc
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), lineno) from exc
    return out


def split_dataset(dataset: Sequence, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle by trajectory and cut into train / validation / test lists."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_train = int(round(fractions[0] * len(dataset)))
    n_val = int(round(fractions[1] * len(dataset)))
    pick = lambda idx: [dataset[i] for i in idx]  # noqa: E731
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))
