"""Empirical check of the interpolation error bound with ``o = 0``.

For a smooth ``x`` and a natural cubic spline ``s`` through uniform knots,
``|(x - s)^(r)| <= C_r ||x''''|| tau^(4 - r)`` for ``r = 0, 1`` with
``C_0 = 5/384`` and ``C_1 = 1/24``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import generate_smooth_suite
from .spline import eval_compensation, eval_compensation_deriv, natural_spline

BOUND_CONSTANTS = {0: 5.0 / 384.0, 1: 1.0 / 24.0}


def loglog_slope(tau, err) -> float:
    return float(np.polyfit(np.log(tau), np.log(err), 1)[0])


def convergence_study(function_id: str = "sin",
                      knot_counts: Sequence[int] = (17, 33, 65, 129, 257),
                      dense_points: int = 10_000) -> dict:
    """Max errors, fitted slopes and bound ratios per refinement level."""
    suite = generate_smooth_suite(function_id, knot_counts, dense_points)
    sup4 = suite.function.fourth_derivative_sup
    levels = []
    for count, traj in zip(knot_counts, suite.levels):
        s = natural_spline(traj)
        tau = float(traj.grid.intervals.max())
        err0 = float(np.max(np.abs(eval_compensation(s, suite.dense_t)[:, 0] - suite.dense_x)))
        err1 = float(np.max(np.abs(eval_compensation_deriv(s, suite.dense_t, 1)[:, 0]
                                   - suite.dense_dx)))
        levels.append({
            "knots": int(count), "tau": tau, "max_error": err0, "max_deriv_error": err1,
            "bound_ratio_0": err0 / (BOUND_CONSTANTS[0] * sup4 * tau ** 4),
            "bound_ratio_1": err1 / (BOUND_CONSTANTS[1] * sup4 * tau ** 3),
        })
    taus = [lv["tau"] for lv in levels]
    slope0 = loglog_slope(taus, [lv["max_error"] for lv in levels])
    slope1 = loglog_slope(taus, [lv["max_deriv_error"] for lv in levels])
    holds = all(lv["bound_ratio_0"] <= 1.0 and lv["bound_ratio_1"] <= 1.0 for lv in levels)
    return {"function": function_id, "fourth_derivative_sup": sup4,
            "C0": BOUND_CONSTANTS[0], "C1": BOUND_CONSTANTS[1],
            "levels": levels, "slope_0": slope0, "slope_1": slope1, "bounds_hold": holds}
