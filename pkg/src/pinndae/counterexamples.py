"""Two small systems where the incidence heuristic gives the wrong answer.

``sm5``: x1' = x1 x2 + x3, x2' = 0, x3' = 0 with only x1 measured.  The
matrix is rank deficient, yet x2 and x3 are observable from x1's trajectory.

``sm6``: two dependent equations for x1' with only y measured.  The matrix
has full column rank, yet infinitely many (x1, x2) pairs fit the data.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .dae import DaeSystem
from .datagen import ProcessModel

SM5_X0 = {"x1": 1.0, "x2": 1.0, "x3": 2.0}
SM6_X0 = {"x1": 1.0, "x2": 1.0}


def sm5_closed_form(t, x10=1.0, x20=1.0, x30=2.0):
    t = np.asarray(t, dtype=float)
    x1 = (x10 + x30 / x20) * np.exp(x20 * t) - x30 / x20
    return x1, np.full_like(t, x20), np.full_like(t, x30)


def sm5_rhs(t, x):
    return np.array([x[0] * x[1] + x[2], 0.0, 0.0])


def sm5_process(rtol=1e-12, atol=1e-12) -> ProcessModel:
    return ProcessModel(
        model_id="counterexample-sm5",
        state_names=["x1", "x2", "x3"],
        control_names=[],
        extra_names=[],
        algebraic_names=[],
        ranges={k: (v, v) for k, v in SM5_X0.items()},
        horizon=1.0,
        grid_size=101,
        rhs=lambda t, x, u, extra: sm5_rhs(t, x),
        hidden=None,
        rtol=rtol,
        atol=atol,
    )


def sm5_system() -> DaeSystem:
    def residual(out, dout, inp):
        return [dout["x1"] - (out["x1"] * out["x2"] + out["x3"]), dout["x2"], dout["x3"]], []

    return DaeSystem(
        name="counterexample-sm5",
        input_names=["t"],
        output_names=["x1", "x2", "x3"],
        differential=["x1", "x2", "x3"],
        measured=["x1"],
        output_scales={"x1": 1.0, "x2": 1.0, "x3": 1.0},
        input_bounds={"t": (0.0, 1.0)},
        time_scale=1.0,
        residual=residual,
        occurrences={"ce-1": ["x1", "x2", "x3"], "ce-2": [], "ce-3": []},
        init_values={"x1": SM5_X0["x1"]},
    )


# The reference for sm6 needs some x2 dynamics and some y to produce data.
# Neither is known to the network: it only sees y and the two equations.

def sm6_rhs(t, x):
    x1, x2 = x
    return np.array([x1 + x2 + sm6_y(x2), -x2])


def sm6_y(x2):
    return 0.5 * x2


def sm6_process(rtol=1e-12, atol=1e-12) -> ProcessModel:
    return ProcessModel(
        model_id="counterexample-sm6",
        state_names=["x1", "x2"],
        control_names=[],
        extra_names=[],
        algebraic_names=["y"],
        ranges={k: (v, v) for k, v in SM6_X0.items()},
        horizon=1.0,
        grid_size=101,
        rhs=lambda t, x, u, extra: sm6_rhs(t, x),
        hidden=lambda x, u, extra: sm6_y(np.atleast_2d(x)[:, 1:2]),
        rtol=rtol,
        atol=atol,
    )


def sm6_system() -> DaeSystem:
    def residual(out, dout, inp):
        x1, x2, y = out["x1"], out["x2"], out["y"]
        expanded = x1 * x1 + x2 * x2 + y * y + 2.0 * x1 * x2 + 2.0 * x1 * y + 2.0 * x2 * y
        return [dout["x1"] - (x1 + x2 + y), dout["x1"] - ad.sqrt(expanded)], []

    return DaeSystem(
        name="counterexample-sm6",
        input_names=["t"],
        output_names=["x1", "x2", "y"],
        differential=["x1", "x2"],
        measured=["y"],
        output_scales={"x1": 1.0, "x2": 1.0, "y": 1.0},
        input_bounds={"t": (0.0, 1.0)},
        time_scale=1.0,
        residual=residual,
        occurrences={"ce2-1": ["x1", "x2", "y"], "ce2-2": ["x1", "x2", "y"]},
    )


def sm6_closed_form(t):
    t = np.asarray(t, dtype=float)
    x2 = np.exp(-t)
    # x1' - x1 = 1.5 e^{-t}  =>  x1 = (1 + 0.75) e^t - 0.75 e^{-t}
    x1 = 1.75 * np.exp(t) - 0.75 * np.exp(-t)
    return x1, x2, 0.5 * x2


def sm5_observability(dx1: float, ddx1: float, t: float, x10: float = 1.0) -> tuple[float, float]:
    """Initial x2, x3 recovered from the first two derivatives of x1 at time t."""
    x20 = ddx1 / dx1
    x30 = dx1 / math.exp(x20 * t) - x10 * x20
    return x20, x30
