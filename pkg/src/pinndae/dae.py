"""Partially known semi-explicit DAE systems as seen by a PINN."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datagen import Trajectory
from .errors import ArgumentError
from .structural import IncidenceMatrix, build_incidence


@dataclass
class DaeSystem:
    """Known physics plus the network input/output layout of one model variant.

    ``residual(out, dout, inp)`` receives dimensionless network outputs and
    their derivatives with respect to dimensionless time (both dicts keyed by
    output name; values are arrays or autodiff Vars) and raw input columns.
    It returns ``(f_residuals, g_residuals)`` as lists.  ``residual`` is None
    for purely data-driven models.

    Inputs named ``<state>0`` carry the initial value of that state; the
    remaining non-time inputs are controls or measured properties looked up
    on the trajectory by name.
    """

    name: str
    input_names: list[str]
    output_names: list[str]
    differential: list[str]
    measured: list[str]
    output_scales: dict[str, float]
    input_bounds: dict[str, tuple[float, float]]
    time_scale: float
    residual: Callable | None = None
    occurrences: dict[str, list[str]] = field(default_factory=dict)
    declared_states: list[str] = field(default_factory=list)
    init_values: dict[str, float] = field(default_factory=dict)
    output_activation: str = "identity"
    time_name: str = "t"

    def __post_init__(self):
        for name in self.measured + self.differential:
            if name not in self.output_names:
                raise ArgumentError(f"{name!r} is not a network output")
        if self.input_names[0] != self.time_name:
            raise ArgumentError("time must be the first network input")

    @property
    def unmeasured(self) -> list[str]:
        return [n for n in self.output_names if n not in self.measured]

    @property
    def measured_differential(self) -> list[str]:
        return [n for n in self.differential if n in self.measured]

    @property
    def measured_algebraic(self) -> list[str]:
        return [n for n in self.measured if n not in self.differential]

    def init_source(self, state: str) -> str | float:
        key = state + "0"
        if key in self.input_names:
            return key
        if state in self.init_values:
            return self.init_values[state]
        raise ArgumentError(f"no initial value source for {state!r}")

    def incidence(self) -> IncidenceMatrix:
        declared = self.declared_states or self.output_names
        return build_incidence(self.occurrences, self.unmeasured, declared)

    def bounds(self) -> tuple[list[float], list[float]]:
        lo = [self.input_bounds[n][0] for n in self.input_names]
        hi = [self.input_bounds[n][1] for n in self.input_names]
        return lo, hi

    def scales(self) -> list[float]:
        return [self.output_scales[n] for n in self.output_names]

    # -- trajectory plumbing -----------------------------------------------

    def input_matrix(self, traj: Trajectory, t=None) -> np.ndarray:
        t = traj.t if t is None else np.asarray(t, dtype=float)
        cols = []
        for name in self.input_names:
            if name == self.time_name:
                cols.append(t)
            elif name.endswith("0") and name[:-1] in traj.state_names:
                cols.append(np.full(t.shape, traj.x0[traj.state_names.index(name[:-1])]))
            else:
                cols.append(np.full(t.shape, traj.column(name)[0]))
        return np.column_stack(cols)

    def truth(self, traj: Trajectory, name: str) -> np.ndarray:
        """Physical-unit reference values of an output along a trajectory."""
        return traj.column(name)

    def to_physical(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y) * np.asarray(self.scales())

    def input_columns(self, X: np.ndarray) -> dict[str, np.ndarray]:
        return {n: X[:, i] for i, n in enumerate(self.input_names)}
