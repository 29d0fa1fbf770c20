"""Synthetic measurement generation.

Latin-hypercube designs for initial states, controls and collocation points;
an adaptive Dormand-Prince 5(4) integrator with quartic dense output and
event-based early termination; dataset assembly and CSV/JSON persistence.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, EvaluationError, StiffnessError

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1


# -- Latin hypercube -----------------------------------------------------------

@dataclass
class SampleDesign:
    n_points: int
    bounds: list[tuple[float, float]]
    seed: int = 0


def lhs(design: SampleDesign) -> np.ndarray:
    """n_points x dims matrix with exactly one sample per stratum in every dimension."""
    n = int(design.n_points)
    if n <= 0:
        raise ArgumentError("n_points must be positive")
    bounds = np.asarray(design.bounds, dtype=float).reshape(-1, 2)
    if np.any(bounds[:, 0] > bounds[:, 1]):
        raise ArgumentError("lower bound above upper bound")
    rng = np.random.default_rng(design.seed)
    d = bounds.shape[0]
    u = np.empty((n, d))
    for k in range(d):
        u[:, k] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


# -- Dormand-Prince 5(4) -------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th- and 4th-order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic continuous extension; row i gives the coefficients of theta^1..theta^4
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass
class Trajectory:
    """Time grid plus differential states, hidden algebraic states and constant inputs."""

    t: np.ndarray
    x: np.ndarray
    state_names: list[str] = field(default_factory=list)
    y: np.ndarray | None = None
    algebraic_names: list[str] = field(default_factory=list)
    controls: dict[str, float] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    def column(self, name: str) -> np.ndarray:
        if name in self.state_names:
            return self.x[:, self.state_names.index(name)]
        if name in self.algebraic_names:
            return self.y[:, self.algebraic_names.index(name)]
        if name in self.controls:
            return np.full(self.t.shape, self.controls[name])
        if name in self.extra:
            return np.full(self.t.shape, self.extra[name])
        raise KeyError(name)

    def to_csv(self, path) -> None:
        names = ["t", *self.state_names, *self.algebraic_names, *self.controls, *self.extra]
        cols = [self.column(n) if n != "t" else self.t for n in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, state_names, algebraic_names=(), control_names=(),
                 extra_names=(), truncated=False) -> Trajectory:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        col = {n: data[:, i] for i, n in enumerate(header)}
        y = (np.column_stack([col[n] for n in algebraic_names])
             if algebraic_names else None)
        return cls(
            t=col["t"],
            x=np.column_stack([col[n] for n in state_names]),
            state_names=list(state_names),
            y=y,
            algebraic_names=list(algebraic_names),
            controls={n: float(col[n][0]) for n in control_names},
            extra={n: float(col[n][0]) for n in extra_names},
            truncated=truncated,
        )


def _rms(v) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, span) -> float:
    # Hairer, Norsett & Wanner, "Solving ODEs I", II.4
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * direction * f0
    f1 = fun(t0 + h0 * direction, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


class DenseSolution:
    """Piecewise quartic interpolant over the accepted steps."""

    def __init__(self):
        self.t0: list[float] = []
        self.h: list[float] = []
        self.y0: list[np.ndarray] = []
        self.Q: list[np.ndarray] = []

    def append(self, t, h, y, K) -> None:
        self.t0.append(t)
        self.h.append(h)
        self.y0.append(y)
        self.Q.append(K.T @ _P)

    @staticmethod
    def eval_step(y, h, Q, theta) -> np.ndarray:
        powers = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
        return y + h * (Q @ powers)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        starts = np.asarray(self.t0)
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)
        out = np.empty((t.size, self.y0[0].size))
        for k, (tk, i) in enumerate(zip(t, idx)):
            theta = (tk - starts[i]) / self.h[i]
            out[k] = self.eval_step(self.y0[i], self.h[i], self.Q[i], theta)
        return out


def integrate(rhs: Callable, x0, t_span, rtol: float = 1e-10, atol: float = 1e-12,
              grid_size: int = 101, stop: Callable | None = None,
              max_steps: int = 1_000_000) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) solve of ``x' = rhs(t, x)`` sampled on a uniform grid.

    ``stop(t, x)`` returns a margin that stays positive while the state is
    admissible.  When it reaches zero the solve ends at the located event time
    and the grid is rebuilt over the shortened span with the same point count.
    """
    if rtol <= 0 or atol <= 0:
        raise ArgumentError("tolerances must be positive")
    if grid_size < 2:
        raise ArgumentError("grid_size must be >= 2")
    t0, tf = float(t_span[0]), float(t_span[1])
    if tf <= t0:
        raise ArgumentError("t_span must be increasing")
    span = tf - t0

    def fun(t, y):
        f = np.asarray(rhs(t, y), dtype=float)
        if not np.all(np.isfinite(f)):
            raise EvaluationError(f"non-finite right-hand side at t={t}")
        return f

    y = np.asarray(x0, dtype=float).copy()
    f = fun(t0, y)
    if stop is not None and stop(t0, y) <= 0:
        raise ArgumentError("initial state violates the stop predicate")
    h = _initial_step(fun, t0, y, f, 1.0, rtol, atol, span)
    dense = DenseSolution()
    t = t0
    t_end = tf
    truncated = False
    n_rejected = 0
    K = np.empty((7, y.size))
    for _ in range(max_steps):
        if t >= tf:
            break
        h = min(h, tf - t)
        if h < 1e-14 * span:
            raise StiffnessError(f"step size underflow at t={t}")
        K[0] = f
        for s in range(1, 6):
            K[s] = fun(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        f_new = fun(t + h, y_new)
        K[6] = f_new
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(h * (_E @ K) / scale)
        if err > 1.0:
            n_rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            continue
        dense.append(t, h, y.copy(), K.copy())
        t_next = tf if tf - (t + h) < 1e-14 * span else t + h
        if stop is not None and stop(t_next, y_new) <= 0:
            y_s, h_s, Q_s = dense.y0[-1], dense.h[-1], dense.Q[-1]

            def margin(theta):
                return stop(t + theta * h_s, DenseSolution.eval_step(y_s, h_s, Q_s, theta))

            theta = brentq(margin, 0.0, 1.0, xtol=1e-14) if margin(0.0) > 0 else 0.0
            t_end = t + theta * h_s
            truncated = True
            break
        t, y, f = t_next, y_new, f_new
        factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        h *= factor
    else:
        raise StiffnessError(f"step budget of {max_steps} exhausted at t={t}")

    grid = np.linspace(t0, t_end, grid_size)
    x = dense(grid)
    if not truncated:
        x[-1] = y
    return Trajectory(t=grid, x=x, truncated=truncated,
                      meta={"n_steps": len(dense.h), "n_rejected": n_rejected,
                            "t_end": t_end})


# -- process models and datasets -----------------------------------------------

@dataclass
class ProcessModel:
    """Full-order reference model used to fabricate measurements.

    ``rhs(t, x, u, extra)`` returns state derivatives per second;
    ``hidden(x, u, extra)`` returns the algebraic quantities along a trajectory
    (one row per time point); ``stop`` is an optional admissibility margin.
    """

    model_id: str
    state_names: list[str]
    control_names: list[str]
    extra_names: list[str]
    algebraic_names: list[str]
    ranges: dict[str, tuple[float, float]]
    horizon: float
    grid_size: int
    rhs: Callable
    hidden: Callable
    rtol: float = 1e-10
    atol: float = 1e-12
    stop: Callable | None = None
    fixed_extra: dict[str, float] = field(default_factory=dict)
    validate: Callable | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def sampled_names(self) -> list[str]:
        return [*self.state_names, *self.control_names,
                *[n for n in self.extra_names if n not in self.fixed_extra]]

    def simulate(self, x0, controls: dict, extra: dict, rtol=None, atol=None) -> Trajectory:
        u = np.array([controls[n] for n in self.control_names])
        ex = {**self.fixed_extra, **extra}
        stop = None
        if self.stop is not None:
            def stop(t, x):
                return self.stop(x, u, ex)
        traj = integrate(lambda t, x: self.rhs(t, x, u, ex), x0, (0.0, self.horizon),
                         rtol=rtol or self.rtol, atol=atol or self.atol,
                         grid_size=self.grid_size, stop=stop)
        traj.state_names = list(self.state_names)
        traj.algebraic_names = list(self.algebraic_names)
        traj.controls = {n: float(controls[n]) for n in self.control_names}
        traj.extra = {n: float(ex[n]) for n in self.extra_names if n in ex}
        if self.algebraic_names:
            traj.y = np.asarray(self.hidden(traj.x, u, ex), dtype=float)
        return traj


@dataclass
class Dataset:
    model_id: str
    seed: int
    ranges: dict[str, tuple[float, float]]
    splits: dict[str, list[Trajectory]]

    @property
    def train(self) -> list[Trajectory]:
        return self.splits["train"]

    @property
    def test(self) -> list[Trajectory]:
        return self.splits["test"]

    def save(self, directory, provenance: dict | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for split, trajs in self.splits.items():
            for i, tr in enumerate(trajs):
                name = f"{split}_{i:04d}.csv"
                tr.to_csv(directory / name)
                files.append({"file": name, "split": split, "truncated": tr.truncated})
        first = next(tr for trajs in self.splits.values() for tr in trajs)
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "model_id": self.model_id,
            "seed": self.seed,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "state_names": first.state_names,
            "algebraic_names": first.algebraic_names,
            "control_names": list(first.controls),
            "extra_names": list(first.extra),
            "files": files,
            "provenance": provenance or {},
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory) -> Dataset:
        directory = Path(directory)
        m = json.loads((directory / "manifest.json").read_text())
        splits: dict[str, list[Trajectory]] = {}
        for entry in m["files"]:
            tr = Trajectory.from_csv(directory / entry["file"], m["state_names"],
                                     m["algebraic_names"], m["control_names"],
                                     m["extra_names"], entry["truncated"])
            splits.setdefault(entry["split"], []).append(tr)
        return cls(m["model_id"], m["seed"], {k: tuple(v) for k, v in m["ranges"].items()},
                   splits)


def _check_ranges(model: ProcessModel, ranges: dict) -> None:
    for name in model.sampled_names:
        if name not in ranges:
            raise ArgumentError(f"missing range for {name!r}")
        lo, hi = ranges[name]
        if lo > hi:
            raise ArgumentError(f"empty range for {name!r}")
    if model.validate is not None:
        model.validate(ranges)


def sample_conditions(model: ProcessModel, ranges: dict, n: int, seed: int) -> list[dict]:
    """LHS draw of initial states, controls and varying extra inputs."""
    _check_ranges(model, ranges)
    names = model.sampled_names
    pts = lhs(SampleDesign(n, [ranges[k] for k in names], seed))
    rows = [dict(zip(names, p)) for p in pts]
    if model.stop is None:
        return rows
    # rows starting outside the admissible region are redrawn uniformly
    rng = np.random.default_rng([seed, 1])
    for row in rows:
        for _ in range(1000):
            x = np.array([row[k] for k in model.state_names])
            u = np.array([row[k] for k in model.control_names])
            ex = {**model.fixed_extra, **{k: row[k] for k in model.extra_names if k in row}}
            if model.stop(x, u, ex) > 0:
                break
            for k in model.state_names:
                row[k] = rng.uniform(*ranges[k])
        else:
            raise ArgumentError("could not draw an admissible initial state")
    return rows


def simulate_rows(model: ProcessModel, rows: list[dict], rtol=None, atol=None) -> list[Trajectory]:
    out = []
    for i, row in enumerate(rows):
        x0 = np.array([row[k] for k in model.state_names])
        ctrl = {k: row[k] for k in model.control_names}
        extra = {k: row[k] for k in model.extra_names if k in row}
        tr = model.simulate(x0, ctrl, extra, rtol=rtol, atol=atol)
        if tr.truncated:
            log.info("%s trajectory %d truncated at t=%.3f", model.model_id, i, tr.meta["t_end"])
        out.append(tr)
    return out


def build_dataset(model_id: str | ProcessModel, ranges: dict | None = None, n_total: int = 100,
                  n_test: int = 20, n_train: int = 20, seed: int = 0,
                  extra_splits: dict[str, tuple[dict, int]] | None = None,
                  rtol=None, atol=None, model: ProcessModel | None = None) -> Dataset:
    """Simulate ``n_total`` LHS-drawn trajectories and split them into test/train.

    ``extra_splits`` maps a split name to ``(ranges, count)`` for additional
    held-out sets such as an extrapolation range.
    """
    if model is None:
        if isinstance(model_id, ProcessModel):
            model = model_id
        else:
            from .registry import process_model
            model = process_model(model_id)
    ranges = dict(model.ranges if ranges is None else ranges)
    if n_test < 0 or n_train < 0 or n_train > n_total - n_test:
        raise ArgumentError("need n_train <= n_total - n_test")
    rows = sample_conditions(model, ranges, n_total, seed)
    order = np.random.default_rng([seed, 2]).permutation(n_total)
    test_idx, train_idx = order[:n_test], order[n_test:n_test + n_train]
    pool = simulate_rows(model, [rows[i] for i in np.concatenate([test_idx, train_idx])],
                         rtol, atol)
    splits = {"test": pool[:n_test], "train": pool[n_test:]}
    for k, (split_ranges, count) in (extra_splits or {}).items():
        merged = {**ranges, **split_ranges}
        extra_rows = sample_conditions(model, merged, count, seed + 7919 * (1 + len(splits)))
        splits[k] = simulate_rows(model, extra_rows, rtol, atol)
    return Dataset(model.model_id, seed, ranges, splits)
