"""Loss terms, optimizers and the two-phase (Adam, then L-BFGS) training loop.

Total loss: ``data + lambda1 * physics + lambda2 * init``.  All terms are
mean squared errors in dimensionless units.  Physics residuals come from the
model's ``DaeSystem.residual``; they are evaluated on an autodiff tape whose
leaves are the network outputs and output time-derivatives at every
collocation point, so one reverse sweep gives the adjoints the batched
network backward pass needs.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .dae import DaeSystem
from .datagen import SampleDesign, Trajectory, lhs
from .errors import ArgumentError, EvaluationError, TrainingError
from .net import Network, NetworkSpec, ScalingSpec

log = logging.getLogger(__name__)

HISTORY_FIELDS = ["epoch", "phase", "mse_data", "mse_physics", "mse_init",
                  "lambda1", "lambda2", "total"]


@dataclass
class LossConfig:
    lambda1: float = 1.0        # physics weight (vanilla: init weight)
    lambda2: float = 1.0        # init weight
    lambda_g: float = 1.0       # algebraic vs differential residuals
    n_collocation: int = 10000
    n_init: int = 100
    idw: bool = True
    idw_period: int = 10
    idw_alpha: float = 0.5

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda_g) < 0:
            raise ArgumentError("loss weights must be non-negative")
        if self.n_collocation < 1 or self.n_init < 1 or self.idw_period < 1:
            raise ArgumentError("counts and the update period must be >= 1")
        if not 0.0 <= self.idw_alpha <= 1.0:
            raise ArgumentError("smoothing factor must lie in [0, 1]")


@dataclass
class AdamConfig:
    epochs: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class LbfgsConfig:
    epochs: int = 300
    history: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-9
    max_line_search: int = 25


@dataclass
class OptimizerSchedule:
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)

    def __post_init__(self):
        if self.adam.epochs < 0 or self.lbfgs.epochs < 0:
            raise ArgumentError("epoch counts must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> OptimizerSchedule:
        return cls(AdamConfig(**d.get("adam", {})), LbfgsConfig(**d.get("lbfgs", {})))


# -- training data layout ---------------------------------------------------------

@dataclass
class Problem:
    """Everything the losses need, as plain arrays of raw network inputs."""

    system: DaeSystem
    X_data: np.ndarray
    Y_data: np.ndarray       # dimensionless targets, one column per measured output
    data_cols: list[int]
    X_col: np.ndarray
    X_init: np.ndarray
    Y_init: np.ndarray
    init_cols: list[int]


def data_arrays(system: DaeSystem, trajectories: Sequence[Trajectory]):
    if not trajectories:
        raise ArgumentError("no training trajectories")
    cols = [system.output_names.index(n) for n in system.measured]
    X = np.vstack([system.input_matrix(tr) for tr in trajectories])
    Y = np.vstack([np.column_stack([system.truth(tr, n) / system.output_scales[n]
                                    for n in system.measured]) for tr in trajectories])
    return X, Y, cols


def collocation_points(system: DaeSystem, n: int, seed: int) -> np.ndarray:
    lo, hi = system.bounds()
    return lhs(SampleDesign(n, list(zip(lo, hi)), seed))


def init_points(system: DaeSystem, n: int, seed: int):
    """Points at t0 over the input box and the initial values they imply."""
    lo, hi = system.bounds()
    X = lhs(SampleDesign(n, list(zip(lo, hi)), seed))
    X[:, 0] = lo[0]
    names = system.measured_differential
    cols = [system.output_names.index(s) for s in names]
    targets = []
    for s in names:
        src = system.init_source(s)
        if isinstance(src, str):
            targets.append(X[:, system.input_names.index(src)] / system.output_scales[s])
        else:
            targets.append(np.full(n, src / system.output_scales[s]))
    Y = np.column_stack(targets) if targets else np.zeros((n, 0))
    return X, Y, cols


def build_problem(system: DaeSystem, trajectories: Sequence[Trajectory],
                  config: LossConfig, seed: int = 0) -> Problem:
    X, Y, cols = data_arrays(system, trajectories)
    X_col = collocation_points(system, config.n_collocation, seed * 2 + 101)
    X_init, Y_init, init_cols = init_points(system, config.n_init, seed * 2 + 102)
    return Problem(system, X, Y, cols, X_col, X_init, Y_init, init_cols)


# -- loss terms ------------------------------------------------------------------------

def _mse_columns(net: Network, X, targets, cols, grad: bool):
    if len(cols) == 0 or len(X) == 0:
        return 0.0, (np.zeros(net.spec.n_params) if grad else None)
    Y, _, cache = net.forward(X, keep=grad)
    r = Y[:, cols] - targets
    n = r.size
    value = float(np.sum(r * r) / n)
    if not grad:
        return value, None
    gY = np.zeros_like(Y)
    gY[:, cols] = 2.0 * r / n
    return value, net.backward(cache, gY)


def loss_data(net: Network, X, targets, cols, grad: bool = False):
    """Mean squared mismatch over measured outputs and data points."""
    if len(X) == 0:
        raise ArgumentError("empty data set")
    value, g = _mse_columns(net, X, targets, cols, grad)
    return (value, g) if grad else value


def loss_init(net: Network, X_init, targets, cols, grad: bool = False):
    value, g = _mse_columns(net, X_init, targets, cols, grad)
    return (value, g) if grad else value


def residuals(system: DaeSystem, Y, dY_dt, X):
    """Evaluate the system residual on a tape; returns (tape, leaves, f, g)."""
    tape = ad.Tape()
    out = {n: tape.input(Y[:, j]) for j, n in enumerate(system.output_names)}
    dout = {n: tape.input(dY_dt[:, system.output_names.index(n)] * system.time_scale)
            for n in system.differential}
    f, g = system.residual(out, dout, system.input_columns(X))
    return tape, out, dout, list(f), list(g)


def loss_physics(net: Network, system: DaeSystem, X_col, lambda_g: float = 1.0,
                 grad: bool = False):
    """Differential residual mean plus ``lambda_g`` times the algebraic one."""
    if system.residual is None:
        raise ArgumentError(f"{system.name} has no physics residual")
    Y, dY, cache = net.forward(X_col, with_time=True, keep=grad)
    if Y.shape[1] != len(system.output_names):
        raise ArgumentError("network outputs do not match the system outputs")
    tape, out, dout, f, g = residuals(system, Y, dY, X_col)
    n = len(X_col)
    value = 0.0
    seeds: dict[int, np.ndarray] = {}
    for group, weight in ((f, 1.0), (g, lambda_g)):
        if not group:
            continue
        scale = weight / (len(group) * n)
        for r in group:
            v = np.broadcast_to(r.value if isinstance(r, ad.Var) else np.asarray(r, float), (n,))
            value += scale * float(np.dot(v, v))
            if isinstance(r, ad.Var) and scale:
                seeds[r.id] = seeds.get(r.id, 0.0) + 2.0 * scale * v
    if not grad:
        return value
    if seeds:
        tape.backward_seeded(seeds)
    gY = np.zeros_like(Y)
    gdY = np.zeros_like(dY)
    for j, name in enumerate(system.output_names):
        gY[:, j] = out[name].adjoint
        if name in dout:
            gdY[:, j] = dout[name].adjoint * system.time_scale
    return value, net.backward(cache, gY, gdY)


def loss_vanilla(net: Network, system: DaeSystem, problem: Problem, lambda1: float):
    if system.unmeasured:
        raise ArgumentError("a vanilla network may only output measured states")
    return (loss_data(net, problem.X_data, problem.Y_data, problem.data_cols)
            + lambda1 * loss_init(net, problem.X_init, problem.Y_init, problem.init_cols))


class Objective:
    """Weighted total loss of one problem with per-term values and gradients."""

    def __init__(self, net: Network, problem: Problem, config: LossConfig):
        self.net = net
        self.problem = problem
        self.config = config
        self.has_physics = problem.system.residual is not None
        if self.has_physics:
            self.weights = {"physics": config.lambda1, "init": config.lambda2}
        else:
            self.weights = {"init": config.lambda1}
        self._last: tuple[np.ndarray, dict] | None = None

    def terms(self, params=None, grad: bool = True) -> dict:
        if params is not None:
            if self._last is not None and np.array_equal(self._last[0], params):
                return self._last[1]
            self.net.set_params(params)
        p, net = self.problem, self.net
        out = {"data": _mse_columns(net, p.X_data, p.Y_data, p.data_cols, grad)}
        if self.has_physics:
            out["physics"] = loss_physics(net, p.system, p.X_col, self.config.lambda_g, grad)
            if not grad:
                out["physics"] = (out["physics"], None)
        out["init"] = _mse_columns(net, p.X_init, p.Y_init, p.init_cols, grad)
        if grad and params is not None:
            self._last = (np.array(params, copy=True), out)
        return out

    def combine(self, terms: dict):
        total = terms["data"][0]
        g = terms["data"][1]
        g = None if g is None else g.copy()
        for k, w in self.weights.items():
            total += w * terms[k][0]
            if g is not None:
                g += w * terms[k][1]
        return total, g

    def __call__(self, params):
        return self.combine(self.terms(params))

    def record(self, epoch: int, phase: str, terms: dict) -> dict:
        total, _ = self.combine({k: (v[0], None) for k, v in terms.items()})
        return {
            "epoch": epoch, "phase": phase,
            "mse_data": terms["data"][0],
            "mse_physics": terms["physics"][0] if "physics" in terms else 0.0,
            "mse_init": terms["init"][0],
            "lambda1": self.weights.get("physics", self.weights.get("init")),
            "lambda2": self.weights["init"] if self.has_physics else 0.0,
            "total": total,
        }


# -- optimizers -------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, grads, state: AdamState, config: AdamConfig = AdamConfig(),
              epoch: int | None = None) -> np.ndarray:
    grads = np.asarray(grads, dtype=float)
    if grads.shape != np.shape(params):
        raise ArgumentError("parameter and gradient shapes differ")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient", epoch=epoch)
    state.t += 1
    state.m = config.beta1 * state.m + (1 - config.beta1) * grads
    state.v = config.beta2 * state.v + (1 - config.beta2) * grads * grads
    m_hat = state.m / (1 - config.beta1 ** state.t)
    v_hat = state.v / (1 - config.beta2 ** state.t)
    return params - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)


def idw_update(grad_std: dict[str, float], weights: dict[str, float],
               alpha: float = 0.5) -> dict[str, float]:
    """Inverse-Dirichlet weights: equalize the gradient spread of every term.

    ``grad_std`` holds the unweighted parameter-gradient standard deviation of
    every term, including ``data``.  The data weight is pinned at 1, so each
    other term is scaled to the data term's spread; relative to the largest
    spread this differs only by a common factor, which Adam ignores.  The raw
    ratio is blended into the old weight with factor ``alpha``.  Terms with a
    zero spread keep their previous weight.
    """
    ref = grad_std.get("data", 0.0)
    new = dict(weights)
    if not ref > 0 or not np.isfinite(ref):
        return new
    for k, w in weights.items():
        s = grad_std.get(k, 0.0)
        if s > 0 and np.isfinite(s):
            new[k] = (1 - alpha) * w + alpha * ref / s
    return new


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    trace: list[float]
    n_iter: int
    status: str          # converged | max-iter | line-search-failed


def _cubic_min(a, fa, da, b, fb, db):
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    den = db - da + 2 * d2
    if den == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / den


def strong_wolfe(fun, x, f0, g0, d, alpha0=1.0, c1=1e-4, c2=0.9, max_iter=25):
    """Line search along ``d``; returns (alpha, f, g, ok).

    On failure the best point with sufficient decrease is returned if there
    is one, else ``alpha = 0``.
    """
    dphi0 = float(g0 @ d)
    best = (0.0, f0, g0)

    def phi(a):
        nonlocal best
        f, g = fun(x + a * d)
        if not np.isfinite(f):
            return np.inf, None, np.inf
        if f < best[1] and f <= f0 + c1 * a * dphi0:
            best = (a, f, g)
        return f, g, float(g @ d)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi, budget):
        for _ in range(budget):
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            span = hi - lo
            if a is None or not (min(lo, hi) + 0.1 * abs(span) <= a <= max(lo, hi) - 0.1 * abs(span)):
                a = lo + 0.5 * span
            f, g, dphi = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, dphi
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return a, f, g, True
                if dphi * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, dphi
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return (*best, False)

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    for i in range(max_iter):
        f, g, dphi = phi(a)
        if f > f0 + c1 * a * dphi0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, f, dphi, max_iter - i)
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g, True
        if dphi >= 0:
            return zoom(a, f, dphi, a_prev, f_prev, d_prev, max_iter - i)
        a_prev, f_prev, d_prev = a, f, dphi
        a *= 2.0
    return (*best, False)


def lbfgs_minimize(fun: Callable, x0, config: LbfgsConfig = LbfgsConfig(),
                   callback: Callable | None = None) -> LbfgsResult:
    """Limited-memory BFGS with a strong-Wolfe line search.

    ``fun(x)`` returns ``(f, grad)``.  ``callback(k, x, f)`` runs after every
    accepted iteration.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    trace = [float(f)]
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return LbfgsResult(x, f, trace, 0, "line-search-failed")
    S: list[np.ndarray] = []
    Yv: list[np.ndarray] = []
    rho: list[float] = []
    status = "max-iter"
    k = 0
    if np.max(np.abs(g), initial=0.0) < config.gtol:
        return LbfgsResult(x, f, trace, 0, "converged")
    while k < config.epochs:
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Yv), reversed(rho)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Yv[-1]) / (Yv[-1] @ Yv[-1])
        for (s, y, r), a in zip(zip(S, Yv, rho), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        d = -q
        if g @ d >= 0:
            S.clear(), Yv.clear(), rho.clear()
            d = -g
        alpha0 = 1.0 if S else min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))
        alpha, f_new, g_new, ok = strong_wolfe(fun, x, f, g, d, alpha0, config.c1, config.c2,
                                               config.max_line_search)
        if alpha == 0.0:
            status = "line-search-failed"
            break
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s), Yv.append(y), rho.append(1.0 / sy)
            if len(S) > config.history:
                S.pop(0), Yv.pop(0), rho.pop(0)
        x, f, g = x + s, f_new, g_new
        k += 1
        trace.append(float(f))
        if callback is not None:
            callback(k, x, f)
        if not ok:
            status = "line-search-failed"
            break
        if np.max(np.abs(g)) < config.gtol:
            status = "converged"
            break
    return LbfgsResult(x, float(f), trace, k, status)


# -- training loop -------------------------------------------------------------------

@dataclass
class TrainResult:
    net: Network
    history: list[dict]
    weights: dict[str, float]
    lbfgs_status: str = "skipped"

    def write_history(self, path) -> None:
        write_history(self.history, path)


def write_history(history: list[dict], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def make_network(system: DaeSystem, hidden_widths=(32, 32), seed: int = 0,
                 activation: str = "tanh") -> Network:
    lo, hi = system.bounds()
    spec = NetworkSpec(len(system.input_names), list(hidden_widths), len(system.output_names),
                       activation, system.output_activation, seed)
    return Network.init(spec, ScalingSpec(lo, hi, system.scales(), 0))


def train(net: Network, problem: Problem, config: LossConfig = LossConfig(),
          schedule: OptimizerSchedule = OptimizerSchedule(), log_every: int = 0) -> TrainResult:
    """Full-batch Adam with inverse-Dirichlet weighting, then L-BFGS with frozen weights."""
    obj = Objective(net, problem, config)
    history: list[dict] = []
    params = net.get_params()
    state = AdamState.zeros(params.size)

    for epoch in range(schedule.adam.epochs):
        try:
            terms = obj.terms(params)
        except EvaluationError as exc:
            raise TrainingError(f"loss evaluation failed: {exc}", epoch, history) from exc
        if config.idw and epoch % config.idw_period == 0:
            spread = {k: float(np.std(v[1])) for k, v in terms.items()}
            obj.weights = idw_update(spread, obj.weights, config.idw_alpha)
        total, g = obj.combine(terms)
        row = obj.record(epoch, "adam", terms)
        history.append(row)
        if not np.isfinite(total):
            raise TrainingError("loss diverged", epoch, history)
        params = adam_step(params, g, state, schedule.adam, epoch)
        if log_every and epoch % log_every == 0:
            log.info("adam %d total=%.3e", epoch, total)
    net.set_params(params)

    status = "skipped"
    if schedule.lbfgs.epochs > 0:
        start = schedule.adam.epochs

        def fun(x):
            try:
                return obj(x)
            except EvaluationError:
                return np.inf, np.full(x.size, np.nan)

        def callback(k, x, f):
            history.append(obj.record(start + k - 1, "lbfgs", obj.terms(x, grad=False)))

        res = lbfgs_minimize(fun, params, schedule.lbfgs, callback)
        if not np.isfinite(res.f):
            raise TrainingError("loss diverged during L-BFGS", start + res.n_iter, history)
        params = res.x
        status = res.status
        net.set_params(params)
    return TrainResult(net, history, dict(obj.weights), status)
