"""Multilayer perceptron over normalized inputs, with exact time derivatives.

The batched evaluator propagates, next to every activation ``a``, its
derivative ``da/dt`` with respect to the raw time input (forward mode).  The
matching reverse sweep back-propagates adjoints of both the outputs and the
output time-derivatives into the weights, which is everything a physics
residual loss needs.  ``build_tape`` expresses the very same network on the
scalar :mod:`pinndae.autodiff` tape; tests use it as the reference.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError

HIDDEN_ACTIVATIONS = ("tanh", "sigmoid")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")
CHECKPOINT_SCHEMA = 1


@dataclass
class NetworkSpec:
    input_dim: int
    hidden_widths: list[int]
    output_dim: int
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    seed: int = 0

    def __post_init__(self):
        self.hidden_widths = [int(w) for w in self.hidden_widths]
        if not self.hidden_widths:
            raise ArgumentError("at least one hidden layer is required")
        if self.input_dim < 1 or self.output_dim < 1 or min(self.hidden_widths) < 1:
            raise ArgumentError("layer widths must be >= 1")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ArgumentError(f"hidden activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ArgumentError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, self.output_dim]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass
class ScalingSpec:
    """Raw input box mapped onto [-1, 1]; per-output reference scales.

    ``output_scales`` multiply the dimensionless network outputs back into
    physical units.
    """

    lower: list[float]
    upper: list[float]
    output_scales: list[float] = field(default_factory=list)
    time_index: int = 0

    def __post_init__(self):
        self.lower = [float(v) for v in self.lower]
        self.upper = [float(v) for v in self.upper]
        self.output_scales = [float(v) for v in self.output_scales]
        if len(self.lower) != len(self.upper):
            raise ArgumentError("lower/upper length mismatch")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ArgumentError("every input needs lower < upper")
        if any(s == 0 for s in self.output_scales):
            raise ArgumentError("output reference scales must be nonzero")

    def normalize(self, x):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0

    def denormalize(self, z):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + (np.asarray(z, dtype=float) + 1.0) * (hi - lo) / 2.0

    @property
    def time_slope(self) -> float:
        """d(normalized time)/d(raw time)."""
        return 2.0 / (self.upper[self.time_index] - self.lower[self.time_index])


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def _act(name, z):
    if name == "tanh":
        a = np.tanh(z)
        d1 = 1.0 - a * a
        return a, d1, -2.0 * a * d1
    if name == "sigmoid":
        a = ad._sigmoid(z)
        d1 = a * (1.0 - a)
        return a, d1, d1 * (1.0 - 2.0 * a)
    return z, np.ones_like(z), np.zeros_like(z)


class Network:
    """Dense tanh/sigmoid MLP.  Parameters live in per-layer (W, b) arrays."""

    def __init__(self, spec: NetworkSpec, scaling: ScalingSpec,
                 weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(scaling.lower) != spec.input_dim:
            raise ArgumentError("scaling covers a different number of inputs")
        self.spec = spec
        self.scaling = scaling
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, spec: NetworkSpec, scaling: ScalingSpec) -> Network:
        rng = np.random.default_rng(spec.seed)
        sizes = spec.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = glorot_bound(fan_in, fan_out)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, scaling, weights, biases)

    # -- flat parameter view (row-major W, then b, layer by layer) ----------

    def get_params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.spec.n_params:
            raise ArgumentError(f"expected {self.spec.n_params} parameters, got {flat.size}")
        k = 0
        for i, W in enumerate(self.weights):
            n = W.size
            self.weights[i] = flat[k:k + n].reshape(W.shape).copy()
            k += n
            m = self.biases[i].size
            self.biases[i] = flat[k:k + m].copy()
            k += m

    def copy(self) -> Network:
        return Network(self.spec, self.scaling,
                       [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    # -- evaluation ---------------------------------------------------------

    def forward(self, X, with_time: bool = False, keep: bool = False):
        """Evaluate on raw inputs ``X`` (n_points x input_dim).

        Returns ``(Y, dY_dt, cache)``: outputs, their derivative with respect
        to the raw time input (None unless ``with_time``), and the
        intermediates needed by :meth:`backward` (None unless ``keep``).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.spec.input_dim:
            raise ArgumentError(f"expected {self.spec.input_dim} inputs, got {X.shape[1]}")
        a = self.scaling.normalize(X)
        da = None
        if with_time:
            da = np.zeros_like(a)
            da[:, self.scaling.time_index] = self.scaling.time_slope
        cache = [] if keep else None
        n_layers = len(self.weights)
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            act = self.spec.hidden_activation if li < n_layers - 1 else self.spec.output_activation
            z = a @ W + b
            dz = da @ W if with_time else None
            a_new, d1, d2 = _act(act, z)
            if keep:
                cache.append((a, da, d1, d2, dz))
            a = a_new
            if with_time:
                da = d1 * dz
        return a, da, cache

    def backward(self, cache, gY, gdY=None) -> np.ndarray:
        """Flat parameter gradient given adjoints of outputs and of their time derivatives."""
        grads_W, grads_b = [], []
        g_a = np.asarray(gY, dtype=float)
        g_da = None if gdY is None else np.asarray(gdY, dtype=float)
        for li in range(len(self.weights) - 1, -1, -1):
            a_in, da_in, d1, d2, dz = cache[li]
            W = self.weights[li]
            g_z = g_a * d1
            g_dz = None
            if g_da is not None:
                g_z = g_z + g_da * d2 * dz
                g_dz = g_da * d1
            gW = a_in.T @ g_z
            if g_dz is not None:
                gW = gW + da_in.T @ g_dz
            grads_W.append(gW)
            grads_b.append(g_z.sum(axis=0))
            if li > 0:
                g_a = g_z @ W.T
                g_da = None if g_dz is None else g_dz @ W.T
        parts = []
        for gW, gb in zip(reversed(grads_W), reversed(grads_b)):
            parts.append(gW.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def __call__(self, X):
        return self.forward(X)[0]

    def predict(self, t, x0m=(), u=(), extra=()) -> np.ndarray:
        """Dimensionless outputs for inputs laid out as ``[t, x0m..., u..., extra...]``.

        Each argument is a scalar/1-D array (one value per point) or a 2-D
        block of columns.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [t.reshape(-1, 1)]
        for block in (x0m, u, extra):
            arr = np.asarray(block, dtype=float)
            if arr.size == 0:
                continue
            if arr.ndim <= 1:
                arr = np.broadcast_to(arr, (t.size, arr.size))
            cols.append(arr)
        X = np.hstack(cols)
        if X.shape[1] != self.spec.input_dim:
            raise ArgumentError(
                f"network expects {self.spec.input_dim} inputs, got {X.shape[1]}")
        return self.forward(X)[0]

    # -- persistence --------------------------------------------------------

    def to_dict(self, metadata: dict | None = None) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "spec": asdict(self.spec),
            "scaling": asdict(self.scaling),
            "seed": self.spec.seed,
            "params": self.get_params().tolist(),
            "metadata": metadata or {},
        }

    @classmethod
    def from_dict(cls, d: dict) -> Network:
        net = cls.init(NetworkSpec(**d["spec"]), ScalingSpec(**d["scaling"]))
        net.set_params(np.array(d["params"], dtype=float))
        return net

    def save(self, path, metadata: dict | None = None) -> None:
        # repr-based float output keeps the round trip bit-exact
        Path(path).write_text(json.dumps(self.to_dict(metadata), indent=1))

    @classmethod
    def load(cls, path) -> Network:
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_tape(net: Network, x_raw) -> tuple[ad.Tape, list[ad.Var]]:
    """Scalar tape computing ``net`` at a single raw input point.

    Inputs are the raw coordinates, parameters follow the flat ordering of
    :meth:`Network.get_params`.  Outputs are marked in order.
    """
    tape = ad.Tape()
    x_raw = np.asarray(x_raw, dtype=float).ravel()
    lo, hi = net.scaling.lower, net.scaling.upper
    inputs = [tape.input(float(v)) for v in x_raw]
    a = [(xi - lo[i]) * (2.0 / (hi[i] - lo[i])) - 1.0 for i, xi in enumerate(inputs)]
    flat = net.get_params()
    params = [tape.param(float(v)) for v in flat]
    k = 0
    n_layers = len(net.weights)
    for li, W in enumerate(net.weights):
        n_in, n_out = W.shape
        Wv = [[params[k + i * n_out + j] for j in range(n_out)] for i in range(n_in)]
        k += n_in * n_out
        bv = params[k:k + n_out]
        k += n_out
        act = net.spec.hidden_activation if li < n_layers - 1 else net.spec.output_activation
        new = []
        for j in range(n_out):
            z = bv[j]
            for i in range(n_in):
                z = z + a[i] * Wv[i][j]
            if act == "tanh":
                z = ad.tanh(z)
            elif act == "sigmoid":
                z = ad.sigmoid(z)
            new.append(z)
        a = new
    for out in a:
        tape.mark_output(out)
    return tape, a
