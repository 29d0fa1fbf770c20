"""Horizontal liquid-liquid separator: lumped sedimentation/coalescence model and 0D balances.

Heights are measured from the vessel bottom.  The aqueous phase carries the
dispersed organic drops; they settle into the dense-packed zone (DPZ) where
they coalesce into the organic layer.  ``rates`` marches along the vessel
axis and returns the lumped sedimentation, coalescence and trapped-water
flows that close the height balances in ``full_rhs``.

Drop counts in the march are number *flows* (drops per second) so that
``pi/6 * sum(n d^3)`` is the dispersed volume flow of a segment.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from . import autodiff as ad
from .dae import DaeSystem
from .datagen import ProcessModel
from .errors import ArgumentError, DomainError, InternalError

STATES = ["h_DPZ", "h_aq"]
CONTROLS = ["V_aq", "V_org"]
PROPERTIES = ["d32", "rv"]
RATE_NAMES = ["Vc", "Vs", "Vw"]

RANGES = {
    "h_aq": (0.090, 0.110),
    "h_DPZ": (0.108, 0.132),
    "V_aq": (4.5e-4, 5.5e-4),
    "V_org": (2.0e-4, 5.0e-4),
    "d32": (9.0e-4, 1.1e-3),
    "rv": (0.033, 0.043),
}
HORIZON_S = 20.0
GRID_SIZE = 201


@dataclass(frozen=True)
class SeparatorParams:
    R: float = 0.1              # m
    L: float = 1.8              # m
    g: float = 9.81             # m/s^2
    drho: float = 115.0         # kg/m^3
    eta_org: float = 0.775e-3   # Pa s
    eta_aq: float = 1.012e-3    # Pa s
    sigma: float = 0.013        # N/m
    rv: float = 0.0383
    Hc: float = 1e-20           # N m
    eps_p: float = 0.9          # DPZ hold-up
    n_swarm: float = 2.0
    spread: float = 0.32        # sigma / d32 of the inlet volume distribution
    eps_in: float = 0.1         # inlet hold-up of the aqueous phase
    n_segments: int = 200
    n_classes: int = 50
    h_L: float = 0.2            # constant total liquid height, m

    def __post_init__(self):
        if not 0.0 < self.eps_p < 1.0:
            raise ArgumentError("eps_p must lie in (0, 1)")
        if not 0.0 <= self.eps_in < 1.0:
            raise ArgumentError("eps_in must lie in [0, 1)")
        if self.n_segments < 1:
            raise ArgumentError("need at least one axial segment")
        if self.n_classes < 2:
            raise ArgumentError("need at least two drop classes")

    @property
    def eta_c(self) -> float:
        # the aqueous layer is the continuous phase around the drops
        return self.eta_aq


@dataclass(frozen=True)
class SeparatorScaling:
    tau: float = 20.0           # s
    q_f: float = 1e-3           # m^3/s


DEFAULT_PARAMS = SeparatorParams()
DEFAULT_SCALING = SeparatorScaling()


# -- geometry and drops ---------------------------------------------------------

def segment_area(h, R: float):
    """Cross-section of a horizontal cylinder filled to height ``h``."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or np.any(h > 2 * R):
        raise DomainError(f"height must lie in [0, {2 * R}]")
    area = R * R * np.arccos(1.0 - h / R) - (R - h) * np.sqrt(np.maximum(2 * R * h - h * h, 0.0))
    return float(area) if area.ndim == 0 else area


def _log_sd(spread: float) -> float:
    # relative std of the volume distribution: exp(s^2) sqrt(exp(s^2) - 1) = spread
    from scipy.optimize import brentq
    return math.sqrt(brentq(lambda v: math.exp(v) * math.sqrt(math.expm1(v)) - spread,
                            1e-12, 10.0, xtol=1e-15))


def inlet_dsd(d32: float, spread: float = 0.32, n_classes: int = 50):
    """Discretized volume-based log-normal drop distribution.

    Returns ``(diameters, number_fractions, volume_fractions)``.  Class
    diameters are log-spaced between the 0.1 % and 99.9 % volume quantiles;
    each class collects the volume between the geometric midpoints to its
    neighbours, the outer classes take the open tails.
    """
    if n_classes < 2:
        raise ArgumentError("need at least two drop classes")
    if d32 <= 0:
        raise DomainError("d32 must be positive")
    if spread < 0:
        raise ArgumentError("spread must be non-negative")
    s = _log_sd(spread if spread > 0 else 0.32)
    mu3 = math.log(d32) + 0.5 * s * s
    lo, hi = mu3 + s * ndtri(1e-3), mu3 + s * ndtri(1 - 1e-3)
    ln_d = np.linspace(lo, hi, n_classes)
    d = np.exp(ln_d)
    if spread == 0:
        vol = np.zeros(n_classes)
        vol[np.argmin(np.abs(ln_d - math.log(d32)))] = 1.0
    else:
        edges = np.concatenate([[-np.inf], 0.5 * (ln_d[1:] + ln_d[:-1]), [np.inf]])
        cdf = ndtr((edges - mu3) / s)
        vol = np.diff(cdf)
        vol /= vol.sum()
    num = vol / d ** 3
    num /= num.sum()
    return d, num, vol


def sauter(d, n) -> float:
    d, n = np.asarray(d), np.asarray(n)
    return float(np.sum(n * d ** 3) / np.sum(n * d ** 2))


def swarm_velocity(d, eps, params: SeparatorParams = DEFAULT_PARAMS):
    """Hindered settling velocity; Stokes' law when ``eps`` is 0."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps >= 1) or np.any(eps < 0):
        raise DomainError("hold-up must lie in [0, 1)")
    d = np.asarray(d, dtype=float)
    p = params
    return p.g * d * d * p.drho / (18.0 * p.eta_c) * (1.0 - eps) ** (p.n_swarm - 1.0)


def coalescence_time(d32_dpz: float, dpz_height: float, rv: float,
                     params: SeparatorParams = DEFAULT_PARAMS) -> float:
    """Drop-interface coalescence time (Henschke correlation)."""
    p = params
    if dpz_height <= 0:
        raise DomainError("DPZ thickness must be positive")
    la = (p.drho * p.g / p.sigma) ** 0.6 * dpz_height ** 0.2 * d32_dpz
    root = math.sqrt(1.0 - 4.7 / (la + 4.7))
    r_f = 0.5239 * d32_dpz * root
    r_a = 0.5 * d32_dpz * (1.0 - root)
    return ((6 * math.pi) ** (7 / 6) * p.eta_c * r_a ** (7 / 3)
            / (4 * p.sigma ** (5 / 6) * p.Hc ** (1 / 6) * r_f * rv))


# -- axial march ----------------------------------------------------------------

@dataclass
class RateResult:
    Vs: float
    Vc: float
    Vw: float
    segments: dict[str, np.ndarray] | None = None

    def dump_csv(self, path) -> None:
        if self.segments is None:
            raise ArgumentError("no segment diagnostics recorded")
        keys = list(self.segments)
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["segment", *keys])
            for i in range(len(self.segments[keys[0]])):
                w.writerow([i, *(repr(float(self.segments[k][i])) for k in keys)])


def rates(h_aq: float, h_dpz: float, V_in: float, d32: float, rv: float | None = None,
          params: SeparatorParams = DEFAULT_PARAMS, eps_in: float | None = None,
          diagnostics: bool = False) -> RateResult:
    """Lumped sedimentation, coalescence and trapped-water flows (m^3/s)."""
    p = params
    rv = p.rv if rv is None else rv
    eps_in = p.eps_in if eps_in is None else eps_in
    if not 0 < h_aq < 2 * p.R or not 0 < h_dpz < 2 * p.R:
        raise DomainError("heights must lie strictly inside the vessel")
    if h_dpz - h_aq <= 0:
        raise DomainError("DPZ height must exceed the aqueous height")
    if V_in <= 0:
        raise DomainError("inlet flow must be positive")
    Ns = p.n_segments
    dx = p.L / Ns
    V_seg = segment_area(h_aq, p.R) * p.L / Ns
    A_y = 2.0 * dx * math.sqrt(2 * p.R * h_dpz - h_dpz * h_dpz)
    dpz_thickness = h_dpz - h_aq
    stokes = p.g * p.drho / (18.0 * p.eta_c)

    d, _, vol = inlet_dsd(d32, p.spread, p.n_classes)
    d2, d3 = d * d, d ** 3
    drop_volume = math.pi / 6.0 * d3
    n = eps_in * V_in * vol / drop_volume
    y = np.zeros_like(d)
    n_dpz = np.zeros_like(d)
    V, eps, V_dpz = V_in, eps_in, 0.0
    Vs_tot = Vc_tot = Vw_tot = 0.0
    rec = {k: np.zeros(Ns) for k in ("V", "eps", "V_dpz", "Vs", "Vc", "Vw", "d32_dpz")} \
        if diagnostics else None

    for i in range(Ns):
        tau_x = V_seg / V
        v = stokes * d2 * (1.0 - eps) ** (p.n_swarm - 1.0)
        gap = h_aq - y
        tau_y = gap / v
        partial = tau_x < tau_y
        n_s = np.where(partial, n * np.divide(tau_x, tau_y, where=partial, out=np.ones_like(d)), n)
        Vs_i = float(np.dot(n_s, drop_volume))
        n_dpz = n_dpz + n_s if V_dpz > 0 else n_s.copy()
        den = float(np.dot(n_dpz, d2))
        if den > 0:
            d32_dpz = float(np.dot(n_dpz, d3)) / den
            Vc_i = 2.0 * A_y * d32_dpz / (3.0 * coalescence_time(d32_dpz, dpz_thickness, rv, p))
        else:
            d32_dpz = 0.0
            Vc_i = 0.0
        Vw_i = (Vs_i - Vc_i) * (1.0 - p.eps_p) / p.eps_p
        if rec is not None:
            for k, val in (("V", V), ("eps", eps), ("V_dpz", V_dpz), ("Vs", Vs_i),
                           ("Vc", Vc_i), ("Vw", Vw_i), ("d32_dpz", d32_dpz)):
                rec[k][i] = val
        V_dpz = max(V_dpz + (Vs_i - Vc_i) / p.eps_p, 0.0)
        V_next = V - Vs_i - Vw_i
        if V_next <= 0:
            raise InternalError(f"convective flow vanished in segment {i}")
        eps = max((eps * V - Vs_i) / V_next, 0.0)
        y = y + v * np.minimum(tau_x, tau_y)
        n = n - n_s
        if np.any(n < -1e-9 * np.max(np.abs(n_s), initial=0.0)):
            raise InternalError(f"negative drop count in segment {i}")
        n = np.maximum(n, 0.0)
        V = V_next
        Vs_tot += Vs_i
        Vc_tot += Vc_i
        Vw_tot += Vw_i
    return RateResult(Vs_tot, Vc_tot, Vw_tot, rec)


# -- 0D balances ------------------------------------------------------------------

def _width(h, R, L):
    arg = h * (2 * R - h)
    if np.any(np.asarray(arg) <= 0):
        raise DomainError("height outside the open vessel cross-section")
    return 2.0 * L * np.sqrt(arg)


def full_rhs(state, controls, d32: float, rv: float | None = None,
             params: SeparatorParams = DEFAULT_PARAMS, flows: tuple | None = None):
    """Height derivatives (m/s) for ``state = (h_DPZ, h_aq)``, ``controls = (V_aq, V_org)``.

    The constant-level closure sets the inlet flow to the sum of the outlet
    flows.  ``flows = (Vc, Vs)`` bypasses the lumped rate model.
    """
    h_dpz, h_aq = state
    V_aq, V_org = controls
    p = params
    V_in = V_aq + V_org
    if flows is None:
        r = rates(h_aq, h_dpz, V_in, d32, rv, p)
        Vc, Vs = r.Vc, r.Vs
    else:
        Vc, Vs = flows
    dh_dpz = (V_in - V_aq - Vc) / _width(h_dpz, p.R, p.L)
    dh_aq = (V_in - V_aq - Vs / p.eps_p + Vc * (1 - p.eps_p) / p.eps_p) / _width(h_aq, p.R, p.L)
    return np.array([dh_dpz, dh_aq])


def stop_margin(state, params: SeparatorParams = DEFAULT_PARAMS) -> float:
    """Positive while the layers stay physical; the simulation stops at zero."""
    h_dpz, h_aq = state
    top = 0.99 * 2 * params.R
    return min(top - h_dpz, h_aq - 0.01 * 2 * params.R, h_dpz - h_aq)


# -- dimensionless residuals ----------------------------------------------------------

def residual_separator(out, dout, controls_star, scaling: SeparatorScaling = DEFAULT_SCALING,
                       params: SeparatorParams = DEFAULT_PARAMS) -> list:
    """Height-balance residuals (1/s) for outputs (h_DPZ*, h_aq*, Vc*, Vs*).

    ``controls_star = (V_aq*, V_org*)``; heights are scaled by the vessel
    diameter, flows by ``q_f``.
    """
    if len(out) != 4:
        raise ArgumentError(f"separator residual expects 4 outputs, got {len(out)}")
    if len(dout) != 2:
        raise ArgumentError(f"separator residual expects 2 time derivatives, got {len(dout)}")
    h_dpz, h_aq, Vc, Vs = out
    V_aq, V_org = controls_star
    D = 2 * params.R
    c = scaling.q_f / D
    inv_tau = 1.0 / scaling.tau
    eps = params.eps_p
    net_in = (V_aq + V_org) - V_aq

    def width(h):
        return 2 * params.L * ad.sqrt((D * h) * (D - D * h))

    return [
        dout[0] * inv_tau - c * (net_in - Vc) / width(h_dpz),
        dout[1] * inv_tau - c * (net_in - Vs * (1 / eps) + Vc * ((1 - eps) / eps)) / width(h_aq),
    ]


# -- reference process -------------------------------------------------------------

def _validate(ranges):
    for name in ("h_aq", "h_DPZ"):
        lo, hi = ranges[name]
        if lo <= 0 or hi >= 2 * DEFAULT_PARAMS.R:
            raise ArgumentError(f"{name} range must lie inside the vessel")
    for name in ("V_aq", "V_org", "d32", "rv"):
        if ranges[name][0] < 0:
            raise ArgumentError(f"{name} range must be non-negative")


def process_model(params: SeparatorParams = DEFAULT_PARAMS, rtol=1e-10, atol=1e-12,
                  grid_size: int = GRID_SIZE) -> ProcessModel:
    def rhs(t, x, u, extra):
        return full_rhs(x, u, extra["d32"], extra["rv"], params)

    def hidden(x, u, extra):
        out = []
        V_in = u[0] + u[1]
        for h_dpz, h_aq in np.atleast_2d(x):
            r = rates(h_aq, h_dpz, V_in, extra["d32"], extra["rv"], params)
            out.append([r.Vc, r.Vs, r.Vw])
        return np.array(out)

    def stop(x, u, extra):
        return stop_margin(x, params)

    return ProcessModel(
        model_id="separator",
        state_names=list(STATES),
        control_names=list(CONTROLS),
        extra_names=list(PROPERTIES),
        algebraic_names=list(RATE_NAMES),
        ranges=dict(RANGES),
        horizon=HORIZON_S,
        grid_size=grid_size,
        rhs=rhs,
        hidden=hidden,
        rtol=rtol,
        atol=atol,
        stop=stop,
        validate=_validate,
        provenance={"params": asdict(params), "scaling": asdict(DEFAULT_SCALING)},
    )


def with_segments(params: SeparatorParams, n_segments: int) -> SeparatorParams:
    return replace(params, n_segments=n_segments)


# -- PINN variants ---------------------------------------------------------------------

VARIANT_INPUTS = {
    "vanilla": [],
    "pinn-base": [],
    "pinn-d32": ["d32"],
    "pinn-d32-rv": ["d32", "rv"],
}
OCCURRENCES = {
    "eq_hL": ["h_L"],
    "eq_hDPZ": ["h_DPZ", "Vc"],
    "eq_haq": ["h_aq", "Vs", "Vc"],
}


def make_system(variant: str, params: SeparatorParams = DEFAULT_PARAMS,
                scaling: SeparatorScaling = DEFAULT_SCALING) -> DaeSystem:
    if variant not in VARIANT_INPUTS:
        raise ArgumentError(f"unknown separator variant {variant!r}")
    D = 2 * params.R
    inputs = ["t", "h_aq0", "h_DPZ0", *CONTROLS, *VARIANT_INPUTS[variant]]
    bounds = {"t": (0.0, HORIZON_S), "h_aq0": RANGES["h_aq"], "h_DPZ0": RANGES["h_DPZ"]}
    bounds.update({k: RANGES[k] for k in (*CONTROLS, *PROPERTIES)})
    vanilla = variant == "vanilla"
    outputs = list(STATES) if vanilla else [*STATES, "Vc", "Vs"]
    scales = {"h_DPZ": D, "h_aq": D, "Vc": scaling.q_f, "Vs": scaling.q_f}
    residual = None
    if not vanilla:
        def residual(out, dout, inp):
            u = (inp["V_aq"] / scaling.q_f, inp["V_org"] / scaling.q_f)
            o = [out[k] for k in ("h_DPZ", "h_aq", "Vc", "Vs")]
            return residual_separator(o, [dout["h_DPZ"], dout["h_aq"]], u, scaling, params), []

    return DaeSystem(
        name=f"separator/{variant}",
        input_names=inputs,
        output_names=outputs,
        differential=list(STATES),
        measured=list(STATES),
        output_scales=scales,
        input_bounds=bounds,
        time_scale=scaling.tau,
        residual=residual,
        occurrences={} if vanilla else OCCURRENCES,
        declared_states=["h_L", *STATES, "Vc", "Vs"],
        output_activation="sigmoid",
    )
