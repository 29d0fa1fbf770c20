"""Van de Vusse CSTR: reference model, dimensionless PINN residuals, variants.

Reaction constants and flows are per hour; time is in seconds on the
measurement grid and is converted explicitly.  Dimensionless quantities:
``c* = c / c_A,in``, ``T* = T / T_in``, ``(V/V_R)* = (V/V_R) / q_f``,
``Q_K* = Q_K / Q_K,f``, ``k1,2* = k1,2 / k_f``, ``k3* = c_A,in k3 / k_f`` and
net or individual rates ``r* = r / (k_f c_A,in)``.

The activation energies carry their sign inside the parameter and the rate
law is ``k_i = k_i0 exp(E_i / T)``, exactly as tabulated (E_i < 0).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dae import DaeSystem
from .datagen import ProcessModel
from .errors import ArgumentError, DomainError

STATES = ["cA", "cB", "T", "TK"]
CONTROLS = ["q", "QK"]  # q = V_dot / V_R in 1/h, QK in kJ/h
RATE_NAMES = ["k1", "k2", "k3", "rA", "rB", "r1", "r2", "r3"]

RANGES = {
    "cA": (2.14, 2.57),
    "cB": (0.87, 1.09),
    "T": (387.0, 403.0),
    "TK": (371.0, 386.0),
    "q": (5.0, 28.4),
    "QK": (-2227.0, 0.0),
}
EXTREMES = {
    "cA": (1.74, 2.74),
    "cB": (0.87, 1.28),
    "T": (385.0, 403.0),
    "TK": (371.0, 395.0),
}
EXTRAPOLATION_RANGES = {"cA": (1.71, 2.14)}
HORIZON_S = 60.0
GRID_SIZE = 101


@dataclass(frozen=True)
class CstrParams:
    c_A_in: float = 5.10       # mol/L
    T_in: float = 378.1        # K
    k10: float = 1.287e12      # 1/h
    k20: float = 1.287e12      # 1/h
    k30: float = 9.043e9       # L/(mol h)
    E1: float = -9758.3        # K
    E2: float = -9758.3        # K
    E3: float = -8560.0        # K
    dH_AB: float = 4.2         # kJ/mol A
    dH_BC: float = -11.0       # kJ/mol B
    dH_AD: float = -41.85      # kJ/mol A
    rho: float = 0.9342        # kg/L
    Cp: float = 3.01           # kJ/(kg K)
    CpK: float = 2.00          # kJ/(kg K)
    kw: float = 4032.0         # kJ/(h m^2 K)
    AR: float = 0.215          # m^2
    VR: float = 0.01           # m^3
    mK: float = 5.0            # kg

    def __post_init__(self):
        for name in ("rho", "Cp", "VR", "mK"):
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive")

    @property
    def VR_litre(self) -> float:
        # rho is per litre, so the heat balance needs the volume in litres
        return self.VR * 1000.0


@dataclass(frozen=True)
class CstrScaling:
    tau: float = 60.0          # s
    q_f: float = 28.4          # 1/h
    Q_Kf: float = -2227.0      # kJ/h
    k_f: float = 36.0          # 1/h

    @property
    def tau_h(self) -> float:
        return self.tau / 3600.0

    def P(self, p: CstrParams) -> float:
        return -p.dH_AB * self.k_f * p.c_A_in / (p.rho * p.Cp * p.T_in)

    def M(self, p: CstrParams) -> float:
        return p.kw * p.AR / (p.rho * p.Cp * p.VR_litre)

    def L(self, p: CstrParams) -> float:
        return p.kw * p.AR / (p.mK * p.CpK)

    def R(self, p: CstrParams) -> float:
        return self.Q_Kf / (p.mK * p.CpK * p.T_in)


DEFAULT_PARAMS = CstrParams()
DEFAULT_SCALING = CstrScaling()


def arrhenius(T, params: CstrParams = DEFAULT_PARAMS):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise DomainError("temperature must be positive")
    k1 = params.k10 * np.exp(params.E1 / T)
    k2 = params.k20 * np.exp(params.E2 / T)
    k3 = params.k30 * np.exp(params.E3 / T)
    return k1, k2, k3


def full_rhs(state, controls, params: CstrParams = DEFAULT_PARAMS, rates=None) -> np.ndarray:
    """State derivatives in units per hour.  ``rates`` overrides (k1, k2, k3)."""
    cA, cB, T, TK = state
    q, QK = controls
    k1, k2, k3 = arrhenius(T, params) if rates is None else rates
    p = params
    dcA = q * (p.c_A_in - cA) - k1 * cA - k3 * cA ** 2
    dcB = -q * cB + k1 * cA - k2 * cB
    dT = (q * (p.T_in - T)
          - (k1 * cA * p.dH_AB + k2 * cB * p.dH_BC + k3 * cA ** 2 * p.dH_AD) / (p.rho * p.Cp)
          + p.kw * p.AR / (p.rho * p.Cp * p.VR_litre) * (TK - T))
    dTK = (QK + p.kw * p.AR * (T - TK)) / (p.mK * p.CpK)
    return np.array([dcA, dcB, dT, dTK])


def hidden_states(x, controls, params: CstrParams = DEFAULT_PARAMS) -> np.ndarray:
    """Rate constants and rates along a trajectory, columns as in RATE_NAMES."""
    x = np.atleast_2d(x)
    cA, cB, T = x[:, 0], x[:, 1], x[:, 2]
    k1, k2, k3 = arrhenius(T, params)
    r1, r2, r3 = k1 * cA, k2 * cB, k3 * cA ** 2
    return np.column_stack([k1, k2, k3, -r1 - r3, r1 - r2, r1, r2, r3])


# -- dimensionless residuals ----------------------------------------------------

N_OUT = {"a": 6, "b": 7, "c": 7}


def _check(out, dout, variant, n_diff):
    if len(out) != N_OUT[variant]:
        raise ArgumentError(f"PINN-{variant.upper()} expects {N_OUT[variant]} outputs, got {len(out)}")
    if len(dout) != n_diff:
        raise ArgumentError(f"expected {n_diff} time derivatives, got {len(dout)}")


def residual_pinn_a(out, dout, controls_star, scaling: CstrScaling = DEFAULT_SCALING,
                    params: CstrParams = DEFAULT_PARAMS) -> list:
    """Mole balances with net rates; outputs (cA*, cB*, T*, TK*, rA*, rB*)."""
    _check(out, dout, "a", len(dout))
    cA, cB, _, _, rA, rB = out
    q, _ = controls_star
    s = scaling
    inv_tau = 1.0 / s.tau_h
    return [
        dout[0] * inv_tau - (s.q_f * q * (1.0 - cA) + s.k_f * rA),
        dout[1] * inv_tau - (-s.q_f * q * cB + s.k_f * rB),
    ]


def residual_pinn_b(out, dout, controls_star, scaling: CstrScaling = DEFAULT_SCALING,
                    params: CstrParams = DEFAULT_PARAMS) -> list:
    """Mole and energy balances with individual rates; outputs (..., r1*, r2*, r3*)."""
    _check(out, dout, "b", 4)
    cA, cB, T, TK, r1, r2, r3 = out
    return _balances(cA, cB, T, TK, r1, r2, r3, dout, controls_star, scaling, params)


def residual_pinn_c(out, dout, controls_star, scaling: CstrScaling = DEFAULT_SCALING,
                    params: CstrParams = DEFAULT_PARAMS) -> list:
    """Balances with rate expressions but no Arrhenius law; outputs (..., k1*, k2*, k3*)."""
    _check(out, dout, "c", 4)
    cA, cB, T, TK, k1, k2, k3 = out
    return _balances(cA, cB, T, TK, k1 * cA, k2 * cB, k3 * (cA * cA), dout,
                     controls_star, scaling, params)


def _balances(cA, cB, T, TK, r1, r2, r3, dout, controls_star, s, p) -> list:
    q, QK = controls_star
    inv_tau = 1.0 / s.tau_h
    heat = r1 + r2 * (p.dH_BC / p.dH_AB) + r3 * (p.dH_AD / p.dH_AB)
    return [
        dout[0] * inv_tau - (s.q_f * q * (1.0 - cA) - s.k_f * r1 - s.k_f * r3),
        dout[1] * inv_tau - (-s.q_f * q * cB + s.k_f * r1 - s.k_f * r2),
        dout[2] * inv_tau - (s.q_f * q * (1.0 - T) + s.P(p) * heat + s.M(p) * (TK - T)),
        dout[3] * inv_tau - (s.L(p) * (T - TK) + QK * s.R(p)),
    ]


def dimensionless_state(state, params=DEFAULT_PARAMS) -> np.ndarray:
    cA, cB, T, TK = state
    return np.array([cA / params.c_A_in, cB / params.c_A_in, T / params.T_in, TK / params.T_in])


def dimensionless_controls(controls, scaling=DEFAULT_SCALING) -> np.ndarray:
    q, QK = controls
    return np.array([q / scaling.q_f, QK / scaling.Q_Kf])


def state_scales(params=DEFAULT_PARAMS) -> np.ndarray:
    return np.array([params.c_A_in, params.c_A_in, params.T_in, params.T_in])


# -- reference process ----------------------------------------------------------

def _validate(ranges):
    for name in ("cA", "cB"):
        if ranges[name][0] < 0:
            raise ArgumentError(f"{name} range must be non-negative")
    for name in ("T", "TK"):
        if ranges[name][0] <= 0:
            raise ArgumentError(f"{name} range must be positive")


def process_model(params: CstrParams = DEFAULT_PARAMS, rtol=1e-10, atol=1e-12) -> ProcessModel:
    def rhs(t, x, u, extra):
        return full_rhs(x, u, params) / 3600.0

    def hidden(x, u, extra):
        return hidden_states(x, u, params)

    return ProcessModel(
        model_id="cstr",
        state_names=list(STATES),
        control_names=list(CONTROLS),
        extra_names=[],
        algebraic_names=list(RATE_NAMES),
        ranges=dict(RANGES),
        horizon=HORIZON_S,
        grid_size=GRID_SIZE,
        rhs=rhs,
        hidden=hidden,
        rtol=rtol,
        atol=atol,
        validate=_validate,
        provenance={"params": asdict(params), "scaling": asdict(DEFAULT_SCALING)},
    )


# -- PINN variants ---------------------------------------------------------------

_OCCURRENCES = {
    "vanilla": {},
    "pinn-a": {
        "eq_cA": ["cA", "rA"],
        "eq_cB": ["cB", "rB"],
    },
    "pinn-b": {
        "eq_cA": ["cA", "r1", "r3"],
        "eq_cB": ["cB", "r1", "r2"],
        "eq_T": ["T", "TK", "r1", "r2", "r3"],
        "eq_TK": ["T", "TK"],
    },
    "pinn-c": {
        "eq_cA": ["cA", "k1", "k3"],
        "eq_cB": ["cA", "cB", "k1", "k2"],
        "eq_T": ["cA", "cB", "T", "TK", "k1", "k2", "k3"],
        "eq_TK": ["T", "TK"],
    },
}
_ALGEBRAIC = {"vanilla": [], "pinn-a": ["rA", "rB"], "pinn-b": ["r1", "r2", "r3"],
              "pinn-c": ["k1", "k2", "k3"]}
SETTING_UNMEASURED = {0: None, 1: "cA", 2: "T", 3: "TK"}


def algebraic_scales(params=DEFAULT_PARAMS, scaling=DEFAULT_SCALING) -> dict[str, float]:
    rate = scaling.k_f * params.c_A_in
    return {"k1": scaling.k_f, "k2": scaling.k_f, "k3": scaling.k_f / params.c_A_in,
            "rA": rate, "rB": rate, "r1": rate, "r2": rate, "r3": rate}


def make_system(variant: str, setting: int = 0, params: CstrParams = DEFAULT_PARAMS,
                scaling: CstrScaling = DEFAULT_SCALING, unmeasured_x0: bool = True) -> DaeSystem:
    """Network layout and known physics for one CSTR model variant.

    ``setting`` (PINN-C only) selects which differential state is left
    unmeasured: 0 none, 1 cA, 2 T, 3 TK.  The unmeasured state stays a
    network output but gets no data and no init loss.  Its initial value is
    still a network input, like the other sampled operating conditions,
    unless ``unmeasured_x0`` is False; without it the test trajectories
    depend on a quantity the network never sees.
    """
    if variant not in _OCCURRENCES:
        raise ArgumentError(f"unknown CSTR variant {variant!r}")
    if setting not in SETTING_UNMEASURED:
        raise ArgumentError(f"setting must be 0-3, got {setting}")
    if setting and variant != "pinn-c":
        raise ArgumentError("differential-state settings apply to pinn-c only")
    hidden_x = SETTING_UNMEASURED[setting]
    measured = [s for s in STATES if s != hidden_x]
    outputs = STATES + _ALGEBRAIC[variant]
    known = STATES if unmeasured_x0 else measured
    inputs = ["t", *[s + "0" for s in known], *CONTROLS]
    bounds = {"t": (0.0, HORIZON_S), "q": RANGES["q"], "QK": RANGES["QK"]}
    bounds.update({s + "0": RANGES[s] for s in STATES})
    scales = dict(zip(STATES, state_scales(params)))
    scales.update(algebraic_scales(params, scaling))
    residual = None
    if variant != "vanilla":
        fn = {"pinn-a": residual_pinn_a, "pinn-b": residual_pinn_b,
              "pinn-c": residual_pinn_c}[variant]
        n_diff = 2 if variant == "pinn-a" else 4

        def residual(out, dout, inp):
            u = (inp["q"] / scaling.q_f, inp["QK"] / scaling.Q_Kf)
            o = [out[n] for n in outputs]
            d = [dout[n] for n in STATES[:n_diff]]
            return fn(o, d, u, scaling, params), []

    name = variant if not setting else f"{variant}-s{setting}"
    return DaeSystem(
        name=f"cstr/{name}",
        input_names=inputs,
        output_names=outputs,
        differential=list(STATES),
        measured=measured,
        output_scales=scales,
        input_bounds=bounds,
        time_scale=scaling.tau,
        residual=residual,
        occurrences=_OCCURRENCES[variant],
        declared_states=STATES + _ALGEBRAIC[variant],
    )
