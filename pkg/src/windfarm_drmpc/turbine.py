"""Nonlinear surrogate wind turbine and its analytic linearization.

The surrogate has three states (pitch angle in degrees, rotor speed and
filtered generator speed in rad/s), one input (the electrical power
reference in W) and one disturbance (the rotor-effective wind speed in m/s):

    d beta / dt   = (beta_0 + k_pitch * (omega_gf - omega_g0) - beta) / tau_pitch
    d omega_r / dt = (P_aero(beta, omega_r, w) - P_ref) / (J * omega_r)
    d omega_gf / dt = (n_gear * omega_r - omega_gf) / tau_filter

with P_aero = 1/2 rho pi R^2 C_p(beta, lambda) w^3 and lambda = omega_r R / w.
The outputs are the tower thrust F_t = 1/2 rho pi R^2 C_t w^2 and the low-speed
shaft torque T_s = P_ref / omega_r.  C_p uses the exponential Heier curve and
C_t is obtained from C_p through one-dimensional momentum theory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

# Heier power-coefficient curve constants
_C1, _C2, _C3, _C4, _C5, _C6 = 0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068
_CP_BETZ = 16.0 / 27.0


@dataclass(frozen=True)
class SurrogateParams:
    """Physical parameters and operating point of the surrogate turbine."""

    rho: float = 1.225
    rotor_radius: float = 63.0
    inertia: float = 4.0e7
    n_gear: float = 97.0
    tau_pitch: float = 0.4
    tau_filter: float = 0.5
    k_pitch: float = 0.2  # deg per rad/s of filtered generator speed
    omega_r0: float = 1.267
    p_ref0: float = 3.0e6
    p_rated: float = 5.0e6
    w0: float = 12.0
    dt: float = 1.0

    def validate(self) -> None:
        positive = ("rho", "rotor_radius", "inertia", "n_gear", "tau_pitch",
                    "tau_filter", "omega_r0", "p_rated", "w0", "dt")
        for name in positive:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"surrogate parameter {name} must be positive, got {value}")
        if self.k_pitch < 0:
            raise ValueError("k_pitch must be non-negative")
        if self.p_ref0 < 0:
            raise ValueError("p_ref0 must be non-negative")

    @property
    def swept_half(self) -> float:
        """1/2 rho pi R^2."""
        return 0.5 * self.rho * np.pi * self.rotor_radius ** 2


def _inv_lambda_i(beta, tsr):
    return 1.0 / (tsr + 0.08 * beta) - 0.035 / (beta ** 3 + 1.0)


def power_coefficient(beta, tsr):
    """Heier C_p(beta [deg], tip-speed ratio)."""
    u = _inv_lambda_i(beta, tsr)
    return _C1 * (_C2 * u - _C3 * beta - _C4) * np.exp(-_C5 * u) + _C6 * tsr


def power_coefficient_grad(beta, tsr):
    """Return (dC_p/dbeta, dC_p/dlambda)."""
    u = _inv_lambda_i(beta, tsr)
    ex = np.exp(-_C5 * u)
    dcp_du = _C1 * ex * (_C2 - _C5 * (_C2 * u - _C3 * beta - _C4))
    s = tsr + 0.08 * beta
    du_dtsr = -1.0 / s ** 2
    du_dbeta = -0.08 / s ** 2 + 0.035 * 3.0 * beta ** 2 / (beta ** 3 + 1.0) ** 2
    return dcp_du * du_dbeta - _C1 * _C3 * ex, dcp_du * du_dtsr + _C6


def max_power_coefficient() -> float:
    """Peak of the Heier curve over tip-speed ratio at zero pitch."""
    tsr = np.linspace(2.0, 14.0, 4001)
    return float(np.max(power_coefficient(0.0, tsr)))


def _induction(cp: float) -> float:
    cp = float(np.clip(cp, 0.0, _CP_BETZ))
    if cp >= _CP_BETZ:
        return 1.0 / 3.0
    return brentq(lambda a: 4.0 * a * (1.0 - a) ** 2 - cp, 0.0, 1.0 / 3.0, xtol=1e-15, rtol=1e-15)


def thrust_coefficient(cp: float) -> float:
    a = _induction(cp)
    return 4.0 * a * (1.0 - a)


def thrust_coefficient_slope(cp: float) -> float:
    """dC_t/dC_p along the momentum-theory branch a in [0, 1/3)."""
    a = _induction(cp)
    return (1.0 - 2.0 * a) / ((1.0 - a) * (1.0 - 3.0 * a))


def aero_power(params: SurrogateParams, beta, omega_r, w):
    tsr = omega_r * params.rotor_radius / w
    return params.swept_half * power_coefficient(beta, tsr) * w ** 3


def available_power(params: SurrogateParams, w, cp_max: float | None = None):
    """Power the rotor can deliver at wind speed ``w``, capped at rated power."""
    if cp_max is None:
        cp_max = max_power_coefficient()
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    return np.minimum(params.p_rated, params.swept_half * cp_max * w ** 3)


def solve_pitch(params: SurrogateParams) -> float:
    """Pitch angle at which the rotor delivers ``p_ref0`` at (``omega_r0``, ``w0``).

    Raises ``ValueError`` when the wind is too weak to deliver the requested
    power at the regulated rotor speed.
    """
    p = params

    def excess(beta):
        return aero_power(p, beta, p.omega_r0, p.w0) - p.p_ref0

    if excess(0.0) < 0.0:
        raise ValueError(
            f"wind speed {p.w0} m/s is below the surrogate's validity range: "
            f"cannot deliver {p.p_ref0:.3g} W at rotor speed {p.omega_r0} rad/s"
        )
    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
        if hi > 90.0:
            raise ValueError("no pitch angle below 90 deg reaches the power reference")
    # power decreases monotonically with pitch on the positive branch
    return brentq(excess, 0.0, hi, xtol=1e-13)


@dataclass(frozen=True)
class TrimPoint:
    beta0: float
    omega_r0: float
    omega_g0: float
    p_ref0: float
    w0: float
    f_t0: float
    t_s0: float


def trim(params: SurrogateParams) -> TrimPoint:
    params.validate()
    beta0 = solve_pitch(params)
    tsr = params.omega_r0 * params.rotor_radius / params.w0
    cp = power_coefficient(beta0, tsr)
    f_t0 = params.swept_half * thrust_coefficient(cp) * params.w0 ** 2
    return TrimPoint(
        beta0=beta0,
        omega_r0=params.omega_r0,
        omega_g0=params.n_gear * params.omega_r0,
        p_ref0=params.p_ref0,
        w0=params.w0,
        f_t0=float(f_t0),
        t_s0=params.p_ref0 / params.omega_r0,
    )


def dynamics(params: SurrogateParams, op: TrimPoint, x, u, w):
    """Continuous-time state derivative of the nonlinear surrogate (absolute variables)."""
    beta, omega_r, omega_gf = x
    beta_cmd = op.beta0 + params.k_pitch * (omega_gf - op.omega_g0)
    p_aero = aero_power(params, beta, omega_r, w)
    return np.array([
        (beta_cmd - beta) / params.tau_pitch,
        (p_aero - u) / (params.inertia * omega_r),
        (params.n_gear * omega_r - omega_gf) / params.tau_filter,
    ])


def outputs(params: SurrogateParams, x, u, w):
    """Tower thrust (N) and low-speed shaft torque (N m)."""
    beta, omega_r, _ = x
    tsr = omega_r * params.rotor_radius / w
    cp = power_coefficient(beta, tsr)
    return np.array([
        params.swept_half * thrust_coefficient(cp) * w ** 2,
        u / omega_r,
    ])


def linearize_continuous(params: SurrogateParams, op: TrimPoint):
    """Analytic Jacobians (A, B, E, C, D, F) of the surrogate at the trim point."""
    p = params
    K = p.swept_half
    w, om, beta = op.w0, op.omega_r0, op.beta0
    tsr = om * p.rotor_radius / w
    cp = power_coefficient(beta, tsr)
    dcp_db, dcp_dl = power_coefficient_grad(beta, tsr)
    jw = p.inertia * om

    # P_aero partials; P_aero == P_ref at trim so the 1/omega_r term drops out
    dp_db = K * w ** 3 * dcp_db
    dp_dom = K * w ** 3 * dcp_dl * p.rotor_radius / w
    dp_dw = K * w ** 2 * (3.0 * cp - tsr * dcp_dl)

    A = np.array([
        [-1.0 / p.tau_pitch, 0.0, p.k_pitch / p.tau_pitch],
        [dp_db / jw, dp_dom / jw, 0.0],
        [0.0, p.n_gear / p.tau_filter, -1.0 / p.tau_filter],
    ])
    B = np.array([[0.0], [-1.0 / jw], [0.0]])
    E = np.array([[0.0], [dp_dw / jw], [0.0]])

    g = thrust_coefficient_slope(cp)
    ct = thrust_coefficient(cp)
    df_db = K * w ** 2 * g * dcp_db
    df_dom = K * w ** 2 * g * dcp_dl * p.rotor_radius / w
    df_dw = K * w * (2.0 * ct - tsr * g * dcp_dl)
    C = np.array([
        [df_db, df_dom, 0.0],
        [0.0, -op.p_ref0 / om ** 2, 0.0],
    ])
    D = np.array([[0.0], [1.0 / om]])
    F = np.array([[df_dw], [0.0]])
    return A, B, E, C, D, F


def zoh(A, B, dt: float):
    """Zero-order-hold discretization of x' = A x + B u."""
    n, m = B.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = A * dt
    blk[:n, n:] = B * dt
    phi = expm(blk)
    return phi[:n, :n], phi[:n, n:]
