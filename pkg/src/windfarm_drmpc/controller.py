"""Distributionally robust MPC for wind-farm power dispatch.

Every step solves, over the SADF pair (v, M) and the interpolation weight
lambda, the conic program

    min  tr(Sigma_N [H_y' Q H_y + H_u' R H_u]) + penalty * lambda^2
    s.t. l_tj' v + sqrt(p_j/(1-p_j)) ||(kappa Sigma_eps)^{1/2} M' l_tj|| <= 1
         1' v_t = 0                                 for every step t
         x_0 = (1 - lambda) x(k) + lambda z*_{1|k-1},  lambda in [0, 1]

The initial state x_0 and the nominal state sequence are eliminated by
substitution, so the decision vector is z = (v, vec M blocks, lambda), with v
and M expressed in units of ``input_scale`` watts for conditioning.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ambiguity import AmbiguitySet, WorstCaseCov, worst_case_cov
from .arma import FarmPredictor
from .conic import OPTIMAL, ClarabelBackend, ConicProblem, SocConstraint, SolveResult
from .farm_model import FarmModel
from .prediction import (
    HorizonMatrices,
    OutputPrediction,
    SadfPolicy,
    build_horizon,
    input_to_output,
    sadf_basis,
    wind_to_output,
)

log = logging.getLogger(__name__)

TOWER_SCALE = 0.27e6
SHAFT_SCALE = 2.5e6
RATED_POWER = 5.0e6


class InfeasibleError(RuntimeError):
    """No optimal solution and no previous solution to fall back on."""


# -- weights ---------------------------------------------------------------------

def output_weight(N: int, n_wt: int, tower_scale: float = TOWER_SCALE,
                  shaft_scale: float = SHAFT_SCALE) -> np.ndarray:
    """I_{N+1} kron diag(1/(F_t0^2 N), 100/(T_s0^2 N), ...) over all turbines."""
    block = np.diag([1.0 / (tower_scale ** 2 * N), 100.0 / (shaft_scale ** 2 * N)])
    return np.kron(np.eye(N + 1), np.kron(np.eye(n_wt), block))


def input_weight(N: int, n_wt: int, r: float, rated_power: float = RATED_POWER) -> np.ndarray:
    """I_N kron (r / (P_0^2 N)) I."""
    return np.kron(np.eye(N), r / (rated_power ** 2 * N) * np.eye(n_wt))


def _psd_sqrt(M: np.ndarray, name: str) -> np.ndarray:
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    if vals.min(initial=0.0) < -1e-12 * max(1.0, np.abs(vals).max(initial=0.0)):
        raise ValueError(f"{name} is not positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True, eq=False)
class Weights:
    Q_bar: np.ndarray
    R_bar: np.ndarray
    lambda_penalty: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "Q_half", _psd_sqrt(np.asarray(self.Q_bar, float), "Q_bar"))
        object.__setattr__(self, "R_half", _psd_sqrt(np.asarray(self.R_bar, float), "R_bar"))
        if self.lambda_penalty < 0:
            raise ValueError("lambda penalty must be non-negative")

    @classmethod
    def default_template(cls, N: int, n_wt: int, r: float, lambda_penalty: float = 5.0,
                         rated_power: float = RATED_POWER, tower_scale: float = TOWER_SCALE,
                         shaft_scale: float = SHAFT_SCALE) -> "Weights":
        if r <= 0:
            raise ValueError("r must be positive")
        return cls(output_weight(N, n_wt, tower_scale, shaft_scale),
                   input_weight(N, n_wt, r, rated_power), lambda_penalty)


# -- chance constraints ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChanceConstraint:
    """P(l' u <= 1) >= prob, imposed at every prediction step."""

    l: np.ndarray
    prob: float

    def __post_init__(self):
        if not 0.5 < self.prob < 1.0:
            raise ValueError(f"probability level must lie in (0.5, 1), got {self.prob}")
        l = np.asarray(self.l, dtype=float).reshape(-1)
        if not np.all(np.isfinite(l)):
            raise ValueError("constraint vector must be finite")
        object.__setattr__(self, "l", l)

    @property
    def coefficient(self) -> float:
        return float(np.sqrt(self.prob / (1.0 - self.prob)))


@dataclass(frozen=True)
class ConstraintSpec:
    constraints: tuple = ()

    @classmethod
    def symmetric_box(cls, n_u: int, bound: float = 1e6, prob: float = 0.9) -> "ConstraintSpec":
        """|u_i| <= bound for every turbine, each side with probability ``prob``."""
        cons = []
        for i in range(n_u):
            for sign in (1.0, -1.0):
                l = np.zeros(n_u)
                l[i] = sign / bound
                cons.append(ChanceConstraint(l, prob))
        return cls(tuple(cons))


def lift(l: np.ndarray, t: int, N: int) -> np.ndarray:
    """Place ``l`` at block ``t`` of an N-block vector."""
    out = np.zeros(N * l.size)
    out[t * l.size:(t + 1) * l.size] = l
    return out


# -- decision vector -------------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    N: int
    n_u: int
    n_w: int
    scale: float = 1.0

    @property
    def n_v(self) -> int:
        return self.N * self.n_u

    @property
    def n_m(self) -> int:
        return (self.N - 1) * self.n_u * self.n_w

    @property
    def n(self) -> int:
        return self.n_v + self.n_m + 1

    @property
    def lam(self) -> int:
        return self.n - 1

    def policy(self, z) -> SadfPolicy:
        return SadfPolicy.from_vector(self.scale * np.asarray(z)[:-1], self.N, self.n_u, self.n_w)

    def vector(self, policy: SadfPolicy, lam: float = 0.0) -> np.ndarray:
        return np.concatenate([policy.to_vector() / self.scale, [lam]])


# -- cost --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Objective ||Phi z + phi||^2 in the decision vector z."""

    Phi: np.ndarray
    phi: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return 2.0 * self.Phi.T @ self.Phi

    @property
    def q(self) -> np.ndarray:
        return 2.0 * self.Phi.T @ self.phi

    @property
    def const(self) -> float:
        return float(self.phi @ self.phi)

    def value(self, z) -> float:
        r = self.Phi @ z + self.phi
        return float(r @ r)


class CostModel:
    """Pre-assembled pieces of the worst-case cost that do not change between steps."""

    def __init__(self, hm: HorizonMatrices, fp: FarmPredictor, wc: WorstCaseCov,
                 weights: Weights, layout: Layout):
        self.hm, self.fp, self.wc, self.weights, self.layout = hm, fp, wc, weights, layout
        Qh, Rh = weights.Q_half, weights.R_half
        G = wc.noise_sqrt
        s = layout.scale
        self.H_u = input_to_output(hm)
        self.H_w = wind_to_output(hm)
        self.wind_mean_map = fp.C_bar @ fp.A_bar
        self.Psi0 = self.H_w @ (fp.C_bar @ fp.B_bar)
        T = sadf_basis(layout.N, layout.n_u, layout.n_w)
        self.basis = T

        n, nv, nm = layout.n, layout.n_v, layout.n_m
        # trace part: ||Qh Psi G||_F^2 + ||Rh M_bar G||_F^2, affine in m
        Ly = (Qh @ self.H_u)[None] @ T @ G
        Lu = Rh[None] @ T @ G
        rows_y = Ly.shape[1] * Ly.shape[2]
        rows_u = Lu.shape[1] * Lu.shape[2]
        static = np.zeros((rows_y + rows_u + nv + 1, n))
        static[:rows_y, nv:nv + nm] = s * Ly.reshape(nm, -1).T
        static[rows_y:rows_y + rows_u, nv:nv + nm] = s * Lu.reshape(nm, -1).T
        static[rows_y + rows_u:rows_y + rows_u + nv, :nv] = s * Rh
        static[-1, layout.lam] = np.sqrt(weights.lambda_penalty)
        self.static_Phi = static
        self.static_phi = np.zeros(static.shape[0])
        self.static_phi[:rows_y] = (Qh @ self.Psi0 @ G).ravel()
        self.static_gram = static.T @ static
        self.static_lin = static.T @ self.static_phi
        self.static_const = float(self.static_phi @ self.static_phi)
        self.nominal_Phi = np.zeros((Qh.shape[0], n))
        self.nominal_Phi[:, :nv] = s * Qh @ self.H_u
        self.CA = hm.C_bar @ hm.A_bar

    def nominal_part(self, x, psi, z1=None):
        """Rows of Phi and phi for Qh * y_tilde, which depend on x(k), psi(k), z*_1."""
        Qh = self.weights.Q_half
        Phi = self.nominal_Phi.copy()
        if z1 is not None:
            Phi[:, self.layout.lam] = Qh @ self.CA @ (np.asarray(z1) - x)
        phi = Qh @ (self.CA @ x + self.H_w @ (self.wind_mean_map @ psi))
        return Phi, phi

    def quadratic(self, x, psi, z1=None):
        """(P, q, const) of the objective 1/2 z'Pz + q'z + const."""
        Phi_n, phi_n = self.nominal_part(x, psi, z1)
        gram = self.static_gram + Phi_n.T @ Phi_n
        lin = self.static_lin + Phi_n.T @ phi_n
        return 2.0 * gram, 2.0 * lin, self.static_const + float(phi_n @ phi_n)

    def full(self, x, psi, z1=None) -> QuadraticCost:
        Phi_n, phi_n = self.nominal_part(x, psi, z1)
        return QuadraticCost(np.vstack([Phi_n, self.static_Phi]),
                             np.concatenate([phi_n, self.static_phi]))


def build_cost(hm: HorizonMatrices, fp: FarmPredictor, amb: AmbiguitySet, weights: Weights,
               x0, psi, z1=None, scale: float = 1.0) -> QuadraticCost:
    """Worst-case quadratic cost as a function of z = (v, vec M blocks, lambda).

    With ``z1`` given, x_0 = (1 - lambda) x0 + lambda z1 is substituted;
    otherwise lambda only enters through its penalty.
    """
    layout = Layout(hm.N, hm.n_u, hm.n_w, scale)
    cm = CostModel(hm, fp, worst_case_cov(amb, hm.N), weights, layout)
    return cm.full(np.asarray(x0, float), np.asarray(psi, float), z1)


def worst_case_cost(pred: OutputPrediction, policy: SadfPolicy, weights: Weights,
                    wc: WorstCaseCov) -> float:
    """tr(Sigma_N [H_y' Q H_y + H_u' R H_u]) with H_y = [Psi, y_tilde], H_u = [M_bar, v]."""
    H_y = np.column_stack([pred.Psi, pred.y_tilde])
    H_u = np.column_stack([policy.M_bar, policy.v])
    inner = H_y.T @ weights.Q_bar @ H_y + H_u.T @ weights.R_bar @ H_u
    return float(np.trace(wc.Sigma_N @ inner))


# -- constraints -------------------------------------------------------------------

def build_chance_constraints(spec: ConstraintSpec, layout: Layout, sqrt_block: np.ndarray):
    """One SOC per (step t, constraint j):  ||G M' l_tj|| <= (1 - l_tj' v) / c_j."""
    N, n_u, n_w = layout.N, layout.n_u, layout.n_w
    G = np.kron(np.eye(N), sqrt_block)
    T = sadf_basis(N, n_u, n_w)
    socs = []
    for t in range(N):
        for con in spec.constraints:
            if con.l.size != n_u:
                raise ValueError(f"constraint vector has {con.l.size} entries, expected {n_u}")
            lt = lift(con.l, t, N)
            c = con.coefficient
            a = np.zeros(layout.n)
            a[:layout.n_v] = -layout.scale * lt / c
            Gz = np.zeros((N * n_w, layout.n))
            Gz[:, layout.n_v:layout.n_v + layout.n_m] = layout.scale * (G @ np.einsum("iuw,u->wi", T, lt))
            socs.append(SocConstraint(a=a, c=1.0 / c, G=Gz, h=np.zeros(N * n_w)))
    return socs


def interpolated_initial_state(x, z1, lam: float):
    return (1.0 - lam) * np.asarray(x, float) + lam * np.asarray(z1, float)


def build_equalities(layout: Layout, has_previous: bool, lambda_free: bool = True,
                     strict_balance: bool = False):
    """(A_eq, b_eq, lb, ub) for the power balance and the interpolation weight.

    Without a previous solution lambda is pinned to 0 (measured-state start).
    """
    if lambda_free and not has_previous:
        raise ValueError("lambda cannot be free without a previous nominal solution")
    N, n_u, n_w, n = layout.N, layout.n_u, layout.n_w, layout.n
    rows = []
    for t in range(N):
        r = np.zeros(n)
        r[t * n_u:(t + 1) * n_u] = 1.0
        rows.append(r)
    if strict_balance:
        for lag in range(N - 1):
            for b in range(n_w):
                r = np.zeros(n)
                for a in range(n_u):
                    r[layout.n_v + (lag * n_u + a) * n_w + b] = 1.0
                rows.append(r)
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    if lambda_free:
        lb[layout.lam], ub[layout.lam] = 0.0, 1.0
    else:
        r = np.zeros(n)
        r[layout.lam] = 1.0
        rows.append(r)
    A_eq = np.array(rows)
    return A_eq, np.zeros(A_eq.shape[0]), lb, ub


def solve(problem: ConicProblem, backend=None, warm_start=None) -> SolveResult:
    backend = ClarabelBackend() if backend is None else backend
    return backend.solve(problem, warm_start=warm_start)


# -- policy conversion -------------------------------------------------------------

def causal_left_inverse(hm: HorizonMatrices) -> np.ndarray:
    """Block left inverse of E_bar recovering w_t = E^+ (x_{t+1} - A x_t).

    It satisfies L E_bar = I and uses only x_t, x_{t+1} in block row t, so
    the resulting error-feedback gain is causal.
    """
    n, nw, N = hm.n_x, hm.n_w, hm.N
    A = hm.A_bar[n:2 * n]
    E = hm.E_bar[n:2 * n, :nw]
    if np.linalg.matrix_rank(E) < nw:
        raise ValueError("E must have full column rank")
    Ep = np.linalg.pinv(E)
    L = np.zeros((N * nw, (N + 1) * n))
    for t in range(N):
        L[t * nw:(t + 1) * nw, t * n:(t + 1) * n] = -Ep @ A
        L[t * nw:(t + 1) * nw, (t + 1) * n:(t + 2) * n] = Ep
    return L


def error_feedback(policy: SadfPolicy, hm: HorizonMatrices, z0):
    """Equivalent error-feedback pair (K_bar, g_bar) for a disturbance-feedback policy.

    K_bar = (I + M E^+ B_bar)^{-1} M E^+,
    g_bar = (I + M E^+ B_bar)^{-1} (v - M E^+ A_bar z0),
    so that u = g_bar + K_bar x_bar reproduces u = v + M w along trajectories
    starting at z0.
    """
    L = causal_left_inverse(hm)
    M = policy.M_bar
    ML = M @ L
    S = np.eye(M.shape[0]) + ML @ hm.B_bar
    if np.linalg.cond(S) > 1e12:
        raise ValueError("I + M E^+ B is singular")
    K = np.linalg.solve(S, ML)
    g = np.linalg.solve(S, policy.v - ML @ hm.A_bar @ np.asarray(z0, float))
    return K, g


# -- receding horizon controller ---------------------------------------------------

@dataclass
class StepResult:
    u: np.ndarray
    u_dev: np.ndarray
    policy: SadfPolicy
    lam: float
    x0: np.ndarray
    z_bar: np.ndarray
    status: str
    fallback_used: bool
    solve_time: float
    objective: float


class DRMPCController:
    """Receding-horizon DR-MPC with interpolating initialization and shifted fallback."""

    def __init__(self, model: FarmModel, predictor: FarmPredictor, ambiguity: AmbiguitySet,
                 weights: Weights, constraints: ConstraintSpec, backend=None,
                 strict_balance: bool = False, input_scale: float = 1e6):
        N = predictor.N
        if ambiguity.n_w != model.n_w or predictor.n_w != model.n_w:
            raise ValueError("ambiguity set and predictor must cover every turbine")
        if np.linalg.eigvalsh(0.5 * (weights.R_bar + weights.R_bar.T)).min() <= 0:
            raise ValueError("R_bar must be positive definite")
        self.model = model
        self.predictor = predictor
        self.ambiguity = ambiguity
        self.weights = weights
        self.constraints = constraints
        self.backend = ClarabelBackend() if backend is None else backend
        self.strict_balance = strict_balance
        self.hm = build_horizon(model, N)
        self.wc = worst_case_cov(ambiguity, N)
        self.layout = Layout(N, model.n_u, model.n_w, input_scale)
        self.cost = CostModel(self.hm, predictor, self.wc, weights, self.layout)
        self.socs = build_chance_constraints(constraints, self.layout, self.wc.sqrt_block)
        self.reset()

    @property
    def N(self) -> int:
        return self.hm.N

    def reset(self) -> None:
        self.z1_prev = None
        self.prev_policy = None
        self.prev_z = None
        self.k = 0
        self.fallback_count = 0

    def assemble(self, x, psi) -> ConicProblem:
        has_prev = self.z1_prev is not None
        P, q, const = self.cost.quadratic(x, psi, self.z1_prev if has_prev else None)
        A_eq, b_eq, lb, ub = build_equalities(self.layout, has_prev, lambda_free=has_prev,
                                              strict_balance=self.strict_balance)
        return ConicProblem(P=P, q=q, const=const, A_eq=A_eq, b_eq=b_eq,
                            socs=self.socs, lb=lb, ub=ub)

    def nominal_states(self, x0, policy: SadfPolicy, psi) -> np.ndarray:
        w_mean = self.predictor.C_bar @ self.predictor.A_bar @ psi
        return self.hm.A_bar @ x0 + self.hm.B_bar @ policy.v + self.hm.E_bar @ w_mean

    def fallback(self):
        """Shifted previous policy with lambda = 1."""
        if self.prev_policy is None:
            raise InfeasibleError("optimization failed at the first step; no previous solution")
        return self.prev_policy.shifted(), 1.0

    def step(self, x, psi) -> StepResult:
        x = np.asarray(x, dtype=float)
        psi = np.asarray(psi, dtype=float)
        problem = self.assemble(x, psi)
        warm = None
        if self.prev_policy is not None:
            warm = self.layout.vector(self.prev_policy.shifted(), 1.0)
        res = solve(problem, self.backend, warm_start=warm)
        fallback_used = res.status != OPTIMAL
        if fallback_used:
            log.warning("step %d: solver returned %s (%s); using shifted fallback",
                        self.k, res.status, res.info)
            policy, lam = self.fallback()
            self.fallback_count += 1
            objective = np.nan
        else:
            policy, lam = self.layout.policy(res.z), float(np.clip(res.z[self.layout.lam], 0.0, 1.0))
            objective = res.objective
        x0 = x if self.z1_prev is None else interpolated_initial_state(x, self.z1_prev, lam)
        z_bar = self.nominal_states(x0, policy, psi)
        K, g = error_feedback(policy, self.hm, x0)
        n_u, n_x = self.model.n_u, self.model.n_x
        u_dev = g[:n_u] + K[:n_u, :n_x] @ (x - x0)
        self.z1_prev = z_bar[n_x:2 * n_x]
        self.prev_policy = policy
        self.k += 1
        return StepResult(
            u=self.model.p_ref0 + u_dev, u_dev=u_dev, policy=policy, lam=lam, x0=x0,
            z_bar=z_bar, status=res.status, fallback_used=fallback_used,
            solve_time=res.solve_time, objective=objective,
        )


def apply(controller: DRMPCController, x, psi) -> np.ndarray:
    """Solve one step and return the absolute power references (W)."""
    return controller.step(x, psi).u
