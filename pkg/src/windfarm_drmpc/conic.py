"""Solver-agnostic convex quadratic + second-order-cone problems.

A :class:`ConicProblem` is

    minimize    1/2 z' P z + q' z + const
    subject to  A_eq z = b_eq
                ||G_i z + h_i||_2 <= a_i' z + c_i      (one entry per SOC)
                lb <= z <= ub

Any object with a ``solve(problem, warm_start=None) -> SolveResult`` method can
act as a backend.  :class:`ClarabelBackend` is the shipped one; its interior
point method ignores ``warm_start``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SocConstraint:
    """||G z + h|| <= a' z + c."""

    a: np.ndarray
    c: float
    G: np.ndarray
    h: np.ndarray

    @property
    def dim(self) -> int:
        return 1 + self.G.shape[0]

    def violation(self, z) -> float:
        return float(np.linalg.norm(self.G @ z + self.h) - (self.a @ z + self.c))


@dataclass(eq=False)
class ConicProblem:
    P: np.ndarray
    q: np.ndarray
    const: float = 0.0
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    socs: list = field(default_factory=list)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        n = self.q.size
        if self.P.shape != (n, n):
            raise ValueError("P must be square and match q")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        for s in self.socs:
            if s.a.size != n or s.G.shape[1] != n or s.G.shape[0] != s.h.size:
                raise ValueError("SOC constraint dimensions do not match the decision vector")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.q @ z + self.const)

    def residuals(self, z) -> dict:
        """Primal feasibility residuals (all zero or negative when feasible)."""
        z = np.asarray(z, dtype=float)
        eq = np.abs(self.A_eq @ z - self.b_eq)
        return {
            "equality": float(eq.max(initial=0.0)),
            "bounds": float(max(np.max(self.lb - z, initial=0.0), np.max(z - self.ub, initial=0.0), 0.0)),
            "soc": float(max([s.violation(z) for s in self.socs], default=0.0)),
        }

    def is_feasible(self, z, tol: float = 1e-7) -> bool:
        return all(v <= tol for v in self.residuals(z).values())


@dataclass
class SolveResult:
    status: str
    z: np.ndarray | None
    objective: float
    iterations: int = 0
    solve_time: float = 0.0
    residuals: dict = field(default_factory=dict)
    info: str = ""


class ClarabelBackend:
    """Interior-point conic solver via Clarabel."""

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter

    def _settings(self):
        import clarabel

        s = clarabel.DefaultSettings()
        s.verbose = False
        s.tol_gap_abs = self.tol
        s.tol_gap_rel = self.tol
        s.tol_feas = self.tol
        s.max_iter = self.max_iter
        return s

    def solve(self, problem: ConicProblem, warm_start=None) -> SolveResult:
        import clarabel

        n = problem.n
        rows, rhs, cones = [], [], []
        if problem.A_eq.shape[0]:
            rows.append(problem.A_eq)
            rhs.append(problem.b_eq)
            cones.append(clarabel.ZeroConeT(problem.A_eq.shape[0]))
        eye = np.eye(n)
        lo = np.flatnonzero(np.isfinite(problem.lb))
        hi = np.flatnonzero(np.isfinite(problem.ub))
        if lo.size + hi.size:
            rows.append(np.vstack([-eye[lo], eye[hi]]))
            rhs.append(np.concatenate([-problem.lb[lo], problem.ub[hi]]))
            cones.append(clarabel.NonnegativeConeT(lo.size + hi.size))
        for s in problem.socs:
            rows.append(np.vstack([-s.a[None, :], -s.G]))
            rhs.append(np.concatenate([[s.c], s.h]))
            cones.append(clarabel.SecondOrderConeT(s.dim))
        A = sp.csc_matrix(np.vstack(rows)) if rows else sp.csc_matrix((0, n))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        P = sp.triu(sp.csc_matrix(0.5 * (problem.P + problem.P.T)), format="csc")

        start = time.perf_counter()
        solver = clarabel.DefaultSolver(P, problem.q, A, b, cones, self._settings())
        sol = solver.solve()
        elapsed = time.perf_counter() - start

        status = str(sol.status)
        if status == "Solved":
            z = np.array(sol.x)
            return SolveResult(OPTIMAL, z, problem.objective(z), sol.iterations, elapsed,
                               problem.residuals(z), status)
        kind = INFEASIBLE if "Infeasible" in status and "Almost" not in status else NUMERICAL_FAILURE
        return SolveResult(kind, None, np.nan, sol.iterations, elapsed, {}, status)
