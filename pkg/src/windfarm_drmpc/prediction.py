"""Stacked horizon matrices, SADF policies and the affine output prediction.

Output indexing follows the stacked form used by the controller: the first
output block is C x_{0|k}; block t+1 is C x_{t+1|k} + D u_{t|k} + F w_{t|k},
i.e. the output is sampled at the end of each hold interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .farm_model import FarmModel


@dataclass(frozen=True, eq=False)
class HorizonMatrices:
    A_bar: np.ndarray
    B_bar: np.ndarray
    E_bar: np.ndarray
    C_bar: np.ndarray
    D_bar: np.ndarray
    F_bar: np.ndarray
    N: int
    n_x: int
    n_u: int
    n_w: int
    n_y: int


def _toeplitz_lower(powers, M, N, n):
    """Block (t, s) = A^{t-1-s} M for s < t, over N+1 block rows and N block columns."""
    m = M.shape[1]
    out = np.zeros(((N + 1) * n, N * m))
    for t in range(1, N + 1):
        for s in range(t):
            out[t * n:(t + 1) * n, s * m:(s + 1) * m] = powers[t - 1 - s] @ M
    return out


def _shifted_diag(M, N):
    r, c = M.shape
    out = np.zeros(((N + 1) * r, N * c))
    for t in range(N):
        out[(t + 1) * r:(t + 2) * r, t * c:(t + 1) * c] = M
    return out


def build_horizon(model: FarmModel, N: int) -> HorizonMatrices:
    """Stacked prediction matrices; ``model`` only needs attributes A..F."""
    if N < 1:
        raise ValueError("horizon N must be at least 1")
    A = np.asarray(model.A, dtype=float)
    n = A.shape[0]
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    return HorizonMatrices(
        A_bar=np.vstack(powers),
        B_bar=_toeplitz_lower(powers, model.B, N, n),
        E_bar=_toeplitz_lower(powers, model.E, N, n),
        C_bar=np.kron(np.eye(N + 1), model.C),
        D_bar=_shifted_diag(model.D, N),
        F_bar=_shifted_diag(model.F, N),
        N=N, n_x=n, n_u=model.B.shape[1], n_w=model.E.shape[1], n_y=model.C.shape[0],
    )


def shift_matrix(N: int, lag: int) -> np.ndarray:
    """N x N matrix with ones on the ``lag``-th subdiagonal."""
    return np.eye(N, k=-lag)


@dataclass(frozen=True, eq=False)
class SadfPolicy:
    """u = v + M_bar eps with block-Toeplitz, strictly lower-triangular M_bar.

    ``M_blocks[l-1]`` holds M_{l|k} (n_u x n_w), l = 1..N-1.
    """

    v: np.ndarray
    M_blocks: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        M = np.asarray(self.M_blocks, dtype=float)
        if M.ndim != 3:
            raise ValueError("M_blocks must have shape (N-1, n_u, n_w)")
        N = M.shape[0] + 1
        if v.size != N * M.shape[1]:
            raise ValueError(f"v has {v.size} entries, expected N*n_u = {N * M.shape[1]}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "M_blocks", M)

    @classmethod
    def zeros(cls, N: int, n_u: int, n_w: int) -> "SadfPolicy":
        return cls(np.zeros(N * n_u), np.zeros((N - 1, n_u, n_w)))

    @property
    def N(self) -> int:
        return self.M_blocks.shape[0] + 1

    @property
    def n_u(self) -> int:
        return self.M_blocks.shape[1]

    @property
    def n_w(self) -> int:
        return self.M_blocks.shape[2]

    @property
    def M_bar(self) -> np.ndarray:
        N = self.N
        out = np.zeros((N * self.n_u, N * self.n_w))
        for lag in range(1, N):
            out += np.kron(shift_matrix(N, lag), self.M_blocks[lag - 1])
        return out

    @property
    def n_decision(self) -> int:
        return self.v.size + self.M_blocks.size

    def shifted(self) -> "SadfPolicy":
        """Drop the first nominal input and append a zero block; M blocks are shift-invariant."""
        v = np.concatenate([self.v[self.n_u:], np.zeros(self.n_u)])
        return SadfPolicy(v, self.M_blocks.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.M_blocks.ravel()])

    @classmethod
    def from_vector(cls, z, N: int, n_u: int, n_w: int) -> "SadfPolicy":
        z = np.asarray(z, dtype=float)
        nv = N * n_u
        return cls(z[:nv], z[nv:nv + (N - 1) * n_u * n_w].reshape(N - 1, n_u, n_w))


def sadf_basis(N: int, n_u: int, n_w: int) -> np.ndarray:
    """Basis tensor T with M_bar = sum_i m_i T[i], m = M_blocks.ravel()."""
    n_m = (N - 1) * n_u * n_w
    T = np.zeros((n_m, N * n_u, N * n_w))
    i = 0
    for lag in range(1, N):
        S = shift_matrix(N, lag)
        for a in range(n_u):
            for b in range(n_w):
                unit = np.zeros((n_u, n_w))
                unit[a, b] = 1.0
                T[i] = np.kron(S, unit)
                i += 1
    return T


def realized_input(policy: SadfPolicy, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape[0] != policy.N * policy.n_w:
        raise ValueError(f"eps must have {policy.N * policy.n_w} rows, got {eps.shape[0]}")
    if eps.ndim == 1:
        return policy.v + policy.M_bar @ eps
    return policy.v[:, None] + policy.M_bar @ eps


@dataclass(frozen=True, eq=False)
class OutputPrediction:
    y_tilde: np.ndarray
    Psi: np.ndarray

    def outputs(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        if eps.ndim == 1:
            return self.y_tilde + self.Psi @ eps
        return self.y_tilde[:, None] + self.Psi @ eps


def input_to_output(hm: HorizonMatrices) -> np.ndarray:
    """C_bar B_bar + D_bar."""
    return hm.C_bar @ hm.B_bar + hm.D_bar


def wind_to_output(hm: HorizonMatrices) -> np.ndarray:
    """C_bar E_bar + F_bar."""
    return hm.C_bar @ hm.E_bar + hm.F_bar


def build_output_prediction(hm: HorizonMatrices, fp, policy: SadfPolicy, x0, psi) -> OutputPrediction:
    """Affine map eps -> y_bar = y_tilde + Psi eps for the given policy and initial conditions."""
    x0 = np.asarray(x0, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if x0.shape != (hm.n_x,):
        raise ValueError(f"x0 must have shape ({hm.n_x},)")
    if policy.N != hm.N or policy.n_u != hm.n_u or policy.n_w != fp.n_w or fp.N != hm.N:
        raise ValueError("policy, predictor and horizon matrices disagree on dimensions")
    if psi.shape != (fp.n_psi,):
        raise ValueError(f"psi must have shape ({fp.n_psi},)")
    H_u = input_to_output(hm)
    H_w = wind_to_output(hm)
    y_tilde = hm.C_bar @ hm.A_bar @ x0 + H_u @ policy.v + H_w @ (fp.C_bar @ fp.A_bar @ psi)
    Psi = H_u @ policy.M_bar + H_w @ (fp.C_bar @ fp.B_bar)
    return OutputPrediction(y_tilde=y_tilde, Psi=Psi)
