"""ARMA(p, p-1) wind-speed models: identification, whitening and N-step prediction.

Sign and index conventions.  The model is

    w(k) = sum_l a_l w(k-l) + sum_l b_l e(k-l) + e(k)

and its observer-canonical realization is

    psi(k+1) = A_psi psi(k) + B_psi eps(k),    w(k) = C_psi psi(k)

with eps(k) = e(k+1): the innovation that drives the *next* sample.  The
whitening filter therefore returns, on receiving w(k+1), the residual
eps(k) = w(k+1) - C_psi A_psi psi(k).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

STATIONARITY_MARGIN = 1e-6


class NonStationaryError(ValueError):
    """Fitted AR polynomial has a root on or outside the unit circle."""

    def __init__(self, roots):
        self.roots = np.asarray(roots)
        super().__init__(f"non-stationary ARMA fit, AR roots {np.round(self.roots, 6)}")


def canonical_form(a, b):
    """Observer-canonical (A_psi, B_psi, C_psi) for AR coefficients ``a`` and MA ``b``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float)) if len(b) else np.zeros(0)
    p = a.size
    if p < 1 or b.size != p - 1:
        raise ValueError(f"expected p >= 1 AR and p-1 MA coefficients, got {a.size} and {b.size}")
    A = np.zeros((p, p))
    A[:, 0] = a
    A[:-1, 1:] = np.eye(p - 1)
    B = np.concatenate([[1.0], b]).reshape(p, 1)
    C = np.zeros((1, p))
    C[0, 0] = 1.0
    return A, B, C


@dataclass(frozen=True, eq=False)
class ArmaModel:
    a: np.ndarray
    b: np.ndarray
    A_psi: np.ndarray = field(init=False, repr=False)
    B_psi: np.ndarray = field(init=False, repr=False)
    C_psi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        A, B, C = canonical_form(a, b)
        object.__setattr__(self, "A_psi", A)
        object.__setattr__(self, "B_psi", B)
        object.__setattr__(self, "C_psi", C)

    @property
    def p(self) -> int:
        return self.a.size

    def ar_roots(self) -> np.ndarray:
        return np.linalg.eigvals(self.A_psi)

    def ma_roots(self) -> np.ndarray:
        if self.p == 1:
            return np.zeros(0)
        return np.roots(np.concatenate([[1.0], self.b]))

    def is_stationary(self, margin: float = STATIONARITY_MARGIN) -> bool:
        return bool(np.all(np.abs(self.ar_roots()) < 1.0 - margin))

    def simulate(self, eps, psi0=None):
        """Roll the canonical recursion forward; returns w(0..n) for n innovations."""
        eps = np.asarray(eps, dtype=float)
        psi = np.zeros(self.p) if psi0 is None else np.array(psi0, dtype=float)
        out = np.empty(eps.size + 1)
        out[0] = psi[0]
        A, B = self.A_psi, self.B_psi[:, 0]
        for k, e in enumerate(eps):
            psi = A @ psi + B * e
            out[k + 1] = psi[0]
        return out


class ArmaState:
    """Auxiliary state of one turbine's whitening filter.

    Use :meth:`from_history` with at least ``p`` past wind deviations.  Past
    residuals are taken as zero unless supplied; for an invertible MA part the
    resulting error decays geometrically.
    """

    def __init__(self, psi=None):
        self.psi = None if psi is None else np.array(psi, dtype=float)

    @property
    def initialized(self) -> bool:
        return self.psi is not None

    @classmethod
    def from_history(cls, model: ArmaModel, w_hist, e_hist=None) -> "ArmaState":
        """Build psi(k) from w(k-p+1..k) and, optionally, ARMA residuals e(k-p+2..k)."""
        p = model.p
        w_hist = np.asarray(w_hist, dtype=float)
        if w_hist.size < p:
            raise ValueError(f"need at least {p} past samples to initialize, got {w_hist.size}")
        w = w_hist[-p:]
        if p == 1:
            e = np.zeros(0)
        elif e_hist is None:
            e = np.zeros(p - 1)
        else:
            e = np.asarray(e_hist, dtype=float)[-(p - 1):]
        if e.size != p - 1:
            raise ValueError(f"need {p - 1} past residuals")

        def w_at(lag):  # w(k - lag)
            return w[p - 1 - lag]

        def e_at(lag):  # e(k - lag), lag in 0..p-2
            return e[p - 2 - lag]

        psi = np.empty(p)
        psi[0] = w[-1]
        for j in range(2, p + 1):
            s = sum(model.a[l - 1] * w_at(l + 1 - j) for l in range(j, p + 1))
            s += sum(model.b[l - 1] * e_at(l + 1 - j) for l in range(j - 1, p))
            psi[j - 1] = s
        return cls(psi)


def whiten(state: ArmaState, model: ArmaModel, w_meas: float) -> float:
    """Residual of the new measurement against the one-step prediction; updates ``state``."""
    if not state.initialized:
        raise RuntimeError("ARMA state is not initialized; call ArmaState.from_history first")
    pred = model.A_psi @ state.psi
    eps = float(w_meas) - pred[0]
    state.psi = pred + model.B_psi[:, 0] * eps
    return eps


def residuals(model: ArmaModel, w, warmup: int | None = None, e_init=None) -> np.ndarray:
    """Whiten a whole series; the first ``warmup`` residuals are dropped.

    Initialization uses the first ``p`` samples, so the returned array
    corresponds to samples ``p + warmup .. n-1``.
    """
    w = np.asarray(w, dtype=float)
    p = model.p
    if warmup is None:
        warmup = max(p, 10)
    state = ArmaState.from_history(model, w[:p], e_init)
    eps = np.array([whiten(state, model, v) for v in w[p:]])
    return eps[warmup:]


def _lagged(x: np.ndarray, lags: int, start: int) -> np.ndarray:
    """Columns x(t-1), ..., x(t-lags) for t = start..n-1."""
    n = x.size
    return np.column_stack([x[start - l:n - l] for l in range(1, lags + 1)])


def hannan_rissanen(w, p: int, q: int, long_order: int | None = None):
    """Two-stage least-squares ARMA(p, q) estimate of a zero-mean series.

    Stage 1 fits a long AR model to estimate the innovations; stage 2 regresses
    the series on its own lags and the lagged estimated innovations.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    if long_order is None:
        long_order = int(min(max(2 * (p + q), 20), n // 5))
    if q == 0:
        X = _lagged(w, p, p)
        coef, *_ = np.linalg.lstsq(X, w[p:], rcond=None)
        return coef, np.zeros(0)
    m = long_order
    X1 = _lagged(w, m, m)
    phi, *_ = np.linalg.lstsq(X1, w[m:], rcond=None)
    e_hat = np.zeros(n)
    e_hat[m:] = w[m:] - X1 @ phi
    start = m + max(p, q)
    X2 = np.hstack([_lagged(w, p, start), _lagged(e_hat, q, start)])
    coef, *_ = np.linalg.lstsq(X2, w[start:], rcond=None)
    return coef[:p], coef[p:]


def identify(w_series, p: int) -> ArmaModel:
    """Fit ARMA(p, p-1) to mean-removed wind deviations by Hannan-Rissanen."""
    w = np.asarray(w_series, dtype=float)
    if p < 1:
        raise ValueError("order p must be at least 1")
    if w.size < 20 * p:
        raise ValueError(f"series of length {w.size} too short for order {p} (need {20 * p})")
    a, b = hannan_rissanen(w, p, p - 1)
    model = ArmaModel(a, b)
    if not model.is_stationary():
        raise NonStationaryError(model.ar_roots())
    return model


def one_step_rmse(model: ArmaModel, w, start: int = 0) -> float:
    """Root-mean-square one-step prediction error on ``w[start:]``."""
    w = np.asarray(w, dtype=float)
    eps = residuals(model, w, warmup=0)
    # eps[j] is the residual of sample p + j
    first = max(start - model.p, max(model.p, 10))
    return float(np.sqrt(np.mean(eps[first:] ** 2)))


def select_order(w_series, orders=(2, 3), holdout: float = 0.2):
    """Fit every candidate order on the leading part, pick the lowest held-out RMSE.

    Returns ``(model, rmse_by_order)`` with ``model`` refitted on the full series.
    Candidates that fail the stationarity gate are skipped.
    """
    w = np.asarray(w_series, dtype=float)
    split = int(round(w.size * (1.0 - holdout)))
    scores = {}
    for p in orders:
        try:
            m = identify(w[:split], p)
        except NonStationaryError:
            continue
        if np.any(np.abs(m.ma_roots()) >= 1.0):
            continue
        scores[p] = one_step_rmse(m, w, start=split)
    if not scores:
        raise NonStationaryError(np.array([]))
    best = min(scores, key=lambda k: (scores[k], k))
    return identify(w, best), scores


@dataclass(frozen=True, eq=False)
class FarmPredictor:
    """Stacked per-turbine ARMA models and their N-step prediction matrices."""

    models: tuple
    N: int
    A_psi: np.ndarray = field(init=False, repr=False)
    B_psi: np.ndarray = field(init=False, repr=False)
    C_psi: np.ndarray = field(init=False, repr=False)
    A_bar: np.ndarray = field(init=False, repr=False)
    B_bar: np.ndarray = field(init=False, repr=False)
    C_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        A = block_diag(*[m.A_psi for m in self.models])
        B = block_diag(*[m.B_psi for m in self.models])
        C = block_diag(*[m.C_psi for m in self.models])
        n, nw, N = A.shape[0], B.shape[1], self.N
        powers = [np.eye(n)]
        for _ in range(N - 1):
            powers.append(A @ powers[-1])
        A_bar = np.vstack(powers)
        B_bar = np.zeros((N * n, N * nw))
        for t in range(1, N):
            for s in range(t):
                B_bar[t * n:(t + 1) * n, s * nw:(s + 1) * nw] = powers[t - 1 - s] @ B
        for name, val in (("A_psi", A), ("B_psi", B), ("C_psi", C), ("A_bar", A_bar),
                          ("B_bar", B_bar), ("C_bar", np.kron(np.eye(N), C))):
            object.__setattr__(self, name, val)

    @property
    def n_psi(self) -> int:
        return self.A_psi.shape[0]

    @property
    def n_w(self) -> int:
        return len(self.models)

    def stack_states(self, states) -> np.ndarray:
        return np.concatenate([s.psi for s in states])


def predict(fp: FarmPredictor, psi_now):
    """Mean stacked wind deviations and the linear map from stacked residuals."""
    psi_now = np.asarray(psi_now, dtype=float)
    if psi_now.shape != (fp.n_psi,):
        raise ValueError(f"psi must have shape ({fp.n_psi},), got {psi_now.shape}")
    return fp.C_bar @ fp.A_bar @ psi_now, fp.C_bar @ fp.B_bar


# {"w0": 12.0, "TI": 0.1, "turbines": [{"p": 3, "a": [...], "b": [...]}, ...]}

def save_models(path, models, w0: float, TI: float) -> None:
    data = {
        "w0": w0,
        "TI": TI,
        "turbines": [{"p": m.p, "a": m.a.tolist(), "b": m.b.tolist()} for m in models],
    }
    Path(path).write_text(json.dumps(data, indent=2))


def load_models(path):
    """Returns ``(models, (w0, TI))``."""
    data = json.loads(Path(path).read_text())
    models = []
    for entry in data["turbines"]:
        m = ArmaModel(entry["a"], entry["b"])
        if m.p != int(entry["p"]):
            raise ValueError(f"order p={entry['p']} does not match {m.p} AR coefficients")
        models.append(m)
    return models, (float(data["w0"]), float(data["TI"]))
