"""Moment-based ambiguity sets for ARMA residuals.

The set contains every zero-mean distribution whose covariance is bounded by
``kappa * Sigma_hat``.  ``Sigma_hat`` is kept diagonal (one residual variance
per turbine).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

DEFAULT_KAPPA = 2.36
MIN_SAMPLES = 30


@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    w0: float
    TI: float
    sigma_diag: np.ndarray
    kappa: float = DEFAULT_KAPPA
    beta: float = 0.05
    n_samples: int = 0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.sigma_diag, dtype=float))
        if s.ndim != 1 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("residual variances must be finite and positive")
        if not self.kappa >= 1:
            raise ValueError(f"ambiguity radius must be >= 1, got {self.kappa}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        object.__setattr__(self, "sigma_diag", s)

    @property
    def key(self):
        return (self.w0, self.TI)

    @property
    def Sigma_hat(self) -> np.ndarray:
        return np.diag(self.sigma_diag)

    @property
    def n_w(self) -> int:
        return self.sigma_diag.size

    def with_kappa(self, kappa: float) -> "AmbiguitySet":
        return AmbiguitySet(self.w0, self.TI, self.sigma_diag, kappa, self.beta, self.n_samples)


@dataclass(frozen=True, eq=False)
class WorstCaseCov:
    """diag(I_N kron kappa*Sigma_hat, 1) and the symmetric root of one block."""

    Sigma_N: np.ndarray
    sqrt_block: np.ndarray
    N: int
    block: np.ndarray = field(repr=False)

    @property
    def noise_cov(self) -> np.ndarray:
        """I_N kron kappa*Sigma_hat, without the trailing 1."""
        return self.Sigma_N[:-1, :-1]

    @property
    def noise_sqrt(self) -> np.ndarray:
        return np.kron(np.eye(self.N), self.sqrt_block)


def residual_covariance(residuals) -> np.ndarray:
    """Diagonal of zero-mean sample variances (divisor N_s), one per turbine.

    ``residuals`` is an (N_s, N_wt) array or a sequence of per-turbine series
    (possibly of different lengths).
    """
    if isinstance(residuals, np.ndarray) and residuals.ndim == 2:
        series = [residuals[:, i] for i in range(residuals.shape[1])]
    else:
        series = [np.asarray(r, dtype=float) for r in residuals]
    var = []
    for i, r in enumerate(series):
        if r.size < MIN_SAMPLES:
            raise ValueError(f"turbine {i}: {r.size} residuals, need at least {MIN_SAMPLES}")
        var.append(float(np.mean(r ** 2)))
    var = np.array(var)
    if np.any(var <= 0):
        raise ValueError("residual covariance is not positive definite")
    return var


def ambiguity_radius(n_samples: int, beta: float, method: str = "configured",
                     kappa: float = DEFAULT_KAPPA, proxy: float = 1.0) -> float:
    """Ambiguity radius kappa.

    ``configured`` returns ``kappa`` unchanged.  ``bound`` evaluates the
    concentration surrogate 1 / (1 - proxy * sqrt(2 ln(1/beta) / n_samples)),
    clamped to at least 1; ``proxy`` is the sub-Gaussian proxy constant.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if method == "configured":
        return float(kappa)
    if method != "bound":
        raise ValueError(f"unknown radius method {method!r}")
    if n_samples <= 1:
        raise ValueError("need more than one sample")
    c = proxy * np.sqrt(2.0 * np.log(1.0 / beta) / n_samples)
    if c >= 1.0:
        raise ValueError(f"too few samples ({n_samples}) for confidence 1-beta={1 - beta}")
    return max(1.0, 1.0 / (1.0 - c))


def worst_case_cov(amb: AmbiguitySet, N: int) -> WorstCaseCov:
    block = amb.kappa * amb.Sigma_hat
    Sigma_N = block_diag(np.kron(np.eye(N), block), np.ones((1, 1)))
    # Sigma_hat is diagonal, so the symmetric root is elementwise
    root = np.diag(np.sqrt(amb.kappa * amb.sigma_diag))
    return WorstCaseCov(Sigma_N=Sigma_N, sqrt_block=root, N=N, block=block)


# {"w0": 12.0, "TI": 0.1, "beta": 0.05, "N_s": 1000, "kappa": 2.36, "sigma_diag": [...]}

def save_ambiguity(path, amb: AmbiguitySet) -> None:
    data = {
        "w0": amb.w0, "TI": amb.TI, "beta": amb.beta, "N_s": amb.n_samples,
        "kappa": amb.kappa, "sigma_diag": amb.sigma_diag.tolist(),
    }
    Path(path).write_text(json.dumps(data, indent=2))


def load_ambiguity(path) -> AmbiguitySet:
    return ambiguity_from_dict(json.loads(Path(path).read_text()))


def ambiguity_from_dict(data: dict) -> AmbiguitySet:
    return AmbiguitySet(
        w0=float(data["w0"]),
        TI=float(data["TI"]),
        sigma_diag=np.array(data["sigma_diag"], dtype=float),
        kappa=float(data.get("kappa", DEFAULT_KAPPA)),
        beta=float(data.get("beta", 0.05)),
        n_samples=int(data.get("N_s", 0)),
    )
