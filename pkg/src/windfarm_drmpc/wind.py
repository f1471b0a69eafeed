"""Synthetic rotor-effective wind speeds for a row of turbines.

Free-stream turbulence is a stationary AR(1) process around the mean speed.
Downstream turbines see the upstream turbine's wind advected by the spacing
(frozen turbulence), reduced by a Jensen top-hat deficit and with extra wake
turbulence added.  All random numbers come from numpy's Philox counter-based
generator keyed by the scenario seed, so traces are bit-reproducible across
platforms.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class WindScenario:
    w0: float = 12.0
    TI: float = 0.1
    n_wt: int = 5
    spacing: float = 400.0
    T: int = 900
    seed: int = 0
    turb_corr: float = 0.95
    dt: float = 1.0
    deficit_coef: float = 0.1
    wake_expansion: float = 0.075
    rotor_radius: float = 63.0
    delta_TI: float = 0.05

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError("w0 must be positive")
        if not 0 <= self.TI < 1:
            raise ValueError("TI must lie in [0, 1)")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.n_wt < 1 or self.T < 1:
            raise ValueError("n_wt and T must be positive")
        if not -1 < self.turb_corr < 1:
            raise ValueError("turb_corr must lie in (-1, 1)")
        if self.delta_TI < 0:
            raise ValueError("delta_TI must be non-negative")

    @property
    def sigma(self) -> float:
        """Free-stream turbulence standard deviation TI * w0."""
        return self.TI * self.w0

    @property
    def delay(self) -> int:
        """Advection delay between neighbouring turbines in samples."""
        return int(round(self.spacing / (self.w0 * self.dt)))

    @property
    def deficit_factor(self) -> float:
        r = self.rotor_radius
        return 1.0 - self.deficit_coef * (r / (r + self.wake_expansion * self.spacing)) ** 2


def _ar1(rng: np.random.Generator, n: int, cols: int, phi: float) -> np.ndarray:
    """Unit-variance stationary AR(1) series, one per column."""
    e = rng.standard_normal((n, cols))
    out = np.empty((n, cols))
    out[0] = e[0]
    gain = np.sqrt(1.0 - phi ** 2)
    for k in range(1, n):
        out[k] = phi * out[k - 1] + gain * e[k]
    return out


def generate_free_stream(sc: WindScenario, n_samples: int | None = None) -> np.ndarray:
    """``n_samples`` x ``n_wt`` array of w0 plus AR(1) turbulence with std TI*w0."""
    n = sc.T if n_samples is None else int(n_samples)
    rng = np.random.Generator(np.random.Philox(sc.seed))
    return sc.w0 + sc.sigma * _ar1(rng, n, sc.n_wt, sc.turb_corr)


def apply_wake(sc: WindScenario, traces: np.ndarray) -> np.ndarray:
    """Propagate the first column downstream through the row of turbines.

    Column 0 of the result is the free stream.  For samples earlier than the
    delay the upstream value at t=0 is used; ``generate_wind`` avoids this
    by simulating a pre-roll.
    """
    traces = np.asarray(traces, dtype=float)
    n = traces.shape[0]
    d = sc.delay
    if d >= n:
        raise ValueError(f"wake delay of {d} samples exceeds the trace length {n}")
    rng = np.random.Generator(np.random.Philox(sc.seed).jumped(1))
    added = sc.delta_TI * sc.w0 * _ar1(rng, n, sc.n_wt, sc.turb_corr)
    f = sc.deficit_factor
    out = np.empty_like(traces)
    out[:, 0] = traces[:, 0]
    idx = np.maximum(np.arange(n) - d, 0)
    for i in range(1, sc.n_wt):
        out[:, i] = f * out[idx, i - 1] + added[:, i]
    return out


def generate_wind(sc: WindScenario) -> np.ndarray:
    """``T`` x ``n_wt`` effective wind trace with a fully developed wake."""
    pre = sc.delay * (sc.n_wt - 1)
    full = apply_wake(sc, generate_free_stream(sc, sc.T + pre))
    return full[pre:]


def expected_means(sc: WindScenario) -> np.ndarray:
    return sc.w0 * sc.deficit_factor ** np.arange(sc.n_wt)


def write_wind_csv(path, w_eff: np.ndarray) -> None:
    w_eff = np.atleast_2d(np.asarray(w_eff, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"w{i + 1}" for i in range(w_eff.shape[1])])
        for k, row in enumerate(w_eff):
            writer.writerow([k] + [repr(float(v)) for v in row])


def read_wind_csv(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t" or not all(h.startswith("w") for h in header[1:]):
            raise ValueError(f"unexpected wind CSV header {header}")
        rows = [[float(v) for v in row[1:]] for row in reader if row]
    return np.array(rows)
