import numpy as np
import pytest

from windfarm_drmpc.arma import ArmaModel, FarmPredictor
from windfarm_drmpc.farm_model import OperatingPoint, TurbineLTI, stack_farm


def random_stable_arma(rng, p):
    """ARMA(p, p-1) with AR and MA roots inside radius 0.8."""
    ar_roots = 0.8 * rng.uniform(-1, 1, p)
    ma_roots = 0.6 * rng.uniform(-1, 1, p - 1)
    a = -np.poly(ar_roots)[1:]
    b = np.poly(ma_roots)[1:] if p > 1 else np.zeros(0)
    return ArmaModel(a, b)


def random_turbine(rng, dt=1.0):
    A = rng.normal(size=(3, 3))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    E = rng.normal(size=(3, 1))
    E[0, 0] = 1.0 + abs(E[0, 0])  # full column rank
    op = OperatingPoint(beta0=5.0, omega_r0=1.2, omega_g0=116.0, P_wt0=3e6, w0=12.0,
                        F_t0=3e5, T_s0=2.4e6)
    return TurbineLTI(A=A, B=rng.normal(size=(3, 1)), E=E, C=rng.normal(size=(2, 3)),
                      D=rng.normal(size=(2, 1)), F=rng.normal(size=(2, 1)), op=op, dt=dt)


def random_farm(rng, n_wt):
    return stack_farm([random_turbine(rng) for _ in range(n_wt)])


def random_predictor(rng, n_wt, N, orders=(1, 2, 3)):
    return FarmPredictor(tuple(random_stable_arma(rng, int(rng.choice(orders))) for _ in range(n_wt)), N)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
