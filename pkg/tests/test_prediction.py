import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windfarm_drmpc.farm_model import step
from windfarm_drmpc.prediction import (
    SadfPolicy, build_horizon, build_output_prediction, realized_input, sadf_basis,
)
from conftest import random_farm, random_predictor


class Scalar:
    A = np.array([[0.5]])
    B = np.array([[1.0]])
    E = np.array([[1.0]])
    C = np.array([[1.0]])
    D = np.array([[0.0]])
    F = np.array([[0.0]])


def random_policy(rng, N, n_u, n_w):
    return SadfPolicy(rng.normal(size=N * n_u), rng.normal(size=(N - 1, n_u, n_w)))


def test_scalar_horizon_by_hand():
    hm = build_horizon(Scalar, 2)
    assert np.allclose(hm.A_bar.ravel(), [1.0, 0.5, 0.25])
    assert np.allclose(hm.B_bar, [[0, 0], [1, 0], [0.5, 1]])


def test_horizon_n1():
    hm = build_horizon(Scalar, 1)
    assert np.allclose(hm.B_bar, [[0.0], [1.0]])


def test_horizon_requires_positive_n():
    with pytest.raises(ValueError):
        build_horizon(Scalar, 0)


def test_horizon_structure(rng):
    farm = random_farm(rng, 2)
    hm = build_horizon(farm, 4)
    n = farm.n_x
    assert np.array_equal(hm.A_bar[:n], np.eye(n))
    for M in (hm.B_bar, hm.E_bar, hm.D_bar, hm.F_bar):
        rows = M.shape[0] // 5
        assert not M[:rows].any()
    assert np.array_equal(hm.C_bar, np.kron(np.eye(5), farm.C))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6), st.integers(1, 3))
def test_rollout_oracle(seed, N, n_wt):
    rng = np.random.default_rng(seed)
    farm = random_farm(rng, n_wt)
    hm = build_horizon(farm, N)
    x0 = rng.normal(size=farm.n_x)
    u = rng.normal(size=(N, n_wt))
    w = rng.normal(size=(N, n_wt))
    xs = [x0]
    for t in range(N):
        xs.append(step(farm, xs[-1], u[t], w[t])[0])
    stacked = hm.A_bar @ x0 + hm.B_bar @ u.ravel() + hm.E_bar @ w.ravel()
    assert np.allclose(stacked, np.concatenate(xs), atol=1e-10)


def test_sadf_structure(rng):
    N, n_u, n_w = 4, 2, 3
    pol = random_policy(rng, N, n_u, n_w)
    M = pol.M_bar
    for i in range(N):
        for j in range(N):
            blk = M[i * n_u:(i + 1) * n_u, j * n_w:(j + 1) * n_w]
            if j >= i:
                assert not blk.any()
            else:
                assert np.array_equal(blk, pol.M_blocks[i - j - 1])
    assert pol.n_decision == N * n_u + (N - 1) * n_u * n_w


def test_sadf_basis_reconstructs(rng):
    pol = random_policy(rng, 3, 2, 2)
    T = sadf_basis(3, 2, 2)
    assert np.allclose(np.tensordot(pol.M_blocks.ravel(), T, axes=1), pol.M_bar)


def test_realized_input(rng):
    N, n_u, n_w = 4, 2, 2
    pol = random_policy(rng, N, n_u, n_w)
    assert np.array_equal(realized_input(pol, np.zeros(N * n_w)), pol.v)
    eps = rng.normal(size=N * n_w)
    u = realized_input(pol, eps)
    # naive blockwise loop
    ref = pol.v.reshape(N, n_u).copy()
    for t in range(N):
        for s in range(t):
            ref[t] += pol.M_blocks[t - s - 1] @ eps[s * n_w:(s + 1) * n_w]
    assert np.allclose(u, ref.ravel())
    u2 = realized_input(pol, rng.normal(size=N * n_w))
    assert np.array_equal(u[:n_u], pol.v[:n_u]) and np.array_equal(u2[:n_u], pol.v[:n_u])
    with pytest.raises(ValueError):
        realized_input(pol, np.zeros(3))


def test_shifted_policy(rng):
    pol = random_policy(rng, 4, 2, 2)
    sh = pol.shifted()
    assert np.array_equal(sh.v[:6], pol.v[2:]) and not sh.v[6:].any()
    assert np.array_equal(sh.M_blocks, pol.M_blocks)
    assert np.array_equal(SadfPolicy.from_vector(pol.to_vector(), 4, 2, 2).M_bar, pol.M_bar)


def test_zero_policy_prediction(rng):
    farm = random_farm(rng, 2)
    fp = random_predictor(rng, 2, 3)
    hm = build_horizon(farm, 3)
    pred = build_output_prediction(hm, fp, SadfPolicy.zeros(3, 2, 2), np.zeros(farm.n_x), np.zeros(fp.n_psi))
    assert not pred.y_tilde.any()
    assert np.allclose(pred.Psi, (hm.C_bar @ hm.E_bar + hm.F_bar) @ fp.C_bar @ fp.B_bar)
    assert not pred.Psi[:farm.n_y].any()


def brute_force_outputs(farm, fp, policy, x0, psi0, eps):
    """ARMA rollout -> wind -> farm rollout -> outputs, step by step."""
    N, n_w = policy.N, fp.n_w
    u = realized_input(policy, eps).reshape(N, -1)
    psi = psi0.copy()
    x = x0.copy()
    ys = [farm.C @ x]
    for t in range(N):
        w = fp.C_psi @ psi
        x, _ = step(farm, x, u[t], w)
        ys.append(farm.C @ x + farm.D @ u[t] + farm.F @ w)
        psi = fp.A_psi @ psi + fp.B_psi @ eps[t * n_w:(t + 1) * n_w]
    return np.concatenate(ys)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 5), st.integers(1, 3))
def test_output_prediction_matches_brute_force(seed, N, n_wt):
    rng = np.random.default_rng(seed)
    farm = random_farm(rng, n_wt)
    fp = random_predictor(rng, n_wt, N)
    hm = build_horizon(farm, N)
    pol = random_policy(rng, N, n_wt, n_wt)
    x0 = rng.normal(size=farm.n_x)
    psi = rng.normal(size=fp.n_psi)
    pred = build_output_prediction(hm, fp, pol, x0, psi)
    for _ in range(5):
        eps = rng.normal(size=N * n_wt)
        assert np.allclose(pred.outputs(eps), brute_force_outputs(farm, fp, pol, x0, psi, eps), atol=1e-9)


def test_open_loop_policy_output_is_affine(rng):
    farm = random_farm(rng, 2)
    fp = random_predictor(rng, 2, 3)
    hm = build_horizon(farm, 3)
    args = [(rng.normal(size=farm.n_x), rng.normal(size=fp.n_psi), random_policy(rng, 3, 2, 2)) for _ in range(2)]
    p1 = build_output_prediction(hm, fp, args[0][2], args[0][0], args[0][1])
    p2 = build_output_prediction(hm, fp, args[1][2], args[1][0], args[1][1])
    summed = SadfPolicy(args[0][2].v + args[1][2].v, args[0][2].M_blocks)
    p12 = build_output_prediction(hm, fp, summed, args[0][0] + args[1][0], args[0][1] + args[1][1])
    assert np.allclose(p12.y_tilde, p1.y_tilde + p2.y_tilde)
    assert np.allclose(p12.Psi, p1.Psi)
    E = rng.normal(size=(6, 4))
    assert np.allclose(p1.outputs(E), p1.outputs(E[:, 0])[:, None] + p1.Psi @ (E - E[:, :1]))


def test_prediction_dimension_checks(rng):
    farm = random_farm(rng, 2)
    fp = random_predictor(rng, 2, 3)
    hm = build_horizon(farm, 3)
    pol = SadfPolicy.zeros(3, 2, 2)
    with pytest.raises(ValueError):
        build_output_prediction(hm, fp, pol, np.zeros(5), np.zeros(fp.n_psi))
    with pytest.raises(ValueError):
        build_output_prediction(hm, fp, SadfPolicy.zeros(2, 2, 2), np.zeros(farm.n_x), np.zeros(fp.n_psi))
