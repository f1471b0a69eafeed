import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windfarm_drmpc.arma import (
    ArmaModel, ArmaState, FarmPredictor, NonStationaryError, canonical_form, hannan_rissanen,
    identify, load_models, predict, residuals, save_models, select_order, whiten,
)
from conftest import random_stable_arma


def arma_recursion(a, b, e):
    """w(k) = sum a_l w(k-l) + e(k) + sum b_l e(k-l), zero initial conditions."""
    p, q = len(a), len(b)
    w = np.zeros(len(e))
    for k in range(len(e)):
        w[k] = e[k]
        w[k] += sum(a[l] * w[k - 1 - l] for l in range(p) if k - 1 - l >= 0)
        w[k] += sum(b[l] * e[k - 1 - l] for l in range(q) if k - 1 - l >= 0)
    return w


def test_canonical_form_p2():
    A, B, C = canonical_form([0.3, -0.2], [0.5])
    assert np.array_equal(A, [[0.3, 1.0], [-0.2, 0.0]])
    assert np.array_equal(B, [[1.0], [0.5]])
    assert np.array_equal(C, [[1.0, 0.0]])


def test_canonical_form_p1():
    A, B, C = canonical_form([0.7], [])
    assert np.array_equal(A, [[0.7]]) and np.array_equal(B, [[1.0]]) and np.array_equal(C, [[1.0]])


def test_canonical_form_length_mismatch():
    with pytest.raises(ValueError):
        canonical_form([0.1, 0.2], [0.1, 0.2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
def test_impulse_response_matches_recursion(seed, p):
    m = random_stable_arma(np.random.default_rng(seed), p)
    e = np.zeros(21)
    e[0] = 1.0
    h_rec = arma_recursion(m.a, m.b, e)
    # the canonical state driven by an impulse at step 0
    psi = m.B_psi[:, 0].copy()
    h_ss = [psi[0]]
    for _ in range(20):
        psi = m.A_psi @ psi
        h_ss.append(psi[0])
    assert np.allclose(h_ss, h_rec, atol=1e-12)


def test_ar1_recovery():
    rng = np.random.default_rng(0)
    w = ArmaModel([0.7], []).simulate(rng.standard_normal(10_000))
    assert 0.65 <= identify(w, 1).a[0] <= 0.75


def test_white_noise_has_no_ar_term():
    w = np.random.default_rng(1).standard_normal(10_000)
    assert abs(identify(w, 1).a[0]) < 0.1


def test_hannan_rissanen_matches_statsmodels():
    sm_hr = pytest.importorskip("statsmodels.tsa.arima.estimators.hannan_rissanen")
    rng = np.random.default_rng(4)
    true = ArmaModel([1.2, -0.35], [-0.3])
    w = true.simulate(rng.standard_normal(20_000))[1:]
    a, b = hannan_rissanen(w, 2, 1, long_order=20)
    ref, _ = sm_hr.hannan_rissanen(w, ar_order=2, ma_order=1, initial_ar_order=20, demean=False)
    # statsmodels runs stage 1 by Yule-Walker rather than least squares, so the
    # two agree to sampling accuracy, not bitwise
    assert np.allclose(a, ref.ar_params, atol=0.02)
    assert np.allclose(b, ref.ma_params, atol=0.02)


def test_non_stationary_fit_rejected():
    w = np.cumsum(np.random.default_rng(2).standard_normal(2000))
    w = np.concatenate([w, 10 * np.exp(np.linspace(0, 5, 200))])
    with pytest.raises(NonStationaryError) as exc:
        identify(w, 1)
    assert exc.value.roots.size == 1


def test_short_series_rejected():
    with pytest.raises(ValueError):
        identify(np.zeros(30), 2)


def test_whiten_zero_noise_rollout():
    m = ArmaModel([1.1, -0.3], [0.4])
    w = m.simulate(np.zeros(50), psi0=[1.0, -0.2])
    state = ArmaState([1.0, -0.2])
    eps = [whiten(state, m, v) for v in w[1:]]
    assert np.allclose(eps, 0.0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3))
def test_whiten_recovers_innovations(seed, p):
    rng = np.random.default_rng(seed)
    m = random_stable_arma(rng, p)
    eps = rng.standard_normal(300)
    w = m.simulate(eps)
    state = ArmaState(np.zeros(p))
    rec = np.array([whiten(state, m, v) for v in w[1:]])
    assert np.allclose(rec, eps, atol=1e-8)


def test_from_history_warm_up_converges():
    rng = np.random.default_rng(9)
    m = ArmaModel([1.2, -0.35, 0.05], [-0.3, 0.1])
    eps = rng.standard_normal(400)
    w = m.simulate(eps)
    # start from measured history only; unknown past residuals taken as zero
    rec = residuals(m, w[100:], warmup=0)
    assert np.allclose(rec[40:], eps[102:][40:len(rec)], atol=1e-8)


def test_memoryless_model():
    m = ArmaModel([0.0], [])
    state = ArmaState.from_history(m, [0.0])
    for v in (0.3, -1.2, 2.0):
        assert whiten(state, m, v) == v


def test_whiten_requires_initialized_state():
    with pytest.raises(RuntimeError):
        whiten(ArmaState(), ArmaModel([0.5], []), 1.0)


def test_state_reproduces_last_measurement():
    m = ArmaModel([1.0, -0.2], [0.3])
    state = ArmaState.from_history(m, [0.1, 0.4])
    for v in (0.2, -0.5, 0.9):
        whiten(state, m, v)
        assert (m.C_psi @ state.psi)[0] == pytest.approx(v)


def test_predict_ar1_example():
    fp = FarmPredictor((ArmaModel([0.5], []),), 2)
    mean, noise = predict(fp, np.array([2.0]))
    assert np.allclose(mean, [2.0, 1.0])
    assert np.allclose(noise, [[0.0, 0.0], [1.0, 0.0]])


def test_predict_zero_state(rng):
    fp = FarmPredictor(tuple(random_stable_arma(rng, p) for p in (1, 2, 3)), 4)
    mean, _ = predict(fp, np.zeros(fp.n_psi))
    assert not mean.any()
    with pytest.raises(ValueError):
        predict(fp, np.zeros(fp.n_psi + 1))


def test_prediction_first_block_is_current_wind(rng):
    fp = FarmPredictor(tuple(random_stable_arma(rng, p) for p in (2, 3)), 5)
    psi = rng.normal(size=fp.n_psi)
    mean, noise = predict(fp, psi)
    assert np.allclose(mean[:2], fp.C_psi @ psi)
    assert not noise[:2].any()


def test_predict_monte_carlo_moments():
    rng = np.random.default_rng(21)
    m = ArmaModel([1.2, -0.35], [-0.3])
    N, n = 4, 100_000
    fp = FarmPredictor((m,), N)
    psi0 = np.array([0.8, -0.1])
    mean, noise = predict(fp, psi0)
    eps = rng.standard_normal((n, N))
    samples = np.empty((n, N))
    psi = np.tile(psi0, (n, 1))
    for t in range(N):
        samples[:, t] = psi[:, 0]
        psi = psi @ m.A_psi.T + np.outer(eps[:, t], m.B_psi[:, 0])
    cov = noise @ noise.T
    assert np.allclose(samples.mean(axis=0), mean, atol=0.02 * np.sqrt(np.diag(cov)).max())
    emp = np.cov(samples[:, 1:].T)
    assert np.allclose(emp, cov[1:, 1:], rtol=0.02, atol=0.02 * cov.max())


def test_predictor_block_structure(rng):
    models = tuple(random_stable_arma(rng, p) for p in (2, 1))
    fp = FarmPredictor(models, 3)
    A = fp.A_psi
    n = A.shape[0]
    assert np.allclose(fp.A_bar[:n], np.eye(n))
    assert np.allclose(fp.A_bar[2 * n:], A @ A)
    assert not fp.B_bar[:n].any()
    assert np.allclose(fp.B_bar[2 * n:, :2], A @ fp.B_psi)


def test_select_order_picks_lowest_holdout_rmse():
    rng = np.random.default_rng(3)
    true = ArmaModel([1.2, -0.35, 0.05], [-0.3, 0.1])
    w = true.simulate(rng.standard_normal(5000))
    m, scores = select_order(w, (2, 3))
    assert set(scores) == {2, 3}
    assert m.p == min(scores, key=scores.get)
    assert m.is_stationary()


def test_model_file_round_trip(tmp_path):
    models = [ArmaModel([0.5], []), ArmaModel([1.1, -0.3], [0.2])]
    path = tmp_path / "arma.json"
    save_models(path, models, 12.0, 0.1)
    back, key = load_models(path)
    assert key == (12.0, 0.1)
    for m, b in zip(models, back):
        assert np.array_equal(m.a, b.a) and np.array_equal(m.b, b.b)
