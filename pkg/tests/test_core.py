import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sarnsaf.aop import delta_of_rho, rho_bound, rho_opt_oracle
from sarnsaf.core import (
    DivergenceError,
    LeastSquares,
    LogPenalty,
    ModifiedHuber,
    NullPenalty,
    SafState,
    coarse_update,
    penalty_direction,
    subband_errors,
    zero_attract,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def naive_direction(g, U, delta):
    M = U.shape[1]
    A = np.eye(M)
    for u in U:
        A -= np.outer(u, u) / (u @ u + delta)
    return A @ g


# --- subband errors ------------------------------------------------------


def test_errors_vanish_at_true_system():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((4, 16))
    w_o = rng.standard_normal(16)
    np.testing.assert_array_equal(subband_errors(w_o, U, U @ w_o), 0.0)


def test_errors_at_zero_weights():
    d = np.array([0.3, -1.2])
    np.testing.assert_array_equal(subband_errors(np.zeros(8), np.ones((2, 8)), d), d)


def test_streaming_errors_match_convolve_decimate_oracle():
    rng = np.random.default_rng(42)
    M, N, L, T = 8, 2, 5, 60
    h = rng.standard_normal((N, L))
    u = rng.standard_normal(T)
    d = rng.standard_normal(T)
    w = rng.standard_normal(M)

    state = SafState(M, N)
    state.w = w.copy()
    uf = np.array([np.convolve(u, hi)[:T] for hi in h])
    df = np.array([np.convolve(d, hi)[:T] for hi in h])
    for k in range(T // N):
        # block of the N newest samples, oldest first
        state.push(uf[:, k * N - N + 1 : k * N + 1] if k > 0 else np.c_[np.zeros((N, N - 1)), uf[:, :1]])
        got = state.errors(df[:, k * N])
        # oracle: explicit sums, y_i(kN) = sum_m w_m u_i(kN - m)
        n = k * N
        for i in range(N):
            y = sum(w[m] * uf[i, n - m] for m in range(M) if n - m >= 0)
            assert got[i] == pytest.approx(df[i, n] - y, abs=1e-12)


# --- modified Huber ------------------------------------------------------


def test_mh_correction_factor():
    assert ModifiedHuber(1, 0.99, 20).c_sigma == pytest.approx(1.483 * (1 + 5 / 19), rel=1e-15)


def test_mh_first_update_has_no_history():
    mh = ModifiedHuber(2, lam=0.99, window=20)
    e = np.array([0.5, -2.0])
    mh.update(e)
    np.testing.assert_allclose(mh.sigma2, mh.c_sigma * e**2, rtol=1e-15)
    np.testing.assert_allclose(mh.xi, 2.576 * np.sqrt(mh.c_sigma) * np.abs(e), rtol=1e-15)


def test_mh_fixed_point():
    mh = ModifiedHuber(1, lam=0.95, window=20)
    c = 0.7
    for _ in range(2000):
        mh.update(np.array([np.sqrt(c)]))
    assert mh.sigma2[0] == pytest.approx(mh.c_sigma * c, rel=1e-12)


def test_mh_median_ignores_outlier():
    mh = ModifiedHuber(1, lam=0.95, window=5)
    for e in [1.0, 1.0, 1.0, 1.0]:
        mh.update(np.array([e]))
    before = mh.sigma2.copy()
    mh.update(np.array([1e6]))
    # window [1,1,1,1,1e12] has median 1, so the estimate is unchanged
    np.testing.assert_allclose(mh.sigma2, before, rtol=1e-12)


def test_mh_partial_window_median():
    mh = ModifiedHuber(1, lam=0.99, window=20)
    mh.update(np.array([1.0]))
    mh.update(np.array([3.0]))
    # median of {1, 9}
    expected = 0.99 * mh.c_sigma * 1.0 + mh.c_sigma * 0.01 * 5.0
    assert mh.sigma2[0] == pytest.approx(expected, rel=1e-14)


def test_mh_scaling_thresholds():
    mh = ModifiedHuber(3)
    mh.xi = np.array([1.0, 1.0, 1.0])
    np.testing.assert_array_equal(mh.scaling(np.array([10.0, 0.1, 0.0])), [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(mh.scaling(np.array([1.0, -1.0, -0.999])), [0.0, 0.0, 1.0])


def test_mh_zero_threshold_limit():
    mh = ModifiedHuber(2)
    np.testing.assert_array_equal(mh.scaling(np.array([0.0, 1e-30])), [1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(arrays(float, (30, 3), elements=finite))
def test_mh_scaling_is_binary(errors):
    mh = ModifiedHuber(3, window=7)
    for e in errors:
        mh.update(e)
        phi = mh.scaling(e)
        assert set(np.unique(phi)) <= {0.0, 1.0}
        assert np.all(mh.xi >= 0)


def test_least_squares_is_constant():
    ls = LeastSquares()
    np.testing.assert_array_equal(ls.scaling(np.array([5.0, 0.0, -1e9])), 1.0)


# --- log penalty ---------------------------------------------------------


def test_log_penalty_values():
    p = LogPenalty(0.005)
    np.testing.assert_allclose(p.grad(np.array([0.0, 1.0, -0.1])), [0.0, 1 / 1.005, -1 / 0.105], rtol=1e-15)


def test_log_penalty_matches_finite_difference():
    theta = 0.01
    f = lambda x: np.log1p(np.abs(x) / theta)  # noqa: E731
    x = np.array([-0.3, -0.02, 0.004, 0.5])
    h = 1e-7
    fd = (f(x + h) - f(x - h)) / (2 * h)
    np.testing.assert_allclose(LogPenalty(theta).grad(x), fd, rtol=1e-6)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 16, elements=finite), st.floats(1e-4, 1.0))
def test_log_penalty_bounded(psi, theta):
    g = LogPenalty(theta).grad(psi)
    assert np.all(np.isfinite(g))
    assert np.all(np.abs(g) <= 1 / theta)


def test_log_penalty_rejects_bad_theta():
    with pytest.raises(ValueError):
        LogPenalty(0.0)


# --- coarse update -------------------------------------------------------


def test_coarse_update_frozen_by_zero_scaling():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(8)
    U = rng.standard_normal((2, 8))
    psi = coarse_update(w, U, np.array([3.0, -2.0]), np.zeros(2), np.ones(2))
    np.testing.assert_array_equal(psi, w)


def test_single_band_full_projection():
    rng = np.random.default_rng(2)
    w = rng.standard_normal(8)
    U = rng.standard_normal((1, 8))
    d = np.array([0.7])
    e = subband_errors(w, U, d)
    psi = coarse_update(w, U, e, np.ones(1), np.ones(1), delta_reg=0.0)
    assert d[0] - U[0] @ psi == pytest.approx(0.0, abs=1e-12)


def test_coarse_update_matches_term_by_term_oracle():
    rng = np.random.default_rng(3)
    M, N = 8, 2
    w = rng.standard_normal(M)
    U = rng.standard_normal((N, M))
    e = rng.standard_normal(N)
    phi = np.array([1.0, 0.0])
    mu = rng.uniform(0, 1, N)
    delta = 1e-3
    expected = w.copy()
    for i in range(N):
        energy = sum(U[i, m] ** 2 for m in range(M)) + delta
        for m in range(M):
            expected[m] += mu[i] * phi[i] * e[i] * U[i, m] / energy
    np.testing.assert_allclose(coarse_update(w, U, e, phi, mu, delta_reg=delta), expected, atol=1e-12)


def test_a_posteriori_identity_per_band():
    rng = np.random.default_rng(4)
    for _ in range(50):
        M, N = 16, 4
        w = rng.standard_normal(M)
        U = rng.standard_normal((N, M))
        d = rng.standard_normal(N)
        e = subband_errors(w, U, d)
        mu = rng.uniform(0, 1, N)
        phi = rng.integers(0, 2, N).astype(float)
        for i in range(N):
            only = np.zeros(N)
            only[i] = 1.0
            psi = coarse_update(w, U, e, phi * only, mu, delta_reg=0.0)
            assert d[i] - U[i] @ psi == pytest.approx((1 - mu[i] * phi[i]) * e[i], abs=1e-10)


# --- penalty direction ---------------------------------------------------


def test_direction_vanishes_without_penalty():
    U = np.random.default_rng(5).standard_normal((4, 32))
    np.testing.assert_array_equal(penalty_direction(NullPenalty().grad(np.ones(32)), U), 0.0)


def test_direction_fast_path_matches_naive():
    rng = np.random.default_rng(6)
    for _ in range(20):
        U = rng.standard_normal((4, 64))
        g = LogPenalty(0.005).grad(rng.standard_normal(64) * 0.1)
        fast = penalty_direction(g, U, delta_reg=1e-8)
        naive = naive_direction(g, U, 1e-8)
        assert np.max(np.abs(fast - naive)) <= 1e-12 * max(1.0, np.max(np.abs(naive)))


def test_direction_unit_basis_regressor():
    g = np.array([3.0, -1.0, 2.0, 0.5])
    U = np.array([[1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(penalty_direction(g, U, delta_reg=0.0), [0.0, -1.0, 2.0, 0.5])


def test_direction_orthogonal_to_orthogonal_regressors():
    rng = np.random.default_rng(7)
    Q, _ = np.linalg.qr(rng.standard_normal((32, 4)))
    U = (Q * rng.uniform(0.5, 3, 4)).T
    g = rng.standard_normal(32)
    P = penalty_direction(g, U, delta_reg=0.0)
    assert np.max(np.abs(U @ P)) <= 1e-8 * np.linalg.norm(g) * np.max(np.linalg.norm(U, axis=1))


# --- zero attraction -----------------------------------------------------


def test_zero_rho_keeps_coarse_estimate():
    psi = np.array([1.0, 2.0])
    np.testing.assert_array_equal(zero_attract(psi, np.array([5.0, 5.0]), 0.0), psi)


def test_negative_rho_rejected():
    with pytest.raises(ValueError):
        zero_attract(np.zeros(2), np.zeros(2), -1.0)


def _random_instance(rng, M=64, N=4):
    w_o = np.zeros(M)
    w_o[rng.choice(M, 6, replace=False)] = rng.standard_normal(6)
    psi = w_o + 0.01 * rng.standard_normal(M)
    U = rng.standard_normal((N, M))
    P = penalty_direction(LogPenalty(0.005).grad(psi), U)
    return w_o, psi, P


def test_deviation_identity():
    rng = np.random.default_rng(8)
    for _ in range(50):
        w_o, psi, P = _random_instance(rng)
        rho = rng.uniform(0, 1e-3)
        w_next = zero_attract(psi, P, rho)
        lhs = np.sum((w_o - w_next) ** 2) - np.sum((w_o - psi) ** 2)
        assert lhs == pytest.approx(delta_of_rho(w_o - psi, P, rho), abs=1e-10)


def test_oracle_rho_beats_grid():
    rng = np.random.default_rng(9)
    for _ in range(20):
        w_o, psi, P = _random_instance(rng)
        bound = rho_bound(psi, w_o, P)
        if bound <= 0:
            continue
        best = delta_of_rho(w_o - psi, P, rho_opt_oracle(psi, w_o, P))
        grid = np.linspace(0, bound, 1000)
        assert best <= min(delta_of_rho(w_o - psi, P, r) for r in grid) + 1e-15


def test_monotone_zero_attraction_inside_bound():
    rng = np.random.default_rng(10)
    checked = 0
    for _ in range(50):
        w_o, psi, P = _random_instance(rng)
        bound = rho_bound(psi, w_o, P)
        if bound <= 0:
            continue
        for rho in rng.uniform(0, bound, 5):
            w_next = zero_attract(psi, P, rho)
            assert np.sum((w_o - w_next) ** 2) <= np.sum((w_o - psi) ** 2)
        checked += 1
    assert checked > 10


def test_freeze_property():
    rng = np.random.default_rng(11)
    state = SafState(16, 2, delta_reg=1e-8)
    state.w = rng.standard_normal(16)
    state.push(rng.standard_normal((2, 2)))
    w0 = state.w.copy()
    e = state.errors(np.array([100.0, -100.0]))
    state.coarse(e, np.zeros(2), np.ones(2))
    state.advance(state.direction(LogPenalty()), 0.0)
    np.testing.assert_array_equal(state.w, w0)
    assert state.k == 1


def test_state_push_shifts_buffers():
    state = SafState(6, 2)
    state.push(np.array([[1.0, 2.0], [10.0, 20.0]]))
    state.push(np.array([[3.0, 4.0], [30.0, 40.0]]))
    np.testing.assert_array_equal(state.U, [[4, 3, 2, 1, 0, 0], [40, 30, 20, 10, 0, 0]])


def test_state_divergence_raises():
    state = SafState(4, 1)
    state.psi = np.array([np.inf, 0, 0, 0])
    with pytest.raises(DivergenceError) as info:
        state.advance(np.zeros(4), 0.0)
    assert info.value.k == 0
