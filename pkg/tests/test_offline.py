"""LQR data, terminal set, horizon arithmetic, selection and prediction matrices."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import rollout_inputs, rollout_states
from netmpc.invariant import maximal_admissible_set, simulate_membership
from netmpc.lqr import riccati_residual, solve_dare, solve_dare_iterative
from netmpc.model import ConfigError, n_hat_horizon
from netmpc.prediction import Predictor
from netmpc.protocol import actuator_apply
from netmpc.tables import lqr_and_terminal
from netmpc.tracker import enumerate_scenarios


def test_scalar_dare_closed_form():
    P_exact = (0.25 + np.sqrt(4.0625)) / 2
    lqr = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    assert lqr.P[0, 0] == pytest.approx(P_exact, abs=1e-12)
    assert lqr.P[0, 0] == pytest.approx(1.13278, abs=1e-5)
    assert lqr.L[0, 0] == pytest.approx(0.26556, abs=1e-5)


def test_zero_dynamics_dare():
    Q = np.diag([2.0, 3.0])
    lqr = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    assert np.allclose(lqr.P, Q) and np.allclose(lqr.L, 0.0)


def test_benchmark_dare_two_solvers_agree(problem):
    A, B = problem.plant.A, problem.plant.B
    a = solve_dare(A, B, problem.Q, problem.R)
    b = solve_dare_iterative(A, B, problem.Q, problem.R)
    assert np.max(np.abs(a.P - b.P)) <= 1e-9 * np.max(np.abs(a.P))
    assert riccati_residual(a.P, A, B, problem.Q, problem.R) <= 1e-9 * np.max(np.abs(a.P))
    assert max(abs(np.linalg.eigvals(a.closed_loop(A, B)))) < 1


def test_prediction_horizon():
    assert n_hat_horizon(2, 10, 1, 3) == 12
    assert n_hat_horizon(2, 10, 0, 1) == 11
    assert n_hat_horizon(1, 2, 0, 1) == 2
    with pytest.raises(ConfigError):
        n_hat_horizon(2, 2, 1, 3)


def test_terminal_set_small_cases():
    ts = maximal_admissible_set([[0.5]], [[1.0], [-1.0]], [1.0, 1.0])
    assert ts.t_star == 0 and ts.M.shape[0] == 2
    ts = maximal_admissible_set(np.zeros((2, 2)), np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
    assert ts.t_star == 0


def test_terminal_set_membership_and_invariance(problem):
    lqr, ts = lqr_and_terminal(problem)
    pl = problem.plant
    Acl = lqr.closed_loop(pl.A, pl.B)
    M = np.vstack([pl.Mx, -pl.Mu @ lqr.L])
    n = np.concatenate([pl.nx, pl.nu])
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (2000, 3)) * np.array([10, 5, 10])
    for x in pts:
        inside = ts.contains(x)
        assert inside == simulate_membership(Acl, M, n, x, 200)
        if inside:
            assert ts.contains(Acl @ x)
    assert np.all(ts.n > 0)


# -- selection and prediction ------------------------------------------------------------------
@pytest.fixture(scope="module")
def pred(problem):
    lqr, _ = lqr_and_terminal(problem)
    return Predictor(problem, lqr)


def test_selection_blocks(pred, problem):
    T = pred.T_hat(problem.N - 1)
    assert T.shape == (2, 20)
    assert np.array_equal(T[:, :2], np.eye(2)) and not T[:, 2:].any()
    for i in range(0, 2):
        for d in range(0, 3):
            if d <= i:
                assert not pred.T_bar(i, d).any()
                assert np.array_equal(pred.T_tilde(i, d), pred.T_hat(i))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_selection_matches_actuator(pred, problem, seed):
    rng = np.random.default_rng(seed)
    k = 7
    store = {t: rng.standard_normal(problem.m_tilde) for t in range(k - problem.d_max - problem.h_max, k)}
    u_hat = rng.standard_normal(problem.m_hat)
    store[k] = u_hat[(problem.N - 1 - problem.d_max) * problem.m:]
    x_hat = np.concatenate([rng.standard_normal(problem.n)] + [store[k - j] for j in range(1, 4)])
    for i in range(-1, problem.d_max):
        for d in problem.chain.ages:
            if i >= d and i > 0:
                continue        # later plans are not in the store
            want = actuator_apply(k + i, d, store, problem.d_max, problem.m)
            got = pred.T_bar(i, d) @ x_hat + pred.T_tilde(i, d) @ u_hat
            assert np.allclose(got, want, atol=1e-14)


@pytest.mark.parametrize("h_tilde", [0, 1])
def test_prediction_matrices_reproduce_rollout(pred, problem, h_tilde):
    rng = np.random.default_rng(h_tilde)
    scen = enumerate_scenarios(problem.chain, h_tilde, {0, 1, 2})
    for dvec in scen.sequences:
        x_hat = rng.standard_normal(problem.n_hat)
        u_hat = rng.standard_normal(problem.m_hat)
        us = rollout_inputs(problem, x_hat, u_hat, h_tilde, dvec)
        xs = rollout_states(problem, x_hat, us, h_tilde)
        Ah, Bh, Au, Bu = pred.scenario(h_tilde, dvec)
        for i in range(-h_tilde, problem.N + 1):
            A2, B2, Au2, Bu2 = pred.prediction_matrices(i, h_tilde, dvec)
            assert np.allclose(A2 @ x_hat + B2 @ u_hat, xs[i + h_tilde], atol=1e-10)
            assert np.allclose(Ah[i + h_tilde], A2) and np.allclose(Bh[i + h_tilde], B2)
            if i < problem.N:
                assert np.allclose(Au2 @ x_hat + Bu2 @ u_hat, us[i + h_tilde], atol=1e-12)
                if i >= problem.d_max:
                    assert not Au2.any() and np.array_equal(Bu2, pred.T_hat(i))
    A0, B0, _, _ = pred.prediction_matrices(0, 0, (0, 0))
    assert np.array_equal(A0[:, :3], np.eye(3)) and not A0[:, 3:].any() and not B0.any()


def test_tail_gains(pred, problem):
    Lx, Lu = pred.kappa_gain_matrices(10, 1, (0, 1, 2), (0, 1, 2))
    assert not Lx.any() and not Lu.any()
    Lx, Lu = pred.kappa_gain_matrices(problem.N_hat, 1, (0, 1, 2), (2, 0, 1))
    assert not Lx.any() and not Lu.any()
    rng = np.random.default_rng(0)
    x_hat, u_hat = rng.standard_normal(problem.n_hat), rng.standard_normal(problem.m_hat)
    real, hyp = (1, 2, 0), (2, 0, 1)
    ur = rollout_inputs(problem, x_hat, u_hat, 1, real)
    uh = rollout_inputs(problem, x_hat, u_hat, 1, hyp)
    A, B, L = problem.plant.A, problem.plant.B, pred.L
    for i in (10, 11):
        hh = pred.h_hat(1, i)
        want = sum(L @ np.linalg.matrix_power(A, i - 1 - j) @ B @ (ur[j + 1] - uh[j + 1])
                   for j in range(-hh, problem.d_max))
        Lx, Lu = pred.kappa_gain_matrices(i, 1, real, hyp)
        assert np.allclose(Lx @ x_hat + Lu @ u_hat, want, atol=1e-10)
