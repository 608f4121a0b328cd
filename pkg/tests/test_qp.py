"""Active-set QP solver."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import projected_gradient
from netmpc.qp import QPError, QPInstance, kkt_residuals, solve


def random_instance(rng, m=6, rows=10):
    G = rng.standard_normal((m, m))
    V = G @ G.T + 0.5 * np.eye(m)
    v = 5 * rng.standard_normal(m)
    W = rng.standard_normal((rows, m))
    w = rng.uniform(0.1, 1.0, rows)   # origin strictly feasible
    return QPInstance(V, v, W, w)


def test_unconstrained_minimum_inside():
    # min u^2 - 2u: u = 1, objective -1
    res = solve(QPInstance([[1.0]], [-2.0], [[1.0]], [5.0]))
    assert res.status == "optimal"
    assert res.u[0] == pytest.approx(1.0) and res.objective == pytest.approx(-1.0)
    assert res.active == ()


def test_active_bound():
    # min u^2 - 4u s.t. u <= 1: u = 1, multiplier 2
    res = solve(QPInstance([[1.0]], [-4.0], [[1.0]], [1.0]))
    assert res.u[0] == pytest.approx(1.0)
    assert res.active == (0,) and res.multipliers[0] == pytest.approx(2.0)


def test_two_dimensional_corner():
    # min |u|^2 - 4(u1 + u2) s.t. u1 <= 1, u2 <= 1: corner, multipliers 2
    res = solve(QPInstance(np.eye(2), [-4.0, -4.0], np.eye(2), [1.0, 1.0]))
    assert np.allclose(res.u, [1.0, 1.0])
    assert np.allclose(res.multipliers, [2.0, 2.0])


def test_infeasible_certificate():
    W = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    w = np.array([-1.0, -1.0, 3.0])     # u1 <= -1 and u1 >= 1
    res = solve(QPInstance(np.eye(2), np.zeros(2), W, w))
    assert res.status == "infeasible"
    y = res.certificate
    assert np.all(y >= 0)
    assert np.max(np.abs(W.T @ y)) <= 1e-9 and w @ y < 0


def test_ill_conditioned_rejected():
    with pytest.raises(QPError):
        solve(QPInstance(np.diag([1.0, 1e-14]), np.zeros(2), np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(QPError):
        QPInstance([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0], np.zeros((0, 2)), [])


def test_bitwise_determinism():
    inst = random_instance(np.random.default_rng(1))
    a, b = solve(inst), solve(inst)
    assert np.array_equal(a.u, b.u) and a.active == b.active and a.iterations == b.iterations


def test_warm_start_reaches_same_optimum():
    inst = random_instance(np.random.default_rng(2))
    cold = solve(inst)
    warm = solve(inst, x0=cold.u, active0=cold.active)
    assert np.allclose(warm.u, cold.u, atol=1e-10)
    assert warm.iterations <= cold.iterations
    infeasible_guess = solve(inst, x0=np.full(inst.v.size, 1e3))
    assert np.allclose(infeasible_guess.u, cold.u, atol=1e-9)


def test_round_trip_dict():
    inst = random_instance(np.random.default_rng(4))
    back = QPInstance.from_dict(inst.to_dict())
    assert np.array_equal(back.W, inst.W) and np.array_equal(back.V, inst.V)


def test_random_instances_against_projected_gradient():
    rng = np.random.default_rng(0)
    for _ in range(100):
        inst = random_instance(rng, m=int(rng.integers(2, 9)), rows=int(rng.integers(1, 16)))
        res = solve(inst)
        ref = projected_gradient(inst)
        assert np.max(np.abs(res.u - ref)) <= 1e-6
        assert max(res.kkt.values()) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kkt_conditions_hold(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, m=int(rng.integers(1, 7)), rows=int(rng.integers(0, 12)))
    res = solve(inst)
    assert res.status == "optimal"
    r = kkt_residuals(inst, res.u, res.multipliers)
    assert max(r.values()) <= 1e-7
    # no feasible point nearby does better
    for _ in range(20):
        u = res.u + 1e-3 * rng.standard_normal(res.u.size)
        if np.all(inst.W @ u <= inst.w):
            assert inst.objective(u) >= res.objective - 1e-12
