"""Constraint and cost tables, their cache, and the polytope kernel they rest on."""
import numpy as np
import pytest

from oracles import constraint_classification
from netmpc.polytope import (Polytope, PolytopeError, fourier_motzkin, lp_feasible, project,
                             reduce_redundancy, unique_rows)
from netmpc.prediction import Predictor
from netmpc.tables import (TableError, certain_rows, load_or_build, load_tables, params_hash,
                           reachable_dtilde, save_tables, stack_constraints)
from netmpc.tracker import enumerate_scenarios

# frozen after cross-checking the reduced tables against per-scenario rollout
GOLDEN_REDUCED_ROWS = {(0, (0, 1)): 120, (0, (0, 1, 2)): 202, (1, (0, 1)): 312, (1, (0, 1, 2)): 474}
GOLDEN_FULL_ROWS = {(0, (0, 1)): 420, (0, (0, 1, 2)): 870, (1, (0, 1)): 1386, (1, (0, 1, 2)): 2216}


# -- polytope kernel ----------------------------------------------------------------
def test_fourier_motzkin_toy():
    # {x + u <= 1, -u <= 0} projected onto x is x <= 1
    M, n = fourier_motzkin(np.array([[1.0, 1.0], [0.0, -1.0]]), np.array([1.0, 0.0]), 1)
    assert M.shape == (1, 1) and M[0, 0] > 0
    assert n[0] / M[0, 0] == pytest.approx(1.0)


def test_projection_of_box_is_interval():
    M = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1]], dtype=float)
    n = np.array([2, 1, 3, 3, 4], dtype=float)
    Mp, npj = project(M, n, keep_dims=1)
    hi = min(b / a for a, b in zip(Mp[:, 0], npj) if a > 0)
    lo = max(b / a for a, b in zip(Mp[:, 0], npj) if a < 0)
    assert (lo, hi) == (pytest.approx(-1.0), pytest.approx(2.0))


def test_redundant_rows_removed():
    M, n = reduce_redundancy(np.array([[1.0], [1.0], [2.0], [-1.0]]), np.array([1.0, 2.0, 2.0, 5.0]))
    assert M.shape[0] == 2
    assert Polytope(M, n).contains([1.0]) and not Polytope(M, n).contains([1.01])


def test_unique_rows_keeps_tightest_duplicate():
    M, n = unique_rows(np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 0.0]]), np.array([4.0, 1.5, 1.0]))
    assert M.shape[0] == 1 and n[0] == pytest.approx(1.5)


def test_empty_polytope_detected():
    with pytest.raises(PolytopeError):
        unique_rows(np.zeros((1, 2)), np.array([-1.0]))
    ok, _ = lp_feasible(np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]))
    assert not ok


def test_redundancy_removal_preserves_set():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((40, 3))
    n = rng.uniform(0.5, 2.0, 40)
    Mr, nr = reduce_redundancy(M, n)
    assert Mr.shape[0] < 40
    pts = rng.uniform(-3, 3, (5000, 3))
    a = np.all(pts @ M.T <= n + 1e-9, axis=1)
    b = np.all(pts @ Mr.T <= nr + 1e-9, axis=1)
    assert np.array_equal(a, b)


# -- reachable family and sizes ---------------------------------------------------------
def test_reachable_family(problem):
    fam = reachable_dtilde(problem.chain)
    assert [sorted(d) for d in fam] == [[0, 1], [0, 1, 2]]
    assert len(reachable_dtilde(problem.chain, conservative=True)) == 7


def test_golden_reduced_sizes(tables):
    got = {(h, tuple(sorted(d))): t.rows for (h, d), t in tables.constraints.items()}
    assert got == GOLDEN_REDUCED_ROWS


def test_golden_full_sizes(problem, tables):
    pred = Predictor(problem, tables.lqr)
    for (h, d), rows in GOLDEN_FULL_ROWS.items():
        tab = stack_constraints(pred, tables.terminal, h, d, reduce=False, drop_fixed_rows=False)
        assert tab.rows == rows


def test_certain_rows_hold_in_closed_loop(problem, run_samples):
    M, n = certain_rows(problem)
    for _, _, x_hat, _ in run_samples:
        assert np.all(M[:, :problem.n_hat] @ x_hat <= n + 1e-9)


# -- reduced tables against the exact ones and the rollout oracle ------------------------
def test_reduced_matches_full_and_rollout(problem, tables, run_samples):
    pred = Predictor(problem, tables.lqr)
    rng = np.random.default_rng(11)
    for (h, d), red in tables.constraints.items():
        pool = [s for s in run_samples if s[0] == h and s[1] == d] or run_samples
        idx = rng.integers(len(pool), size=200)
        xh = np.stack([pool[i][2] for i in idx], 1)
        uh = np.stack([pool[i][3] for i in idx], 1) + rng.uniform(-0.3, 0.3, 200) * rng.standard_normal((problem.m_hat, 200))
        full = stack_constraints(pred, tables.terminal, h, d, reduce=False, drop_fixed_rows=False)
        scen = enumerate_scenarios(problem.chain, h, d).sequences
        truth = constraint_classification(problem, tables.lqr, tables.terminal, h, scen, xh, uh)
        a = np.all(full.Mx @ xh + full.Mu @ uh <= full.n[:, None] + 1e-9, axis=0)
        b = np.all(red.Mx @ xh + red.Mu @ uh <= red.n[:, None] + 1e-9, axis=0)
        assert 0 < truth.sum() < truth.size
        assert np.array_equal(a, truth) and np.array_equal(b, truth)


# -- cost tables --------------------------------------------------------------------------
def test_cost_tables_complete_and_finite(problem, tables):
    ages = list(problem.chain.ages)
    for h in problem.h_tilde_range:
        assert len(tables.costs[h]) == len(ages) ** 3
        for R, H in tables.costs[h].values():
            assert R.shape == (problem.m_hat, problem.m_hat) and H.shape == (problem.m_hat, problem.n_hat)
            assert np.all(np.isfinite(R)) and np.all(np.isfinite(H))


def test_cost_pair_swap_is_transpose(problem, tables):
    # swapping the two tail-law hypotheses transposes the quadratic block
    for h in problem.h_tilde_range:
        tab = tables.costs[h]
        for (d1, d2, d3), (R, _) in tab.items():
            R_sw = tab[(d2, d1, d3)][0]
            assert np.allclose(R, R_sw.T, atol=1e-9 * max(1.0, np.max(np.abs(R))))


def test_cost_triple_outside_support_rejected(tables):
    with pytest.raises(TableError):
        tables.cost(0, frozenset({0, 1}), 2, 0, 0)
    with pytest.raises(TableError):
        tables.constraint(0, frozenset({2}))


# -- cache ----------------------------------------------------------------------------------
def test_cache_round_trip(problem, tables, tmp_path):
    path = tmp_path / "t.bin"
    save_tables(tables, path)
    back = load_tables(problem, path)
    assert set(back.constraints) == set(tables.constraints)
    for key, tab in tables.constraints.items():
        assert np.array_equal(back.constraints[key].Mu, tab.Mu)
        assert np.array_equal(back.constraints[key].n, tab.n)
    for h in tables.costs:
        for key, (R, H) in tables.costs[h].items():
            assert np.array_equal(back.costs[h][key][0], R) and np.array_equal(back.costs[h][key][1], H)
    assert np.array_equal(back.lqr.P, tables.lqr.P) and np.array_equal(back.terminal.M, tables.terminal.M)
    again, hit = load_or_build(problem, path)
    assert hit


def test_cache_rejects_other_parameters(problem, tables, tmp_path):
    import dataclasses
    path = tmp_path / "t.bin"
    save_tables(tables, path)
    other = dataclasses.replace(problem, Q=np.diag([10.0, 100.0, 2.0]))
    assert params_hash(other) != params_hash(problem)
    with pytest.raises(TableError):
        load_tables(other, path)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a cache at all")
    with pytest.raises(TableError):
        load_tables(problem, bad)
