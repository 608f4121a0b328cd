"""Admissible initial states."""
import warnings

import numpy as np
import pytest

from oracles import lp_feasible_x0
from netmpc.admissible import admissible_set, is_admissible, x0_constraint_system


@pytest.fixture(scope="module")
def x0set(problem, tables):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return admissible_set(problem, tables.terminal)


def test_benchmark_points(x0set, x0):
    assert is_admissible(x0set, x0)[0]
    assert is_admissible(x0set, np.zeros(3))[0]
    assert not is_admissible(x0set, 10 * x0)[0]
    assert not is_admissible(x0set, [100.0, 0.0, 0.0])[0]


def test_system_shape(problem, tables):
    Acal, Bcal, Ccal = x0_constraint_system(problem, tables.terminal, problem.h_max)
    assert Bcal.shape[1] == (problem.N - problem.d_max) * problem.m == 16
    assert Acal.shape[0] == Bcal.shape[0] == Ccal.size
    with pytest.raises(ValueError):
        x0_constraint_system(problem, tables.terminal, problem.h_max + 1)


def test_projection_agrees_with_lifted_lp(problem, tables, x0set, x0):
    # random directions through the benchmark state, straddling the boundary
    rng = np.random.default_rng(5)
    pts = [x0 * s for s in rng.uniform(0.0, 2.5, 60)]
    pts += list(rng.uniform(-12, 12, (60, 3)))
    for x in pts:
        slack = np.max(x0set.M @ x - x0set.n)
        if abs(slack) < 1e-6:
            continue
        assert is_admissible(x0set, x)[0] == lp_feasible_x0(problem, tables.terminal, x)


def test_scaling_threshold_by_bisection(problem, tables, x0set, x0):
    lo, hi = 1.0, 10.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if lp_feasible_x0(problem, tables.terminal, mid * x0) else (lo, mid)
    lam = 0.5 * (lo + hi)
    # the projected polytope puts the same threshold on the ray
    row_scale = x0set.M @ x0
    lam_poly = np.min(x0set.n[row_scale > 0] / row_scale[row_scale > 0])
    assert lam == pytest.approx(lam_poly, rel=1e-6)
