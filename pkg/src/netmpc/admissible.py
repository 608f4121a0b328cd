"""Admissible initial states: those for which every possible first-data step leaves a feasible QP.

For a first sensor arrival at ``K_h`` the inputs are zero before
``K_h + d_max``; ``x0`` is admissible for that ``K_h`` if some input
sequence ``u = [u_{K_h+N-1}; ...; u_{K_h+d_max}]`` keeps every state in
the state set up to ``K_h+N-1``, every input in the input set and
``x_{K_h+N}`` in the terminal set.  The admissible set intersects these
projections over ``K_h = h_min .. h_max``.
"""
from __future__ import annotations

import warnings

import numpy as np

from .polytope import Polytope, PolytopeError, lp_feasible, project, reduce_redundancy


def x0_constraint_system(problem, terminal, K_h: int):
    """``(Acal, Bcal, Ccal)`` with ``Acal x0 + Bcal u <= Ccal``."""
    p = problem
    pl = p.plant
    if not p.h_min <= K_h <= p.h_max:
        raise ValueError(f"K_h={K_h} outside [{p.h_min}, {p.h_max}]")
    A, B = pl.A, pl.B
    n, m = p.n, p.m
    width = (p.N - p.d_max) * m
    start = K_h + p.d_max   # first free input

    def lifted_input(k):
        """Map from u to x_k (zero while no free input has acted)."""
        G = np.zeros((n, width))
        for t in range(start, k):       # input u_t reaches x_k through A^(k-1-t)
            col = (K_h + p.N - 1 - t) * m
            G[:, col:col + m] = np.linalg.matrix_power(A, k - 1 - t) @ B
        return G

    rows_A = [np.zeros((pl.Mu.shape[0] * (p.N - p.d_max), n))]
    rows_B = [np.kron(np.eye(p.N - p.d_max), pl.Mu)]
    rhs = [np.tile(pl.nu, p.N - p.d_max)]
    for k in range(K_h + p.N):
        rows_A.append(pl.Mx @ np.linalg.matrix_power(A, k))
        rows_B.append(pl.Mx @ lifted_input(k))
        rhs.append(pl.nx)
    k = K_h + p.N
    rows_A.append(terminal.M @ np.linalg.matrix_power(A, k))
    rows_B.append(terminal.M @ lifted_input(k))
    rhs.append(terminal.n)
    return np.vstack(rows_A), np.vstack(rows_B), np.concatenate(rhs)


def project_out_inputs(Acal, Bcal, Ccal, max_rows: int = 200_000) -> Polytope:
    """``{x0 : exists u, Acal x0 + Bcal u <= Ccal}`` by Fourier-Motzkin with LP pruning.

    Inputs are eliminated from the last block (``u_{K_h+d_max}``) backwards.
    """
    n = Acal.shape[1]
    M = np.hstack([Acal, Bcal])
    if Bcal.shape[1] == 0 or not np.any(np.abs(Bcal) > 1e-12):
        Mr, nr = reduce_redundancy(Acal, Ccal)
        return Polytope(Mr, nr)
    Mr, nr = project(M, Ccal, keep_dims=n, prune=True, max_rows=max_rows)
    return Polytope(Mr, nr)


def admissible_set(problem, terminal, per_kh: dict | None = None) -> Polytope:
    """Intersection over ``K_h`` of the projected sets; warns if it is empty."""
    parts = []
    for K_h in range(problem.h_min, problem.h_max + 1):
        if per_kh is not None and K_h in per_kh:
            poly = per_kh[K_h]
        else:
            poly = project_out_inputs(*x0_constraint_system(problem, terminal, K_h))
            if per_kh is not None:
                per_kh[K_h] = poly
        parts.append(poly)
    M = np.vstack([q.M for q in parts])
    n = np.concatenate([q.n for q in parts])
    try:
        Mr, nr = reduce_redundancy(M, n)
    except PolytopeError:
        warnings.warn("the admissible set is empty; the configuration admits no initial state")
        return Polytope(M, n)
    ok, _ = lp_feasible(Mr, nr)
    if not ok:
        warnings.warn("the admissible set is empty; the configuration admits no initial state")
    return Polytope(Mr, nr)


def is_admissible(poly: Polytope, x0, tol: float = 1e-9):
    """``(inside, worst_row, worst_value)`` for ``M0 x0 <= n0``."""
    i, val = poly.worst_row(x0)
    return val <= tol, i, val
