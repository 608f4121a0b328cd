"""Maximal output admissible set of an autonomous linear system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polytope import PolytopeError, lp_max, reduce_redundancy, unique_rows

GT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TerminalSet:
    M: np.ndarray
    n: np.ndarray
    t_star: int

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.M @ x <= self.n + tol))


def maximal_admissible_set(A_cl, M, n, max_iter: int = 500) -> TerminalSet:
    """Largest set of ``x`` with ``M A_cl^i x <= n`` for all ``i >= 0``.

    Stacks ``M A_cl^i`` for ``i = 0, 1, ...`` and stops at the first ``t*``
    for which every row of ``M A_cl^{t*+1}`` is implied by the stack
    (checked by maximising each row with a linear program).

    Raises
    ------
    PolytopeError
        If no ``t*`` is found within ``max_iter`` iterations (typically
        unbounded output directions).
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise PolytopeError("the origin must be interior to the output constraints")
    rows, rhs = [M], [n]
    power = A_cl.copy()
    for t in range(max_iter):
        cand = M @ power
        stackM, stackn = np.vstack(rows), np.concatenate(rhs)
        implied = True
        for row, b in zip(cand, n):
            status, val, _ = lp_max(row, stackM, stackn)
            if status != "optimal" or val > b + GT_TOL:
                implied = False
                break
        if implied:
            Mr, nr = reduce_redundancy(stackM, stackn)
            return TerminalSet(Mr, nr, t)
        rows.append(cand)
        rhs.append(n)
        power = power @ A_cl
        stackM, stackn = unique_rows(np.vstack(rows), np.concatenate(rhs))
        rows, rhs = [stackM], [stackn]
    raise PolytopeError(f"no finite determination index within {max_iter} iterations")


def simulate_membership(A_cl, M, n, x, steps: int = 200, tol: float = 1e-9) -> bool:
    """Brute-force check of ``M A_cl^i x <= n`` for ``i = 0..steps``."""
    z = np.asarray(x, dtype=float)
    for _ in range(steps + 1):
        if np.any(M @ z > n + tol):
            return False
        z = A_cl @ z
    return True
