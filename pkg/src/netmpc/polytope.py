"""H-representation polytopes: LP kernel, redundancy removal, projection.

A polytope is a pair ``(M, n)`` meaning ``{z : M z <= n}``.  The linear
programs are solved with SciPy's HiGHS interface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

ZERO_TOL = 1e-12
REDUNDANCY_TOL = 1e-9


class PolytopeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Polytope:
    M: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        n = np.asarray(self.n, dtype=float).reshape(-1)
        if M.shape[0] != n.size or not (np.all(np.isfinite(M)) and np.all(np.isfinite(n))):
            raise PolytopeError("inconsistent or non-finite polytope data")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return self.M.shape[1]

    def contains(self, z, tol: float = 1e-9) -> bool:
        return bool(np.all(self.M @ np.asarray(z) <= self.n + tol))

    def worst_row(self, z):
        """Index and value of the largest ``M z - n`` entry."""
        r = self.M @ np.asarray(z) - self.n
        i = int(np.argmax(r))
        return i, float(r[i])

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "n": self.n.tolist()}

    @classmethod
    def from_dict(cls, obj) -> "Polytope":
        return cls(np.array(obj["M"], dtype=float), np.array(obj["n"], dtype=float))


# -- LP kernel ---------------------------------------------------------------
def lp_max(c, M, n, bounds=None):
    """Maximise ``c @ z`` over ``M z <= n`` (and optional variable ``bounds``).

    Returns ``(status, value, z)`` with status ``"optimal"``, ``"infeasible"``
    or ``"unbounded"``.
    """
    c = np.asarray(c, dtype=float)
    if bounds is None:
        bounds = [(None, None)] * c.size
    res = linprog(-c, A_ub=M, b_ub=n, bounds=bounds, method="highs")
    if res.status == 0:
        return "optimal", float(-res.fun), res.x
    if res.status == 2:
        return "infeasible", None, None
    if res.status == 3:
        return "unbounded", np.inf, None
    raise PolytopeError(f"LP failed: {res.message}")


def lp_feasible(M, n, bounds=None):
    """Feasibility of ``M z <= n``; returns ``(bool, point or None)``."""
    M = np.atleast_2d(M)
    status, _, z = lp_max(np.zeros(M.shape[1]), M, n, bounds)
    return status == "optimal", z


def chebyshev_center(M, n):
    """Centre and radius of the largest inscribed ball (radius <= 0 means empty interior)."""
    norms = np.linalg.norm(M, axis=1)
    A = np.hstack([M, norms[:, None]])
    c = np.zeros(M.shape[1] + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * M.shape[1] + [(None, 1e6)]
    status, val, z = lp_max(c, A, n, bounds)
    if status != "optimal":
        return None, -np.inf
    return z[:-1], val


# -- row hygiene ---------------------------------------------------------------
def normalize(M, n):
    """Scale rows to unit infinity norm; zero rows become ``0 <= n``.

    Returns ``(M, n, trivial_ok, trivial_bad)`` where the two masks flag zero
    rows that are always satisfied or never satisfied.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = np.asarray(n, dtype=float).reshape(-1)
    scale = np.max(np.abs(M), axis=1) if M.shape[1] else np.zeros(M.shape[0])
    zero = scale < ZERO_TOL
    s = np.where(zero, 1.0, scale)
    Mn = M / s[:, None]
    Mn[zero] = 0.0
    nn = n / s
    return Mn, nn, zero & (n >= -REDUNDANCY_TOL), zero & (n < -REDUNDANCY_TOL)


def unique_rows(M, n, decimals: int = 10):
    """Drop zero rows that always hold and keep the tightest copy of duplicated rows.

    Raises
    ------
    PolytopeError
        If a zero row can never be satisfied (empty polytope).
    """
    Mn, nn, ok, bad = normalize(M, n)
    if np.any(bad):
        raise PolytopeError("constraint 0 <= negative number: polytope is empty")
    keep = ~ok
    Mn, nn = Mn[keep], nn[keep]
    if Mn.shape[0] == 0:
        return Mn, nn
    key = np.round(Mn, decimals) + 0.0
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    best: dict[int, int] = {}
    for i, g in enumerate(inv):
        j = best.get(g)
        if j is None or nn[i] < nn[j]:
            best[g] = i
    idx = np.array(sorted(best.values()), dtype=int)
    return Mn[idx], nn[idx]


def reduce_redundancy(M, n, prior=None, tol: float = REDUNDANCY_TOL):
    """Remove rows implied by the remaining rows (and by ``prior`` rows, if given).

    Row ``i`` is dropped when the maximum of its left-hand side over the
    other kept rows plus ``prior`` is at most ``n_i + tol``.  The row itself,
    relaxed by 1, stays in the LP so the maximisation is always bounded.
    Rows whose LP is unbounded or fails are kept.
    """
    M, n = unique_rows(M, n)
    if M.shape[0] == 0:
        return M, n
    PM, Pn = (np.zeros((0, M.shape[1])), np.zeros(0)) if prior is None else unique_rows(*prior)
    # rows implied by the prior's coordinate bounds alone (cheap first pass)
    keep = np.ones(M.shape[0], dtype=bool)
    lo, hi = _box_of(PM, Pn, M.shape[1])
    if lo is not None:
        with np.errstate(invalid="ignore"):
            contrib = np.where(M > 0, M * hi, np.where(M < 0, M * lo, 0.0))
        box_max = np.sum(contrib, axis=1)
        keep &= ~(box_max <= n + tol)
    order = np.argsort(-n[keep], kind="stable")
    idx = np.flatnonzero(keep)[order]
    for i in idx:
        others = keep.copy()
        others[i] = False
        A = np.vstack([M[others], PM, M[i:i + 1]])
        b = np.concatenate([n[others], Pn, [n[i] + 1.0]])
        try:
            status, val, _ = lp_max(M[i], A, b)
        except PolytopeError:
            continue
        if status == "optimal" and val <= n[i] + tol:
            keep[i] = False
        elif status == "infeasible":
            raise PolytopeError("polytope is empty")
    return M[keep], n[keep]


def _box_of(M, n, dim):
    """Coordinate bounds implied by single-variable rows of ``(M, n)`` (infinite where absent).

    Returns ``(None, None)`` if there are no such rows.
    """
    if M.shape[0] == 0:
        return None, None
    lo = np.full(dim, -np.inf)
    hi = np.full(dim, np.inf)
    found = False
    for row, b in zip(M, n):
        nz = np.flatnonzero(np.abs(row) > ZERO_TOL)
        if nz.size != 1:
            continue
        j = nz[0]
        found = True
        if row[j] > 0:
            hi[j] = min(hi[j], b / row[j])
        else:
            lo[j] = max(lo[j], b / row[j])
    return (lo, hi) if found else (None, None)


# -- projection ------------------------------------------------------------------
def fourier_motzkin(M, n, j: int):
    """Eliminate variable ``j``: ``{z_-j : exists z_j, M z <= n}``."""
    M = np.atleast_2d(M)
    col = M[:, j]
    pos = np.flatnonzero(col > ZERO_TOL)
    neg = np.flatnonzero(col < -ZERO_TOL)
    zero = np.flatnonzero(np.abs(col) <= ZERO_TOL)
    rest = np.delete(M, j, axis=1)
    rows = [rest[zero]]
    rhs = [n[zero]]
    if pos.size and neg.size:
        # for p in pos, q in neg: (-col_q) * row_p + col_p * row_q
        a = col[pos][:, None, None]
        b = -col[neg][None, :, None]
        comb = b * rest[pos][:, None, :] + a * rest[neg][None, :, :]
        rows.append(comb.reshape(-1, rest.shape[1]))
        rhs.append((b[..., 0] * n[pos][:, None] + a[..., 0] * n[neg][None, :]).reshape(-1))
    return np.vstack(rows), np.concatenate(rhs)


def project(M, n, keep_dims: int, prune: bool = True, max_rows: int = 200_000):
    """Project ``{(x, y)}`` onto the first ``keep_dims`` coordinates.

    Eliminates the trailing coordinates one at a time (last first) and prunes
    redundant rows after each step.

    Raises
    ------
    PolytopeError
        If an intermediate system exceeds ``max_rows`` rows.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = np.asarray(n, dtype=float)
    M, n = unique_rows(M, n)
    for j in range(M.shape[1] - 1, keep_dims - 1, -1):
        M, n = fourier_motzkin(M, n, j)
        if M.shape[0] > max_rows:
            raise PolytopeError(f"{M.shape[0]} rows after eliminating coordinate {j}; "
                                "try a different elimination order")
        M, n = reduce_redundancy(M, n) if prune else unique_rows(M, n)
    return M, n
