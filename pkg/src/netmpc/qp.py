"""Dense convex QP ``min u'Vu + v'u  s.t.  Wu <= w`` by a primal active-set method."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-9
STEP_TOL = 1e-12
DUAL_TOL = 1e-10
MAX_COND = 1e12


class QPError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class QPInstance:
    V: np.ndarray
    v: np.ndarray
    W: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        v = np.asarray(self.v, dtype=float).reshape(-1)
        W = np.asarray(self.W, dtype=float).reshape(-1, V.shape[0]) if np.size(self.W) else np.zeros((0, V.shape[0]))
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if V.shape != (v.size, v.size) or W.shape[0] != w.size:
            raise QPError("inconsistent QP dimensions")
        if np.max(np.abs(V - V.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(V))):
            raise QPError("V is not symmetric")
        for name, val in (("V", V), ("v", v), ("W", W), ("w", w)):
            object.__setattr__(self, name, val)

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.V @ u + self.v @ u)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("V", "v", "W", "w")}

    @classmethod
    def from_dict(cls, obj) -> "QPInstance":
        return cls(*(np.array(obj[k], dtype=float) for k in ("V", "v", "W", "w")))


@dataclass(eq=False)
class QPResult:
    status: str                       # "optimal" or "infeasible"
    u: np.ndarray | None = None
    objective: float | None = None
    active: tuple = ()
    multipliers: np.ndarray | None = None
    iterations: int = 0
    kkt: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None   # y >= 0, W'y = 0, w'y < 0 when infeasible


def kkt_residuals(inst: QPInstance, u, lam) -> dict:
    """Stationarity, primal feasibility, dual feasibility and complementarity residuals."""
    slack = inst.W @ u - inst.w
    return {
        "stationarity": float(np.max(np.abs(2 * inst.V @ u + inst.v + inst.W.T @ lam), initial=0.0)),
        "primal": float(np.max(slack, initial=0.0)),
        "dual": float(-min(np.min(lam, initial=0.0), 0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
    }


def phase_one(W, w):
    """Feasible point of ``Wu <= w`` or a Farkas certificate.

    Solves ``min t  s.t.  Wu - t <= w, t >= -1``.  Returns ``(u, None)`` if
    the optimal ``t <= FEAS_TOL``, else ``(None, y)`` with ``y >= 0``,
    ``W'y = 0`` and ``w'y < 0``.
    """
    rows, m = W.shape
    if rows == 0:
        return np.zeros(m), None
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A = np.hstack([W, -np.ones((rows, 1))])
    bounds = [(None, None)] * m + [(-1.0, None)]
    res = linprog(c, A_ub=A, b_ub=w, bounds=bounds, method="highs")
    if res.status != 0:
        raise QPError(f"phase-one LP failed: {res.message}")
    if res.x[-1] <= FEAS_TOL:
        return res.x[:m], None
    y = np.maximum(-res.ineqlin.marginals, 0.0)
    return None, y


def solve(inst: QPInstance, x0=None, active0=(), max_iter: int = 1000) -> QPResult:
    """Solve the QP; ``x0``/``active0`` optionally warm-start the iteration.

    The working set is changed one row at a time.  Among equally blocking
    rows and among equally negative multipliers the lowest row index wins,
    so identical inputs give bit-identical outputs.

    Raises
    ------
    QPError
        If ``V`` is not positive definite or its condition number exceeds
        ``1e12`` (add a ridge), or the iteration limit is hit.
    """
    V, v, W, w = inst.V, inst.v, inst.W, inst.w
    m = v.size
    eig = np.linalg.eigvalsh(V)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_COND:
        raise QPError(f"V is ill-conditioned (eigenvalues {eig[0]:.3e}..{eig[-1]:.3e}); add a ridge")
    u = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if np.all(W @ x0 <= w + FEAS_TOL):
            u = x0.copy()
    if u is None:
        u, cert = phase_one(W, w)
        if u is None:
            return QPResult("infeasible", certificate=cert)
    # warm working set: guessed rows that are active at u, kept linearly independent
    work: list[int] = []
    slack = w - W @ u
    for i in sorted(set(int(a) for a in active0)):
        if 0 <= i < W.shape[0] and abs(slack[i]) <= 1e-9 and len(work) < m:
            cand = W[work + [i]]
            if np.linalg.matrix_rank(cand) == len(work) + 1:
                work.append(i)
    V2 = 2.0 * V
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise QPError("active-set iteration limit reached")
        g = V2 @ u + v
        k = len(work)
        Wa = W[work]
        K = np.zeros((m + k, m + k))
        K[:m, :m] = V2
        K[:m, m:] = Wa.T
        K[m:, :m] = Wa
        sol = np.linalg.solve(K, np.concatenate([-g, np.zeros(k)]))
        p, lam_w = sol[:m], sol[m:]
        if np.max(np.abs(p), initial=0.0) <= STEP_TOL * max(1.0, np.max(np.abs(u), initial=0.0)):
            if k == 0 or np.min(lam_w) >= -DUAL_TOL:
                lam = np.zeros(W.shape[0])
                lam[work] = np.maximum(lam_w, 0.0)
                # re-solve multipliers of the final working set by least squares for accuracy
                if k:
                    lam_ls = np.linalg.lstsq(Wa.T, -(V2 @ u + v), rcond=None)[0]
                    lam[work] = np.maximum(lam_ls, 0.0)
                return QPResult("optimal", u, inst.objective(u), tuple(sorted(work)), lam, it,
                                kkt_residuals(inst, u, lam))
            j = int(np.argmin(lam_w))  # first index among ties
            work.pop(j)
            continue
        Wp = W @ p
        slack = w - W @ u
        alpha, block = 1.0, -1
        in_work = np.zeros(W.shape[0], dtype=bool)
        in_work[work] = True
        cand = np.flatnonzero((Wp > STEP_TOL) & ~in_work)
        if cand.size:
            ratios = np.maximum(slack[cand], 0.0) / Wp[cand]
            r = int(np.argmin(ratios))
            if ratios[r] < 1.0:
                alpha, block = float(ratios[r]), int(cand[r])
        u = u + alpha * p
        if block >= 0:
            work.append(block)
