"""Offline synthesis: constraint and cost tables indexed by the network knowledge.

For every anchor delay ``H~`` and every reachable support ``Dtilde`` of the
age distribution this module builds the stacked constraint triple
``(Mx, Mu, n)`` of ``Mx x_hat + Mu u_hat <= n``.  For every ``H~`` and
triple ``(d1, d2, d3)`` of ages it builds the cost pair ``(R, H)`` with
``E{cost} = sum P(d1) P(d2) P(d3) (u'R u + 2 u'H x_hat) + const``.
"""
from __future__ import annotations

import hashlib
import io
import itertools
import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .invariant import TerminalSet, maximal_admissible_set
from .lqr import LQRData, solve_dare
from .polytope import reduce_redundancy, unique_rows
from .prediction import Predictor
from .tracker import ScenarioSet, enumerate_scenarios

MAX_TABLE_ROWS = 200_000
CACHE_MAGIC = b"NMPCTAB\x00"
CACHE_VERSION = 1


class TableError(RuntimeError):
    pass


# -- reachable supports -----------------------------------------------------------
def reachable_dtilde(chain, conservative: bool = False) -> list[frozenset]:
    """Supports of the age distribution the tracker can produce.

    A posterior over one age given constraints on earlier ages has support
    equal to the union of the successor sets of the ages still allowed one
    step earlier; the prior-only case has support ``supp(mu Phi^t)``.  The
    family is the set of all such unions plus those supports.  With
    ``conservative=True`` every nonempty subset of the age range is returned.
    """
    ages = list(chain.ages)
    if conservative:
        out = {frozenset(c) for r in range(1, len(ages) + 1) for c in itertools.combinations(ages, r)}
        return sorted(out, key=lambda s: (len(s), sorted(s)))
    out = set()
    for r in range(1, len(ages) + 1):
        for allowed in itertools.combinations(ages, r):
            out.add(frozenset().union(*(set(chain.successors(a)) for a in allowed)))
    dist = np.asarray(chain.mu, dtype=float)
    seen = set()
    while True:
        supp = frozenset(a for a in ages if dist[chain.idx(a)] > 0)
        out.add(supp)
        key = tuple(dist > 0)
        if key in seen:
            break
        seen.add(key)
        dist = dist @ chain.phi
    return sorted(out, key=lambda s: (len(s), sorted(s)))


# -- prior rows for redundancy removal ----------------------------------------------
def certain_rows(problem) -> tuple[np.ndarray, np.ndarray]:
    """Rows on ``(x_hat, u_hat)`` that ``x_hat`` satisfies in closed loop.

    The anchor is a past plant state (so it lies in the state set) and every
    block of a past packet satisfies the input constraints.  Nothing is
    assumed about the plan ``u_hat``.
    """
    p = problem
    pl = p.plant
    n_hat, m_hat = p.n_hat, p.m_hat
    rows, rhs = [], []
    Z = np.zeros((pl.Mx.shape[0], n_hat + m_hat))
    Z[:, :p.n] = pl.Mx
    rows.append(Z)
    rhs.append(pl.nx)
    n_blocks = (n_hat - p.n) // p.m
    for b in range(n_blocks):
        off = p.n + b * p.m
        Z = np.zeros((pl.Mu.shape[0], n_hat + m_hat))
        Z[:, off:off + p.m] = pl.Mu
        rows.append(Z)
        rhs.append(pl.nu)
    return np.vstack(rows), np.concatenate(rhs)


def _pad_prior(prior, lead: int):
    if prior is None:
        return None
    M, n = prior
    return np.hstack([np.zeros((M.shape[0], lead)), M]), n


# -- terminal recursion ------------------------------------------------------------
def hypothesis_classes(pred: Predictor, h_tilde: int, scen: ScenarioSet, i: int) -> list[tuple]:
    """One representative scenario per distinct age pattern in the tail-law window at step ``i``."""
    idx = [j + h_tilde for j in pred.relevant_window(h_tilde, i)]
    reps: dict[tuple, tuple] = {}
    for s in scen.sequences:
        reps.setdefault(tuple(s[t] for t in idx), s)
    return [reps[key] for key in sorted(reps)]


def terminal_recursion(pred: Predictor, terminal: TerminalSet, h_tilde: int, scen: ScenarioSet,
                       d_real, prune: bool = True, prior=None, max_rows: int = MAX_TABLE_ROWS):
    """Back-propagate the terminal conditions from ``N_hat`` to ``N`` for true ages ``d_real``.

    Returns ``(Mx_bar, My_bar, n_bar)`` with
    ``Mx_bar x_{k+N} + My_bar [x_hat; u_hat] <= n_bar`` equivalent to the
    state, input and terminal conditions holding for every admissible mix
    of tail laws over the hypotheses in ``scen``.

    Parameters
    ----------
    prune : bool
        Remove redundant rows after every backward step.
    prior : (M, n), optional
        Rows on ``[x_hat; u_hat]`` assumed to hold (see `certain_rows`);
        used only to certify redundancy.
    """
    p = pred.p
    pl = p.plant
    ny = p.n_hat + p.m_hat
    Gx, Gy, g = terminal.M, np.zeros((terminal.M.shape[0], ny)), terminal.n
    zprior = _pad_prior(prior, p.n)
    for i in range(p.N_hat - 1, p.N - 1, -1):
        bx = [Gx @ pred.Acl, pl.Mx, -pl.Mu @ pred.L]
        blocks_y, blocks_n = [], []
        for hyp in hypothesis_classes(pred, h_tilde, scen, i):
            Lx, Lu = pred.kappa_gain_matrices(i, h_tilde, d_real, hyp)
            Lhat = np.hstack([Lx, Lu])
            blocks_y.append(np.vstack([Gx @ pred.B @ Lhat + Gy,
                                       np.zeros((pl.Mx.shape[0], ny)),
                                       pl.Mu @ Lhat]))
            blocks_n.append(np.concatenate([g, pl.nx, pl.nu]))
        reps = len(blocks_y)
        M = np.hstack([np.vstack(bx * reps), np.vstack(blocks_y)])
        n = np.concatenate(blocks_n)
        if M.shape[0] > max_rows:
            raise TableError(f"terminal recursion produced {M.shape[0]} rows at i={i}; enable pruning")
        M, n = reduce_redundancy(M, n, prior=zprior) if prune else unique_rows(M, n)
        Gx, Gy, g = M[:, :p.n], M[:, p.n:], n
    return Gx, Gy, g


# -- stacked constraints ----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ConstraintTable:
    """``Mx x_hat + Mu u_hat <= n``."""

    Mx: np.ndarray
    Mu: np.ndarray
    n: np.ndarray

    @property
    def rows(self) -> int:
        return self.n.size

    def residual(self, x_hat, u_hat) -> np.ndarray:
        return self.Mx @ x_hat + self.Mu @ u_hat - self.n

    def feasible(self, x_hat, u_hat, tol: float = 1e-9) -> bool:
        return bool(np.all(self.residual(x_hat, u_hat) <= tol))


def stack_constraints(pred: Predictor, terminal: TerminalSet, h_tilde: int, dtilde,
                      reduce: bool = True, use_prior: bool = True,
                      drop_fixed_rows: bool = True, max_rows: int = MAX_TABLE_ROWS) -> ConstraintTable:
    """All constraints depending on ``u_hat`` for every scenario starting in ``dtilde``.

    Parameters
    ----------
    reduce : bool
        LP-based redundancy removal (in the recursion and on the final stack).
    use_prior : bool
        Let the redundancy test assume the rows of `certain_rows`.
    drop_fixed_rows : bool
        Drop rows with a zero ``u_hat`` part (they constrain only ``x_hat``
        and cannot be influenced by the optimisation).

    With ``reduce=False`` or ``use_prior=False`` and ``drop_fixed_rows=False``
    the table describes exactly the same set of ``(x_hat, u_hat)`` as the
    per-scenario conditions.
    """
    p = pred.p
    pl = p.plant
    scen = enumerate_scenarios(p.chain, h_tilde, dtilde)
    prior = certain_rows(p) if (reduce and use_prior) else None
    rows, rhs = [], []
    for d_real in scen.sequences:
        Ah, Bh, _, _ = pred.scenario(h_tilde, d_real)
        Gx, Gy, g = terminal_recursion(pred, terminal, h_tilde, scen, d_real,
                                       prune=reduce, prior=prior, max_rows=max_rows)
        off = h_tilde
        rows.append(np.hstack([Gx @ Ah[p.N + off] + Gy[:, :p.n_hat], Gx @ Bh[p.N + off] + Gy[:, p.n_hat:]]))
        rhs.append(g)
        for i in range(p.d_min + 1, p.N):
            rows.append(np.hstack([pl.Mx @ Ah[i + off], pl.Mx @ Bh[i + off]]))
            rhs.append(pl.nx)
    nb = p.m_hat // p.m
    rows.append(np.hstack([np.zeros((nb * pl.Mu.shape[0], p.n_hat)), np.kron(np.eye(nb), pl.Mu)]))
    rhs.append(np.tile(pl.nu, nb))
    M, n = np.vstack(rows), np.concatenate(rhs)
    if M.shape[0] > max_rows:
        raise TableError(f"{M.shape[0]} stacked rows exceed the guard")
    if drop_fixed_rows:
        keep = np.max(np.abs(M[:, p.n_hat:]), axis=1) > 1e-12
        M, n = M[keep], n[keep]
    M, n = reduce_redundancy(M, n, prior=prior) if reduce else unique_rows(M, n)
    return ConstraintTable(np.ascontiguousarray(M[:, :p.n_hat]), np.ascontiguousarray(M[:, p.n_hat:]), n)


# -- cost tables ----------------------------------------------------------------------
def mean_inputs(pred: Predictor, h_tilde: int, scen: ScenarioSet, delta: int):
    """Scenario-weighted input maps ``(Au, Bu)`` for ``j = -H~ .. d_max-1`` given first age ``delta``."""
    p = pred.p
    out_A = [np.zeros((p.m, p.n_hat)) for _ in range(h_tilde + p.d_max)]
    out_B = [np.zeros((p.m, p.m_hat)) for _ in range(h_tilde + p.d_max)]
    for s, w in zip(scen.sequences, scen.weights):
        if s[0] != delta:
            continue
        _, _, Au, Bu = pred.scenario(h_tilde, s)
        for t in range(h_tilde + p.d_max):
            out_A[t] += w * Au[t]
            out_B[t] += w * Bu[t]
    return out_A, out_B


def tail_matrices(pred: Predictor, h_tilde: int, d_real, meanA, meanB):
    """State and input maps for ``i = N .. N_hat`` under the tail law, for one first-age mean.

    Returns ``(AA, BB, AAu, BBu)``; ``AA[i - N]`` maps to ``x_{k+i}`` and
    ``AAu[i - N]`` to ``u_{k+i}`` (the latter for ``i < N_hat``).
    """
    p = pred.p
    Ah, Bh, Au, Bu = pred.scenario(h_tilde, d_real)
    GA, GB = [], []
    for i in range(p.N, p.N_hat):
        Lx = np.zeros((p.m, p.n_hat))
        Lu = np.zeros((p.m, p.m_hat))
        for j in pred.relevant_window(h_tilde, i):
            t = j + h_tilde
            G = pred.L @ pred.Apow(i - 1 - j) @ pred.B
            Lx += G @ (Au[t] - meanA[t])
            Lu += G @ (Bu[t] - meanB[t])
        GA.append(Lx)
        GB.append(Lu)
    AA, BB = [Ah[p.N + h_tilde]], [Bh[p.N + h_tilde]]
    AAu, BBu = [], []
    for r, i in enumerate(range(p.N, p.N_hat)):
        AAu.append(-pred.L @ AA[-1] + GA[r])
        BBu.append(-pred.L @ BB[-1] + GB[r])
        AA.append(pred.Acl @ AA[-1] + pred.B @ GA[r])
        BB.append(pred.Acl @ BB[-1] + pred.B @ GB[r])
    return AA, BB, AAu, BBu


def cost_tables(pred: Predictor, h_tilde: int, ages=None) -> dict:
    """``{(d1, d2, d3): (R, H)}`` for one anchor delay.

    The tables do not depend on the support ``Dtilde``: every sum runs over
    scenarios with a fixed first age.
    """
    p = pred.p
    ch = p.chain
    ages = list(ch.ages) if ages is None else list(ages)
    Q, R, P = p.Q, p.R, pred.P
    scen = enumerate_scenarios(ch, h_tilde, frozenset(ages))
    means = {d: mean_inputs(pred, h_tilde, scen, d) for d in ages}
    out = {}
    base_R = {d: np.zeros((p.m_hat, p.m_hat)) for d in ages}
    base_H = {d: np.zeros((p.m_hat, p.n_hat)) for d in ages}
    tail_R = {}
    tail_H = {}
    for s, w in zip(scen.sequences, scen.weights):
        d3 = s[0]
        Ah, Bh, Au, Bu = pred.scenario(h_tilde, s)
        off = h_tilde
        R12 = np.zeros((p.m_hat, p.m_hat))
        H12 = np.zeros((p.m_hat, p.n_hat))
        for i in range(p.d_min, p.N):
            R12 += Bu[i + off].T @ R @ Bu[i + off]
            H12 += Bu[i + off].T @ R @ Au[i + off]
        for i in range(p.d_min + 1, p.N + 1):
            R12 += Bh[i + off].T @ Q @ Bh[i + off]
            H12 += Bh[i + off].T @ Q @ Ah[i + off]
        base_R[d3] += w * R12
        base_H[d3] += w * H12
        tails = {d: tail_matrices(pred, h_tilde, s, *means[d]) for d in ages}
        for d1, d2 in itertools.product(ages, ages):
            AA1, BB1, AAu1, BBu1 = tails[d1]
            AA2, BB2, AAu2, BBu2 = tails[d2]
            R34 = np.zeros((p.m_hat, p.m_hat))
            H34 = np.zeros((p.m_hat, p.n_hat))
            for r in range(p.N_hat - p.N):
                R34 += BBu1[r].T @ R @ BBu2[r]
                H34 += BBu1[r].T @ R @ AAu2[r]
            for r in range(1, p.N_hat - p.N):
                R34 += BB1[r].T @ Q @ BB2[r]
                H34 += BB1[r].T @ Q @ AA2[r]
            last = p.N_hat - p.N
            R34 += BB1[last].T @ P @ BB2[last]
            H34 += BB1[last].T @ P @ AA2[last]
            key = (d1, d2, d3)
            tail_R[key] = tail_R.get(key, 0.0) + w * R34
            tail_H[key] = tail_H.get(key, 0.0) + w * H34
    for d1, d2, d3 in itertools.product(ages, ages, ages):
        key = (d1, d2, d3)
        out[key] = (base_R[d3] + tail_R[key], base_H[d3] + tail_H[key])
    return out


# -- whole table set ----------------------------------------------------------------
@dataclass(eq=False)
class SynthesisTables:
    problem: object
    lqr: LQRData
    terminal: TerminalSet
    constraints: dict = field(default_factory=dict)   # (h_tilde, dtilde) -> ConstraintTable
    costs: dict = field(default_factory=dict)         # h_tilde -> {(d1, d2, d3): (R, H)}
    timings: dict = field(default_factory=dict)

    @property
    def N_hat(self) -> int:
        return self.problem.N_hat

    def constraint(self, h_tilde: int, dtilde) -> ConstraintTable:
        key = (h_tilde, frozenset(dtilde))
        try:
            return self.constraints[key]
        except KeyError:
            raise TableError(f"no constraint table for H~={h_tilde}, support {sorted(dtilde)}; "
                             "the reachable family is incomplete") from None

    def cost(self, h_tilde: int, dtilde, d1: int, d2: int, d3: int):
        """``(R, H)`` for one age triple; all three ages must lie in ``dtilde``."""
        if not {d1, d2, d3} <= set(dtilde):
            raise TableError("cost triple outside the support")
        try:
            return self.costs[h_tilde][(d1, d2, d3)]
        except KeyError:
            raise TableError(f"no cost table for H~={h_tilde}") from None

    def sizes(self) -> dict:
        return {f"H={h} D={sorted(d)}": t.rows for (h, d), t in sorted(self.constraints.items(),
                                                                      key=lambda kv: (kv[0][0], sorted(kv[0][1])))}


def _constraint_job(args):
    problem, lqr, terminal, h_tilde, dtilde, reduce = args
    pred = Predictor(problem, lqr)
    t0 = time.perf_counter()
    tab = stack_constraints(pred, terminal, h_tilde, dtilde, reduce=reduce)
    return (h_tilde, dtilde), tab, time.perf_counter() - t0


def lqr_and_terminal(problem) -> tuple[LQRData, TerminalSet]:
    """LQR tail law and the maximal admissible set of the closed loop under it."""
    pl = problem.plant
    lqr = solve_dare(pl.A, pl.B, problem.Q, problem.R)
    M = np.vstack([pl.Mx, -pl.Mu @ lqr.L])
    n = np.concatenate([pl.nx, pl.nu])
    return lqr, maximal_admissible_set(lqr.closed_loop(pl.A, pl.B), M, n)


def build_tables(problem, jobs: int = 1, reduce: bool = True, family=None) -> SynthesisTables:
    """Compute LQR data, terminal set, constraint tables for every reachable key and cost tables."""
    lqr, terminal = lqr_and_terminal(problem)
    tables = SynthesisTables(problem, lqr, terminal)
    family = reachable_dtilde(problem.chain) if family is None else family
    jobs_list = [(problem, lqr, terminal, h, frozenset(d), reduce)
                 for h in problem.h_tilde_range for d in family]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_constraint_job, jobs_list))
    else:
        results = [_constraint_job(a) for a in jobs_list]
    pred = Predictor(problem, lqr)
    costs = {}
    for h in problem.h_tilde_range:
        costs[h] = cost_tables(pred, h)
    # publish only once everything is done
    tables.constraints = {key: tab for key, tab, _ in results}
    tables.timings = {f"H={k[0]} D={sorted(k[1])}": t for k, _, t in results}
    tables.costs = costs
    return tables


# -- binary cache ------------------------------------------------------------------------
def params_hash(problem) -> str:
    """SHA-256 over the plant, chain, horizon, weights and network bounds."""
    pl, ch = problem.plant, problem.chain
    h = hashlib.sha256()
    for arr in (pl.A, pl.B, pl.Mx, pl.nx, pl.Mu, pl.nu, ch.mu, ch.phi, problem.Q, problem.R):
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        h.update(struct.pack("<II", *(a.shape + (1,) * (2 - a.ndim))[:2]))
        h.update(a.tobytes())
    h.update(struct.pack("<9i", problem.N, ch.d_min, ch.d_max, *problem.h_bounds, *problem.s_bounds,
                         CACHE_VERSION, 0))
    return h.hexdigest()


def _key_str(h, d):
    return f"{h}|{','.join(str(x) for x in sorted(d))}"


def save_tables(tables: SynthesisTables, path) -> None:
    """Write ``magic | version | hash | index length | JSON index | float64 blobs``."""
    blobs = io.BytesIO()
    index = {"arrays": {}, "N_hat": tables.N_hat, "t_star": tables.terminal.t_star}

    def put(name, arr):
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        index["arrays"][name] = {"offset": blobs.tell(), "shape": list(a.shape)}
        blobs.write(a.tobytes())

    put("P", tables.lqr.P)
    put("L", tables.lqr.L)
    put("M_N", tables.terminal.M)
    put("n_N", tables.terminal.n)
    for (h, d), tab in tables.constraints.items():
        k = _key_str(h, d)
        put(f"C/{k}/Mx", tab.Mx)
        put(f"C/{k}/Mu", tab.Mu)
        put(f"C/{k}/n", tab.n)
    for h, table in tables.costs.items():
        for (d1, d2, d3), (R, H) in table.items():
            put(f"J/{h}/{d1},{d2},{d3}/R", R)
            put(f"J/{h}/{d1},{d2},{d3}/H", H)
    head = json.dumps(index, sort_keys=True).encode()
    digest = bytes.fromhex(params_hash(tables.problem))
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<I", CACHE_VERSION))
        f.write(digest)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(blobs.getvalue())


def load_tables(problem, path) -> SynthesisTables:
    """Read a cache written by `save_tables`; raises `TableError` on mismatch."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != CACHE_MAGIC:
        raise TableError("not a table cache file")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != CACHE_VERSION:
        raise TableError(f"cache version {version} != {CACHE_VERSION}")
    if raw[12:44] != bytes.fromhex(params_hash(problem)):
        raise TableError("cache was built for different parameters")
    (hlen,) = struct.unpack_from("<Q", raw, 44)
    index = json.loads(raw[52:52 + hlen])
    base = 52 + hlen

    def get(name):
        e = index["arrays"][name]
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=base + e["offset"])
        return a.reshape(e["shape"]).astype(float)

    lqr = LQRData(get("P"), get("L"))
    terminal = TerminalSet(get("M_N"), get("n_N"), index["t_star"])
    tables = SynthesisTables(problem, lqr, terminal)
    for name in index["arrays"]:
        parts = name.split("/")
        if parts[0] == "C" and parts[2] == "Mx":
            h, ds = parts[1].split("|")
            d = frozenset(int(x) for x in ds.split(",") if x)
            k = parts[1]
            tables.constraints[(int(h), d)] = ConstraintTable(get(f"C/{k}/Mx"), get(f"C/{k}/Mu"), get(f"C/{k}/n"))
        elif parts[0] == "J" and parts[3] == "R":
            h = int(parts[1])
            trip = tuple(int(x) for x in parts[2].split(","))
            tables.costs.setdefault(h, {})[trip] = (get(name), get(f"J/{parts[1]}/{parts[2]}/H"))
    return tables


def load_or_build(problem, path=None, jobs: int = 1) -> tuple[SynthesisTables, bool]:
    """Load the cache at ``path`` if it matches ``problem``, else build (and save). Returns ``(tables, hit)``."""
    if path is not None:
        try:
            return load_tables(problem, path), True
        except (OSError, TableError):
            pass
    tables = build_tables(problem, jobs=jobs)
    if path is not None:
        save_tables(tables, path)
    return tables, False
