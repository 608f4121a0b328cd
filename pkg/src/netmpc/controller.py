"""Online controllers: QP assembly from the tables, packet construction and baselines."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .prediction import Predictor
from .protocol import ControllerPacket, DeliveredData
from .qp import QPInstance, QPResult, solve
from .tracker import InformationState

RIDGE = 1e-9
RIDGE_TRIGGER = 1e-10


class ControllerError(RuntimeError):
    pass


class InfeasibleQP(ControllerError):
    def __init__(self, k: int, result: QPResult):
        super().__init__(f"QP infeasible at k={k}")
        self.k = k
        self.result = result


# -- QP assembly -----------------------------------------------------------------------
def assemble_qp(state: InformationState, tables, ridge: float = RIDGE) -> QPInstance:
    """``V = sym(sum P P P R)``, ``v = 2 (sum P P P H) x_hat``, ``W = Mu``, ``w = n - Mx x_hat``."""
    ht, dt = state.h_tilde, state.dtilde
    pk = state.pk_map()
    x_hat = state.x_hat
    con = tables.constraint(ht, dt)
    ages = sorted(dt)
    Rs = np.zeros((state.problem.m_hat, state.problem.m_hat))
    Hs = np.zeros((state.problem.m_hat, state.problem.n_hat))
    for d1, d2, d3 in itertools.product(ages, ages, ages):
        w = pk[d1] * pk[d2] * pk[d3]
        R, H = tables.cost(ht, dt, d1, d2, d3)
        Rs += w * R
        Hs += w * H
    V = 0.5 * (Rs + Rs.T)
    if np.linalg.eigvalsh(V)[0] < RIDGE_TRIGGER:
        V = V + ridge * np.eye(V.shape[0])
    return QPInstance(V, 2.0 * Hs @ x_hat, con.Mu, con.n - con.Mx @ x_hat)


def plan_to_packet(problem, u_hat) -> np.ndarray:
    """Blocks ``u^(d_max) .. u^(d_min)`` of a plan, i.e. the controller packet."""
    p = problem
    return np.array(u_hat[(p.N - 1 - p.d_max) * p.m:], dtype=float)


def control_output(k: int, problem, u_hat=None) -> ControllerPacket:
    """Zero packet while no plan exists (before the first sensor data), else the current plan blocks."""
    if u_hat is None:
        return ControllerPacket(k, np.zeros(problem.m_tilde))
    return ControllerPacket(k, plan_to_packet(problem, u_hat))


# -- expectations over scenarios ---------------------------------------------------------
def scenario_posterior(state: InformationState):
    """``(sequences, probabilities)`` of the age window given everything known at ``k``."""
    sc = state.scenarios
    return sc.sequences, sc.posterior(state.pk_map())


def expected_state(pred: Predictor, state: InformationState, u_hat, i: int) -> np.ndarray:
    """``E{x_{k+i} | I_k}`` for a plan ``u_hat``."""
    seqs, post = scenario_posterior(state)
    x = np.zeros(pred.p.n)
    for s, w in zip(seqs, post):
        Ah, Bh, _, _ = pred.scenario(state.h_tilde, s)
        x += w * (Ah[i + state.h_tilde] @ state.x_hat + Bh[i + state.h_tilde] @ u_hat)
    return x


def shift_candidate(pred: Predictor, state: InformationState, prev_u_hat) -> np.ndarray:
    """Previous plan shifted by one step, topped with ``-L E{x_{k+N-1} | I_k}``.

    ``state`` is the information at the new step.  The top block does not
    influence ``x_{k+N-1}``, so it can be filled in afterwards.
    """
    p = pred.p
    cand = np.concatenate([np.zeros(p.m), np.asarray(prev_u_hat)[:-p.m]])
    cand[:p.m] = -pred.L @ expected_state(pred, state, cand, p.N - 1)
    return cand


# -- enumeration oracle for the cost ------------------------------------------------------
def scenario_inputs(state: InformationState, u_hat, d_seq) -> list[np.ndarray]:
    """``u_{k+j}`` for ``j = -H~ .. N-1`` under ages ``d_seq`` by direct packet lookup."""
    p = state.problem
    k, ht = state.k, state.h_tilde
    out = []
    for j in range(-ht, p.N):
        d = d_seq[j + ht] if j <= p.d_max - 1 else p.d_min
        if j < d:
            out.append(state.packet_input(k + j, d))
        else:
            off = (p.N - 1 - j) * p.m
            out.append(np.asarray(u_hat[off:off + p.m], dtype=float))
    return out


def expected_cost_oracle(state: InformationState, u_hat, lqr, max_scenarios: int = 100_000) -> float:
    """Expected cost of a plan by simulating every scenario.

    Sums ``u'Ru`` for ``i = d_min .. N_hat-1``, ``x'Qx`` for
    ``i = d_min+1 .. N_hat-1`` and ``x'Px`` at ``N_hat``; after ``N`` the
    tail law corrects ``-Lx`` by the deviation of the scenario's past inputs
    from their conditional means.  Terms that do not depend on ``u_hat``
    are included, so only differences between plans are meaningful.
    """
    p = state.problem
    A, B = p.plant.A, p.plant.B
    L, P = np.asarray(lqr.L), np.asarray(lqr.P)
    seqs, post = scenario_posterior(state)
    if len(seqs) > max_scenarios:
        raise ControllerError("too many scenarios for enumeration")
    ht = state.h_tilde
    inputs = [scenario_inputs(state, u_hat, s) for s in seqs]
    mean_u = [sum(w * u[t] for u, w in zip(inputs, post)) for t in range(ht + p.N)]
    total = 0.0
    for us, w in zip(inputs, post):
        x = state.anchor.copy()
        xs = {}
        for j in range(-ht, p.N):
            xs[j] = x
            x = A @ x + B @ us[j + ht]
        xs[p.N] = x
        cost = 0.0
        for i in range(p.d_min, p.N):
            cost += us[i + ht] @ p.R @ us[i + ht]
        for i in range(p.d_min + 1, p.N + 1):
            cost += xs[i] @ p.Q @ xs[i]
        for i in range(p.N, p.N_hat):
            hh = state.h_hat(i)
            corr = np.zeros(p.n)
            for j in range(-hh, p.d_max):
                corr += np.linalg.matrix_power(A, i - 1 - j) @ B @ (us[j + ht] - mean_u[j + ht])
            u = -L @ x + L @ corr
            cost += u @ p.R @ u
            x = A @ x + B @ u
            if i + 1 < p.N_hat:
                cost += x @ p.Q @ x
        cost += x @ P @ x
        total += w * cost
    return float(total)


# -- controllers ----------------------------------------------------------------------------
@dataclass
class StepRecord:
    k: int
    status: str
    iterations: int = 0
    objective: float | None = None
    h_tilde: int | None = None
    dtilde: tuple = ()
    pk: tuple = ()
    x_hat: tuple = ()
    kkt: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class StochasticMPC:
    """The proposed controller, re-solving the QP at every step once sensor data exists.

    Parameters
    ----------
    tables : SynthesisTables
    constrained : bool
        ``False`` gives the unconstrained variant ``u_hat = -V^{-1} v / 2``.
    """

    def __init__(self, tables, constrained: bool = True):
        self.tables = tables
        self.problem = tables.problem
        self.pred = Predictor(self.problem, tables.lqr)
        self.constrained = constrained
        self.packets: dict[int, np.ndarray] = {}
        self.plans: dict[int, np.ndarray] = {}
        self.records: list[StepRecord] = []
        self._last: QPResult | None = None

    def information(self, data: DeliveredData) -> InformationState:
        return InformationState(self.problem, data, self.packets)

    def step(self, data: DeliveredData) -> ControllerPacket:
        k = data.k
        if data.K_h is None:
            pkt = control_output(k, self.problem)
            self.records.append(StepRecord(k, "waiting"))
        else:
            st = self.information(data)
            inst = assemble_qp(st, self.tables)
            if self.constrained:
                warm, active = None, ()
                if (k - 1) in self.plans:
                    warm = shift_candidate(self.pred, st, self.plans[k - 1])
                    active = self._last.active if self._last is not None else ()
                res = solve(inst, x0=warm, active0=active)
                if res.status != "optimal":
                    self.records.append(StepRecord(k, res.status))
                    raise InfeasibleQP(k, res)
                u_hat = res.u
                self._last = res
                rec = StepRecord(k, "optimal", res.iterations, res.objective, kkt=res.kkt)
            else:
                u_hat = -0.5 * np.linalg.solve(inst.V, inst.v)
                rec = StepRecord(k, "unconstrained", 0, inst.objective(u_hat))
            rec.h_tilde = st.h_tilde
            rec.dtilde = tuple(sorted(st.dtilde))
            rec.pk = tuple(float(v) for v in st.pk)
            rec.x_hat = tuple(float(v) for v in st.x_hat)
            self.records.append(rec)
            self.plans[k] = u_hat
            pkt = control_output(k, self.problem, u_hat)
        self.packets[k] = pkt.u_tilde
        return pkt


class BufferedMPC:
    """Deterministic MPC for a loop whose actuator applies every packet at age ``d_max``.

    The plan at step ``k`` is ``z = [u_{k+d_max}; ...; u_{k+N-1}]``; its first
    block is committed.  A packet carries, in block ``d``, the input
    committed for step ``k + d``, so whatever age the network produces the
    actuator applies the committed value; this realises the buffer without
    changing the actuator.
    """

    def __init__(self, problem, lqr, terminal):
        self.problem = p = problem
        self.lqr = lqr
        A, B = p.plant.A, p.plant.B
        dm, N, n, m = p.d_max, p.N, p.n, p.m
        steps = N - dm
        self.nz = steps * m
        # x_{k+dm+r} = A^r x_{k+dm} + Gam[r] z
        Apow = [np.eye(n)]
        for _ in range(steps):
            Apow.append(Apow[-1] @ A)
        Gam = [np.zeros((n, self.nz))]
        for r in range(1, steps + 1):
            G = A @ Gam[-1]
            G[:, (r - 1) * m:r * m] += B
            Gam.append(G)
        self.Apow, self.Gam = Apow, Gam
        V = np.kron(np.eye(steps), p.R)
        Hx = np.zeros((self.nz, n))
        for r in range(1, steps):
            V += Gam[r].T @ p.Q @ Gam[r]
            Hx += Gam[r].T @ p.Q @ Apow[r]
        V += Gam[steps].T @ lqr.P @ Gam[steps]
        Hx += Gam[steps].T @ lqr.P @ Apow[steps]
        self.V = 0.5 * (V + V.T)
        self.Hx = Hx
        rows, rx, rhs = [np.kron(np.eye(steps), p.plant.Mu)], [np.zeros((steps * p.plant.Mu.shape[0], n))], [np.tile(p.plant.nu, steps)]
        for r in range(1, steps):
            rows.append(p.plant.Mx @ Gam[r])
            rx.append(p.plant.Mx @ Apow[r])
            rhs.append(p.plant.nx)
        rows.append(terminal.M @ Gam[steps])
        rx.append(terminal.M @ Apow[steps])
        rhs.append(terminal.n)
        self.W, self.Wx, self.wn = np.vstack(rows), np.vstack(rx), np.concatenate(rhs)
        self.committed: dict[int, np.ndarray] = {}
        self.records: list[StepRecord] = []
        self._last: QPResult | None = None

    def input_at(self, t: int) -> np.ndarray:
        return self.committed.get(t, np.zeros(self.problem.m))

    def predicted_state(self, data: DeliveredData) -> np.ndarray:
        """Exact ``x_{k+d_max}`` from the newest state and the committed inputs."""
        p = self.problem
        t0 = data.k - data.H
        x = np.asarray(data.states[t0])
        for t in range(t0, data.k + p.d_max):
            x = p.plant.A @ x + p.plant.B @ self.input_at(t)
        return x

    def qp(self, x_pred) -> QPInstance:
        return QPInstance(self.V, 2.0 * self.Hx @ x_pred, self.W, self.wn - self.Wx @ x_pred)

    def step(self, data: DeliveredData) -> ControllerPacket:
        p = self.problem
        k = data.k
        if data.K_h is None:
            self.committed[k + p.d_max] = np.zeros(p.m)
            self.records.append(StepRecord(k, "waiting"))
        else:
            inst = self.qp(self.predicted_state(data))
            res = solve(inst, active0=self._last.active if self._last is not None else ())
            if res.status != "optimal":
                self.records.append(StepRecord(k, res.status))
                raise InfeasibleQP(k, res)
            self._last = res
            self.committed[k + p.d_max] = res.u[:p.m].copy()
            self.records.append(StepRecord(k, "optimal", res.iterations, res.objective, kkt=res.kkt))
        blocks = [self.input_at(k + d) for d in range(p.d_max, p.d_min - 1, -1)]
        return ControllerPacket(k, np.concatenate(blocks))
