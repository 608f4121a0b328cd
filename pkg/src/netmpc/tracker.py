"""Controller-side bookkeeping of what is known about the network.

Everything here is computed from a `DeliveredData` snapshot (what the
protocol delivered) plus the controller's own past packets.  The main
outputs are the anchor delay ``H~_k``, the distribution ``P_k`` of
``D_{k - H~_k}``, the scenario set over the uncertain ages and the extended
state vector used by the prediction matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .markov import MarkovChain, n_step, p2_tilde, p4_tilde
from .protocol import DeliveredData, packet_block

THETA_TOL = 1e-9


class TrackerError(RuntimeError):
    """Tracker invariant violated (inconsistent data or model mismatch)."""


def h_tilde_value(k: int, H_k: int, S_k: int, K_s: int | None) -> int:
    if K_s is None or k < K_s:
        return H_k
    return min(H_k, S_k - 1)


def h_hat_value(h_tilde: int, i: int, N: int, h_max: int, s_max: int) -> int:
    """Number of steps before ``k`` over which the tail law corrects input uncertainty."""
    return min(h_max + N - i - 1, s_max + N - i - 2, h_tilde)


@dataclass(frozen=True)
class ScenarioSet:
    """Age sequences ``(d_{k+i})`` for ``-h_tilde <= i <= d_max - 1``.

    ``weights[j]`` is the probability of sequence ``j`` given its first
    element; multiplying by ``P_k(first)`` gives the posterior probability.
    """

    h_tilde: int
    dtilde: frozenset
    sequences: tuple
    weights: tuple

    def firsts(self) -> np.ndarray:
        return np.array([s[0] for s in self.sequences])

    def group(self, delta: int) -> list[int]:
        return [j for j, s in enumerate(self.sequences) if s[0] == delta]

    def posterior(self, pk: Mapping[int, float]) -> np.ndarray:
        return np.array([pk[s[0]] * w for s, w in zip(self.sequences, self.weights)])


_SCENARIO_CACHE: dict = {}


def enumerate_scenarios(chain: MarkovChain, h_tilde: int, dtilde, d_max: int | None = None) -> ScenarioSet:
    """All Markov-feasible sequences of length ``h_tilde + d_max`` starting in ``dtilde``."""
    d_max = chain.d_max if d_max is None else d_max
    dtilde = frozenset(dtilde)
    key = (id(chain), h_tilde, dtilde, d_max)
    hit = _SCENARIO_CACHE.get(key)
    if hit is not None and hit[0] is chain:
        return hit[1]
    length = h_tilde + d_max
    seqs, weights = [], []

    def extend(prefix, w):
        if len(prefix) == length:
            seqs.append(tuple(prefix))
            weights.append(w)
            return
        for nxt in chain.successors(prefix[-1]):
            extend(prefix + [nxt], w * chain.transition(prefix[-1], nxt))

    for d0 in sorted(dtilde):
        extend([d0], 1.0)
    out = ScenarioSet(h_tilde, dtilde, tuple(seqs), tuple(weights))
    _SCENARIO_CACHE[key] = (chain, out)
    return out


class InformationState:
    """Snapshot of the controller's knowledge at step ``k = data.k``.

    Parameters
    ----------
    problem : Problem
    data : DeliveredData
        Output of `ControllerInbox.receive` for this step.
    packets : mapping
        The controller's own packets ``u~_t`` (stacked, length ``m_tilde``)
        for ``t < k``; missing entries are zero packets.
    """

    def __init__(self, problem, data: DeliveredData, packets: Mapping[int, np.ndarray]):
        self.problem = problem
        self.data = data
        self.packets = packets
        self.k = data.k
        if data.K_h is None:
            raise TrackerError(f"no sensor data at k={self.k} (k < K_h)")

    # -- basic quantities ------------------------------------------------
    @property
    def H(self) -> int:
        return self.data.H

    @property
    def S(self) -> int:
        return self.data.S

    @cached_property
    def h_tilde(self) -> int:
        return h_tilde_value(self.k, self.H, self.S, self.data.K_s)

    def h_hat(self, i: int) -> int:
        p = self.problem
        return h_hat_value(self.h_tilde, i, p.N, p.h_max, p.s_max)

    def packet(self, t: int) -> np.ndarray:
        if t < 0 or t not in self.packets:
            return np.zeros(self.problem.m_tilde)
        return np.asarray(self.packets[t])

    def packet_input(self, t: int, d: int) -> np.ndarray:
        """``u~_{t-d}^{(d)}``, i.e. what the actuator applies at ``t`` if ``D_t = d``."""
        p = self.problem
        return np.array(packet_block(self.packet(t - d), d, p.d_max, p.m))

    def state(self, t: int) -> np.ndarray:
        try:
            return np.asarray(self.data.states[t])
        except KeyError:
            raise TrackerError(f"x_{t} is not known at k={self.k}") from None

    @property
    def ack_horizon(self) -> int:
        """Newest step whose age information has been acknowledged (``k - S_k``)."""
        return self.k - self.S if self.data.K_s is not None else -1

    def known_input(self, t: int) -> np.ndarray:
        """Applied input ``u_t`` for ``t <= k - S_k``."""
        if t > self.ack_horizon:
            raise TrackerError(f"u_{t} is not reconstructible at k={self.k}")
        d = self.data
        if d.K_d is None or t < d.K_d:
            return np.zeros(self.problem.m)
        return self.packet_input(t, d.d_hist[t])

    @cached_property
    def anchor(self) -> np.ndarray:
        """Plant state ``x_{k - H~_k}`` rolled forward from the newest received state."""
        t0 = self.k - self.H
        x = self.state(t0)
        A, B = self.problem.plant.A, self.problem.plant.B
        for t in range(t0, self.k - self.h_tilde):
            x = A @ x + B @ self.known_input(t)
        return x

    # -- consistency sets ---------------------------------------------------
    def theta(self, t: int) -> frozenset:
        """Ages consistent with the observed transition ``x_t -> x_{t+1}``."""
        p = self.problem
        x0, x1 = self.state(t), self.state(t + 1)
        base = x1 - p.plant.A @ x0
        out = frozenset(d for d in p.chain.ages
                        if np.max(np.abs(base - p.plant.B @ self.packet_input(t, d))) <= THETA_TOL)
        if not out:
            raise TrackerError(f"no age explains the transition at t={t} (model mismatch)")
        return out

    def theta_hat(self, t: int) -> frozenset:
        """Consistency set combining state observations and empty acknowledgments."""
        has_state = t <= self.k - self.H - 1
        has_ack = t <= self.ack_horizon
        if not (has_state or has_ack):
            raise TrackerError(f"nothing is known about D_{t} at k={self.k}")
        not_arrived = frozenset(d for d in self.problem.chain.ages if d > t)
        if has_state and has_ack:
            return self.theta(t) & not_arrived
        return self.theta(t) if has_state else not_arrived

    # -- age distribution ---------------------------------------------------
    @cached_property
    def pk_case(self) -> int:
        d = self.data
        k, ht, s = self.k, self.h_tilde, self.S
        d_min = self.problem.d_min
        if d.K_sd is not None:
            return 1 if ht == s - 1 else 2
        if k - ht <= d_min:
            return 3
        return 4 if d.K_s is not None else 5

    @cached_property
    def pk(self) -> np.ndarray:
        """``P_k(delta) = P[D_{k - H~_k} = delta | I_k]`` as a dense vector over the ages."""
        ch = self.problem.chain
        k, ht, s = self.k, self.h_tilde, self.S
        d_min = ch.d_min
        case = self.pk_case
        if case == 1:
            out = np.array(ch.phi[ch.idx(self.data.d_hist[k - s])])
        elif case == 2:
            lo, hi = k - s, k - ht
            thetas = [self.theta(t) for t in range(lo + 1, hi)]
            out = np.array([p2_tilde(ch, lo, hi, self.data.d_hist[lo], dl, thetas) for dl in ch.ages])
        elif case == 3:
            out = ch.mu @ n_step(ch, k - ht)
        else:
            lo, hi = d_min, k - ht
            sets = self.theta_hat if case == 4 else self.theta
            thetas = [sets(t) for t in range(lo, hi)]
            out = np.array([p4_tilde(ch, lo, hi, dl, thetas) for dl in ch.ages])
        if abs(out.sum() - 1.0) > 1e-10:
            raise TrackerError(f"P_k sums to {out.sum()!r}")
        return out

    def pk_map(self) -> dict:
        return {d: float(self.pk[self.problem.chain.idx(d)]) for d in self.problem.chain.ages}

    @cached_property
    def dtilde(self) -> frozenset:
        ch = self.problem.chain
        return frozenset(d for d in ch.ages if self.pk[ch.idx(d)] > 0.0)

    @cached_property
    def scenarios(self) -> ScenarioSet:
        return enumerate_scenarios(self.problem.chain, self.h_tilde, self.dtilde)

    # -- extended state -----------------------------------------------------
    @cached_property
    def x_hat(self) -> np.ndarray:
        """``[x_{k-H~}; u~_{k-1}; ...; u~_{k-d_max-h_max}]``."""
        p = self.problem
        parts = [self.anchor] + [self.packet(self.k - j) for j in range(1, p.d_max + p.h_max + 1)]
        return np.concatenate(parts)

    def summary(self) -> dict:
        """JSON-friendly dump for debugging."""
        return {"k": self.k, "H": self.H, "S": self.S, "h_tilde": self.h_tilde,
                "case": self.pk_case, "pk": self.pk.tolist(), "dtilde": sorted(self.dtilde),
                "x_hat": self.x_hat.tolist()}
