"""Age-of-information processes for the three network channels.

A channel value ``v_k`` is the age of the newest packet that has arrived by
step ``k``; ``v_k > k`` means nothing has arrived yet.  Ages obey
``lo <= v_k <= hi`` and ``v_{k+1} <= v_k + 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .markov import MarkovChain


class RealizationError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(frozen=True)
class AgeProcessSpec:
    """How one channel's age sequence is produced.

    ``law`` is ``"markov"`` (sample from ``chain``), ``"uniform"`` (uniform
    over the feasible successors, the default for sensor/ack channels) or
    ``"scripted"`` (``script`` is an int for a constant sequence or an explicit
    sequence).
    """

    lo: int
    hi: int
    law: str = "uniform"
    chain: MarkovChain | None = None
    script: int | tuple | None = None

    def __post_init__(self):
        if self.lo > self.hi or self.lo < 0:
            raise RealizationError(f"invalid bounds [{self.lo}, {self.hi}]")
        if self.law not in ("markov", "uniform", "scripted"):
            raise RealizationError(f"unknown law {self.law!r}")
        if self.law == "markov":
            if self.chain is None:
                raise RealizationError("markov law needs a chain")
            if (self.chain.d_min, self.chain.d_max) != (self.lo, self.hi):
                raise RealizationError("chain bounds differ from the channel bounds")
        if self.law == "scripted" and self.script is None:
            raise RealizationError("scripted law needs a script")
        if isinstance(self.script, list):
            object.__setattr__(self, "script", tuple(self.script))

    @classmethod
    def constant(cls, lo, hi, value, chain=None):
        return cls(lo, hi, "scripted", chain=chain, script=int(value))


def check_ages(seq: Sequence[int], lo: int, hi: int, name: str = "age") -> None:
    for k, v in enumerate(seq):
        if not lo <= v <= hi:
            raise RealizationError(f"{name}[{k}] = {v} outside [{lo}, {hi}]")
        if k and v > seq[k - 1] + 1:
            raise RealizationError(f"{name}[{k}] = {v} grows by more than 1 from {seq[k - 1]}")


def path_probability(chain: MarkovChain, seq: Sequence[int]) -> float:
    p = chain.mu[chain.idx(seq[0])]
    for a, b in zip(seq[:-1], seq[1:]):
        p *= chain.phi[chain.idx(a), chain.idx(b)]
    return float(p)


def has_positive_probability(chain: MarkovChain, seq: Sequence[int]) -> bool:
    """Every step of ``seq`` is possible (checked per transition, so long paths do not underflow)."""
    if chain.mu[chain.idx(seq[0])] <= 0.0:
        return False
    return all(chain.phi[chain.idx(a), chain.idx(b)] > 0.0 for a, b in zip(seq[:-1], seq[1:]))


def _sample(spec: AgeProcessSpec, length: int, rng: np.random.Generator) -> list[int]:
    if spec.law == "scripted":
        if isinstance(spec.script, int):
            seq = [spec.script] * length
        else:
            if len(spec.script) < length:
                raise RealizationError(f"script has {len(spec.script)} entries, need {length}")
            seq = [int(v) for v in spec.script[:length]]
    elif spec.law == "markov":
        ch = spec.chain
        seq = [ch.d_min + int(rng.choice(ch.size, p=ch.mu))]
        for _ in range(length - 1):
            row = ch.phi[ch.idx(seq[-1])]
            seq.append(ch.d_min + int(rng.choice(ch.size, p=row)))
    else:
        seq = [int(rng.integers(spec.lo, spec.hi + 1))]
        for _ in range(length - 1):
            seq.append(int(rng.integers(spec.lo, min(spec.hi, seq[-1] + 1) + 1)))
    check_ages(seq, spec.lo, spec.hi)
    return seq


@dataclass(frozen=True)
class NetworkRealization:
    """Age sequences for steps ``0..horizon`` of the three channels."""

    d_seq: tuple
    h_seq: tuple
    s_seq: tuple
    seed: int | None = None

    @property
    def horizon(self) -> int:
        return len(self.d_seq) - 1

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "D": list(self.d_seq),
                           "H": list(self.h_seq), "S": list(self.s_seq)})

    @classmethod
    def from_json(cls, text: str) -> "NetworkRealization":
        obj = json.loads(text)
        return cls(tuple(obj["D"]), tuple(obj["H"]), tuple(obj["S"]), obj.get("seed"))

    def validate(self, d_bounds, h_bounds, s_bounds, chain: MarkovChain | None = None) -> None:
        check_ages(self.d_seq, *d_bounds, name="D")
        check_ages(self.h_seq, *h_bounds, name="H")
        check_ages(self.s_seq, *s_bounds, name="S")
        if chain is not None and not has_positive_probability(chain, self.d_seq):
            raise RealizationError("D sequence has zero probability under the chain")


def sample_realization(specs: dict, horizon: int, seed: int) -> NetworkRealization:
    """Draw one realization of the ``"D"``, ``"H"`` and ``"S"`` channels.

    The draws for the three channels come from one Philox stream in the fixed
    order D, H, S, so a seed fully determines the result.
    """
    if horizon < 1:
        raise RealizationError("horizon must be >= 1")
    if specs["D"].law == "uniform":
        raise RealizationError("the controller-to-actuator channel must be markov or scripted")
    rng = make_rng(seed)
    d = _sample(specs["D"], horizon + 1, rng)
    h = _sample(specs["H"], horizon + 1, rng)
    s = _sample(specs["S"], horizon + 1, rng)
    if specs["D"].chain is not None and not has_positive_probability(specs["D"].chain, d):
        raise RealizationError("scripted D sequence has zero probability under the chain")
    return NetworkRealization(tuple(d), tuple(h), tuple(s), seed)


def default_specs(problem, d_script=None, h_script=None, s_script=None) -> dict:
    """Channel specs for a problem; any ``*_script`` turns that channel scripted."""
    ch = problem.chain

    def one(lo, hi, script, law):
        if script is None:
            return AgeProcessSpec(lo, hi, law, chain=ch if law == "markov" else None)
        return AgeProcessSpec(lo, hi, "scripted", chain=ch if law == "markov" else None,
                              script=script)

    return {"D": one(ch.d_min, ch.d_max, d_script, "markov"),
            "H": one(*problem.h_bounds, h_script, "uniform"),
            "S": one(*problem.s_bounds, s_script, "uniform")}


def first_arrival(seq: Sequence[int]) -> int | None:
    """First ``k`` with ``seq[k] <= k``; ``None`` if it does not occur."""
    for k, v in enumerate(seq):
        if v <= k:
            return k
    return None


def first_arrival_times(real: NetworkRealization):
    """``(K_h, K_d, K_s, K_sd)`` for a realization.

    ``K_sd`` is the first step at or after ``K_s`` whose acknowledgment packet
    was sent at or after ``K_d`` (i.e. is non-empty).  Entries beyond the
    realization horizon are ``None``.
    """
    K_h = first_arrival(real.h_seq)
    K_d = first_arrival(real.d_seq)
    K_s = first_arrival(real.s_seq)
    K_sd = None
    if K_s is not None and K_d is not None:
        for k in range(K_s, len(real.s_seq)):
            if k - real.s_seq[k] >= K_d:
                K_sd = k
                break
    return K_h, K_d, K_s, K_sd


def ages_from_packet_trace(delays: Sequence[int | None], lo: int, hi: int) -> list[int]:
    """Convert per-packet delays (``None`` = lost) into an age sequence.

    Packet ``t`` is sent at step ``t`` and arrives at ``t + delays[t]``.
    While nothing has arrived the age is reported as ``max(lo, k + 1)``.
    """
    ages = []
    newest = None
    arrivals: dict[int, list[int]] = {}
    for t, dl in enumerate(delays):
        if dl is not None:
            if dl < 0:
                raise RealizationError("negative delay")
            arrivals.setdefault(t + dl, []).append(t)
    for k in range(len(delays)):
        for t in arrivals.get(k, []):
            newest = t if newest is None else max(newest, t)
        ages.append(max(lo, k + 1) if newest is None else k - newest)
    check_ages(ages, lo, hi)
    return ages
