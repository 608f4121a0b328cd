"""Homogeneous Markov chain for packet ages and path-probability formulas.

Ages are indexed by their absolute value ``delta`` in ``[d_min, d_max]``;
internally the arrays are offset by ``d_min``.  All "theta" arguments are
sequences of allowed-age sets, one per absolute time step of the range the
function documents.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12


class ChainValidationError(ValueError):
    """Raised when chain parameters violate an invariant.

    The ``invariant`` attribute names the failed check: ``"dimension"``,
    ``"bounds"``, ``"mu-positive"``, ``"mu-sum"``, ``"nonnegative"``,
    ``"row-sum"`` or ``"support"``.
    """

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class ZeroProbabilityError(ValueError):
    """The conditioning event of a conditional probability has probability zero."""


@dataclass(frozen=True, eq=False)
class MarkovChain:
    d_min: int
    d_max: int
    mu: np.ndarray
    phi: np.ndarray
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ages(self) -> range:
        return range(self.d_min, self.d_max + 1)

    @property
    def size(self) -> int:
        return self.d_max - self.d_min + 1

    def idx(self, delta: int) -> int:
        return delta - self.d_min

    def mask(self, allowed: Iterable[int]) -> np.ndarray:
        """Indicator vector of an age set (ages outside the bounds are ignored)."""
        m = np.zeros(self.size)
        for d in allowed:
            if self.d_min <= d <= self.d_max:
                m[d - self.d_min] = 1.0
        return m

    def transition(self, d: int, delta: int) -> float:
        return float(self.phi[d - self.d_min, delta - self.d_min])

    def successors(self, d: int) -> list[int]:
        row = self.phi[d - self.d_min]
        return [self.d_min + int(j) for j in np.flatnonzero(row > 0.0)]

    def to_dict(self) -> dict:
        return {"d_min": self.d_min, "d_max": self.d_max,
                "mu": self.mu.tolist(), "phi": self.phi.tolist()}


def validate(mu, phi, d_min: int, d_max: int) -> MarkovChain:
    """Check the chain invariants and return an immutable `MarkovChain`.

    Raises
    ------
    ChainValidationError
        With ``invariant`` set to the first check that failed.
    """
    d_min, d_max = int(d_min), int(d_max)
    if d_max <= d_min or d_min < 0:
        raise ChainValidationError("bounds", f"need 0 <= d_min < d_max, got [{d_min}, {d_max}]")
    size = d_max - d_min + 1
    mu = np.array(mu, dtype=float).reshape(-1)
    phi = np.array(phi, dtype=float)
    if mu.shape != (size,) or phi.shape != (size, size):
        raise ChainValidationError(
            "dimension", f"expected mu of length {size} and phi {size}x{size}, "
            f"got {mu.shape} and {phi.shape}")
    if np.any(mu <= 0.0):
        raise ChainValidationError("mu-positive", "every initial age must have positive probability")
    if abs(mu.sum() - 1.0) > PROB_TOL:
        raise ChainValidationError("mu-sum", f"mu sums to {mu.sum()!r}")
    if np.any(phi < 0.0):
        raise ChainValidationError("nonnegative", "transition probabilities must be >= 0")
    sums = phi.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
    if bad.size:
        r = int(bad[0])
        raise ChainValidationError("row-sum", f"row for age {d_min + r} sums to {sums[r]!r}")
    for a in range(size):
        for b in range(size):
            if phi[a, b] > 0.0 and b > a + 1:
                raise ChainValidationError(
                    "support", f"phi({d_min + a},{d_min + b}) > 0 but ages grow by at most 1")
    mu.setflags(write=False)
    phi.setflags(write=False)
    return MarkovChain(d_min, d_max, mu, phi)


def n_step(chain: MarkovChain, n: int) -> np.ndarray:
    """n-step transition matrix, memoised on the chain."""
    if n < 0:
        raise ValueError("n must be >= 0")
    cache = chain._powers
    if n not in cache:
        top = max((j for j in cache if j < n), default=None)
        mat = np.eye(chain.size) if top is None else cache[top]
        for j in range((0 if top is None else top) + 1, n + 1):
            mat = mat @ chain.phi
            cache[j] = mat
        cache.setdefault(0, np.eye(chain.size))
    return cache[n]


def _propagate(chain: MarkovChain, v: np.ndarray, theta_sets: Sequence[Iterable[int]]) -> np.ndarray:
    for allowed in theta_sets:
        v = (v @ chain.phi) * chain.mask(allowed)
    return v


def p1_tilde(chain: MarkovChain, i_lo: int, i_hi: int, delta_lo: int,
             theta_sets: Sequence[Iterable[int]]) -> float:
    """Probability that ``D_i`` lies in its theta set for every ``i`` in ``(i_lo, i_hi]``
    given ``D_{i_lo} = delta_lo``.

    ``theta_sets[j]`` constrains time ``i_lo + 1 + j``.  An empty range
    (``i_hi == i_lo``) is the sure event.
    """
    if i_hi < i_lo or len(theta_sets) != i_hi - i_lo:
        raise ValueError(f"need {i_hi - i_lo} theta sets for ({i_lo}, {i_hi}], got {len(theta_sets)}")
    v = np.zeros(chain.size)
    v[chain.idx(delta_lo)] = 1.0
    return float(_propagate(chain, v, theta_sets).sum())


def p2_tilde(chain: MarkovChain, i_lo: int, i_hi: int, delta_lo: int, delta_hi: int,
             theta_sets: Sequence[Iterable[int]]) -> float:
    """``P[D_{i_hi} = delta_hi | D_{i_lo} = delta_lo, D_i in theta_i for i in (i_lo, i_hi)]``."""
    if i_hi < i_lo + 1:
        raise ValueError("p2_tilde needs i_hi >= i_lo + 1")
    inner = list(theta_sets)
    den = p1_tilde(chain, i_lo, i_hi - 1, delta_lo, inner)
    if den <= 0.0:
        raise ZeroProbabilityError("conditioning event has probability zero")
    return p1_tilde(chain, i_lo, i_hi, delta_lo, inner + [{delta_hi}]) / den


def p3_tilde(chain: MarkovChain, i_lo: int, i_hi: int,
             theta_sets: Sequence[Iterable[int]]) -> float:
    """Unconditional probability that ``D_i`` lies in ``theta_sets[i - i_lo]`` for all
    ``i`` in ``[i_lo, i_hi]``, with ``D_0 ~ mu``."""
    if i_lo < 0 or i_hi < i_lo or len(theta_sets) != i_hi - i_lo + 1:
        raise ValueError("need 0 <= i_lo <= i_hi and one theta set per time in [i_lo, i_hi]")
    first = chain.mask(theta_sets[0])
    if i_lo == 0:
        start = chain.mu * first
    else:
        start = (chain.mu @ n_step(chain, i_lo)) * first
    if i_lo == i_hi:
        return float(start.sum())
    return float(_propagate(chain, start, theta_sets[1:]).sum())


def p4_tilde(chain: MarkovChain, i_lo: int, i_hi: int, delta_hi: int,
             theta_sets: Sequence[Iterable[int]]) -> float:
    """``P[D_{i_hi} = delta_hi | D_i in theta_i for i in [i_lo, i_hi - 1]]``."""
    if i_lo > i_hi - 1:
        raise ValueError("p4_tilde needs i_lo <= i_hi - 1")
    inner = list(theta_sets)
    den = p3_tilde(chain, i_lo, i_hi - 1, inner)
    if den <= 0.0:
        raise ZeroProbabilityError("conditioning event has probability zero")
    return p3_tilde(chain, i_lo, i_hi, inner + [{delta_hi}]) / den


@dataclass(frozen=True)
class IndexedConstraintSets:
    """Allowed-age sets for the contiguous absolute times ``lo..hi``."""

    lo: int
    hi: int
    sets: tuple

    def __post_init__(self):
        if self.hi - self.lo + 1 != len(self.sets) and not (self.hi < self.lo and not self.sets):
            raise ValueError("one set per time index is required")

    def __getitem__(self, time: int) -> frozenset:
        return self.sets[time - self.lo]

    def as_list(self) -> list:
        return list(self.sets)


MAX_ENUMERATION = 10 ** 7


def brute_force_path_probability(chain: MarkovChain, event: Mapping[int, Iterable[int]],
                                 given: Mapping[int, Iterable[int]] | None = None,
                                 start: tuple[int, int] | None = None) -> float:
    """Exact conditional probability by exhaustive path enumeration.

    Paths run over absolute times ``t0..T`` where ``T`` is the largest time
    mentioned.  Without ``start`` the path begins at time 0 with ``D_0 ~ mu``;
    with ``start = (t0, value)`` it begins deterministically there.  Returns
    ``P[event and given] / P[given]``; an impossible ``event`` gives 0.

    Raises
    ------
    ValueError
        If more than ``MAX_ENUMERATION`` paths would be enumerated.
    ZeroProbabilityError
        If ``given`` has probability zero.
    """
    given = {t: frozenset(v) for t, v in (given or {}).items()}
    event = {t: frozenset(v) for t, v in event.items()}
    t0 = start[0] if start is not None else 0
    times = list(event) + list(given)
    horizon = max(times + [t0]) - t0
    free = horizon + (0 if start is not None else 1)
    if chain.size ** free > MAX_ENUMERATION:
        raise ValueError(f"{chain.size}^{free} paths exceed the enumeration limit")
    ages = list(chain.ages)
    num = den = 0.0
    for tail in itertools.product(ages, repeat=free):
        path = ((start[1],) + tail) if start is not None else tail
        if start is None:
            w = chain.mu[chain.idx(path[0])]
        else:
            w = 1.0
        for a, b in zip(path[:-1], path[1:]):
            w *= chain.phi[chain.idx(a), chain.idx(b)]
            if w == 0.0:
                break
        if w == 0.0:
            continue
        if any(path[t - t0] not in s for t, s in given.items()):
            continue
        den += w
        if all(path[t - t0] in s for t, s in event.items()):
            num += w
    if den <= 0.0:
        raise ZeroProbabilityError("conditioning event has probability zero")
    return num / den
