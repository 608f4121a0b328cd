"""Plant, network bounds and controller weights bundled into one problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov import MarkovChain, validate


class ConfigError(ValueError):
    """A problem definition violates a structural requirement."""


def box(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``M z <= n`` for ``lo <= z <= hi``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    eye = np.eye(lo.size)
    return np.vstack([eye, -eye]), np.concatenate([hi, -lo])


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    Mx: np.ndarray
    nx: np.ndarray
    Mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "Mx", "nx", "Mu", "nu"):
            arr = np.array(getattr(self, name), dtype=float)
            if name in ("A", "B", "Mx", "Mu") and arr.ndim != 2:
                arr = np.atleast_2d(arr)
            if name in ("nx", "nu"):
                arr = arr.reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m = self.B.shape
        if self.A.shape != (n, n):
            raise ConfigError(f"A must be {n}x{n}")
        if self.Mx.shape[1] != n or self.Mx.shape[0] != self.nx.size:
            raise ConfigError("state constraint rows do not match the state dimension")
        if self.Mu.shape[1] != m or self.Mu.shape[0] != self.nu.size:
            raise ConfigError("input constraint rows do not match the input dimension")
        if np.any(self.nx <= 0) or np.any(self.nu <= 0):
            raise ConfigError("the origin must be an interior point of both constraint sets")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def state_ok(self, x, tol: float = 1e-8) -> bool:
        return bool(np.all(self.Mx @ x <= self.nx + tol))

    def input_ok(self, u, tol: float = 1e-8) -> bool:
        return bool(np.all(self.Mu @ u <= self.nu + tol))


def _stabilizable(A, B, tol=1e-9) -> bool:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            if np.linalg.matrix_rank(np.hstack([A - lam * np.eye(n), B]), tol=1e-8) < n:
                return False
    return True


def _detectable(A, C, tol=1e-9) -> bool:
    return _stabilizable(A.T, C.T, tol)


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything needed to synthesise and run the networked controller.

    ``h_bounds`` and ``s_bounds`` are the age bounds of the sensor-to-controller
    and actuator-to-controller channels; the controller-to-actuator channel is
    described by ``chain``.
    """

    plant: PlantModel
    chain: MarkovChain
    h_bounds: tuple[int, int]
    s_bounds: tuple[int, int]
    N: int
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        R = np.array(self.R, dtype=float)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "h_bounds", tuple(int(v) for v in self.h_bounds))
        object.__setattr__(self, "s_bounds", tuple(int(v) for v in self.s_bounds))
        n, m = self.plant.n, self.plant.m
        if Q.shape != (n, n) or R.shape != (m, m):
            raise ConfigError("Q and R dimensions do not match the plant")
        if not np.allclose(Q, Q.T) or not np.allclose(R, R.T):
            raise ConfigError("Q and R must be symmetric")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ConfigError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ConfigError("Q must be positive semidefinite")
        h_min, h_max = self.h_bounds
        s_min, s_max = self.s_bounds
        if not 0 <= h_min <= h_max:
            raise ConfigError("need 0 <= h_min <= h_max")
        if not 1 <= s_min <= s_max:
            raise ConfigError("need 1 <= s_min <= s_max (acknowledgments cannot arrive in the step they describe)")
        if self.N < self.d_max + 1:
            raise ConfigError(f"horizon N={self.N} must be at least d_max + 1 = {self.d_max + 1}")
        if not _stabilizable(self.plant.A, self.plant.B):
            raise ConfigError("(A, B) is not stabilizable")
        w, V = np.linalg.eigh(Q)
        C = (V * np.sqrt(np.clip(w, 0, None))).T
        if not _detectable(self.plant.A, C):
            raise ConfigError("(A, C) with Q = C^T C is not detectable")

    # network bounds
    @property
    def d_min(self) -> int:
        return self.chain.d_min

    @property
    def d_max(self) -> int:
        return self.chain.d_max

    @property
    def h_min(self) -> int:
        return self.h_bounds[0]

    @property
    def h_max(self) -> int:
        return self.h_bounds[1]

    @property
    def s_min(self) -> int:
        return self.s_bounds[0]

    @property
    def s_max(self) -> int:
        return self.s_bounds[1]

    # derived dimensions
    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def m(self) -> int:
        return self.plant.m

    @property
    def m_tilde(self) -> int:
        return (self.d_max - self.d_min + 1) * self.m

    @property
    def n_hat(self) -> int:
        return self.n + self.m_tilde * (self.d_max + self.h_max)

    @property
    def m_hat(self) -> int:
        return self.m * (self.N - self.d_min)

    @property
    def N_hat(self) -> int:
        return n_hat_horizon(self.d_max, self.N, self.h_max, self.s_max)

    @property
    def h_tilde_range(self) -> range:
        return range(min(self.h_min, self.s_min - 1), self.h_max + 1)


def n_hat_horizon(d_max: int, N: int, h_max: int, s_max: int) -> int:
    """Prediction step from which the tail law equals plain LQR feedback."""
    if N <= d_max:
        raise ConfigError(f"N={N} must satisfy N >= d_max + 1")
    return d_max + N - 1 + min(h_max, s_max - 1)


def benchmark_problem(N: int = 10) -> Problem:
    """Third-order plant with two inputs used throughout the tests and demos."""
    A = [[0.8, 0.5, 0.0], [0.0, -1.2, 0.2], [0.0, 0.0, 0.2]]
    B = [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]
    Mx, nx = box([-10, -5, -10], [10, 5, 10])
    Mu, nu = box([-2, -5], [2, 5])
    chain = validate([0.2, 0.4, 0.4],
                     [[0.4, 0.6, 0.0], [0.4, 0.4, 0.2], [0.2, 0.4, 0.4]], 0, 2)
    return Problem(PlantModel(A, B, Mx, nx, Mu, nu), chain, (0, 1), (1, 3), N,
                   np.diag([10.0, 100.0, 1.0]), np.eye(2))


BENCHMARK_X0 = np.array([-4.5, -2.6, -7.0])
