"""Prediction of future states and inputs as affine maps of (x_hat, u_hat).

Index conventions
-----------------
``x_hat = [x_{k-H~}; u~_{k-1}; ...; u~_{k-d_max-h_max}]`` (length ``n_hat``) and
``u_hat = [u^(N-1); ...; u^(d_min)]`` (length ``m_hat``).  A scenario
``dvec`` lists the ages ``d_{k+j}`` for ``j = -H~ .. d_max-1``, so
``dvec[j + H~] = d_{k+j}``.
"""
from __future__ import annotations


import numpy as np

from .tracker import h_hat_value


class Predictor:
    """Prediction matrices for one problem and its LQR gain."""

    def __init__(self, problem, lqr):
        self.p = problem
        self.L = np.asarray(lqr.L)
        self.P = np.asarray(lqr.P)
        A, B = problem.plant.A, problem.plant.B
        self.A, self.B = A, B
        self.Acl = A - B @ self.L
        top = problem.N_hat + problem.h_max + problem.d_max + 2
        self._Apow = [np.eye(problem.n)]
        self._Acl_pow = [np.eye(problem.n)]
        for _ in range(top):
            self._Apow.append(self._Apow[-1] @ A)
            self._Acl_pow.append(self._Acl_pow[-1] @ self.Acl)
        self._cache: dict = {}

    # -- sizes ---------------------------------------------------------------
    @property
    def n_hat(self) -> int:
        return self.p.n_hat

    @property
    def m_hat(self) -> int:
        return self.p.m_hat

    def Apow(self, e: int) -> np.ndarray:
        return self._Apow[e]

    def Aclpow(self, e: int) -> np.ndarray:
        return self._Acl_pow[e]

    # -- selection matrices ----------------------------------------------------
    def T_hat(self, i: int) -> np.ndarray:
        """Selects ``u^(i)`` from ``u_hat``."""
        p = self.p
        if not p.d_min <= i <= p.N - 1:
            raise IndexError(f"T_hat index {i} outside [{p.d_min}, {p.N - 1}]")
        T = np.zeros((p.m, self.m_hat))
        off = (p.N - 1 - i) * p.m
        T[:, off:off + p.m] = np.eye(p.m)
        return T

    def T_tilde(self, i: int, d: int) -> np.ndarray:
        """``T_hat(i)`` if the input at ``k+i`` comes from the plan, else zero."""
        self._check_age(d)
        if d <= i:
            return self.T_hat(i)
        return np.zeros((self.p.m, self.m_hat))

    def T_bar(self, i: int, d: int) -> np.ndarray:
        """Selects ``u~_{k+i-d}^{(d)}`` from ``x_hat`` when that packet predates ``k``."""
        self._check_age(d)
        p = self.p
        T = np.zeros((p.m, self.n_hat))
        if d <= i:
            return T
        lag = d - i  # packet u~_{k-lag}
        if lag > p.d_max + p.h_max:
            raise IndexError(f"packet u~_(k-{lag}) is not part of the extended state")
        off = p.n + (lag - 1) * p.m_tilde + (p.d_max - d) * p.m
        T[:, off:off + p.m] = np.eye(p.m)
        return T

    def _check_age(self, d):
        if not self.p.d_min <= d <= self.p.d_max:
            raise IndexError(f"age {d} outside [{self.p.d_min}, {self.p.d_max}]")

    # -- per-scenario predictions ----------------------------------------------
    def scenario(self, h_tilde: int, dvec: tuple):
        """Cached ``(Ahat, Bhat, Au, Bu)`` lists for one scenario.

        ``Ahat[i + H~]``/``Bhat[i + H~]`` map to ``x_{k+i}`` for ``-H~ <= i <= N``;
        ``Au[i + H~]``/``Bu[i + H~]`` map to ``u_{k+i}`` for ``-H~ <= i <= N-1``.
        """
        key = (h_tilde, tuple(dvec))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p = self.p
        if len(dvec) != h_tilde + p.d_max:
            raise ValueError(f"scenario length {len(dvec)} != H~ + d_max = {h_tilde + p.d_max}")
        Au, Bu = [], []
        for i in range(-h_tilde, p.N):
            if i <= p.d_max - 1:
                d = dvec[i + h_tilde]
                Au.append(self.T_bar(i, d))
                Bu.append(self.T_tilde(i, d))
            else:
                Au.append(np.zeros((p.m, self.n_hat)))
                Bu.append(self.T_hat(i))
        Ah, Bh = [], []
        x_A = np.zeros((p.n, self.n_hat))
        x_A[:, :p.n] = np.eye(p.n)
        x_B = np.zeros((p.n, self.m_hat))
        for i in range(-h_tilde, p.N + 1):
            Ah.append(x_A)
            Bh.append(x_B)
            if i < p.N:
                j = i + h_tilde
                x_A = self.A @ x_A + self.B @ Au[j]
                x_B = self.A @ x_B + self.B @ Bu[j]
        out = (Ah, Bh, Au, Bu)
        self._cache[key] = out
        return out

    def prediction_matrices(self, i: int, h_tilde: int, dvec):
        """``(Ahat, Bhat, Au, Bu)`` at step ``i`` (input matrices are ``None`` for ``i = N``).

        Built by the explicit sums over selection matrices, independently of
        the recursive construction in `scenario`.
        """
        p = self.p
        if not -h_tilde <= i <= p.N:
            raise IndexError("prediction index out of range")
        Ahat = np.zeros((p.n, self.n_hat))
        Ahat[:, :p.n] = self.Apow(i + h_tilde)
        Bhat = np.zeros((p.n, self.m_hat))
        for j in range(p.d_max, i):
            Bhat += self.Apow(i - 1 - j) @ self.B @ self.T_hat(j)
        for j in range(-h_tilde, min(i, p.d_max)):
            d = dvec[j + h_tilde]
            G = self.Apow(i - 1 - j) @ self.B
            Ahat += G @ self.T_bar(j, d)
            Bhat += G @ self.T_tilde(j, d)
        if i == p.N:
            return Ahat, Bhat, None, None
        if i <= p.d_max - 1:
            d = dvec[i + h_tilde]
            return Ahat, Bhat, self.T_bar(i, d), self.T_tilde(i, d)
        return Ahat, Bhat, np.zeros((p.m, self.n_hat)), self.T_hat(i)

    # -- tail law ----------------------------------------------------------------
    def h_hat(self, h_tilde: int, i: int) -> int:
        p = self.p
        return h_hat_value(h_tilde, i, p.N, p.h_max, p.s_max)

    def kappa_gain_matrices(self, i: int, h_tilde: int, d_real, d_hyp):
        """``(L_x, L_u)`` in ``kappa_bar^(i)(d_hyp) = -L x_{k+i} + L_x x_hat + L_u u_hat``
        when the true ages are ``d_real``."""
        p = self.p
        Lx = np.zeros((p.m, self.n_hat))
        Lu = np.zeros((p.m, self.m_hat))
        for j in range(-self.h_hat(h_tilde, i), p.d_max):
            a, b = d_real[j + h_tilde], d_hyp[j + h_tilde]
            if a == b:
                continue
            G = self.L @ self.Apow(i - 1 - j) @ self.B
            Lx += G @ (self.T_bar(j, a) - self.T_bar(j, b))
            Lu += G @ (self.T_tilde(j, a) - self.T_tilde(j, b))
        return Lx, Lu

    def relevant_window(self, h_tilde: int, i: int) -> range:
        """Offsets ``j`` whose ages enter the tail-law correction at step ``i``."""
        return range(-self.h_hat(h_tilde, i), self.p.d_max)
