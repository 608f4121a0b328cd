"""Infinite-horizon LQR data from the discrete algebraic Riccati equation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RiccatiError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LQRData:
    P: np.ndarray
    L: np.ndarray

    def closed_loop(self, A, B) -> np.ndarray:
        return np.asarray(A) - np.asarray(B) @ self.L


def riccati_residual(P, A, B, Q, R) -> float:
    BtPA = B.T @ P @ A
    res = P - Q - A.T @ P @ A + BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
    return float(np.max(np.abs(res)))


def gain(P, A, B, R) -> np.ndarray:
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def _sym(M):
    return 0.5 * (M + M.T)


def solve_dare(A, B, Q, R, tol: float = 1e-12, max_iter: int = 10_000) -> LQRData:
    """Stabilising DARE solution by the structure-preserving doubling algorithm.

    Raises
    ------
    RiccatiError
        If the iteration does not converge or the result fails the residual
        or stability checks.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    Ak = A.copy()
    G = B @ np.linalg.solve(R, B.T)
    H = Q.copy()
    eye = np.eye(n)
    for _ in range(max_iter):
        W = eye + G @ H
        AW = Ak @ np.linalg.inv(W)
        H_next = _sym(H + Ak.T @ H @ np.linalg.solve(W, Ak))
        G = _sym(G + AW @ G @ Ak.T)
        Ak = AW @ Ak
        done = np.max(np.abs(H_next - H)) <= tol * max(1.0, np.max(np.abs(H_next)))
        H = H_next
        if done:
            break
    else:
        raise RiccatiError(f"doubling did not converge; residual {riccati_residual(H, A, B, Q, R):.3e}")
    return _finish(H, A, B, Q, R)


def solve_dare_iterative(A, B, Q, R, tol: float = 1e-13, max_iter: int = 100_000) -> LQRData:
    """Same equation by plain value iteration from ``P = Q`` (slow cross-check)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        P_next = _sym(Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA))
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P_next))):
            return _finish(P_next, A, B, Q, R)
        P = P_next
    raise RiccatiError(f"value iteration did not converge; residual {riccati_residual(P, A, B, Q, R):.3e}")


def _finish(P, A, B, Q, R) -> LQRData:
    res = riccati_residual(P, A, B, Q, R)
    if res > 1e-9 * max(1.0, np.max(np.abs(P))):
        raise RiccatiError(f"DARE residual {res:.3e} too large")
    L = gain(P, A, B, R)
    rho = max(abs(np.linalg.eigvals(A - B @ L)))
    if rho >= 1.0:
        raise RiccatiError(f"closed loop not stable (spectral radius {rho:.6f})")
    P.setflags(write=False)
    L.setflags(write=False)
    return LQRData(P, L)
