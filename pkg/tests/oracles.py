"""Independent reference computations used as test oracles.

None of these call into the package: they re-derive the numbers from first
principles with plain numpy so that agreement is meaningful.
"""

import math

import numpy as np


def care_kleinman(A, B, Q, R, K0=None, iters=200, tol=1e-14):
    """One-player CARE ``A'P + PA - P B R^-1 B' P + Q = 0`` by Kleinman's Newton method.

    Each step solves a Lyapunov equation through its Kronecker form.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    n = A.shape[0]
    K = np.zeros((B.shape[1], n)) if K0 is None else np.asarray(K0, dtype=float)
    I = np.eye(n)
    P = np.zeros((n, n))
    for _ in range(iters):
        Acl = A - B @ K
        rhs = -(Q + K.T @ R @ K)
        L = np.kron(I, Acl.T) + np.kron(Acl.T, I)
        Pn = np.linalg.solve(L, rhs.reshape(-1)).reshape(n, n)
        Pn = 0.5 * (Pn + Pn.T)
        K = np.linalg.solve(R, B.T @ Pn)
        if np.linalg.norm(Pn - P) < tol * max(1.0, np.linalg.norm(Pn)):
            return Pn
        P = Pn
    return P


def lyapunov_kron(A, C):
    """``X`` with ``A X + X A' = C`` through the Kronecker form."""
    A, C = np.atleast_2d(A), np.atleast_2d(C)
    n = A.shape[0]
    I = np.eye(n)
    L = np.kron(I, A) + np.kron(A, I)
    X = np.linalg.solve(L, C.reshape(-1)).reshape(n, n)
    return 0.5 * (X + X.T)


def bass_gain(A, B, margin=1.0):
    """Stabilizing ``K`` (``A - B K`` Hurwitz) for a controllable pair by Bass's method."""
    A, B = np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_2d(np.asarray(B, dtype=float))
    beta = max(0.0, -np.linalg.eigvals(A).real.min()) + margin
    Ab = A + beta * np.eye(A.shape[0])
    Z = lyapunov_kron(Ab, 2.0 * B @ B.T)
    return B.T @ np.linalg.inv(Z)


def dare_value_iteration(A, B, Q, R, iters=200000, tol=1e-15):
    """One-player DARE by iterating the Riccati difference equation from ``Q``."""
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    P = Q.copy()
    for _ in range(iters):
        W = B.T @ P @ A
        Pn = Q + A.T @ P @ A - W.T @ np.linalg.solve(R + B.T @ P @ B, W)
        Pn = 0.5 * (Pn + Pn.T)
        if np.linalg.norm(Pn - P) < tol * max(1.0, np.linalg.norm(Pn)):
            return Pn
        P = Pn
    return P


def scalar_game_care(a, b1, b2, q, r1, r2):
    """Positive root of ``q + 2 P a - P^2 (b1^2/r1 + b2^2/r2) = 0`` by the quadratic formula."""
    s = b1 * b1 / r1 + b2 * b2 / r2
    disc = 4 * a * a + 4 * s * q
    return (2 * a + math.sqrt(disc)) / (2 * s)


def bounce_ratio(lam, r1, r2):
    """Closed-loop restitution ``-lambda + lambda (R1 + R2) / (R1 + R2 + 2 R1 R2)``."""
    return -lam + (r2 * lam + r1 * lam) / (r1 + r2 + 2 * r1 * r2)


def bounce_Q_D(lam, r1, r2):
    return (-2 * r1 * r2 * lam ** 2 + r1 + r2 + 2 * r1 * r2) / (2 * r1 + 2 * r2 + 4 * r1 * r2)


def rk4_exponential(a, x0, T, n):
    """Endpoint of RK4 on ``xdot = a x`` in closed form: ``x0 * g(a h)^n``."""
    h = T / n
    z = a * h
    g = 1 + z + z * z / 2 + z ** 3 / 6 + z ** 4 / 24
    return x0 * g ** n
