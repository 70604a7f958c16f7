"""Lyapunov solve and frequency-domain disturbance cost.

The disturbance force is modeled as a high-pass filter alpha*s/(s + w_p);
its positional effect through the admittance A(s) = (M s^2 + D s + K)^-1
has a squared H2 norm computable from the observability gramian of a
minimal state-space realization. Systems here have at most 3 states, so
the Lyapunov equation is solved by a direct vectorized linear solve.
"""

from __future__ import annotations

import numpy as np


class NotHurwitz(ValueError):
    """System matrix has an eigenvalue with nonnegative real part."""


def lyapunov_solve(A, Q):
    """Solve A^T X + X A + Q = 0 for symmetric X.

    A must be Hurwitz; Q symmetric PSD gives symmetric PSD X.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise NotHurwitz("A is not Hurwitz (zero damping with zero stiffness?)")
    I = np.eye(n)
    # vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X)
    L = np.kron(I, A.T) + np.kron(A.T, I)
    X = np.linalg.solve(L, -Q.reshape(-1)).reshape(n, n)
    return 0.5 * (X + X.T)


def _realization(M, D, K, alpha, omega_p):
    """Companion-form realization of alpha*s / ((s+w_p)(M s^2 + D s + K)).

    With K = 0 the pole at the origin cancels the numerator zero, leaving
    the 2-state realization of (alpha/M) / ((s+w_p)(s + D/M)).
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if omega_p <= 0:
        raise ValueError("omega_p must be positive")
    if K == 0:
        a1 = omega_p + D / M
        a0 = omega_p * D / M
        A = np.array([[0.0, 1.0], [-a0, -a1]])
        B = np.array([0.0, 1.0])
        C = np.array([alpha / M, 0.0])
    else:
        a2 = omega_p + D / M
        a1 = K / M + omega_p * D / M
        a0 = omega_p * K / M
        A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-a0, -a1, -a2]])
        B = np.array([0.0, 0.0, 1.0])
        C = np.array([0.0, alpha / M, 0.0])
    return A, B, C


def h2_disturbance_cost(M, D, K, alpha, omega_p) -> float:
    """Squared H2 norm of the disturbance-to-position map for one axis."""
    if alpha == 0:
        return 0.0
    A, B, C = _realization(M, D, K, alpha, omega_p)
    X = lyapunov_solve(A, np.outer(C, C))
    return float(B @ X @ B)


def h2_disturbance_cost_grad(M, D, K, alpha, omega_p):
    """Value and gradient of the H2 cost w.r.t. (M, D, K).

    Uses the differentiated Lyapunov equation: with X solving
    A^T X + X A + C^T C = 0, the sensitivity dX solves the same equation
    with right-hand side dA^T X + X dA + d(C^T C).
    """
    if alpha == 0:
        return 0.0, np.zeros(3)
    A, B, C = _realization(M, D, K, alpha, omega_p)
    X = lyapunov_solve(A, np.outer(C, C))
    val = float(B @ X @ B)
    grads = np.zeros(3)
    # dA/dtheta and dC/dtheta for theta in (M, D, K), from the companion
    # coefficients a_i(M, D, K) and output gain alpha/M.
    if K == 0:
        dA = {
            "M": np.array([[0.0, 0.0], [omega_p * D / M**2, D / M**2]]),
            "D": np.array([[0.0, 0.0], [-omega_p / M, -1.0 / M]]),
            "K": np.zeros((2, 2)),
        }
        dC = {
            "M": np.array([-alpha / M**2, 0.0]),
            "D": np.zeros(2),
            "K": np.zeros(2),
        }
    else:
        dA = {
            "M": np.array(
                [
                    [0.0, 0.0, 0.0],
                    [0.0, 0.0, 0.0],
                    [omega_p * K / M**2, (K + omega_p * D) / M**2, D / M**2],
                ]
            ),
            "D": np.array(
                [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -omega_p / M, -1.0 / M]]
            ),
            "K": np.array(
                [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-omega_p / M, -1.0 / M, 0.0]]
            ),
        }
        dC = {
            "M": np.array([0.0, -alpha / M**2, 0.0]),
            "D": np.zeros(3),
            "K": np.zeros(3),
        }
    for j, key in enumerate(("M", "D", "K")):
        rhs = dA[key].T @ X + X @ dA[key] + np.outer(dC[key], C) + np.outer(C, dC[key])
        dX = lyapunov_solve(A, rhs)
        grads[j] = float(B @ dX @ B)
    return val, grads


def h2_frequency_integral(M, D, K, alpha, omega_p, w_lo=1e-2, w_hi=1e5, n=20000) -> float:
    """Numerical frequency-domain oracle for the squared H2 norm.

    Trapezoid rule over a log grid of (1/pi) * integral |G(jw)|^2 dw.
    """
    w = np.logspace(np.log10(w_lo), np.log10(w_hi), n)
    s = 1j * w
    G = (alpha * s / (s + omega_p)) / (M * s**2 + D * s + K)
    mag2 = np.abs(G) ** 2
    return float(np.trapezoid(mag2, w) / np.pi)
