"""Discrete admittance dynamics and Gaussian state propagation.

The rendered admittance is diagonal per axis, so the 12-state system
decomposes into six independent position/velocity pairs. Three integrator
schemes are provided for the velocity decay; the position row and input
gain are shared. Covariance propagates in matrix form or through the
Kronecker-vectorized update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_AX = 6
N_STATE = 12

SCHEMES = ("euler", "implicit", "exponential")


@dataclass(frozen=True)
class ImpedanceParams:
    """Diagonal virtual inertia/damping (optional stiffness) of the admittance."""

    M: np.ndarray  # (6,) > 0
    D: np.ndarray  # (6,) >= 0
    K: np.ndarray | None = None  # (6,) >= 0, continuous model only

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        D = np.asarray(self.D, dtype=float)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "D", D)
        if M.shape != (N_AX,) or D.shape != (N_AX,):
            raise ValueError("M and D must have shape (6,)")
        if not np.all(M > 0):
            raise ValueError("M must be strictly positive")
        if not np.all(D >= 0):
            raise ValueError("D must be nonnegative")
        if self.K is not None:
            K = np.asarray(self.K, dtype=float)
            object.__setattr__(self, "K", K)
            if K.shape != (N_AX,) or not np.all(K >= 0):
                raise ValueError("K must be nonnegative with shape (6,)")


@dataclass
class StateDist:
    """Gaussian state distribution: mean (pose; velocity) and covariance."""

    mean: np.ndarray  # (12,)
    cov: np.ndarray  # (12, 12)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(N_STATE)
        self.cov = np.asarray(self.cov, dtype=float).reshape(N_STATE, N_STATE)

    def validate(self, sym_tol=1e-12, eig_tol=-1e-10):
        if not np.allclose(self.cov, self.cov.T, atol=sym_tol):
            raise ValueError("covariance not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))) < eig_tol:
            raise ValueError("covariance not PSD")


@dataclass(frozen=True)
class DiscreteDynamics:
    """One-step linear dynamics xi+ = A xi + B (f - f_r)."""

    A: np.ndarray  # (12, 12)
    B: np.ndarray  # (12, 6)
    Ts: float
    scheme: str


def velocity_decay(phi: ImpedanceParams, Ts: float, scheme: str) -> np.ndarray:
    """Per-axis velocity decay factor of the chosen integrator."""
    r = Ts * phi.D / phi.M
    if scheme == "implicit":
        return phi.M / (phi.M + Ts * phi.D)
    if scheme == "euler":
        return 1.0 - r
    if scheme == "exponential":
        return np.exp(-r)
    raise ValueError(f"unknown scheme {scheme!r}")


def discretize(phi: ImpedanceParams, Ts: float, scheme: str = "implicit") -> DiscreteDynamics:
    """Build the 12-state discrete dynamics for diagonal impedance."""
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    decay = velocity_decay(phi, Ts, scheme)
    A = np.zeros((N_STATE, N_STATE))
    A[:N_AX, :N_AX] = np.eye(N_AX)
    A[:N_AX, N_AX:] = Ts * np.eye(N_AX)
    A[N_AX:, N_AX:] = np.diag(decay)
    B = np.zeros((N_STATE, N_AX))
    B[N_AX:, :] = np.diag(Ts / phi.M)
    return DiscreteDynamics(A=A, B=B, Ts=Ts, scheme=scheme)


def euler_oscillation_check(phi: ImpedanceParams, Ts: float) -> np.ndarray:
    """True per axis where the explicit Euler decay goes negative."""
    return (1.0 - Ts * phi.D / phi.M) < 0


def propagate_mean(dyn: DiscreteDynamics, mean, f_mean, f_ref) -> np.ndarray:
    """mu+ = A mu + B (mu_f - f_r)."""
    mean = np.asarray(mean, dtype=float)
    net = np.asarray(f_mean, dtype=float) - np.asarray(f_ref, dtype=float)
    return dyn.A @ mean + dyn.B @ net


def propagate_cov(dyn: DiscreteDynamics, cov, f_var) -> np.ndarray:
    """Sigma+ = A Sigma A^T + B Sigma_f B^T, symmetrized against drift."""
    cov = np.asarray(cov, dtype=float)
    Sf = np.diag(np.asarray(f_var, dtype=float))
    out = dyn.A @ cov @ dyn.A.T + dyn.B @ Sf @ dyn.B.T
    return 0.5 * (out + out.T)


def propagate_cov_vec(dyn: DiscreteDynamics, cov_vec, f_var) -> np.ndarray:
    """Kronecker-vectorized covariance update on vec(Sigma)."""
    sf = np.diag(np.asarray(f_var, dtype=float)).reshape(-1)
    AA = np.kron(dyn.A, dyn.A)
    BB = np.kron(dyn.B, dyn.B)
    return AA @ np.asarray(cov_vec, dtype=float) + BB @ sf


def rollout(dyns, init: StateDist, force_model, f_refs, horizon: int):
    """Iterate mean/covariance propagation with the GP evaluated at the mean.

    dyns may be a single DiscreteDynamics or a per-step sequence; f_refs is
    (H, 6). Returns a list of H+1 StateDist starting with the initial one.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    f_refs = np.atleast_2d(np.asarray(f_refs, dtype=float))
    states = [StateDist(mean=init.mean.copy(), cov=init.cov.copy())]
    for k in range(horizon):
        dyn = dyns[k] if isinstance(dyns, (list, tuple)) else dyns
        cur = states[-1]
        f_mean, f_var = force_model.posterior(cur.mean[:N_AX])
        mean_next = propagate_mean(dyn, cur.mean, f_mean, f_refs[k])
        cov_next = propagate_cov(dyn, cur.cov, f_var)
        states.append(StateDist(mean=mean_next, cov=cov_next))
    return states


# Per-axis 2x2 helpers used by the MPC transcription, which exploits the
# block-diagonal structure (diagonal impedance, diagonal force covariance).


def axis_AB(m: float, d: float, Ts: float, scheme: str = "implicit"):
    """2x2 A and 2-vector B for one axis."""
    if scheme == "implicit":
        a = m / (m + Ts * d)
    elif scheme == "euler":
        a = 1.0 - Ts * d / m
    elif scheme == "exponential":
        a = np.exp(-Ts * d / m)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    A = np.array([[1.0, Ts], [0.0, a]])
    B = np.array([0.0, Ts / m])
    return A, B


def axis_AB_grads(m: float, d: float, Ts: float, scheme: str = "implicit"):
    """Partials of the axis decay a and input gain b w.r.t. (m, d)."""
    b = Ts / m
    db_dm, db_dd = -Ts / m**2, 0.0
    if scheme == "implicit":
        s = m + Ts * d
        da_dm = Ts * d / s**2
        da_dd = -Ts * m / s**2
    elif scheme == "euler":
        da_dm = Ts * d / m**2
        da_dd = -Ts / m
    elif scheme == "exponential":
        e = np.exp(-Ts * d / m)
        da_dm = e * Ts * d / m**2
        da_dd = -e * Ts / m
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return (da_dm, da_dd), (db_dm, db_dd), b
