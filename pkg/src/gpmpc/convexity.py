"""Curvature analysis of the single-step covariance objective.

Tools for studying how the choice of integrator and objective shape the
optimization landscape over the impedance parameters phi = (M, D) of one
axis: the objective value/gradient for a single covariance propagation
step, the Hessian minimum-eigenvalue sweep over a force-variance grid,
and the structured sensitivity of the one-step moments to the decision
variables (the force reference moves the mean only; the impedance moves
both).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gpmpc.admittance import axis_AB, axis_AB_grads

INTEGRATORS = ("euler", "implicit", "exponential")
OBJECTIVES = ("trace", "logdet")


class DegenerateObjective(ValueError):
    """log-det requested on a singular propagated covariance."""


@dataclass(frozen=True)
class SweepSpec:
    """Grid description for the Hessian minimum-eigenvalue sweep."""

    integrators: tuple = INTEGRATORS
    objectives: tuple = OBJECTIVES
    sigma_f_grid: tuple = tuple(float(s) for s in np.logspace(-3.0, 3.0, 13))
    M: float = 1.0
    D: float = 30.0
    Ts: float = 0.01
    sigma: tuple = (1e-6, 0.0, 1e-6)  # base (s_pp, s_pv, s_vv)
    Q: tuple = (1.0, 1.0)  # diagonal state weight

    def __post_init__(self):
        if not self.integrators or not self.objectives or not len(self.sigma_f_grid):
            raise ValueError("sweep grids must be nonempty")
        for s in self.integrators:
            if s not in INTEGRATORS:
                raise ValueError(f"unknown integrator {s!r}")
        for o in self.objectives:
            if o not in OBJECTIVES:
                raise ValueError(f"unknown objective {o!r}")
        if self.M <= 0 or self.Ts <= 0:
            raise ValueError("M and Ts must be positive")


def _sigma_matrix(sigma):
    s = np.asarray(sigma, dtype=float)
    if s.shape == (2, 2):
        return s
    spp, spv, svv = s.reshape(3)
    return np.array([[spp, spv], [spv, svv]])


def propagated_cov(phi, sigma, sigma_f, Ts, integrator):
    """One-step covariance A S A^T + sigma_f b b^T for a single axis."""
    A, b = axis_AB(float(phi[0]), float(phi[1]), Ts, integrator)
    return A @ _sigma_matrix(sigma) @ A.T + sigma_f * np.outer(b, b)


def single_step_objective(phi, sigma, sigma_f, Q, integrator, objective, Ts=0.01) -> float:
    """Tr(Q S+) or ln det(Q S+) of one covariance propagation step.

    The trace form is identical to the Kronecker-vectorized expression
    vec(Q)^T ((A (x) A) vec(S) + sigma_f (b (x) b)).
    """
    Sp = propagated_cov(phi, sigma, sigma_f, Ts, integrator)
    Qm = np.diag(np.asarray(Q, dtype=float).reshape(2))
    if objective == "trace":
        return float(np.trace(Qm @ Sp))
    if objective == "logdet":
        det = np.linalg.det(Qm @ Sp)
        if det <= 0:
            raise DegenerateObjective("Q S+ is singular; logdet undefined")
        return float(np.log(det))
    raise ValueError(f"unknown objective {objective!r}")


def single_step_objective_kron(phi, sigma, sigma_f, Q, integrator, Ts=0.01) -> float:
    """Trace objective through the vectorized covariance update."""
    A, b = axis_AB(float(phi[0]), float(phi[1]), Ts, integrator)
    vec_q = np.diag(np.asarray(Q, dtype=float).reshape(2)).reshape(-1)
    vec_s = _sigma_matrix(sigma).reshape(-1)
    return float(vec_q @ (np.kron(A, A) @ vec_s + sigma_f * np.kron(b, b)))


def _cov_partials(phi, sigma, sigma_f, Ts, integrator):
    """d S+ / dM and d S+ / dD as 2x2 matrices."""
    M, D = float(phi[0]), float(phi[1])
    A, b = axis_AB(M, D, Ts, integrator)
    (da_dm, da_dd), (db_dm, _), _ = axis_AB_grads(M, D, Ts, integrator)
    S = _sigma_matrix(sigma)
    dA_m = np.array([[0.0, 0.0], [0.0, da_dm]])
    dA_d = np.array([[0.0, 0.0], [0.0, da_dd]])
    db_m = np.array([0.0, db_dm])
    dS_m = dA_m @ S @ A.T + A @ S @ dA_m.T + sigma_f * (np.outer(db_m, b) + np.outer(b, db_m))
    dS_d = dA_d @ S @ A.T + A @ S @ dA_d.T
    return dS_m, dS_d


def single_step_gradient(phi, sigma, sigma_f, Q, integrator, objective, Ts=0.01):
    """Analytic d(objective)/d(M, D), shape (2,)."""
    Sp = propagated_cov(phi, sigma, sigma_f, Ts, integrator)
    Qm = np.diag(np.asarray(Q, dtype=float).reshape(2))
    dS_m, dS_d = _cov_partials(phi, sigma, sigma_f, Ts, integrator)
    if objective == "trace":
        return np.array([np.trace(Qm @ dS_m), np.trace(Qm @ dS_d)])
    if objective == "logdet":
        if np.linalg.det(Qm @ Sp) <= 0:
            raise DegenerateObjective("Q S+ is singular; logdet undefined")
        Si = np.linalg.inv(Sp)
        return np.array([np.trace(Si @ dS_m), np.trace(Si @ dS_d)])
    raise ValueError(f"unknown objective {objective!r}")


def hessian_min_eig(spec: SweepSpec):
    """Minimum Hessian eigenvalue per (integrator, objective, sigma_f).

    The Hessian w.r.t. phi = (M, D) is built by central finite
    differences of the analytic gradient, symmetrized before the
    eigenvalue solve. Returns a list of dict rows in grid order.
    """
    rows = []
    phi0 = np.array([spec.M, spec.D])
    steps = np.array([1e-5 * max(1.0, spec.M), 1e-4 * max(1.0, spec.D)])
    for integ in spec.integrators:
        for obj in spec.objectives:
            for sf in spec.sigma_f_grid:
                H = np.zeros((2, 2))
                for i in range(2):
                    dp = np.zeros(2)
                    dp[i] = steps[i]
                    gp = single_step_gradient(phi0 + dp, spec.sigma, sf, spec.Q, integ, obj, spec.Ts)
                    gm = single_step_gradient(phi0 - dp, spec.sigma, sf, spec.Q, integ, obj, spec.Ts)
                    H[:, i] = (gp - gm) / (2 * steps[i])
                H = 0.5 * (H + H.T)
                rows.append(
                    {
                        "integrator": integ,
                        "objective": obj,
                        "sigma_f": float(sf),
                        "min_eig": float(np.min(np.linalg.eigvalsh(H))),
                    }
                )
    return rows


@dataclass(frozen=True)
class SensitivityReport:
    """One-step moment sensitivities for a single axis.

    dmu_dfr: (2,) effect of the force reference on the next mean
    dmu_dphi: (2, 2) effect of (M, D) on the next mean
    dsigma_dfr: (3,) effect of f^r on the packed next covariance — zero
    dsigma_dphi: (3, 2) effect of (M, D) on the packed next covariance
    """

    dmu_dfr: np.ndarray
    dmu_dphi: np.ndarray
    dsigma_dfr: np.ndarray
    dsigma_dphi: np.ndarray


def impedance_vs_trajectory_differential(
    phi, mu, sigma, f_mean, f_var, f_ref=0.0, Ts=0.01, integrator="implicit"
) -> SensitivityReport:
    """Structured one-step sensitivities to (f^r, M, D).

    The covariance column for f^r is a structural zero: the update
    A S A^T + sigma_f b b^T contains no f^r term, so shaping uncertainty
    is the impedance's job alone.
    """
    M, D = float(phi[0]), float(phi[1])
    mu = np.asarray(mu, dtype=float).reshape(2)
    A, b = axis_AB(M, D, Ts, integrator)
    (da_dm, da_dd), (db_dm, _), _ = axis_AB_grads(M, D, Ts, integrator)
    net = float(f_mean) - float(f_ref)
    dmu_dfr = np.array([0.0, -b[1]])
    dmu_dphi = np.array(
        [
            [0.0, 0.0],
            [da_dm * mu[1] + db_dm * net, da_dd * mu[1]],
        ]
    )
    dS_m, dS_d = _cov_partials(phi, sigma, float(f_var), Ts, integrator)
    pack = lambda S: np.array([S[0, 0], S[0, 1], S[1, 1]])
    return SensitivityReport(
        dmu_dfr=dmu_dfr,
        dmu_dphi=dmu_dphi,
        dsigma_dfr=np.zeros(3),
        dsigma_dphi=np.column_stack([pack(dS_m), pack(dS_d)]),
    )


def sweep_to_csv_rows(rows):
    """Flatten hessian_min_eig output to (header, line tuples) for CSV."""
    header = ("integrator", "objective", "sigma_f", "min_eig")
    return header, [
        (r["integrator"], r["objective"], repr(r["sigma_f"]), repr(r["min_eig"])) for r in rows
    ]
