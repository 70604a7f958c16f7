"""Belief-weighted stochastic MPC over force references and impedance.

The planner transcribes an H-step multiple-shooting problem per human
mode: shooting nodes carry the per-axis position/velocity mean and the
2x2 covariance entries, continuity is enforced as slack-bounded defect
constraints with a quadratic penalty backup, and a single impedance
delta (dM, dD) is shared across the horizon. Force means/variances come
from the per-mode GPs evaluated at the node mean poses, which keeps every
derivative analytic; the solver is a trust-region interior method with
hand-coded gradients and Jacobians.

Only the axes listed in ``active_axes`` are planned; the rest keep their
current impedance and a zero force reference.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import BFGS, Bounds, NonlinearConstraint, minimize
from scipy.special import erfinv

from gpmpc.admittance import N_AX, N_STATE, ImpedanceParams, StateDist, axis_AB, axis_AB_grads
from gpmpc.human_arm import ArmGeometry, UnreachableTarget, ik_simplified, jacobian
from gpmpc.lyap import h2_disturbance_cost, h2_disturbance_cost_grad
from gpmpc.mode_belief import Belief


def _vec6(v, name):
    out = np.asarray(v, dtype=float)
    if out.ndim == 0:
        out = np.full(N_AX, float(out))
    if out.shape != (N_AX,):
        raise ValueError(f"{name} must be a scalar or length-6 vector")
    return out


@dataclass
class MpcConfig:
    """Tuning knobs and feature flags for one planner instance."""

    H: int = 10
    Ts: float = 0.05
    scheme: str = "implicit"
    active_axes: tuple = (0, 1, 2)

    # Stage-cost weights (per axis unless noted).
    q_mu_p: np.ndarray = 0.0  # position mean deviation from x_ref
    q_mu_v: np.ndarray = 0.0  # velocity mean
    x_ref: np.ndarray = 0.0
    q_sigma_p: np.ndarray = 0.0  # position variance
    q_sigma_v: np.ndarray = 0.0  # velocity variance
    q_f: np.ndarray = 0.0  # force mean (or mean + f^r with the offset flag)
    q_sigma_f: np.ndarray = 0.0  # force variance
    q_u_f: np.ndarray = 1e-6  # force-reference effort
    q_dM: float = 1e-4
    q_dD: float = 1e-6
    q_fref: np.ndarray = 0.0  # pull f^r toward f_ref_target
    f_ref_target: np.ndarray = 0.0
    q_tau: np.ndarray = field(default_factory=lambda: np.zeros(4))  # joint torques

    # Continuity handling.
    slack: float = 1e-6
    defect_penalty: float = 1e6

    # Decision-variable boxes.
    fr_min: np.ndarray = -60.0
    fr_max: np.ndarray = 60.0
    dM_max: float = 2.0
    dD_max: float = 1500.0
    M_floor: np.ndarray = 1.0
    M_ceil: np.ndarray = 40.0
    D_floor: np.ndarray = 10.0
    D_ceil: np.ndarray = 4000.0

    # Constraint parameters.
    f_bar: float = 12.0
    eps: float = 0.5
    chance_sign: np.ndarray = 0.0  # per-axis sign s; constraint acts on s*f
    strict_quantile: bool = False
    zeta: float = 1.2

    # Disturbance-shaping cost.
    alpha: float = 1.0
    omega_p: float = 10.0
    w_dist: float = 0.0

    # Feature flags.
    chance_constraint: bool = False
    well_damped: bool = False
    disturbance_cost: bool = False
    ergonomic_cost: bool = False
    force_ref_offset_cost: bool = False

    arm: ArmGeometry | None = None

    # Solver settings.
    max_iter: int = 200
    gtol: float = 1e-4
    feas_tol: float = 1e-6
    verbose: int = 0

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("horizon must be >= 1")
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if self.slack < 0 or self.defect_penalty < 0:
            raise ValueError("slack and defect penalty must be nonnegative")
        self.active_axes = tuple(int(a) for a in self.active_axes)
        if len(self.active_axes) < 1 or any(not 0 <= a < N_AX for a in self.active_axes):
            raise ValueError("active_axes must be a nonempty subset of 0..5")
        for name in (
            "q_mu_p", "q_mu_v", "x_ref", "q_sigma_p", "q_sigma_v", "q_f",
            "q_sigma_f", "q_u_f", "q_fref", "f_ref_target", "fr_min", "fr_max",
            "M_floor", "M_ceil", "D_floor", "D_ceil", "chance_sign",
        ):
            setattr(self, name, _vec6(getattr(self, name), name))
        self.q_tau = np.asarray(self.q_tau, dtype=float).reshape(4)
        weight_names = (
            "q_mu_p", "q_mu_v", "q_sigma_p", "q_sigma_v", "q_f", "q_sigma_f",
            "q_u_f", "q_fref", "q_tau",
        )
        for name in weight_names:
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        if not np.all(self.M_floor > 0):
            raise ValueError("M_floor must be strictly positive")

    def quantile_scale(self) -> float:
        """Deviation multiplier of the chance constraint.

        The default follows the mean-plus-erfinv(1-eps) reduction; strict
        mode uses the exact Gaussian quantile sqrt(2)*erfinv(1-2*eps).
        """
        if self.strict_quantile:
            return math.sqrt(2.0) * float(erfinv(1.0 - 2.0 * self.eps))
        return float(erfinv(1.0 - self.eps))


@dataclass
class MpcSolution:
    """Result of one planner solve."""

    f_ref: np.ndarray  # (H, 6)
    impedance: ImpedanceParams
    status: str  # converged | max-iter | infeasible
    iterations: int
    objective: float
    constraint_activity: dict
    wall_time: float
    z: np.ndarray = None  # raw decision vector, used for warm starting


@dataclass
class StageWeights:
    """Diagonal weights of the generic stage cost."""

    q_mu: np.ndarray  # (12,)
    q_sigma: np.ndarray  # (12,)
    q_f: np.ndarray  # (6,)
    q_sigma_f: np.ndarray  # (6,)
    q_tau: np.ndarray  # (4,)
    q_u: np.ndarray

    def __post_init__(self):
        self.q_mu = np.asarray(self.q_mu, dtype=float).reshape(N_STATE)
        self.q_sigma = np.asarray(self.q_sigma, dtype=float).reshape(N_STATE)
        self.q_f = np.asarray(self.q_f, dtype=float).reshape(N_AX)
        self.q_sigma_f = np.asarray(self.q_sigma_f, dtype=float).reshape(N_AX)
        self.q_tau = np.asarray(self.q_tau, dtype=float).reshape(4)
        self.q_u = np.asarray(self.q_u, dtype=float).reshape(-1)


def _diag_of(x, n):
    x = np.asarray(x, dtype=float)
    return np.diag(x) if x.ndim == 2 else x.reshape(n)


def stage_cost(mean, cov, f_mean, f_var, tau, u, weights: StageWeights, f_ref=None) -> float:
    """Generic quadratic stage cost over state/force moments, torque, input.

    With f_ref given, the force-mean quadratic becomes
    (f_mean + f_ref)^T Q_f (f_mean + f_ref), tying the reference to the
    demonstrated force level instead of penalizing the raw mean.
    """
    mean = np.asarray(mean, dtype=float).reshape(N_STATE)
    f_mean = np.asarray(f_mean, dtype=float).reshape(N_AX)
    tau = np.asarray(tau, dtype=float).reshape(4)
    u = np.asarray(u, dtype=float).reshape(-1)
    cov_d = _diag_of(cov, N_STATE)
    fvar_d = _diag_of(f_var, N_AX)
    f_term = f_mean + np.asarray(f_ref, dtype=float).reshape(N_AX) if f_ref is not None else f_mean
    return float(
        mean @ (weights.q_mu * mean)
        + weights.q_sigma @ cov_d
        + f_term @ (weights.q_f * f_term)
        + weights.q_sigma_f @ fvar_d
        + tau @ (weights.q_tau * tau)
        + u @ (weights.q_u * u)
    )


def ergonomic_cost(q, D, xdot, q_tau, geom: ArmGeometry) -> float:
    """Quadratic joint-torque load f_H^T J Q_tau J^T f_H.

    The human hand force is approximated by the robot's damping force
    D (.) xdot (translational part), which keeps the cost an explicit
    function of the damping decision variables.
    """
    D = np.asarray(D, dtype=float).reshape(N_AX)
    xdot = np.asarray(xdot, dtype=float).reshape(N_AX)
    f_h = (D * xdot)[:3]
    J = jacobian(q, geom)
    tau = J.T @ f_h
    return float(tau @ (np.asarray(q_tau, dtype=float).reshape(4) * tau))


def chance_constraint_residual(f_mean, f_var, f_bar, eps, strict: bool = False) -> float:
    """Residual of the force chance bound; satisfied when >= 0.

    Returns f_bar - erfinv(1-eps)*sqrt(f_var) - f_mean. Strict mode swaps
    the multiplier for the exact Gaussian quantile sqrt(2)*erfinv(1-2eps).
    """
    if f_var < 0:
        raise ValueError("f_var must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    g = math.sqrt(2.0) * float(erfinv(1.0 - 2.0 * eps)) if strict else float(erfinv(1.0 - eps))
    return float(f_bar) - g * math.sqrt(f_var) - float(f_mean)


def well_damped_residual(D_i, M_i, Ke_i, zeta) -> float:
    """Residual of D >= 2*zeta*sqrt(M*Ke); satisfied when >= 0."""
    if M_i <= 0:
        raise ValueError("M_i must be positive")
    if Ke_i < 0:
        raise ValueError("Ke_i must be nonnegative")
    return float(D_i) - 2.0 * float(zeta) * math.sqrt(float(M_i) * float(Ke_i))


class Transcription:
    """Multiple-shooting NLP for one planner invocation.

    Decision vector layout (n_a active axes, N modes, horizon H):
      [ f^r (H*n_a) | dM (n_a) | dD (n_a)
        | node means (N*H*2*n_a: p, v per node 1..H)
        | node covariances (N*H*3*n_a: s_pp, s_pv, s_vv) ]
    Node 0 is pinned to the measured state with zero covariance.
    """

    def __init__(self, cfg: MpcConfig, state: StateDist, belief: Belief, models, phi: ImpedanceParams):
        if len(models) != belief.n_modes:
            raise ValueError("belief and models disagree on mode count")
        self.cfg = cfg
        self.state = state
        self.belief = belief
        self.models = list(models)
        self.phi = phi
        self.N = belief.n_modes
        self.H = cfg.H
        self.ax = np.asarray(cfg.active_axes, dtype=int)
        self.na = len(self.ax)

        na, H, N = self.na, self.H, self.N
        self.off_fr = 0
        self.off_dM = H * na
        self.off_dD = self.off_dM + na
        self.off_mean = self.off_dD + na
        self.off_cov = self.off_mean + N * H * 2 * na
        self.dim = self.off_cov + N * H * 3 * na
        self.n_defects = N * H * 5 * na

        self._cache_key = None
        self._cache = None

        self._W_erg = self._frozen_arm_weight() if cfg.ergonomic_cost else None
        self._Ke = self._nominal_stiffness_profile() if cfg.well_damped else None

    # -- variable indexing ------------------------------------------------

    def i_fr(self, k, j):
        return self.off_fr + k * self.na + j

    def i_dM(self, j):
        return self.off_dM + j

    def i_dD(self, j):
        return self.off_dD + j

    def i_mean(self, n, k, c, j):
        # k in 1..H, c in {0: position, 1: velocity}
        return self.off_mean + (((n * self.H + (k - 1)) * 2) + c) * self.na + j

    def i_cov(self, n, k, c, j):
        # k in 1..H, c in {0: s_pp, 1: s_pv, 2: s_vv}
        return self.off_cov + (((n * self.H + (k - 1)) * 3) + c) * self.na + j

    def d_mean(self, n, k, c, j):
        # defect row for the interval k -> k+1, k in 0..H-1
        return (((n * self.H + k) * 2) + c) * self.na + j

    def d_cov(self, n, k, c, j):
        base = self.N * self.H * 2 * self.na
        return base + (((n * self.H + k) * 3) + c) * self.na + j

    # -- setup helpers ----------------------------------------------------

    def _frozen_arm_weight(self):
        """3x3 torque-load weight J Q_tau J^T frozen at the current pose."""
        geom = self.cfg.arm
        if geom is None:
            raise ValueError("ergonomic cost requires an arm geometry")
        try:
            q = ik_simplified(self.state.mean[:3], geom, clamp=True)
        except UnreachableTarget:
            q = np.zeros(4)
        J = jacobian(q, geom)
        return J @ np.diag(self.cfg.q_tau) @ J.T

    def _nominal_stiffness_profile(self):
        """(H+1, n_a) local stiffness along a certainty-equivalent rollout.

        Uses the highest-belief mode's GP and the current impedance with a
        zero force reference; frozen for the duration of one solve so the
        well-damped constraint stays smooth in the impedance deltas.
        """
        model = self.models[int(np.argmax(self.belief.probs))]
        cfg = self.cfg
        Ke = np.zeros((self.H + 1, self.na))
        pose = self.state.mean[:N_AX].copy()
        vel = self.state.mean[N_AX:].copy()
        for k in range(self.H + 1):
            for j, axj in enumerate(self.ax):
                Ke[k, j] = model.estimate_stiffness(pose, int(axj))
            if k == self.H:
                break
            mu, _ = model.posterior(pose)
            for j, axj in enumerate(self.ax):
                A2, B2 = axis_AB(self.phi.M[axj], self.phi.D[axj], cfg.Ts, cfg.scheme)
                p, v = pose[axj], vel[axj]
                pose[axj] = p + cfg.Ts * v
                vel[axj] = A2[1, 1] * v + B2[1] * mu[axj]
        return Ke

    def initial_guess(self, fr_init=None):
        """Cold-start vector: zero deltas, certainty-equivalent rollout."""
        z = np.zeros(self.dim)
        if fr_init is not None:
            fr = np.asarray(fr_init, dtype=float).reshape(self.H, self.na)
            for k in range(self.H):
                for j in range(self.na):
                    z[self.i_fr(k, j)] = fr[k, j]
        return self.resimulate(z)

    def resimulate(self, z):
        """Close all defects exactly by re-rolling the shooting states.

        Keeps the inputs (f^r, dM, dD) of z and recomputes every node mean
        and covariance by the forward recursion — the single-shooting
        projection of a multiple-shooting iterate onto the dynamics.
        """
        cfg = self.cfg
        z = np.asarray(z, dtype=float).copy()
        for n, model in enumerate(self.models):
            pose = self.state.mean[:N_AX].copy()
            vel = self.state.mean[N_AX:].copy()
            cov = np.zeros((3, self.na))
            for k in range(1, self.H + 1):
                mu, var = model.posterior(pose)
                for j, axj in enumerate(self.ax):
                    A2, B2 = axis_AB(
                        self.phi.M[axj] + z[self.i_dM(j)],
                        self.phi.D[axj] + z[self.i_dD(j)],
                        cfg.Ts,
                        cfg.scheme,
                    )
                    a, b = A2[1, 1], B2[1]
                    p, v = pose[axj], vel[axj]
                    pose[axj] = p + cfg.Ts * v
                    vel[axj] = a * v + b * (mu[axj] - z[self.i_fr(k - 1, j)])
                    spp, spv, svv = cov[:, j]
                    cov[0, j] = spp + 2 * cfg.Ts * spv + cfg.Ts**2 * svv
                    cov[1, j] = a * (spv + cfg.Ts * svv)
                    cov[2, j] = a**2 * svv + b**2 * var[axj]
                    z[self.i_mean(n, k, 0, j)] = pose[axj]
                    z[self.i_mean(n, k, 1, j)] = vel[axj]
                    for c in range(3):
                        z[self.i_cov(n, k, c, j)] = cov[c, j]
        return z

    def bounds(self) -> Bounds:
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        cfg = self.cfg
        for k in range(self.H):
            for j, axj in enumerate(self.ax):
                lo[self.i_fr(k, j)] = cfg.fr_min[axj]
                hi[self.i_fr(k, j)] = cfg.fr_max[axj]
        for j, axj in enumerate(self.ax):
            lo[self.i_dM(j)] = max(-cfg.dM_max, cfg.M_floor[axj] - self.phi.M[axj])
            hi[self.i_dM(j)] = min(cfg.dM_max, cfg.M_ceil[axj] - self.phi.M[axj])
            lo[self.i_dD(j)] = max(-cfg.dD_max, cfg.D_floor[axj] - self.phi.D[axj])
            hi[self.i_dD(j)] = min(cfg.dD_max, cfg.D_ceil[axj] - self.phi.D[axj])
        for n in range(self.N):
            for k in range(1, self.H + 1):
                for j in range(self.na):
                    lo[self.i_cov(n, k, 0, j)] = 0.0
                    lo[self.i_cov(n, k, 2, j)] = 0.0
        return Bounds(lo, hi)

    # -- per-z evaluation cache -------------------------------------------

    def _evals(self, z):
        key = z.tobytes()
        if key == self._cache_key:
            return self._cache
        cfg = self.cfg
        na, H, N = self.na, self.H, self.N
        m_t = self.phi.M[self.ax] + z[self.off_dM : self.off_dM + na]
        d_t = self.phi.D[self.ax] + z[self.off_dD : self.off_dD + na]
        a = np.empty(na)
        b = np.empty(na)
        da_dm = np.empty(na)
        da_dd = np.empty(na)
        db_dm = np.empty(na)
        for j, axj in enumerate(self.ax):
            A2, B2 = axis_AB(m_t[j], d_t[j], cfg.Ts, cfg.scheme)
            a[j], b[j] = A2[1, 1], B2[1]
            (dam, dad), (dbm, _), _ = axis_AB_grads(m_t[j], d_t[j], cfg.Ts, cfg.scheme)
            da_dm[j], da_dd[j], db_dm[j] = dam, dad, dbm

        poses = np.tile(self.state.mean[:N_AX], (N, H + 1, 1))
        vels = np.tile(self.state.mean[N_AX:], (N, H + 1, 1))
        for n in range(N):
            for k in range(1, H + 1):
                for j, axj in enumerate(self.ax):
                    poses[n, k, axj] = z[self.i_mean(n, k, 0, j)]
                    vels[n, k, axj] = z[self.i_mean(n, k, 1, j)]

        mu_f = np.zeros((N, H + 1, na))
        var_f = np.zeros((N, H + 1, na))
        dmu = np.zeros((N, H + 1, na, na))  # d mu_f[j] / d p[i']
        dvar = np.zeros((N, H + 1, na, na))
        for n, model in enumerate(self.models):
            for k in range(H + 1):
                x = poses[n, k]
                for j, axj in enumerate(self.ax):
                    gp = model.axes[axj]
                    mu_f[n, k, j], var_f[n, k, j] = gp.posterior(x)
                    gm, gv = gp.posterior_grad(x)
                    dmu[n, k, j, :] = gm[self.ax]
                    dvar[n, k, j, :] = gv[self.ax]

        out = {
            "m_t": m_t, "d_t": d_t, "a": a, "b": b,
            "da_dm": da_dm, "da_dd": da_dd, "db_dm": db_dm,
            "poses": poses, "vels": vels,
            "mu_f": mu_f, "var_f": var_f, "dmu": dmu, "dvar": dvar,
        }
        self._cache_key = key
        self._cache = out
        return out

    # -- defects ----------------------------------------------------------

    def defects(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        cfg = self.cfg
        d = np.zeros(self.n_defects)
        Ts = cfg.Ts
        for n in range(self.N):
            for k in range(self.H):
                for j, axj in enumerate(self.ax):
                    p_k, v_k = ev["poses"][n, k, axj], ev["vels"][n, k, axj]
                    a, b = ev["a"][j], ev["b"][j]
                    fr = z[self.i_fr(k, j)]
                    d[self.d_mean(n, k, 0, j)] = (
                        p_k + Ts * v_k - z[self.i_mean(n, k + 1, 0, j)]
                    )
                    d[self.d_mean(n, k, 1, j)] = (
                        a * v_k + b * (ev["mu_f"][n, k, j] - fr)
                        - z[self.i_mean(n, k + 1, 1, j)]
                    )
                    if k == 0:
                        spp = spv = svv = 0.0
                    else:
                        spp = z[self.i_cov(n, k, 0, j)]
                        spv = z[self.i_cov(n, k, 1, j)]
                        svv = z[self.i_cov(n, k, 2, j)]
                    d[self.d_cov(n, k, 0, j)] = (
                        spp + 2 * Ts * spv + Ts**2 * svv - z[self.i_cov(n, k + 1, 0, j)]
                    )
                    d[self.d_cov(n, k, 1, j)] = (
                        a * (spv + Ts * svv) - z[self.i_cov(n, k + 1, 1, j)]
                    )
                    d[self.d_cov(n, k, 2, j)] = (
                        a**2 * svv + b**2 * ev["var_f"][n, k, j]
                        - z[self.i_cov(n, k + 1, 2, j)]
                    )
        return d

    def defects_jac(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        cfg = self.cfg
        Ts = cfg.Ts
        J = np.zeros((self.n_defects, self.dim))
        for n in range(self.N):
            for k in range(self.H):
                for j in range(self.na):
                    axj = self.ax[j]
                    a, b = ev["a"][j], ev["b"][j]
                    v_k = ev["vels"][n, k, axj]
                    fr = z[self.i_fr(k, j)]
                    net = ev["mu_f"][n, k, j] - fr

                    rp = self.d_mean(n, k, 0, j)
                    rv = self.d_mean(n, k, 1, j)
                    J[rp, self.i_mean(n, k + 1, 0, j)] = -1.0
                    J[rv, self.i_mean(n, k + 1, 1, j)] = -1.0
                    J[rv, self.i_fr(k, j)] = -b
                    J[rv, self.i_dM(j)] = ev["da_dm"][j] * v_k + ev["db_dm"][j] * net
                    J[rv, self.i_dD(j)] = ev["da_dd"][j] * v_k
                    if k >= 1:
                        J[rp, self.i_mean(n, k, 0, j)] = 1.0
                        J[rp, self.i_mean(n, k, 1, j)] = Ts
                        J[rv, self.i_mean(n, k, 1, j)] = a
                        for jp in range(self.na):
                            J[rv, self.i_mean(n, k, 0, jp)] += b * ev["dmu"][n, k, j, jp]

                    if k == 0:
                        spv = svv = 0.0
                    else:
                        spv = z[self.i_cov(n, k, 1, j)]
                        svv = z[self.i_cov(n, k, 2, j)]
                    r0 = self.d_cov(n, k, 0, j)
                    r1 = self.d_cov(n, k, 1, j)
                    r2 = self.d_cov(n, k, 2, j)
                    J[r0, self.i_cov(n, k + 1, 0, j)] = -1.0
                    J[r1, self.i_cov(n, k + 1, 1, j)] = -1.0
                    J[r2, self.i_cov(n, k + 1, 2, j)] = -1.0
                    J[r1, self.i_dM(j)] = ev["da_dm"][j] * (spv + Ts * svv)
                    J[r1, self.i_dD(j)] = ev["da_dd"][j] * (spv + Ts * svv)
                    sf = ev["var_f"][n, k, j]
                    J[r2, self.i_dM(j)] = (
                        2 * a * ev["da_dm"][j] * svv + 2 * b * ev["db_dm"][j] * sf
                    )
                    J[r2, self.i_dD(j)] = 2 * a * ev["da_dd"][j] * svv
                    if k >= 1:
                        J[r0, self.i_cov(n, k, 0, j)] = 1.0
                        J[r0, self.i_cov(n, k, 1, j)] = 2 * Ts
                        J[r0, self.i_cov(n, k, 2, j)] = Ts**2
                        J[r1, self.i_cov(n, k, 1, j)] = a
                        J[r1, self.i_cov(n, k, 2, j)] = a * Ts
                        J[r2, self.i_cov(n, k, 2, j)] = a**2
                        for jp in range(self.na):
                            J[r2, self.i_mean(n, k, 0, jp)] += b**2 * ev["dvar"][n, k, j, jp]
        return J

    # -- objective --------------------------------------------------------

    def objective(self, z):
        """Value and gradient of the belief-weighted cost."""
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        cfg = self.cfg
        g = np.zeros(self.dim)
        val = 0.0
        bp = self.belief.probs

        for n in range(self.N):
            w = bp[n]
            if w == 0.0:
                continue
            for k in range(1, self.H + 1):
                for j, axj in enumerate(self.ax):
                    p = z[self.i_mean(n, k, 0, j)]
                    v = z[self.i_mean(n, k, 1, j)]
                    dp = p - cfg.x_ref[axj]
                    val += w * (cfg.q_mu_p[axj] * dp**2 + cfg.q_mu_v[axj] * v**2)
                    g[self.i_mean(n, k, 0, j)] += w * 2 * cfg.q_mu_p[axj] * dp
                    g[self.i_mean(n, k, 1, j)] += w * 2 * cfg.q_mu_v[axj] * v
                    spp = z[self.i_cov(n, k, 0, j)]
                    svv = z[self.i_cov(n, k, 2, j)]
                    val += w * (cfg.q_sigma_p[axj] * spp + cfg.q_sigma_v[axj] * svv)
                    g[self.i_cov(n, k, 0, j)] += w * cfg.q_sigma_p[axj]
                    g[self.i_cov(n, k, 2, j)] += w * cfg.q_sigma_v[axj]
            # Force moments at the GP evaluation nodes 0..H-1.
            for k in range(self.H):
                for j, axj in enumerate(self.ax):
                    mu = ev["mu_f"][n, k, j]
                    fr = z[self.i_fr(k, j)]
                    term = mu + fr if cfg.force_ref_offset_cost else mu
                    qf = cfg.q_f[axj]
                    val += w * qf * term**2
                    if cfg.force_ref_offset_cost:
                        g[self.i_fr(k, j)] += w * 2 * qf * term
                    if k >= 1:
                        for jp in range(self.na):
                            g[self.i_mean(n, k, 0, jp)] += (
                                w * 2 * qf * term * ev["dmu"][n, k, j, jp]
                            )
                    qsf = cfg.q_sigma_f[axj]
                    val += w * qsf * ev["var_f"][n, k, j]
                    if k >= 1:
                        for jp in range(self.na):
                            g[self.i_mean(n, k, 0, jp)] += w * qsf * ev["dvar"][n, k, j, jp]
            if self._W_erg is not None:
                val_e, g_e = self._ergonomic_terms(z, ev, n)
                val += w * val_e
                g += w * g_e

        # Input effort and reference-target pull.
        for k in range(self.H):
            for j, axj in enumerate(self.ax):
                fr = z[self.i_fr(k, j)]
                val += cfg.q_u_f[axj] * fr**2
                g[self.i_fr(k, j)] += 2 * cfg.q_u_f[axj] * fr
                if cfg.q_fref[axj] > 0:
                    e = fr - cfg.f_ref_target[axj]
                    val += cfg.q_fref[axj] * e**2
                    g[self.i_fr(k, j)] += 2 * cfg.q_fref[axj] * e
        for j in range(self.na):
            dM = z[self.i_dM(j)]
            dD = z[self.i_dD(j)]
            val += cfg.q_dM * dM**2 + cfg.q_dD * dD**2
            g[self.i_dM(j)] += 2 * cfg.q_dM * dM
            g[self.i_dD(j)] += 2 * cfg.q_dD * dD

        if cfg.disturbance_cost and cfg.w_dist > 0:
            for j in range(self.na):
                c, gc = h2_disturbance_cost_grad(
                    ev["m_t"][j], ev["d_t"][j], 0.0, cfg.alpha, cfg.omega_p
                )
                val += cfg.w_dist * c
                g[self.i_dM(j)] += cfg.w_dist * gc[0]
                g[self.i_dD(j)] += cfg.w_dist * gc[1]

        if cfg.defect_penalty > 0:
            d = self.defects(z)
            Jd = self.defects_jac(z)
            val += cfg.defect_penalty * float(d @ d)
            g += 2 * cfg.defect_penalty * (Jd.T @ d)
        return val, g

    def _ergonomic_terms(self, z, ev, n):
        """Torque-load cost for mode n: sum_k f_H^T W f_H, f_H = D (.) v."""
        W = self._W_erg
        g = np.zeros(self.dim)
        val = 0.0
        d_t = ev["d_t"]
        trans = [j for j, axj in enumerate(self.ax) if axj < 3]
        for k in range(1, self.H + 1):
            f_h = np.zeros(3)
            for j in trans:
                f_h[self.ax[j]] = d_t[j] * z[self.i_mean(n, k, 1, j)]
            Wf = W @ f_h
            val += float(f_h @ Wf)
            for j in trans:
                axj = self.ax[j]
                g[self.i_mean(n, k, 1, j)] += 2 * Wf[axj] * d_t[j]
                g[self.i_dD(j)] += 2 * Wf[axj] * z[self.i_mean(n, k, 1, j)]
        return val, g

    # -- inequality constraints -------------------------------------------

    def chance_rows(self):
        return [(n, j) for n in range(self.N) for j in range(self.na)
                if self.cfg.chance_sign[self.ax[j]] != 0.0]

    def chance_fun(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        gscale = self.cfg.quantile_scale()
        out = []
        for n, j in self.chance_rows():
            s = self.cfg.chance_sign[self.ax[j]]
            mu = ev["mu_f"][n, self.H, j]
            sf = max(ev["var_f"][n, self.H, j], 0.0)
            out.append(self.cfg.f_bar - gscale * math.sqrt(sf) - s * mu)
        return np.asarray(out)

    def chance_jac(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        gscale = self.cfg.quantile_scale()
        rows = self.chance_rows()
        J = np.zeros((len(rows), self.dim))
        for r, (n, j) in enumerate(rows):
            s = self.cfg.chance_sign[self.ax[j]]
            sf = max(ev["var_f"][n, self.H, j], 1e-12)
            for jp in range(self.na):
                J[r, self.i_mean(n, self.H, 0, jp)] = (
                    -gscale * ev["dvar"][n, self.H, j, jp] / (2.0 * math.sqrt(sf))
                    - s * ev["dmu"][n, self.H, j, jp]
                )
        return J

    def well_damped_fun(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        out = np.empty(self.H * self.na)
        r = 0
        for k in range(1, self.H + 1):
            for j in range(self.na):
                out[r] = ev["d_t"][j] - 2.0 * self.cfg.zeta * math.sqrt(
                    max(ev["m_t"][j] * self._Ke[k, j], 0.0)
                )
                r += 1
        return out

    def well_damped_jac(self, z):
        z = np.asarray(z, dtype=float)
        ev = self._evals(z)
        J = np.zeros((self.H * self.na, self.dim))
        r = 0
        for k in range(1, self.H + 1):
            for j in range(self.na):
                J[r, self.i_dD(j)] = 1.0
                ke = self._Ke[k, j]
                if ke > 0:
                    J[r, self.i_dM(j)] = -self.cfg.zeta * math.sqrt(ke / ev["m_t"][j])
                r += 1
        return J

    def constraints(self):
        """NonlinearConstraint list for the trust-region solver."""
        cons = [
            NonlinearConstraint(
                self.defects, -self.cfg.slack, self.cfg.slack,
                jac=self.defects_jac, hess=_zero_hess,
            )
        ]
        if self.cfg.chance_constraint and self.chance_rows():
            cons.append(
                NonlinearConstraint(
                    self.chance_fun, 0.0, np.inf,
                    jac=self.chance_jac, hess=_zero_hess,
                )
            )
        if self.cfg.well_damped:
            cons.append(
                NonlinearConstraint(
                    self.well_damped_fun, 0.0, np.inf,
                    jac=self.well_damped_jac, hess=_zero_hess,
                )
            )
        return cons

    # -- extraction -------------------------------------------------------

    def extract(self, z):
        """(f_ref (H,6), ImpedanceParams) encoded by a decision vector."""
        f_ref = np.zeros((self.H, N_AX))
        for k in range(self.H):
            for j, axj in enumerate(self.ax):
                f_ref[k, axj] = z[self.i_fr(k, j)]
        M = self.phi.M.copy()
        D = self.phi.D.copy()
        for j, axj in enumerate(self.ax):
            M[axj] += z[self.i_dM(j)]
            D[axj] += z[self.i_dD(j)]
        M = np.clip(M, self.cfg.M_floor, self.cfg.M_ceil)
        D = np.clip(D, self.cfg.D_floor, self.cfg.D_ceil)
        return f_ref, ImpedanceParams(M=M, D=D)


def _zero_hess(x, v):
    return np.zeros((len(x), len(x)))


def build_problem(cfg: MpcConfig, state: StateDist, belief: Belief, models, phi: ImpedanceParams) -> Transcription:
    """Assemble the shooting NLP for the given state, belief, and models."""
    return Transcription(cfg, state, belief, models, phi)


def solve(problem: Transcription, warm_start: np.ndarray | None = None) -> MpcSolution:
    """Run the trust-region interior solver and audit the result."""
    cfg = problem.cfg
    t0 = time.perf_counter()
    z0 = warm_start if warm_start is not None else problem.initial_guess()
    z0 = np.clip(np.asarray(z0, dtype=float), problem.bounds().lb, problem.bounds().ub)
    with warnings.catch_warnings():
        # Near-active bound constraints make the solver fall back to an
        # SVD factorization; harmless, so keep the log quiet.
        warnings.filterwarnings(
            "ignore", message="Singular Jacobian matrix", category=UserWarning
        )
        res = minimize(
            problem.objective,
            z0,
            jac=True,
            hess=BFGS(),
            method="trust-constr",
            bounds=problem.bounds(),
            constraints=problem.constraints(),
            options={
                "gtol": cfg.gtol,
                "xtol": 1e-10,
                "maxiter": cfg.max_iter,
                "verbose": cfg.verbose,
            },
        )
    wall = time.perf_counter() - t0
    # Re-roll the shooting states from the optimized inputs so continuity
    # holds exactly before the audit (the interior point leaves bounded
    # variables slightly interior).
    z = problem.resimulate(res.x)
    f_ref, phi_new = problem.extract(z)

    # Post-hoc feasibility audit against every active constraint.
    tol = max(cfg.feas_tol, 10 * cfg.slack)
    viol = float(np.max(np.abs(problem.defects(z)), initial=0.0) - cfg.slack)
    activity = {"defect_violation": max(viol, 0.0)}
    feasible = viol <= tol
    if cfg.chance_constraint and problem.chance_rows():
        cvals = problem.chance_fun(z)
        activity["chance_min"] = float(np.min(cvals))
        activity["chance_active"] = bool(np.min(cvals) < 1e-2)
        feasible = feasible and np.min(cvals) >= -tol
    if cfg.well_damped:
        wvals = problem.well_damped_fun(z)
        activity["well_damped_min"] = float(np.min(wvals))
        activity["well_damped_active"] = bool(np.min(wvals) < 1e-2)
        feasible = feasible and np.min(wvals) >= -max(tol, 1e-3)

    if not feasible:
        status = "infeasible"
    elif res.status in (1, 2):
        status = "converged"
    else:
        status = "max-iter"
    return MpcSolution(
        f_ref=f_ref,
        impedance=phi_new,
        status=status,
        iterations=int(res.niter),
        objective=float(problem.objective(z)[0]),
        constraint_activity=activity,
        wall_time=wall,
        z=z,
    )


class MpcController:
    """Stateful wrapper: warm starting and the infeasible-step fallback.

    On an infeasible solve the controller holds the previous force
    reference, applies no inertia change, and ramps damping toward its
    ceiling at the configured rate — trading performance for passivity.
    """

    def __init__(self, cfg: MpcConfig, models, arm: ArmGeometry | None = None):
        self.cfg = cfg
        if arm is not None:
            cfg.arm = arm
        self.models = list(models)
        self._prev: MpcSolution | None = None

    def step(self, state: StateDist, belief: Belief, phi: ImpedanceParams) -> MpcSolution:
        problem = build_problem(self.cfg, state, belief, self.models, phi)
        warm = self._warm_start(problem)
        sol = solve(problem, warm_start=warm)
        if sol.status == "infeasible":
            sol = self._fallback(sol, phi)
        self._prev = sol
        return sol

    def _warm_start(self, problem: Transcription):
        if self._prev is None or self._prev.z is None:
            return None
        # Shift the previous force-reference plan one interval and rebuild
        # the shooting states by a fresh rollout from the new state.
        prev_fr = self._prev.f_ref[:, problem.ax]
        fr = np.vstack([prev_fr[1:], prev_fr[-1:]])
        return problem.initial_guess(fr_init=fr)

    def _fallback(self, sol: MpcSolution, phi: ImpedanceParams) -> MpcSolution:
        f_ref = (
            self._prev.f_ref.copy()
            if self._prev is not None
            else np.zeros((self.cfg.H, N_AX))
        )
        D = phi.D.copy()
        for axj in self.cfg.active_axes:
            D[axj] = min(D[axj] + self.cfg.dD_max, self.cfg.D_ceil[axj])
        sol.f_ref = f_ref
        sol.impedance = ImpedanceParams(M=phi.M.copy(), D=D)
        sol.z = None
        return sol
