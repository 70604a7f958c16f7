"""Acceptance gate: one test per numbered criterion.

Each test carries a ``criterion`` marker; conftest.py echoes a single
PASS/FAIL line per criterion in the terminal summary. Closed-loop
criteria share fitted models through module-scoped fixtures so the
whole gate stays inside its runtime budgets.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.special import erf, erfinv

import conftest
import gpmpc
from gpmpc.admittance import (
    ImpedanceParams,
    StateDist,
    axis_AB,
    discretize,
    propagate_cov,
    propagate_cov_vec,
)
from gpmpc.convexity import (
    SweepSpec,
    hessian_min_eig,
    impedance_vs_trajectory_differential,
)
from gpmpc.gp_force import (
    AxisGp,
    GpForceModel,
    GpHyper,
    HingeMean,
    fit_force_model,
    subsample,
)
from gpmpc.human_arm import ArmGeometry
from gpmpc.lyap import (
    h2_disturbance_cost,
    h2_disturbance_cost_grad,
    h2_frequency_integral,
)
from gpmpc.mode_belief import Belief
from gpmpc.mpc import MpcConfig, MpcController, build_problem
from gpmpc.sim import (
    SyntheticHuman,
    generate_demo,
    human_force,
    load_scenario,
    metrics,
    run_episode,
)
from gpmpc import cli

SCENARIOS = Path(gpmpc.__file__).parent / "scenarios"


# ---------------------------------------------------------------------------
# Shared fitted models


def _fit_wall(scn, seeds, max_points=80):
    demos = [generate_demo(scn, seed=s) for s in seeds]
    stack = np.vstack(demos)
    X, F = subsample(stack[:, 1:7], stack[:, 7:13], max_points=max_points)
    return fit_force_model(X, F, hinge_axes=(scn.env.axis,))


@pytest.fixture(scope="module")
def stiff_scn():
    return load_scenario(SCENARIOS / "contact_stiff.cfg")


@pytest.fixture(scope="module")
def stiff_model(stiff_scn):
    return _fit_wall(stiff_scn, (0, 1, 2))


@pytest.fixture(scope="module")
def variance_scn():
    return load_scenario(SCENARIOS / "contact_variance.cfg")


@pytest.fixture(scope="module")
def variance_model_fixed(variance_scn):
    fixed = replace(variance_scn, env=replace(variance_scn.env, jitter=0.0))
    return _fit_wall(fixed, (0, 1, 2))


@pytest.fixture(scope="module")
def variance_model_jittered(variance_scn):
    return _fit_wall(variance_scn, (0, 1, 2, 3), max_points=100)


def _zero_model():
    hyper = GpHyper(signal_var=1e-4, noise_var=1e-4, length_scales=np.ones(6))
    return GpForceModel(
        axes=tuple(AxisGp(X=np.zeros((0, 6)), y=np.zeros(0), hyper=hyper) for _ in range(6))
    )


# ---------------------------------------------------------------------------
# 1. GP oracle equivalence


@pytest.mark.criterion(1, "GP posterior matches dense conditioning oracle (1e-8, 100 datasets)")
def test_gp_posterior_vs_dense_oracle():
    rng = np.random.default_rng(42)
    t0 = time.time()
    for trial in range(100):
        n = int(rng.integers(1, 51))
        hyper = GpHyper(
            signal_var=float(rng.uniform(0.5, 5.0)),
            noise_var=float(rng.uniform(0.01, 1.0)),
            length_scales=rng.uniform(0.3, 2.0, 6),
        )
        X = rng.uniform(-1.0, 1.0, size=(n, 6))
        y = rng.normal(0.0, 2.0, size=n)
        mean_fn = None
        if trial % 2:
            mean_fn = HingeMean(
                offset=float(rng.normal()),
                slope=float(rng.uniform(-50.0, 50.0)),
                threshold=float(rng.uniform(-0.5, 0.5)),
                axis=int(rng.integers(0, 6)),
                continuous=bool(trial % 4 == 1),
            )
        gp = AxisGp(X=X, y=y, hyper=hyper, mean_fn=mean_fn)

        def kmat(a, b):
            d = (a[:, None, :] - b[None, :, :]) / hyper.length_scales
            return hyper.signal_var * np.exp(-0.5 * np.sum(d * d, axis=2))

        K = kmat(X, X) + hyper.noise_var * np.eye(n)
        m_train = (
            np.array([mean_fn.value(x) for x in X]) if mean_fn is not None else np.zeros(n)
        )
        alpha = np.linalg.solve(K, y - m_train)
        for _ in range(3):
            xq = rng.uniform(-1.0, 1.0, 6)
            ks = kmat(X, xq[None, :])[:, 0]
            mu_o = (mean_fn.value(xq) if mean_fn is not None else 0.0) + float(ks @ alpha)
            var_o = hyper.signal_var - float(ks @ np.linalg.solve(K, ks))
            mu, var = gp.posterior(xq)
            assert abs(mu - mu_o) < 1e-8
            assert abs(var - max(var_o, 0.0)) < 1e-8
    assert time.time() - t0 < 10.0


# ---------------------------------------------------------------------------
# 2. Gradient suite


def _fd_grad(f, z, eps=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[i] += eps
        zm[i] -= eps
        g[i] = (f(zp) - f(zm)) / (2 * eps)
    return g


def _fd_jac(f, z, eps=1e-6):
    cols = []
    for i in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[i] += eps
        zm[i] -= eps
        cols.append((f(zp) - f(zm)) / (2 * eps))
    return np.array(cols).T


def _rel_check(analytic, fd, rtol=1e-4):
    scale = max(float(np.max(np.abs(fd))), 1.0)
    np.testing.assert_allclose(analytic, fd, rtol=rtol, atol=rtol * scale)


_ARM = ArmGeometry(l1=0.3, l2=0.28, shoulder=np.array([0.0, 0.0, 0.3]))


def _rand_axis_gp(rng, hinge=False):
    hyper = GpHyper(signal_var=4.0, noise_var=0.1, length_scales=np.full(6, 0.3))
    mean_fn = None
    if hinge:
        mean_fn = HingeMean(
            offset=0.0, slope=-3000.0, threshold=0.0, axis=2, continuous=True
        )
    return AxisGp(
        X=rng.uniform(-0.4, 0.4, size=(8, 6)),
        y=rng.normal(0.0, 2.0, size=8),
        hyper=hyper,
        mean_fn=mean_fn,
    )


def _rand_model(rng, hinge=False):
    return GpForceModel(
        axes=tuple(_rand_axis_gp(rng, hinge=(hinge and i == 2)) for i in range(6))
    )


def _small_problem(seed):
    rng = np.random.default_rng(seed)
    cfg = MpcConfig(
        H=2,
        Ts=0.02,
        active_axes=(2,),
        q_mu_p=np.array([0, 0, 1.0, 0, 0, 0]),
        q_mu_v=0.2,
        q_sigma_p=0.3,
        q_sigma_v=0.1,
        q_f=0.05,
        q_sigma_f=0.2,
        q_u_f=1e-3,
        q_dM=1e-3,
        q_dD=1e-5,
        defect_penalty=10.0,
        chance_constraint=True,
        chance_sign=np.array([0, 0, -1.0, 0, 0, 0]),
        well_damped=True,
        force_ref_offset_cost=bool(seed % 2),
        disturbance_cost=bool(seed % 3 == 0),
        w_dist=3.0,
        ergonomic_cost=bool(seed % 3 == 1),
        q_tau=np.full(4, 0.5),
        arm=_ARM,
    )
    st = StateDist(mean=np.zeros(12), cov=np.zeros((12, 12)))
    st.mean[2] = float(rng.uniform(-0.1, 0.1))
    st.mean[8] = float(rng.uniform(-0.2, 0.2))
    phi = ImpedanceParams(M=np.full(6, 5.0), D=np.full(6, 500.0))
    prob = build_problem(cfg, st, Belief.uniform(1), [_rand_model(rng, hinge=True)], phi)
    z = prob.initial_guess() + rng.normal(0.0, 0.3, size=prob.dim)
    for k in range(1, prob.H + 1):
        z[prob.i_cov(0, k, 0, 0)] = abs(z[prob.i_cov(0, k, 0, 0)]) + 0.1
        z[prob.i_cov(0, k, 2, 0)] = abs(z[prob.i_cov(0, k, 2, 0)]) + 0.1
    return prob, z


@pytest.mark.criterion(2, "analytic gradients match central differences (rel err < 1e-4)")
def test_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(7)

    # GP posterior gradients: 100 random model/query pairs.
    for trial in range(100):
        gp = _rand_axis_gp(rng, hinge=(trial % 2 == 0))
        x = rng.uniform(-0.35, 0.35, 6)
        if gp.mean_fn is not None and abs(x[2] - gp.mean_fn.threshold) < 1e-3:
            x[2] += 0.01  # stay off the hinge kink where the FD is one-sided
        dmu, dvar = gp.posterior_grad(x)
        h = 1e-6
        for i in range(6):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            mup, vp = gp.posterior(xp)
            mum, vm = gp.posterior(xm)
            fd_mu = (mup - mum) / (2 * h)
            fd_var = (vp - vm) / (2 * h)
            assert abs(dmu[i] - fd_mu) <= 1e-4 * max(abs(fd_mu), 1.0)
            assert abs(dvar[i] - fd_var) <= 1e-4 * max(abs(fd_var), 1.0)

    # MPC objective, defect, chance, and well-damped derivatives: 100
    # random transcriptions each (shared instances).
    for seed in range(100):
        prob, z = _small_problem(seed)
        _, g = prob.objective(z)
        _rel_check(g, _fd_grad(lambda zz: prob.objective(zz)[0], z))
        _rel_check(prob.defects_jac(z), _fd_jac(prob.defects, z))
        _rel_check(prob.chance_jac(z), _fd_jac(prob.chance_fun, z))
        _rel_check(prob.well_damped_jac(z), _fd_jac(prob.well_damped_fun, z))

    # Lyapunov disturbance-cost derivative: 100 random stable plants.
    for _ in range(100):
        M = float(rng.uniform(1, 20))
        D = float(rng.uniform(50, 2000))
        K = float(rng.uniform(0, 5e4))
        a = float(rng.uniform(0.5, 5))
        wp = float(rng.uniform(5, 50))
        _, grad = h2_disturbance_cost_grad(M, D, K, a, wp)
        for j, (lo, hi) in enumerate(((M, None), (D, None), (K, None))):
            h = max(1e-6 * abs((M, D, K)[j]), 1e-7)
            args_p = [M, D, K]
            args_m = [M, D, K]
            args_p[j] += h
            args_m[j] -= h
            fd = (
                h2_disturbance_cost(*args_p, a, wp) - h2_disturbance_cost(*args_m, a, wp)
            ) / (2 * h)
            assert abs(grad[j] - fd) <= 1e-4 * max(abs(fd), 1e-12)

    assert time.time() - t0 < 60.0


# ---------------------------------------------------------------------------
# 3. Covariance propagation


@pytest.mark.criterion(3, "matrix vs vectorized covariance update < 1e-12; Monte Carlo within 3 SE")
def test_covariance_propagation():
    t0 = time.time()
    rng = np.random.default_rng(3)
    for _ in range(100):
        phi = ImpedanceParams(M=rng.uniform(1, 20, 6), D=rng.uniform(50, 2000, 6))
        dyn = discretize(phi, Ts=0.05, scheme="implicit")
        L = rng.normal(0.0, 0.1, size=(12, 12))
        cov = L @ L.T
        f_var = rng.uniform(0.0, 4.0, 6)
        full = propagate_cov(dyn, cov, f_var)
        vec = propagate_cov_vec(dyn, cov.reshape(-1), f_var).reshape(12, 12)
        assert np.max(np.abs(full - vec)) < 1e-12

    # Monte Carlo check on a single axis.
    m, d, Ts = 5.0, 500.0, 0.05
    A, b = axis_AB(m, d, Ts, "implicit")
    S0 = np.array([[4e-4, 1e-4], [1e-4, 9e-4]])
    mu0 = np.array([0.02, -0.05])
    f_mu, f_var = 3.0, 2.0
    S1 = A @ S0 @ A.T + f_var * np.outer(b, b)

    n = 100_000
    xs = rng.multivariate_normal(mu0, S0, size=n)
    fs = rng.normal(f_mu, math.sqrt(f_var), size=n)
    nxt = xs @ A.T + np.outer(fs, b)
    emp = np.cov(nxt.T)
    for i in range(2):
        for j in range(2):
            se = math.sqrt((S1[i, i] * S1[j, j] + S1[i, j] ** 2) / n)
            assert abs(emp[i, j] - S1[i, j]) < 3 * se
    assert time.time() - t0 < 30.0


# ---------------------------------------------------------------------------
# 4. H2 disturbance cost


@pytest.mark.criterion(4, "Lyapunov H2 value matches frequency integration (1e-3) and the closed-form anchor")
def test_h2_cost_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        M = float(rng.uniform(1, 20))
        D = float(rng.uniform(50, 2000))
        K = float(rng.uniform(0, 5e4))
        a = float(rng.uniform(0.5, 5))
        wp = float(rng.uniform(5, 50))
        v = h2_disturbance_cost(M, D, K, a, wp)
        o = h2_frequency_integral(M, D, K, a, wp)
        assert abs(v - o) <= 1e-3 * abs(o)
    anchor = h2_disturbance_cost(5.0, 500.0, 0.0, 1.0, 10.0)
    assert abs(anchor - 1.818e-7) <= 1e-3 * 1.818e-7


# ---------------------------------------------------------------------------
# 5. Convexity study


@pytest.mark.criterion(5, "curvature sweep: implicit+trace PSD and monotone, euler+trace indefinite")
def test_convexity_sweep_orderings():
    t0 = time.time()
    rows = hessian_min_eig(SweepSpec())
    by = {}
    for r in rows:
        by.setdefault((r["integrator"], r["objective"]), []).append(
            (r["sigma_f"], r["min_eig"])
        )
    imp = sorted(by[("implicit", "trace")])
    eig = [e for _, e in imp]
    assert all(e >= 0.0 for e in eig)
    assert all(b >= a - 1e-12 for a, b in zip(eig, eig[1:]))
    eul = [e for _, e in sorted(by[("euler", "trace")])]
    assert min(eul) < 0.0
    assert time.time() - t0 < 60.0


# ---------------------------------------------------------------------------
# 6. Contact-model study


@pytest.mark.criterion(6, "hinge slopes within 20% of 15/45/126 N/mm; jitter doubles contact variance")
def test_contact_model_study(stiff_scn, stiff_model, variance_scn, variance_model_fixed,
                             variance_model_jittered):
    t0 = time.time()
    soft_scn = load_scenario(SCENARIOS / "contact_soft.cfg")
    soft_model = _fit_wall(soft_scn, (0, 1, 2))
    for model, truth in (
        (soft_model, 15000.0),
        (variance_model_fixed, 45000.0),
        (stiff_model, 126000.0),
    ):
        slope = abs(model.axes[2].mean_fn.slope)
        assert abs(slope - truth) <= 0.2 * truth, (slope, truth)

    # Contact-region variance inflation under +/-1 cm wall jitter.
    loc = variance_scn.env.location
    grid = np.linspace(loc - 0.004, loc + 0.004, 25)
    pose = variance_scn.x0.copy()

    def mean_var(model):
        vals = []
        for z in grid:
            p = pose.copy()
            p[2] = z
            vals.append(model.axes[2].posterior(p)[1])
        return float(np.mean(vals))

    ratio = mean_var(variance_model_jittered) / mean_var(variance_model_fixed)
    assert ratio >= 2.0, ratio
    assert time.time() - t0 < 120.0


# ---------------------------------------------------------------------------
# 7. Stiff-contact safety


@pytest.mark.criterion(7, "stiff wall: baseline bounces, well-damped run holds contact with D >= 2*zeta*sqrt(M*Ke)")
def test_stiff_contact_safety(stiff_scn, stiff_model):
    t0 = time.time()
    baseline = replace(
        stiff_scn,
        mpc=replace(
            stiff_scn.mpc,
            well_damped=False,
            M_floor=np.full(6, 5.0),
            M_ceil=np.full(6, 5.0),
            D_floor=np.full(6, 500.0),
            D_ceil=np.full(6, 500.0),
        ),
    )
    m_base = metrics(run_episode(baseline, [stiff_model], seed=3))
    assert m_base["contact_loss_count"] >= 1, m_base
    assert m_base["peak_contact_force"] > 0.0

    audits = []

    def hook(sol):
        if sol.status != "infeasible" and "well_damped_min" in sol.constraint_activity:
            audits.append(sol.constraint_activity["well_damped_min"])

    log = run_episode(stiff_scn, [stiff_model], seed=3, on_solution=hook)
    m_wd = metrics(log)
    assert m_wd["contact_loss_count"] == 0, m_wd
    assert m_wd["peak_contact_force"] > 0.0  # contact did happen
    assert audits and min(audits) >= -1e-3, min(audits, default=None)
    assert time.time() - t0 < 300.0


# ---------------------------------------------------------------------------
# 8. Chance-constraint efficacy


@pytest.mark.criterion(8, "chance bound caps peak force; Monte Carlo boundary probability within 2%")
def test_chance_constraint_efficacy(variance_scn, variance_model_jittered):
    for seed in (11, 12, 13):
        peaks = {}
        for on in (True, False):
            scn = replace(variance_scn, mpc=replace(variance_scn.mpc, chance_constraint=on))
            m = metrics(run_episode(scn, [variance_model_jittered], seed=seed))
            peaks[on] = m["peak_contact_force"]
        assert peaks[True] <= peaks[False] + 1e-6, peaks

    # Monte Carlo at the analytic constraint boundary.
    g = variance_scn.mpc.quantile_scale()
    sigma = 2.0
    f_bar = variance_scn.mpc.f_bar
    f_mean = f_bar - g * sigma  # residual exactly zero
    rng = np.random.default_rng(8)
    samples = rng.normal(f_mean, sigma, size=100_000)
    p_mc = float(np.mean(samples <= f_bar))
    p_pred = 0.5 * (1.0 + erf(g / math.sqrt(2.0)))
    assert abs(p_mc - p_pred) <= 0.02 * p_pred, (p_mc, p_pred)


# ---------------------------------------------------------------------------
# 9. Variance-aligned impedance


@pytest.mark.criterion(9, "rail run: damping on the free DOF <= 0.5x damping on the contact DOF")
def test_rail_damping_split():
    scn = load_scenario(SCENARIOS / "rail.cfg")
    model = _fit_wall(scn, (0, 1, 2))
    log = run_episode(scn, [model], seed=5)
    tail = slice(-500, None)  # converged final second
    d_free = float(log.D[tail, 0].mean())
    d_contact = float(log.D[tail, 2].mean())
    assert d_free <= 0.5 * d_contact, (d_free, d_contact)


# ---------------------------------------------------------------------------
# 10. Disturbance rejection


@pytest.mark.criterion(10, "H2 cost cuts >15 Hz RMS velocity by >=10% and moves <15 Hz RMS by <10%")
def test_disturbance_rejection_bands():
    scn = load_scenario(SCENARIOS / "polishing.cfg")
    model = _zero_model()
    base_scn = replace(scn, mpc=replace(scn.mpc, disturbance_cost=False))
    base = metrics(run_episode(base_scn, [model], seed=7))
    shaped = metrics(run_episode(scn, [model], seed=7))
    hi_drop = 1.0 - shaped["rms_vel_high"] / base["rms_vel_high"]
    lo_change = abs(shaped["rms_vel_low"] / base["rms_vel_low"] - 1.0)
    assert hi_drop >= 0.10, hi_drop
    assert lo_change < 0.10, lo_change


# ---------------------------------------------------------------------------
# 11. Belief convergence


@pytest.mark.criterion(11, "dual-goal belief >0.9 within 50 planner steps and re-converges after the switch")
def test_dual_goal_belief():
    scn = load_scenario(SCENARIOS / "dual_goal.cfg")

    def goal_model(goal, seed):
        human = SyntheticHuman(
            goals=np.array([goal]),
            kp=scn.human.kp,
            kd=scn.human.kd,
            saturation=scn.human.saturation,
        )
        rng = np.random.default_rng(seed)
        X = np.zeros((40, 6))
        X[:, 0] = rng.uniform(-0.22, 0.22, size=40)
        X[:, 2] = scn.x0[2]
        F = np.array([human_force(human, x, np.zeros(6), 0.0) for x in X])
        F += rng.normal(0.0, 0.2, F.shape)
        return fit_force_model(X, F)

    models = [goal_model(scn.human.goals[0], 0), goal_model(scn.human.goals[1], 1)]
    log = run_episode(scn, models, seed=9)

    steps_50 = int(50 / scn.mpc_rate_hz * scn.inner_hz)  # 50 planner periods
    assert np.any(log.belief[:steps_50, 0] > 0.9)

    switch = scn.human.switch_times[0]
    after = log.t > switch
    window = after & (log.t <= switch + 50 / scn.mpc_rate_hz)
    assert np.any(log.belief[window, 1] > 0.9)


# ---------------------------------------------------------------------------
# 12. Differential structure


@pytest.mark.criterion(12, "covariance is insensitive to f^r (exact zeros); nonzero blocks match differences")
def test_sensitivity_differential():
    rng = np.random.default_rng(12)
    for trial in range(100):
        M = float(rng.uniform(1, 20))
        D = float(rng.uniform(50, 2000))
        mu = rng.normal(0.0, 0.3, 2)
        L = rng.normal(0.0, 0.05, (2, 2))
        S = L @ L.T
        f_mean = float(rng.normal(0.0, 5.0))
        f_var = float(rng.uniform(0.1, 4.0))
        f_ref = float(rng.normal(0.0, 5.0))
        integ = ("implicit", "euler", "exponential")[trial % 3]
        Ts = 0.01
        rep = impedance_vs_trajectory_differential(
            (M, D), mu, S, f_mean, f_var, f_ref=f_ref, Ts=Ts, integrator=integ
        )
        assert np.all(rep.dsigma_dfr == 0.0)

        def step(m_, d_, fr_):
            A, b = axis_AB(m_, d_, Ts, integ)
            mu2 = A @ mu + b * (f_mean - fr_)
            S2 = A @ S @ A.T + f_var * np.outer(b, b)
            return mu2, np.array([S2[0, 0], S2[0, 1], S2[1, 1]])

        h = 1e-6
        fd_mu_fr = (step(M, D, f_ref + h)[0] - step(M, D, f_ref - h)[0]) / (2 * h)
        np.testing.assert_allclose(rep.dmu_dfr, fd_mu_fr, rtol=1e-5, atol=1e-9)
        for col, (mp, dp) in enumerate(((M + h, D), (M, D + h))):
            mm, dm = (M - h, D) if col == 0 else (M, D - h)
            fd_mu = (step(mp, dp, f_ref)[0] - step(mm, dm, f_ref)[0]) / (2 * h)
            fd_S = (step(mp, dp, f_ref)[1] - step(mm, dm, f_ref)[1]) / (2 * h)
            np.testing.assert_allclose(rep.dmu_dphi[:, col], fd_mu, rtol=1e-4, atol=1e-8)
            np.testing.assert_allclose(rep.dsigma_dphi[:, col], fd_S, rtol=1e-4, atol=1e-10)


# ---------------------------------------------------------------------------
# 13. Determinism


@pytest.mark.criterion(13, "repeated CLI run with the same seed is byte-identical")
def test_cli_run_determinism(tmp_path):
    demo_dir = tmp_path / "demos"
    assert cli.main([
        "demo-gen", "--scenario", str(SCENARIOS / "contact_soft.cfg"),
        "--out-dir", str(demo_dir), "--n", "2", "--seed", "1",
    ]) == 0
    model = tmp_path / "model.json"
    demos = sorted(str(p) for p in demo_dir.glob("*.csv"))
    assert cli.main([
        "fit", "--demos", *demos, "--mean", "hinge", "--out", str(model),
    ]) == 0

    outs = []
    for run in ("a", "b"):
        out = tmp_path / f"run_{run}.csv"
        assert cli.main([
            "run", "--scenario", str(SCENARIOS / "contact_soft.cfg"),
            "--models", str(model), "--out", str(out), "--seed", "7",
        ]) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    a_metrics = outs[0].with_suffix(".csv.metrics.txt")
    b_metrics = outs[1].with_suffix(".csv.metrics.txt")
    assert a_metrics.read_bytes() == b_metrics.read_bytes()


# ---------------------------------------------------------------------------
# 14. Timing (informative)


@pytest.mark.criterion(14, "baseline planner step timing (informative, target < 200 ms)")
def test_baseline_step_timing():
    cfg = MpcConfig(H=10, Ts=0.05, active_axes=(2,), q_mu_v=0.2, q_sigma_v=0.1,
                    q_u_f=1e-4, max_iter=60)
    ctrl = MpcController(cfg, [_zero_model()])
    state = StateDist(mean=np.zeros(12), cov=np.zeros((12, 12)))
    phi = ImpedanceParams(M=np.full(6, 5.0), D=np.full(6, 500.0))
    belief = Belief.uniform(1)
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        ctrl.step(state, belief, phi)
        times.append(time.perf_counter() - t0)
    best_ms = 1e3 * min(times)
    conftest.NOTES[14] = f"measured {best_ms:.0f} ms per solve, target 200 ms"
    # Informative only: record the number, gate just on basic sanity.
    assert math.isfinite(best_ms) and best_ms > 0.0
