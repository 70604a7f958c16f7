"""Closed-loop simulation: environment, synthetic human, runner, metrics.

A fast semi-implicit admittance loop (default 500 Hz) integrates the
virtual dynamics under the sum of contact, human, and disturbance forces
while the planner runs at its own slower rate. Two couplings exist: a
deterministic lockstep mode (the planner solved synchronously every k
inner steps) and a threaded mode with a latest-state-in / latest-plan-out
exchange where the inner loop never blocks on the solver.
"""

from __future__ import annotations

import configparser
import io
import math
import os
import threading
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.signal import butter, filtfilt

from gpmpc.admittance import N_AX, N_STATE, SCHEMES, ImpedanceParams, StateDist
from gpmpc.human_arm import ArmGeometry
from gpmpc.mode_belief import Belief, decay_floor, update
from gpmpc.mpc import MpcConfig, MpcController


class ConfigError(ValueError):
    """Scenario file is malformed or contains unknown keys."""


@dataclass
class ContactEnv:
    """Axis-aligned unilateral spring wall with optional location jitter.

    direction is the unit sign pointing from free space into the wall
    along the contact axis; penetration is direction*(x - location).
    """

    axis: int = 2
    location: float = -0.34
    direction: float = -1.0
    stiffness: float = 126000.0
    jitter: float = 0.0
    unilateral: bool = True
    damping_ratio: float = 0.02
    ref_mass: float = 5.0

    def __post_init__(self):
        if not 0 <= self.axis < N_AX:
            raise ConfigError("environment axis must be in 0..5")
        if self.stiffness < 0:
            raise ConfigError("environment stiffness must be nonnegative")
        if self.direction not in (-1.0, 1.0):
            raise ConfigError("environment direction must be +1 or -1")

    @property
    def damping(self) -> float:
        if self.stiffness == 0:
            return 0.0
        return 2.0 * self.damping_ratio * math.sqrt(self.stiffness * self.ref_mass)


def contact_force(env: ContactEnv, x, xdot) -> np.ndarray:
    """Wrench from the wall: zero on the free side, never pulling."""
    f = np.zeros(N_AX)
    pen = env.direction * (float(np.asarray(x).reshape(-1)[env.axis]) - env.location)
    if pen <= 0.0 or env.stiffness == 0.0:
        return f
    pen_rate = env.direction * float(np.asarray(xdot).reshape(-1)[env.axis])
    normal = env.stiffness * pen + env.damping * pen_rate
    if env.unilateral:
        normal = max(normal, 0.0)
    f[env.axis] = -env.direction * normal
    return f


@dataclass
class SyntheticHuman:
    """Saturated PD pull toward a scheduled sequence of goals."""

    goals: np.ndarray  # (G, 3)
    kp: float = 300.0
    kd: float = 30.0
    saturation: float = 30.0
    switch_times: tuple = ()

    def __post_init__(self):
        self.goals = np.atleast_2d(np.asarray(self.goals, dtype=float)).reshape(-1, 3)
        if self.kp < 0 or self.kd < 0:
            raise ConfigError("human PD gains must be nonnegative")
        if self.saturation <= 0:
            raise ConfigError("human force saturation must be positive")
        self.switch_times = tuple(float(t) for t in self.switch_times)

    def active_goal(self, t: float) -> int:
        idx = sum(1 for s in self.switch_times if t >= s)
        return min(idx, len(self.goals) - 1)


def human_force(h: SyntheticHuman, x, xdot, t: float) -> np.ndarray:
    """Saturated PD attraction toward the currently scheduled goal."""
    x = np.asarray(x, dtype=float).reshape(-1)
    xdot = np.asarray(xdot, dtype=float).reshape(-1)
    goal = h.goals[h.active_goal(t)]
    f3 = h.kp * (goal - x[:3]) - h.kd * xdot[:3]
    norm = float(np.linalg.norm(f3))
    if norm > h.saturation:
        f3 = f3 * (h.saturation / norm)
    f = np.zeros(N_AX)
    f[:3] = f3
    return f


@dataclass
class DisturbanceGen:
    """High-frequency force disturbance: sinusoid or high-passed noise."""

    amplitude: float = 0.0
    axis: int = 1
    kind: str = "sinusoid"  # sinusoid | noise
    freq_hz: float = 20.0
    cutoff_hz: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("sinusoid", "noise"):
            raise ConfigError("disturbance kind must be sinusoid or noise")
        if not 0 <= self.axis < N_AX:
            raise ConfigError("disturbance axis must be in 0..5")

    def sequence(self, n: int, dt: float) -> np.ndarray:
        """Deterministic (n, 6) force trace for an episode."""
        out = np.zeros((n, N_AX))
        if self.amplitude == 0.0 or n == 0:
            return out
        if self.kind == "sinusoid":
            t = np.arange(n) * dt
            out[:, self.axis] = self.amplitude * np.sin(2.0 * math.pi * self.freq_hz * t)
        else:
            rng = np.random.default_rng(self.seed)
            w = rng.normal(size=n)
            b, a = butter(2, self.cutoff_hz / (0.5 / dt), btype="highpass")
            sig = filtfilt(b, a, w)
            rms = float(np.sqrt(np.mean(sig**2)))
            if rms > 0:
                sig = sig / rms * self.amplitude / math.sqrt(2.0)
            out[:, self.axis] = sig
        return out


# ---------------------------------------------------------------------------
# Run log


def _cols(prefix, n=N_AX):
    return [f"{prefix}{i}" for i in range(n)]


_STATUS_CODES = {"none": 0, "converged": 1, "max-iter": 2, "infeasible": 3}
_STATUS_NAMES = {v: k for k, v in _STATUS_CODES.items()}


@dataclass
class RunLog:
    """Fixed-schema trace of one episode (one row per inner step)."""

    t: np.ndarray
    x: np.ndarray  # (T, 6)
    v: np.ndarray
    f_human: np.ndarray
    f_contact: np.ndarray
    f_dist: np.ndarray
    f_total: np.ndarray
    f_ref: np.ndarray
    M: np.ndarray
    D: np.ndarray
    belief: np.ndarray  # (T, N)
    status: np.ndarray  # (T,) int codes
    contact_axis: int = 2

    def __post_init__(self):
        n = len(self.t)
        if any(len(a) != n for a in (self.x, self.v, self.f_human, self.f_contact,
                                     self.f_dist, self.f_total, self.f_ref,
                                     self.M, self.D, self.belief, self.status)):
            raise ValueError("log arrays must share a length")
        if n and np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def n_modes(self) -> int:
        return self.belief.shape[1]

    def header(self):
        return (
            ["t"] + _cols("x") + _cols("v") + _cols("fh") + _cols("fc")
            + _cols("fd") + _cols("ft") + _cols("fr") + _cols("M") + _cols("D")
            + _cols("b", self.n_modes) + ["status"]
        )

    def to_csv(self, path):
        data = np.column_stack(
            [self.t, self.x, self.v, self.f_human, self.f_contact, self.f_dist,
             self.f_total, self.f_ref, self.M, self.D, self.belief,
             self.status.astype(float)]
        )
        buf = io.StringIO()
        buf.write("# contact_axis=%d\n" % self.contact_axis)
        buf.write(",".join(self.header()) + "\n")
        for row in data:
            buf.write(",".join(repr(float(c)) for c in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline().strip()
            if not first.startswith("# contact_axis="):
                raise ValueError(f"{path}: missing contact_axis preamble")
            contact_axis = int(first.split("=", 1)[1])
            header = fh.readline().strip().split(",")
            raw = np.loadtxt(fh, delimiter=",", ndmin=2)
        n_modes = sum(1 for h in header if h.startswith("b") and h[1:].isdigit())
        expect = 1 + 9 * N_AX + n_modes + 1
        if len(header) != expect or (raw.size and raw.shape[1] != expect):
            raise ValueError(f"{path}: unexpected log schema")
        if raw.size == 0:
            raise ValueError(f"{path}: empty log")
        c = 0

        def take(w):
            nonlocal c
            out = raw[:, c : c + w]
            c += w
            return out

        t = take(1)[:, 0]
        parts = [take(N_AX) for _ in range(9)]
        belief = take(n_modes)
        status = take(1)[:, 0].astype(int)
        return cls(t, *parts, belief, status, contact_axis=contact_axis)


# ---------------------------------------------------------------------------
# Scenario configuration


def _parse_floats(s):
    return np.array([float(p) for p in s.replace(";", ",").split(",") if p.strip() != ""])


def _parse_goals(s):
    rows = [r for r in s.split(";") if r.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


@dataclass
class ScenarioConfig:
    """Fully parsed scenario: robot, environment, human, disturbance, MPC."""

    duration: float = 5.0
    inner_hz: float = 500.0
    x0: np.ndarray = field(default_factory=lambda: np.zeros(N_AX))
    v0: np.ndarray = field(default_factory=lambda: np.zeros(N_AX))
    phi: ImpedanceParams = None
    env: ContactEnv = None
    human: SyntheticHuman = None
    disturbance: DisturbanceGen = None
    mpc: MpcConfig = None
    mpc_enabled: bool = True
    mpc_rate_hz: float = 15.0
    belief_floor: float = 0.01
    belief_update: bool = True
    force_noise: float = 0.0
    tracking_bw: float = 0.0


_ROBOT_KEYS = {"mass", "damping", "inner_hz", "duration", "x0", "v0", "force_noise",
               "tracking_bw"}
_ENV_KEYS = {"axis", "location", "direction", "stiffness", "jitter", "unilateral", "damping_ratio"}
_HUMAN_KEYS = {"goals", "kp", "kd", "saturation", "switch_times"}
_DIST_KEYS = {"amplitude", "axis", "kind", "freq_hz", "cutoff_hz", "seed"}
_GP_KEYS = {"belief_floor", "belief_update"}
_MPC_EXTRA = {"enabled", "rate_hz"}
_MPC_VEC_FIELDS = {
    "q_mu_p", "q_mu_v", "x_ref", "q_sigma_p", "q_sigma_v", "q_f", "q_sigma_f",
    "q_u_f", "q_fref", "f_ref_target", "fr_min", "fr_max", "M_floor", "M_ceil",
    "D_floor", "D_ceil", "chance_sign", "q_tau",
}
_MPC_BOOL_FIELDS = {
    "chance_constraint", "well_damped", "disturbance_cost", "ergonomic_cost",
    "force_ref_offset_cost", "strict_quantile",
}
_MPC_INT_FIELDS = {"H", "max_iter", "verbose"}
_MPC_FIELD_NAMES = {f.name for f in fields(MpcConfig)} - {"arm"}


def _check_keys(section, keys, allowed, path):
    for k in keys:
        if k not in allowed:
            raise ConfigError(f"{path}: unknown key '{k}' in section [{section}]")


def load_scenario(path) -> ScenarioConfig:
    """Parse an INI scenario file; unknown sections or keys are rejected."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (H vs h, D_floor ...)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"{path}: cannot read scenario file")
    known_sections = {"robot", "environment", "human", "disturbance", "mpc", "gp"}
    for s in cp.sections():
        if s not in known_sections:
            raise ConfigError(f"{path}: unknown section [{s}]")

    out = ScenarioConfig()
    if cp.has_section("robot"):
        sec = cp["robot"]
        _check_keys("robot", sec, _ROBOT_KEYS, path)
        mass = _parse_floats(sec.get("mass", "5"))
        damp = _parse_floats(sec.get("damping", "500"))
        mass = np.full(N_AX, mass[0]) if mass.size == 1 else mass
        damp = np.full(N_AX, damp[0]) if damp.size == 1 else damp
        out.phi = ImpedanceParams(M=mass, D=damp)
        out.inner_hz = sec.getfloat("inner_hz", 500.0)
        out.duration = sec.getfloat("duration", 5.0)
        out.force_noise = sec.getfloat("force_noise", 0.0)
        out.tracking_bw = sec.getfloat("tracking_bw", 0.0)
        if "x0" in sec:
            out.x0 = _parse_floats(sec["x0"]).reshape(N_AX)
        if "v0" in sec:
            out.v0 = _parse_floats(sec["v0"]).reshape(N_AX)
    else:
        out.phi = ImpedanceParams(M=np.full(N_AX, 5.0), D=np.full(N_AX, 500.0))

    if cp.has_section("environment"):
        sec = cp["environment"]
        _check_keys("environment", sec, _ENV_KEYS, path)
        out.env = ContactEnv(
            axis=sec.getint("axis", 2),
            location=sec.getfloat("location", -0.34),
            direction=sec.getfloat("direction", -1.0),
            stiffness=sec.getfloat("stiffness", 0.0),
            jitter=sec.getfloat("jitter", 0.0),
            unilateral=sec.getboolean("unilateral", True),
            damping_ratio=sec.getfloat("damping_ratio", 0.02),
        )

    if cp.has_section("human"):
        sec = cp["human"]
        _check_keys("human", sec, _HUMAN_KEYS, path)
        out.human = SyntheticHuman(
            goals=_parse_goals(sec.get("goals", "0,0,0")),
            kp=sec.getfloat("kp", 300.0),
            kd=sec.getfloat("kd", 30.0),
            saturation=sec.getfloat("saturation", 30.0),
            switch_times=tuple(_parse_floats(sec.get("switch_times", ""))),
        )

    if cp.has_section("disturbance"):
        sec = cp["disturbance"]
        _check_keys("disturbance", sec, _DIST_KEYS, path)
        out.disturbance = DisturbanceGen(
            amplitude=sec.getfloat("amplitude", 0.0),
            axis=sec.getint("axis", 1),
            kind=sec.get("kind", "sinusoid"),
            freq_hz=sec.getfloat("freq_hz", 20.0),
            cutoff_hz=sec.getfloat("cutoff_hz", 10.0),
            seed=sec.getint("seed", 0),
        )

    if cp.has_section("gp"):
        sec = cp["gp"]
        _check_keys("gp", sec, _GP_KEYS, path)
        out.belief_floor = sec.getfloat("belief_floor", 0.01)
        out.belief_update = sec.getboolean("belief_update", True)

    if cp.has_section("mpc"):
        sec = cp["mpc"]
        _check_keys("mpc", sec, _MPC_FIELD_NAMES | _MPC_EXTRA, path)
        out.mpc_enabled = sec.getboolean("enabled", True)
        out.mpc_rate_hz = sec.getfloat("rate_hz", 15.0)
        kw = {}
        for name in sec:
            if name in _MPC_EXTRA:
                continue
            if name == "active_axes":
                kw[name] = tuple(int(v) for v in _parse_floats(sec[name]))
            elif name in _MPC_BOOL_FIELDS:
                kw[name] = sec.getboolean(name)
            elif name in _MPC_INT_FIELDS:
                kw[name] = sec.getint(name)
            elif name in _MPC_VEC_FIELDS:
                vals = _parse_floats(sec[name])
                kw[name] = float(vals[0]) if vals.size == 1 else vals
            elif name == "scheme":
                if sec[name] not in SCHEMES:
                    raise ConfigError(f"{path}: unknown integrator scheme '{sec[name]}'")
                kw[name] = sec.get(name)
            else:
                kw[name] = sec.getfloat(name)
        try:
            out.mpc = MpcConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad [mpc] section: {exc}") from exc
    elif out.mpc_enabled:
        out.mpc = MpcConfig()
    return out


# ---------------------------------------------------------------------------
# Episode runner


class _PlanExchange:
    """Latest-state-in / latest-plan-out handoff between loops."""

    def __init__(self, f_ref, phi):
        self._lock = threading.Lock()
        self._state = None
        self._belief = None
        self._plan = (f_ref, phi, "none")

    def publish_state(self, state, belief):
        with self._lock:
            self._state = state
            self._belief = belief

    def latest_state(self):
        with self._lock:
            return self._state, self._belief

    def publish_plan(self, f_ref, phi, status):
        with self._lock:
            self._plan = (np.asarray(f_ref, dtype=float).copy(), phi, status)

    def latest_plan(self):
        with self._lock:
            return self._plan


def _applied_force_noise(rng, scale):
    if scale == 0.0:
        return np.zeros(N_AX)
    return rng.normal(0.0, scale, size=N_AX)


def run_episode(scn: ScenarioConfig, models=(), seed: int = 0, lockstep: bool = True,
                arm=None, on_solution=None) -> RunLog:
    """Simulate one closed-loop episode and return its full log.

    models is the per-mode GpForceModel list the planner and the belief
    update share; empty disables both. Deterministic for a fixed seed in
    lockstep mode. ``on_solution``, if given, is called with each
    MpcSolution as it is produced (lockstep mode only), e.g. for
    post-hoc constraint audits.
    """
    rng = np.random.default_rng(seed)
    dt = 1.0 / scn.inner_hz
    n_steps = int(round(scn.duration * scn.inner_hz))
    models = list(models)
    n_modes = max(len(models), 1)

    env = None
    if scn.env is not None:
        env = replace(scn.env)
        if env.jitter > 0:
            env.location += rng.uniform(-env.jitter, env.jitter)

    dist_seq = (
        scn.disturbance.sequence(n_steps, dt)
        if scn.disturbance is not None
        else np.zeros((n_steps, N_AX))
    )

    x = scn.x0.astype(float).copy()
    v = scn.v0.astype(float).copy()
    # Optional inner position-tracking lag: the admittance integrates a
    # commanded trajectory (x, v) that the tool follows through a
    # first-order servo of bandwidth tracking_bw. Forces act on the tool
    # state, which is what makes stiff contact at low damping bounce.
    track = scn.tracking_bw > 0.0
    lam = 2.0 * math.pi * scn.tracking_bw
    xa, va = x.copy(), v.copy()
    phi = scn.phi
    belief = Belief.uniform(n_modes)
    f_ref = np.zeros(N_AX)
    status = "none"

    use_mpc = scn.mpc_enabled and scn.mpc is not None and len(models) > 0
    if use_mpc and scn.mpc.ergonomic_cost and arm is None and scn.mpc.arm is None:
        # Nominal operator arm at the robot base; override via the arm
        # argument when the scenario models a specific person.
        arm = ArmGeometry(l1=0.3, l2=0.28, shoulder=np.array([0.0, 0.0, 0.3]))
    ctrl = MpcController(scn.mpc, models, arm=arm) if use_mpc else None
    mpc_every = max(1, int(round(scn.inner_hz / scn.mpc_rate_hz)))

    threaded = not lockstep and use_mpc and int(os.environ.get("GPMPC_THREADS", "1")) > 0
    exchange = _PlanExchange(f_ref, phi) if threaded else None
    stop = threading.Event()
    worker = None
    if threaded:
        def _worker():
            while not stop.is_set():
                st, bl = exchange.latest_state()
                if st is None:
                    stop.wait(1e-3)
                    continue
                _, cur_phi, _ = exchange.latest_plan()
                sol = ctrl.step(st, bl, cur_phi)
                exchange.publish_plan(sol.f_ref[0], sol.impedance, sol.status)
        worker = threading.Thread(target=_worker, daemon=True)
        worker.start()

    cols = lambda: np.zeros((n_steps, N_AX))
    log_t = np.zeros(n_steps)
    log_x, log_v = cols(), cols()
    log_fh, log_fc, log_fd, log_ft, log_fr = cols(), cols(), cols(), cols(), cols()
    log_M, log_D = cols(), cols()
    log_b = np.zeros((n_steps, n_modes))
    log_s = np.zeros(n_steps, dtype=int)

    try:
        for i in range(n_steps):
            t = i * dt
            xt, vt = (xa, va) if track else (x, v)
            f_h = human_force(scn.human, xt, vt, t) if scn.human is not None else np.zeros(N_AX)
            f_c = contact_force(env, xt, vt) if env is not None else np.zeros(N_AX)
            f_d = dist_seq[i]
            f_tot = f_h + f_c + f_d + _applied_force_noise(rng, scn.force_noise)

            if use_mpc and i % mpc_every == 0:
                if scn.belief_update and n_modes > 1:
                    belief = update(belief, f_tot, xt, models)
                    belief = decay_floor(belief, scn.belief_floor)
                state = StateDist(
                    mean=np.concatenate([xt, vt]), cov=np.zeros((N_STATE, N_STATE))
                )
                if threaded:
                    exchange.publish_state(state, belief)
                    f_ref, phi, status = exchange.latest_plan()
                    f_ref = np.asarray(f_ref, dtype=float).reshape(-1)[:N_AX]
                else:
                    sol = ctrl.step(state, belief, phi)
                    f_ref = sol.f_ref[0]
                    phi = sol.impedance
                    status = sol.status
                    if on_solution is not None:
                        on_solution(sol)

            # Semi-implicit admittance step: implicit in the damping term.
            v = (phi.M * v + dt * (f_tot - f_ref)) / (phi.M + dt * phi.D)
            x = x + dt * v
            if track:
                va = lam * (x - xa)
                xa = xa + dt * va

            log_t[i] = t
            log_x[i], log_v[i] = (xa, va) if track else (x, v)
            log_fh[i], log_fc[i], log_fd[i], log_ft[i] = f_h, f_c, f_d, f_tot
            log_fr[i], log_M[i], log_D[i] = f_ref, phi.M, phi.D
            log_b[i] = belief.probs
            log_s[i] = _STATUS_CODES.get(status, 0)
    finally:
        if worker is not None:
            stop.set()
            worker.join(timeout=5.0)

    # Log timestamps start at dt so they are strictly increasing from 0-.
    log_t = log_t + dt
    return RunLog(
        log_t, log_x, log_v, log_fh, log_fc, log_fd, log_ft, log_fr,
        log_M, log_D, log_b, log_s,
        contact_axis=env.axis if env is not None else 2,
    )


# ---------------------------------------------------------------------------
# Demonstration generation


def generate_demo(scn: ScenarioConfig, seed: int = 0, rate_hz: float = 100.0,
                  penetration: float = 0.0015, dwell: float = 0.2,
                  approach: float = 0.06, speed: float = 0.05,
                  contact_speed: float = 0.004):
    """One scripted guided sweep through the contact: (T, 13) demo array.

    The tool descends along the contact axis from `approach` above the
    nominal wall, slows to `contact_speed` near it (a teacher easing into
    the surface), pushes to `penetration` past the actual (jittered)
    location, dwells, and retracts the same way. The recorded force is
    the wall reaction plus sensor noise. Columns follow the demo CSV
    layout: t, pose (6), force (6).
    """
    if scn.env is None:
        raise ConfigError("demo generation requires an [environment] section")
    rng = np.random.default_rng(seed)
    env = replace(scn.env)
    nominal = env.location
    if env.jitter > 0:
        env.location += rng.uniform(-env.jitter, env.jitter)
    dt = 1.0 / rate_hz

    start = scn.x0.astype(float).copy()
    start[env.axis] = nominal - env.direction * approach
    # Signed travel s grows from 0 (start) toward the wall; the crawl
    # begins shortly above any position the jittered wall can take.
    slow_at = approach - env.jitter - 0.003
    s_end = approach + env.direction * (env.location - nominal) + penetration

    # Piecewise-constant-speed descent profile sampled at the log rate.
    path = []
    s = 0.0
    while s < s_end:
        path.append(s)
        s += dt * (speed if s < slow_at else contact_speed)
    path.append(s_end)
    down = np.array(path)
    hold = np.full(max(int(round(dwell * rate_hz)), 1), s_end)
    profile = np.concatenate([down, hold, down[::-1]])

    rows = []
    for i, si in enumerate(profile):
        x = start.copy()
        x[env.axis] = start[env.axis] + env.direction * si
        f = contact_force(env, x, np.zeros(N_AX)) + rng.normal(0.0, 0.2, size=N_AX)
        rows.append(np.concatenate([[i * dt], x, f]))
    return np.array(rows)


def write_demo_csv(path, demo):
    from gpmpc.gp_force import DEMO_COLUMNS

    with open(path, "w") as fh:
        fh.write(",".join(DEMO_COLUMNS) + "\n")
        for row in demo:
            fh.write(",".join(repr(float(c)) for c in row) + "\n")


# ---------------------------------------------------------------------------
# Metrics


def band_split_rms(signal, fs: float, split_hz: float = 15.0):
    """(low, high) RMS of a signal around a cutoff, zero-phase 4th order."""
    sig = np.asarray(signal, dtype=float)
    if len(sig) < 64:
        raise ValueError("signal too short for band-split analysis")
    wn = split_hz / (0.5 * fs)
    b_lo, a_lo = butter(4, wn, btype="lowpass")
    b_hi, a_hi = butter(4, wn, btype="highpass")
    lo = filtfilt(b_lo, a_lo, sig)
    hi = filtfilt(b_hi, a_hi, sig)
    return float(np.sqrt(np.mean(lo**2))), float(np.sqrt(np.mean(hi**2)))


def contact_loss_count(f_contact_axis) -> int:
    """Contact -> free transitions after the first touch."""
    in_contact = np.abs(np.asarray(f_contact_axis, dtype=float)) > 1e-9
    if not np.any(in_contact):
        return 0
    first = int(np.argmax(in_contact))
    seg = in_contact[first:]
    return int(np.sum(seg[:-1] & ~seg[1:]))


def metrics(log: RunLog, split_hz: float = 15.0) -> dict:
    """Summary record: forces, contact losses, band RMS, impedance stats."""
    if len(log.t) == 0:
        raise ValueError("empty log")
    fs = 1.0 / float(np.median(np.diff(log.t))) if len(log.t) > 1 else 500.0
    fc_axis = log.f_contact[:, log.contact_axis]
    out = {
        "duration": float(log.t[-1]),
        "peak_contact_force": float(np.max(np.abs(fc_axis))),
        "contact_loss_count": contact_loss_count(fc_axis),
        "infeasible_fraction": float(np.mean(log.status == _STATUS_CODES["infeasible"])),
    }
    lo = np.zeros(N_AX)
    hi = np.zeros(N_AX)
    for i in range(N_AX):
        lo[i], hi[i] = band_split_rms(log.v[:, i], fs, split_hz)
    out["rms_vel_low"] = float(np.sqrt(np.sum(lo**2)))
    out["rms_vel_high"] = float(np.sqrt(np.sum(hi**2)))
    for i in range(N_AX):
        out[f"rms_vel_low_{i}"] = float(lo[i])
        out[f"rms_vel_high_{i}"] = float(hi[i])
        out[f"M_mean_{i}"] = float(np.mean(log.M[:, i]))
        out[f"D_mean_{i}"] = float(np.mean(log.D[:, i]))
        out[f"D_max_{i}"] = float(np.max(log.D[:, i]))
    return out


def metrics_report(m: dict) -> str:
    """Stable plain-text rendering of a metrics record."""
    lines = [f"{k} = {m[k]!r}" for k in sorted(m)]
    return "\n".join(lines) + "\n"
