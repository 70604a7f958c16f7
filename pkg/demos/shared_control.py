"""Impedance shaping in the three guided tasks.

Three short closed-loop stories:

* rail: the approach axis meets a repeatable contact, so its damping is
  raised by the well-damped bound while the free axis stays light for
  the operator;
* polishing: a 20 Hz tool disturbance is attenuated by the
  frequency-domain cost acting through the virtual mass, leaving the
  low-frequency guidance response untouched;
* dual goal: two per-goal force models and a discrete belief let the
  planner recognise which goal the operator is pulling toward, and
  re-recognise it after a mid-run switch.

    python3 demos/shared_control.py
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

import gpmpc
from gpmpc.gp_force import (AxisGp, GpForceModel, GpHyper, fit_force_model,
                            subsample)
from gpmpc.sim import (SyntheticHuman, generate_demo, human_force,
                       load_scenario, metrics, run_episode)

SCENARIOS = Path(gpmpc.__file__).parent / "scenarios"


def rail():
    scn = load_scenario(SCENARIOS / "rail.cfg")
    demos = [generate_demo(scn, seed=s) for s in (0, 1, 2)]
    stack = np.vstack(demos)
    X, F = subsample(stack[:, 1:7], stack[:, 7:13], max_points=80)
    model = fit_force_model(X, F, hinge_axes=(2,))
    log = run_episode(scn, [model], seed=5)
    tail = slice(-500, None)
    print(f"rail:      D_free {log.D[tail, 0].mean():5.0f} Ns/m   "
          f"D_contact {log.D[tail, 2].mean():5.0f} Ns/m")


def polishing():
    scn = load_scenario(SCENARIOS / "polishing.cfg")
    hyper = GpHyper(signal_var=1e-4, noise_var=1e-4, length_scales=np.ones(6))
    flat = GpForceModel(axes=tuple(
        AxisGp(X=np.zeros((0, 6)), y=np.zeros(0), hyper=hyper) for _ in range(6)))
    base = metrics(run_episode(
        replace(scn, mpc=replace(scn.mpc, disturbance_cost=False)), [flat], seed=7))
    shaped = metrics(run_episode(scn, [flat], seed=7))
    print(f"polishing: >15 Hz RMS {base['rms_vel_high']:.2e} -> "
          f"{shaped['rms_vel_high']:.2e} m/s   "
          f"<15 Hz RMS {base['rms_vel_low']:.2e} -> {shaped['rms_vel_low']:.2e} m/s")


def dual_goal():
    scn = load_scenario(SCENARIOS / "dual_goal.cfg")

    def goal_model(goal, seed):
        human = SyntheticHuman(goals=np.array([goal]), kp=scn.human.kp,
                               kd=scn.human.kd, saturation=scn.human.saturation)
        rng = np.random.default_rng(seed)
        X = np.zeros((40, 6))
        X[:, 0] = rng.uniform(-0.22, 0.22, size=40)
        X[:, 2] = scn.x0[2]
        F = np.array([human_force(human, x, np.zeros(6), 0.0) for x in X])
        return fit_force_model(X, F + rng.normal(0.0, 0.2, F.shape))

    models = [goal_model(g, i) for i, g in enumerate(scn.human.goals)]
    log = run_episode(scn, models, seed=9)
    for t in (0.5, 1.5, 2.5, 3.5):
        i = int(t * scn.inner_hz)
        print(f"dual goal: t={t:.1f} s   belief = "
              + "  ".join(f"{b:.2f}" for b in log.belief[i]))


if __name__ == "__main__":
    rail()
    polishing()
    dual_goal()
