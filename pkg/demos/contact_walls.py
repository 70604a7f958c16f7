"""Walk through the contact pipeline on three wall stiffnesses.

Scripted guided sweeps are recorded against soft (15 N/mm), medium
(45 N/mm), and stiff (126 N/mm) walls; a hinge-mean GP is fitted per
wall and its recovered slope compared against the ground truth. The
stiff wall is then run in closed loop twice: once with the impedance
pinned low (which chatters against the surface) and once with the
well-damped bound enabled (which raises damping before contact and
holds the tool on the wall).

Run from the repository root:

    python3 demos/contact_walls.py
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

import gpmpc
from gpmpc.gp_force import fit_force_model, subsample
from gpmpc.sim import generate_demo, load_scenario, metrics, run_episode

SCENARIOS = Path(gpmpc.__file__).parent / "scenarios"


def fit_wall(scn, seeds=(0, 1, 2)):
    demos = [generate_demo(scn, seed=s) for s in seeds]
    stack = np.vstack(demos)
    X, F = subsample(stack[:, 1:7], stack[:, 7:13], max_points=80)
    return fit_force_model(X, F, hinge_axes=(scn.env.axis,))


def main():
    print("== fitting hinge models on scripted sweeps ==")
    models = {}
    for name in ("contact_soft", "contact_variance", "contact_stiff"):
        scn = load_scenario(SCENARIOS / f"{name}.cfg")
        scn = replace(scn, env=replace(scn.env, jitter=0.0))
        model = fit_wall(scn)
        models[name] = (scn, model)
        slope = abs(model.axes[2].mean_fn.slope)
        truth = scn.env.stiffness
        print(f"{name:17s} truth {truth/1e3:5.0f} N/mm   "
              f"fitted {slope/1e3:6.1f} N/mm   ({slope/truth:.2f}x)")

    print("\n== stiff wall in closed loop ==")
    scn, model = models["contact_stiff"]
    scn = load_scenario(SCENARIOS / "contact_stiff.cfg")
    pinned = replace(scn, mpc=replace(
        scn.mpc, well_damped=False,
        M_floor=np.full(6, 5.0), M_ceil=np.full(6, 5.0),
        D_floor=np.full(6, 500.0), D_ceil=np.full(6, 500.0)))
    for label, s in (("pinned M=5, D=500", pinned), ("well-damped bound", scn)):
        m = metrics(run_episode(s, [model], seed=3))
        print(f"{label:18s} contact losses {m['contact_loss_count']:2d}   "
              f"peak {m['peak_contact_force']:5.1f} N   "
              f"final D_z {m['D_max_2']:6.0f} Ns/m")


if __name__ == "__main__":
    main()
