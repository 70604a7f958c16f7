"""Effect of wall-height uncertainty on the planner.

The medium wall's location varies by up to +/-1 cm between episodes.
Fitting on jittered sweeps inflates the GP's contact-region variance,
and the chance constraint turns that inflated variance into an earlier,
softer approach: with the constraint enabled the planner reins in its
own force-reference push before the peak force grows.

    python3 demos/uncertain_wall.py
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

import gpmpc
from gpmpc.gp_force import fit_force_model, subsample
from gpmpc.sim import generate_demo, load_scenario, metrics, run_episode

SCENARIOS = Path(gpmpc.__file__).parent / "scenarios"


def main():
    scn = load_scenario(SCENARIOS / "contact_variance.cfg")

    def fit(jitter, seeds, max_points):
        s = replace(scn, env=replace(scn.env, jitter=jitter))
        demos = [generate_demo(s, seed=k) for k in seeds]
        stack = np.vstack(demos)
        X, F = subsample(stack[:, 1:7], stack[:, 7:13], max_points=max_points)
        return fit_force_model(X, F, hinge_axes=(2,))

    fixed = fit(0.0, (0, 1, 2), 80)
    jittered = fit(scn.env.jitter, (0, 1, 2, 3), 100)

    pose = scn.x0.copy()
    grid = np.linspace(scn.env.location - 0.004, scn.env.location + 0.004, 25)

    def contact_var(model):
        vals = []
        for z in grid:
            p = pose.copy()
            p[2] = z
            vals.append(model.axes[2].posterior(p)[1])
        return float(np.mean(vals))

    vf, vj = contact_var(fixed), contact_var(jittered)
    print(f"contact-region variance: fixed fit {vf:8.3f} N^2   "
          f"jittered fit {vj:8.3f} N^2   ({vj/vf:.0f}x)")

    print("\npeak contact force over three episodes:")
    for on in (True, False):
        s = replace(scn, mpc=replace(scn.mpc, chance_constraint=on))
        peaks = [metrics(run_episode(s, [jittered], seed=k))["peak_contact_force"]
                 for k in (11, 12, 13)]
        label = "chance bound on " if on else "chance bound off"
        print(f"  {label}: " + "  ".join(f"{p:5.1f} N" for p in peaks))


if __name__ == "__main__":
    main()
