"""theta = N j at full driving against the anisotropy, for several chain lengths.

Chains up to 8 sites are solved exactly; longer ones by trajectories.
"""

import argparse
import warnings

from xxzness.config import ChainSpec, RunPlan
from xxzness.master import solve_ness
from xxzness.trajectory import ConvergenceWarning, order_parameter


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-sites", default="6,8,10")
    p.add_argument("--delta", default="0.5,0.75,1,1.25,1.5")
    p.add_argument("--steps", type=int, default=22_000)
    p.add_argument("--burn-in", type=int, default=2_000)
    p.add_argument("--trajectories", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    warnings.simplefilter("ignore", ConvergenceWarning)

    deltas = [float(x) for x in args.delta.split(",")]
    print("N   Delta   theta      err     method")
    for N in (int(x) for x in args.n_sites.split(",")):
        for d in deltas:
            chain = ChainSpec.symmetric(N, d, 1.0)
            if N <= 8:
                th, err, how = N * solve_ness(chain).j, 0.0, "exact"
            else:
                plan = RunPlan(chain, args.steps, args.burn_in, args.seed, args.trajectories)
                th, err, _ = order_parameter(plan)
                how = "trajectories"
            print(f"{N:<3d} {d:<6.3g} {th:<10.4g} {err:<7.2g} {how}")


if __name__ == "__main__":
    main()
