"""Run the figure presets and write CSV + JSON under results/.

    python3 scripts/run_presets.py                  # every preset at default budget
    python3 scripts/run_presets.py fig2 --steps 30000 --large
"""

import argparse
import logging
import warnings
from pathlib import Path

from xxzness.experiments import PRESETS, emit_results, preset_configs, run_config
from xxzness.trajectory import ConvergenceWarning


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("presets", nargs="*", default=[n for n in PRESETS if n != "custom"])
    p.add_argument("--steps", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--large", action="store_true", help="include N >= 16")
    p.add_argument("--outdir", default="results")
    args = p.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    warnings.simplefilter("default", ConvergenceWarning)
    over = {k: v for k, v in dict(steps=args.steps, burn_in=args.burn_in, trajectories=args.trajectories,
                                  seed=args.seed).items() if v is not None}
    if args.steps is not None:
        over["large_steps"] = args.steps
    if args.burn_in is not None:
        over["large_burn_in"] = args.burn_in
    if args.large:
        over["large"] = True
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name in args.presets:
        records = [r for cfg in preset_configs(name, over) for r in run_config(cfg)]
        for path in emit_results(records, outdir / name, "both", config={"preset": name, **over}):
            print("wrote", path)


if __name__ == "__main__":
    main()
