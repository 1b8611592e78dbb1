"""Monte Carlo coverage study with a randomized (constant propensity) design.

Example::

    python scripts/mc_randomized.py --reps 500 --widths 20,15,5 --workers 8 --out results/randomized
"""

import argparse
import logging

from dnnsemi.network import ArchitectureSpec
from dnnsemi.simulation import DgpSpec, run_study
from dnnsemi.training import TrainConfig


def parse_args(propensity_mode="constant", default_reps=500):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=default_reps)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--outcome", choices=("linear", "nonlinear"), default="linear")
    ap.add_argument("--propensity", choices=("constant", "logistic"), default=propensity_mode)
    ap.add_argument("--widths", default="20,15,5", help="comma-separated hidden widths")
    ap.add_argument("--oracle", action="store_true", help="plug in the true nuisance functions")
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="directory for per-replication CSV and summary")
    return ap.parse_args()


def main(args):
    spec = DgpSpec(d=args.d, n=args.n, propensity_mode=args.propensity, outcome_mode=args.outcome)
    widths = tuple(int(w) for w in args.widths.split(","))
    arch = None if args.oracle else ArchitectureSpec(args.d, widths)
    rep = run_study(
        spec, arch, TrainConfig(epochs=args.epochs), reps=args.reps, master_seed=args.seed,
        nuisance="oracle" if args.oracle else "trained", workers=args.workers,
    )
    print(rep.summary_block())
    if args.out:
        rep.write(args.out, "oracle" if args.oracle else "trained")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main(parse_args())
