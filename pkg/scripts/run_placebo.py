"""Placebo study: controls only, half of them given a fake treatment.

Example::

    python scripts/run_placebo.py --reps 500 --workers 8
"""

import argparse
import logging

from dnnsemi.network import ArchitectureSpec
from dnnsemi.simulation import DgpSpec, run_placebo
from dnnsemi.training import TrainConfig

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--widths", default="20,15,5")
    ap.add_argument("--fraction", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    spec = DgpSpec(d=args.d, n=args.n)
    arch = ArchitectureSpec(args.d, tuple(int(w) for w in args.widths.split(",")))
    rep = run_placebo(spec, arch, TrainConfig(), reps=args.reps, placebo_fraction=args.fraction,
                      seed=args.seed, workers=args.workers)
    print(rep.summary_block())
    if args.out:
        rep.write(args.out, "placebo")
