"""Threshold policy search on a design with a known optimal cutoff.

Fits the outcome network per seed, evaluates the profit gain of every
threshold rule over treating nobody, and reports the selected cutoff.
"""

import argparse
import csv
import sys

from dnnsemi.causal import NuisanceEstimates
from dnnsemi.network import ArchitectureSpec
from dnnsemi.policy import ThresholdPolicyClass, evaluate_grid, select_optimal, treat_none
from dnnsemi.simulation import ThresholdDgp
from dnnsemi.training import TrainConfig, fit_joint

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--cutoff", type=float, default=0.6)
    ap.add_argument("--step", type=float, default=0.02)
    args = ap.parse_args()
    dgp = ThresholdDgp(n=args.n, cutoff=args.cutoff)
    cls = ThresholdPolicyClass.from_range(0, 0.0, 1.0, args.step)
    arch = ArchitectureSpec(dgp.d, (20, 15, 5), output_dim=2)
    out = csv.writer(sys.stdout)
    out.writerow(["seed", "selected", "estimate", "se"])
    for seed in range(args.seeds):
        data = dgp.sample(seed)
        model = fit_joint(data.X, data.y, data.t, arch, TrainConfig(seed=seed))
        nuis = NuisanceEstimates.randomized(model.mu0, model.mu1, data.t)
        best = select_optimal(evaluate_grid(data, nuis, cls, treat_none, dgp.margin, dgp.cost))
        out.writerow([seed, f"{best.threshold:g}", f"{best.report.estimate:.5f}", f"{best.report.std_error:.5f}"])
