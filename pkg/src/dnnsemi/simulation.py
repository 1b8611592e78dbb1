"""Monte Carlo designs for ATE inference with network first steps.

Covariates are U(0,1)^d. An intercept enters through the first entry of each
coefficient vector and is not stored as a column. Treatment is Bernoulli with
a constant 0.5 or a logistic propensity. Outcomes are
``y = mu0(x) + tau(x) t + eps`` with linear or quadratic ``mu0`` and ``tau``.

Replication ``r`` of a study seeded with ``master_seed`` draws all of its
randomness from ``np.random.SeedSequence([master_seed, r])``, so results do
not depend on how replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from scipy.special import expit

from .causal import CausalDataset, NuisanceEstimates, ate
from .network import ArchitectureSpec
from .training import NonFiniteLossError, TrainConfig, fit_joint, fit_propensity, fit_regressions_by_arm

log = logging.getLogger(__name__)

SPARSE_PROPENSITY_SLOPES = 20


@dataclass(frozen=True)
class DgpSpec:
    d: int = 20
    propensity_mode: Literal["constant", "logistic"] = "constant"
    outcome_mode: Literal["linear", "nonlinear"] = "linear"
    n: int = 10_000
    # seed 26 gives logistic propensities spanning about (0.28, 0.72) with mean 0.50
    coef_seed: int = 26
    # "variance": N(a, b) means variance b; "sd": standard deviation b
    normal_scale: Literal["variance", "sd"] = "variance"

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ValueError("need n >= 2 and d >= 1")
        if self.propensity_mode not in ("constant", "logistic"):
            raise ValueError(f"unknown propensity_mode {self.propensity_mode!r}")
        if self.outcome_mode not in ("linear", "nonlinear"):
            raise ValueError(f"unknown outcome_mode {self.outcome_mode!r}")
        if self.normal_scale not in ("variance", "sd"):
            raise ValueError(f"unknown normal_scale {self.normal_scale!r}")


@dataclass(frozen=True)
class DrawnCoefficients:
    alpha_p: np.ndarray
    alpha_mu: np.ndarray
    alpha_tau: np.ndarray
    beta_mu: np.ndarray
    beta_tau: np.ndarray


def n_poly_terms(d: int) -> int:
    return d * (d + 1) // 2


def poly_features(X) -> np.ndarray:
    """Squares and pairwise products ``x_i x_j`` for ``i <= j`` in row-major order.

    The order is ``x1^2, x1x2, ..., x1xd, x2^2, ..., xd^2``.
    """
    X = np.asarray(X, dtype=float)
    i, j = np.triu_indices(X.shape[1])
    return X[:, i] * X[:, j]


def _quadratic(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # x'Bx with B upper triangular, avoiding the (n, d(d+1)/2) feature matrix
    d = X.shape[1]
    if not np.any(beta):
        return np.zeros(X.shape[0])
    B = np.zeros((d, d))
    B[np.triu_indices(d)] = beta
    return np.einsum("ij,ij->i", X @ B, X)


def draw_coefficients(spec: DgpSpec) -> DrawnCoefficients:
    rng = np.random.default_rng(spec.coef_seed)
    d = spec.d
    sd = (lambda v: math.sqrt(v)) if spec.normal_scale == "variance" else (lambda v: v)
    slopes_p = rng.uniform(-0.55, 0.55, d)
    slopes_p[SPARSE_PROPENSITY_SLOPES:] = 0.0
    alpha_p = np.concatenate([[0.09], slopes_p])
    alpha_mu = np.concatenate([[0.09], rng.normal(0.3, sd(0.7), d)])
    alpha_tau = np.concatenate([[-0.05], rng.uniform(0.1, 0.22, d)])
    k = n_poly_terms(d)
    beta_mu = rng.normal(0.01, sd(0.3), k)
    beta_tau = rng.uniform(-0.05, 0.06, k)
    if spec.outcome_mode == "linear":
        beta_mu = np.zeros(k)
        beta_tau = np.zeros(k)
    return DrawnCoefficients(alpha_p, alpha_mu, alpha_tau, beta_mu, beta_tau)


@dataclass(frozen=True)
class TrueFunctions:
    coefs: DrawnCoefficients
    spec: DgpSpec

    def mu0(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        a = self.coefs.alpha_mu
        return a[0] + X @ a[1:] + _quadratic(X, self.coefs.beta_mu)

    def tau(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        a = self.coefs.alpha_tau
        return a[0] + X @ a[1:] + _quadratic(X, self.coefs.beta_tau)

    def mu1(self, X) -> np.ndarray:
        return self.mu0(X) + self.tau(X)

    def p(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.spec.propensity_mode == "constant":
            return np.full(X.shape[0], 0.5)
        a = self.coefs.alpha_p
        return expit(a[0] + X @ a[1:])


def true_ate(coefs: DrawnCoefficients, spec: DgpSpec) -> float:
    """``E[tau(X)]`` under ``X ~ U(0,1)^d`` in closed form."""
    i, j = np.triu_indices(spec.d)
    moments = np.where(i == j, 1.0 / 3.0, 1.0 / 4.0)
    a = coefs.alpha_tau
    return float(a[0] + 0.5 * a[1:].sum() + coefs.beta_tau @ moments)


def generate_sample(coefs: DrawnCoefficients, spec: DgpSpec, rep_seed, noise: bool = True) -> CausalDataset:
    rng = np.random.default_rng(rep_seed)
    truth = TrueFunctions(coefs, spec)
    X = rng.random((spec.n, spec.d))
    t = (rng.random(spec.n) < truth.p(X)).astype(float)
    eps = rng.standard_normal(spec.n) if noise else np.zeros(spec.n)
    y = truth.mu0(X) + truth.tau(X) * t + eps
    return CausalDataset(X, y, t)


def rep_stream(master_seed: int, rep_index: int) -> np.random.SeedSequence:
    """Independent seed sequence for replication ``rep_index``."""
    return np.random.SeedSequence([int(master_seed), int(rep_index)])


def _child_seeds(ss: np.random.SeedSequence, k: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in ss.spawn(k)]


@dataclass
class McReport:
    tau_true: float
    reps: int
    failed: int
    bias: float
    avg_interval_length: float
    coverage: float
    mean_estimate: float
    pooled_se: float
    per_rep_rows: list[dict] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: list[dict], tau_true: float, failed: int = 0) -> "McReport":
        if not rows:
            raise RuntimeError(f"all {failed} replications failed")
        est = np.array([r["tau_hat"] for r in rows])
        se = np.array([r["se"] for r in rows])
        length = np.array([r["ci_high"] - r["ci_low"] for r in rows])
        covered = np.array([r["covered"] for r in rows], dtype=float)
        return cls(
            tau_true=tau_true,
            reps=len(rows),
            failed=failed,
            bias=float(np.mean(est - tau_true)),
            avg_interval_length=float(length.mean()),
            coverage=float(covered.mean()),
            mean_estimate=float(est.mean()),
            pooled_se=float(math.sqrt(np.mean(se**2) / len(rows))),
            per_rep_rows=rows,
        )

    def summary(self) -> dict:
        return {
            "tau_true": self.tau_true,
            "reps": self.reps,
            "failed": self.failed,
            "bias": self.bias,
            "interval_length": self.avg_interval_length,
            "coverage": self.coverage,
            "mean_estimate": self.mean_estimate,
            "pooled_se": self.pooled_se,
        }

    def summary_block(self) -> str:
        return "\n".join(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}" for k, v in self.summary().items())

    def write(self, out_dir, stem: str = "mc") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table = out_dir / f"{stem}_reps.csv"
        with table.open("w", newline="") as fh:
            cols = ["rep_index", "tau_hat", "se", "ci_low", "ci_high", "covered"]
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for row in self.per_rep_rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        summary = out_dir / f"{stem}_summary.txt"
        summary.write_text(self.summary_block() + "\n")
        return table, summary


def _rep_row(rep: int, report, tau_true: float) -> dict:
    return {
        "rep_index": rep,
        "tau_hat": report.estimate,
        "se": report.std_error,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "covered": int(report.covers(tau_true)),
    }


def _fit_nuisances(
    data: CausalDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    seeds: list[int],
    randomized: bool,
    outcome_fit: str,
    clip_eps: float,
) -> NuisanceEstimates:
    arch = replace(arch, input_dim=data.d)
    out_cfg = replace(cfg, seed=seeds[0])
    if outcome_fit == "joint":
        outcome = fit_joint(data.X, data.y, data.t, arch.with_output_dim(2), out_cfg)
    elif outcome_fit == "per_arm":
        outcome = fit_regressions_by_arm(data.X, data.y, data.t, arch.with_output_dim(1), out_cfg)
    else:
        raise ValueError(f"unknown outcome_fit {outcome_fit!r}")
    if randomized:
        return NuisanceEstimates.randomized(outcome.mu0, outcome.mu1, data.t, clip_eps)
    prop = fit_propensity(data.X, data.t, arch.with_output_dim(1), replace(cfg, seed=seeds[1]))
    return NuisanceEstimates(outcome.mu0, outcome.mu1, prop.mean, clip_eps)


@dataclass(frozen=True)
class _StudyJob:
    spec: DgpSpec
    coefs: DrawnCoefficients
    arch: Optional[ArchitectureSpec]
    cfg: TrainConfig
    master_seed: int
    nuisance: str
    outcome_fit: str
    clip_eps: float
    level: float
    tau_true: float


def _run_study_rep(job: _StudyJob, rep: int) -> Optional[dict]:
    sample_seed, out_seed, prop_seed = _child_seeds(rep_stream(job.master_seed, rep), 3)
    data = generate_sample(job.coefs, job.spec, sample_seed)
    truth = TrueFunctions(job.coefs, job.spec)
    randomized = job.spec.propensity_mode == "constant"
    try:
        if job.nuisance == "oracle":
            p = 0.5 if randomized else truth.p
            nuis = NuisanceEstimates(truth.mu0, truth.mu1, p, job.clip_eps)
        else:
            nuis = _fit_nuisances(
                data, job.arch, job.cfg, [out_seed, prop_seed], randomized, job.outcome_fit, job.clip_eps
            )
        report, _ = ate(data, nuis, job.level)
    except (NonFiniteLossError, FloatingPointError, ValueError) as exc:
        log.warning("replication %d aborted: %s", rep, exc)
        return None
    return _rep_row(rep, report, job.tau_true)


def _map_reps(fn, job, reps: int, workers: int) -> list[Optional[dict]]:
    if workers <= 1:
        return [fn(job, r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [job] * reps, range(reps), chunksize=max(1, reps // (4 * workers))))


def _collect(results: list[Optional[dict]], tau_true: float) -> McReport:
    rows = [r for r in results if r is not None]
    return McReport.from_rows(rows, tau_true, failed=len(results) - len(rows))


def run_study(
    spec: DgpSpec,
    arch: Optional[ArchitectureSpec],
    cfg: TrainConfig = TrainConfig(),
    reps: int = 500,
    master_seed: int = 0,
    nuisance: Literal["trained", "oracle"] = "trained",
    outcome_fit: Literal["joint", "per_arm"] = "joint",
    clip_eps: float = 0.01,
    level: float = 0.95,
    workers: int = 1,
) -> McReport:
    """Replicate sample -> nuisance fit -> ATE interval and summarize against the truth.

    Constant-propensity designs use the sample treated share as the propensity.
    Logistic designs fit a propensity network with the same hidden layers as
    the outcome network. ``nuisance="oracle"`` plugs in the true functions and
    skips training.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if nuisance not in ("trained", "oracle"):
        raise ValueError(f"unknown nuisance mode {nuisance!r}")
    if nuisance == "trained" and arch is None:
        raise ValueError("trained nuisances need an architecture")
    coefs = draw_coefficients(spec)
    tau = true_ate(coefs, spec)
    job = _StudyJob(spec, coefs, arch, cfg, master_seed, nuisance, outcome_fit, clip_eps, level, tau)
    return _collect(_map_reps(_run_study_rep, job, reps, workers), tau)


@dataclass(frozen=True)
class _PlaceboJob:
    spec: Optional[DgpSpec]
    coefs: Optional[DrawnCoefficients]
    data: Optional[CausalDataset]
    arch: ArchitectureSpec
    cfg: TrainConfig
    seed: int
    placebo_fraction: float
    outcome_fit: str
    clip_eps: float
    level: float


def placebo_dataset(data: CausalDataset, fraction: float, rng: np.random.Generator) -> CausalDataset:
    """Keep the untreated rows and mark a random ``fraction`` of them as treated."""
    controls = data.subset(data.t == 0)
    n0 = controls.n
    n_treat = int(round(fraction * n0))
    if n_treat < 1 or n_treat >= n0:
        raise ValueError(f"placebo fraction {fraction} leaves an empty arm among {n0} controls")
    t = np.zeros(n0)
    t[rng.permutation(n0)[:n_treat]] = 1.0
    return CausalDataset(controls.X, controls.y, t)


def _run_placebo_rep(job: _PlaceboJob, rep: int) -> Optional[dict]:
    sample_seed, assign_seed, out_seed = _child_seeds(rep_stream(job.seed, rep), 3)
    base = job.data if job.data is not None else generate_sample(job.coefs, job.spec, sample_seed)
    data = placebo_dataset(base, job.placebo_fraction, np.random.default_rng(assign_seed))
    try:
        nuis = _fit_nuisances(data, job.arch, job.cfg, [out_seed], True, job.outcome_fit, job.clip_eps)
        report, _ = ate(data, nuis, job.level)
    except (NonFiniteLossError, FloatingPointError, ValueError) as exc:
        log.warning("placebo replication %d aborted: %s", rep, exc)
        return None
    return _rep_row(rep, report, 0.0)


def run_placebo(
    data_or_spec: Union[CausalDataset, DgpSpec],
    arch: ArchitectureSpec,
    cfg: TrainConfig = TrainConfig(),
    reps: int = 100,
    placebo_fraction: float = 0.5,
    seed: int = 0,
    outcome_fit: Literal["joint", "per_arm"] = "joint",
    clip_eps: float = 0.01,
    level: float = 0.95,
    workers: int = 1,
) -> McReport:
    """Null-effect check: controls only, placebo treatment assigned at random.

    Given a dataset, each replication redraws the placebo assignment on its
    control rows. Given a DGP, each replication also draws a fresh sample.
    """
    if not 0.0 < placebo_fraction < 1.0:
        raise ValueError("placebo_fraction must lie strictly between 0 and 1")
    if isinstance(data_or_spec, CausalDataset):
        if not np.any(data_or_spec.t == 0):
            raise ValueError("no untreated rows to build a placebo sample from")
        job = _PlaceboJob(None, None, data_or_spec, arch, cfg, seed, placebo_fraction, outcome_fit, clip_eps, level)
    else:
        coefs = draw_coefficients(data_or_spec)
        job = _PlaceboJob(data_or_spec, coefs, None, arch, cfg, seed, placebo_fraction, outcome_fit, clip_eps, level)
    return _collect(_map_reps(_run_placebo_rep, job, reps, workers), 0.0)


@dataclass(frozen=True)
class ThresholdDgp:
    """Randomized design whose CATE crosses ``cost/margin`` exactly at ``x1 = cutoff``.

    ``tau(x) = cost/margin + slope (x1 - cutoff)``, ``mu0(x) = 1 + x2``, ``p = 0.5``.
    """

    n: int = 50_000
    d: int = 5
    cutoff: float = 0.6
    slope: float = 10.0
    margin: float = 1.0
    cost: float = 0.5

    def mu0(self, X) -> np.ndarray:
        X = np.asarray(X)
        return 1.0 + (X[:, 1] if X.shape[1] > 1 else 0.0)

    def tau(self, X) -> np.ndarray:
        X = np.asarray(X)
        return self.cost / self.margin + self.slope * (X[:, 0] - self.cutoff)

    def mu1(self, X) -> np.ndarray:
        return self.mu0(X) + self.tau(X)

    def sample(self, seed) -> CausalDataset:
        rng = np.random.default_rng(seed)
        X = rng.random((self.n, self.d))
        t = (rng.random(self.n) < 0.5).astype(float)
        y = self.mu0(X) + self.tau(X) * t + rng.standard_normal(self.n)
        return CausalDataset(X, y, t)
