"""Doubly robust influence scores, averaged causal estimands and Wald intervals.

Every estimator here is a sample mean of per-observation scores. Its standard
error comes from the plug-in second moment of the same scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.stats import norm

Regression = Callable[[np.ndarray], np.ndarray]
Policy = Callable[[np.ndarray], np.ndarray]


class DegenerateScoresError(ValueError):
    """Scores with zero sample variance; no interval can be formed."""


@dataclass
class CausalDataset:
    X: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        n = self.y.shape[0]
        if self.X.shape[0] != n or self.t.shape != (n,):
            raise ValueError("X, y and t must have the same number of rows")
        if not np.all((self.t == 0) | (self.t == 1)):
            raise ValueError("treatment must be coded 0/1")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "CausalDataset":
        return CausalDataset(self.X[rows], self.y[rows], self.t[rows])


def _constant(value: float) -> Regression:
    return lambda X: np.full(np.asarray(X).shape[0], float(value))


@dataclass
class NuisanceEstimates:
    """Outcome regressions and propensity score plugged into the scores.

    ``p`` is either a function of ``X`` or a constant probability.
    """

    mu0: Regression
    mu1: Regression
    p: Union[Regression, float]
    clip_eps: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 0.5:
            raise ValueError("clip_eps must lie in (0, 0.5)")

    @classmethod
    def randomized(cls, mu0: Regression, mu1: Regression, t, clip_eps: float = 0.01) -> "NuisanceEstimates":
        """Randomized-treatment mode: the propensity is the sample treated share."""
        return cls(mu0, mu1, float(np.mean(t)), clip_eps)

    @classmethod
    def from_outcome_model(cls, model, p, clip_eps: float = 0.01) -> "NuisanceEstimates":
        """Wrap anything exposing ``mu0``/``mu1`` (joint or per-arm fits)."""
        return cls(model.mu0, model.mu1, p, clip_eps)

    def propensity(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        raw = self.p(X) if callable(self.p) else np.full(X.shape[0], float(self.p))
        return np.clip(np.asarray(raw, dtype=float), self.clip_eps, 1.0 - self.clip_eps)

    def regression(self, t: int, X) -> np.ndarray:
        return np.asarray((self.mu1 if t == 1 else self.mu0)(X), dtype=float)


@dataclass
class ScoreVector:
    values: np.ndarray
    estimand_tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(f"non-finite scores for {self.estimand_tag or 'estimand'}")

    def mean(self) -> float:
        return math.fsum(self.values) / self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    n: int
    level: float = 0.95
    estimand_tag: str = ""

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    @property
    def length(self) -> float:
        return self.ci_high - self.ci_low

    def as_row(self) -> dict:
        return {
            "estimand_tag": self.estimand_tag,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
            "level": self.level,
        }


def confidence_interval(scores: ScoreVector, level: float = 0.95, allow_degenerate: bool = False) -> EstimateReport:
    """Normal-approximation interval for the mean of ``scores``.

    The variance is the plug-in ``E_n[s^2] - E_n[s]^2``. Zero variance raises
    :class:`DegenerateScoresError` unless ``allow_degenerate``, in which case
    the interval collapses to the point estimate.
    """
    v = scores.values
    n = v.size
    if n < 2:
        raise ValueError("need at least two scores")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    est = scores.mean()
    var = max(math.fsum(v * v) / n - est * est, 0.0)
    if var == 0.0 or np.all(v == v[0]):
        if not allow_degenerate:
            raise DegenerateScoresError(f"scores for {scores.estimand_tag or 'estimand'} have zero variance")
        var = 0.0
    se = math.sqrt(var / n)
    z = float(norm.ppf(0.5 + level / 2.0))
    return EstimateReport(est, se, est - z * se, est + z * se, n, level, scores.estimand_tag)


def scores_full(data: CausalDataset, nuis: NuisanceEstimates, t: int) -> ScoreVector:
    """Per-observation ``1{T=t}(y - mu_t)/P[T=t|x] + mu_t``."""
    p1 = nuis.propensity(data.X)
    pt = p1 if t == 1 else 1.0 - p1
    mu = nuis.regression(t, data.X)
    hit = data.t == t
    return ScoreVector(hit * (data.y - mu) / pt + mu, f"psi_{t}")


def scores_sub(data: CausalDataset, nuis: NuisanceEstimates, t: int, t_prime: int) -> ScoreVector:
    """Scores whose mean estimates ``E[Y(t) | T = t_prime]``."""
    group = data.t == t_prime
    share = np.count_nonzero(group) / data.n
    if share == 0:
        raise ValueError(f"treatment group {t_prime} is empty")
    p1 = nuis.propensity(data.X)
    pt = p1 if t == 1 else 1.0 - p1
    pt_prime = p1 if t_prime == 1 else 1.0 - p1
    mu = nuis.regression(t, data.X)
    hit = data.t == t
    values = (pt_prime / share) * hit * (data.y - mu) / pt + group * mu / share
    return ScoreVector(values, f"psi_{t},{t_prime}")


def _policy_values(s: Policy, X: np.ndarray) -> np.ndarray:
    out = np.asarray(s(X), dtype=float).reshape(-1)
    if out.shape[0] != X.shape[0]:
        raise ValueError("policy must return one value per row")
    if not np.all((out == 0) | (out == 1)):
        raise ValueError("policy must return binary treatment decisions")
    return out


def ate(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> tuple[EstimateReport, ScoreVector]:
    psi1 = scores_full(data, nuis, 1).values
    psi0 = scores_full(data, nuis, 0).values
    sv = ScoreVector(psi1 - psi0, "ate")
    return confidence_interval(sv, level, allow_degenerate=True), sv


def profit(
    data: CausalDataset,
    nuis: NuisanceEstimates,
    s: Policy,
    margin: float = 1.0,
    cost: float = 0.0,
    level: float = 0.95,
) -> tuple[EstimateReport, ScoreVector]:
    """Expected profit of treating according to ``s``, with margin and per-unit cost."""
    sx = _policy_values(s, data.X)
    psi1 = scores_full(data, nuis, 1).values
    psi0 = scores_full(data, nuis, 0).values
    sv = ScoreVector(sx * (margin * psi1 - cost) + (1.0 - sx) * margin * psi0, "profit")
    return confidence_interval(sv, level, allow_degenerate=True), sv


def _diff_scores(sx_new, sx_base, psi1, psi0, margin, cost) -> np.ndarray:
    return (sx_new - sx_base) * (margin * psi1 - cost - margin * psi0)


def profit_diff(
    data: CausalDataset,
    nuis: NuisanceEstimates,
    s_new: Policy,
    s_base: Policy,
    margin: float = 1.0,
    cost: float = 0.0,
    level: float = 0.95,
) -> tuple[EstimateReport, ScoreVector]:
    """Gain from switching policy ``s_base`` to ``s_new``.

    Identical policies give all-zero scores and a zero-width interval at 0.
    """
    sx_new = _policy_values(s_new, data.X)
    sx_base = _policy_values(s_base, data.X)
    psi1 = scores_full(data, nuis, 1).values
    psi0 = scores_full(data, nuis, 0).values
    sv = ScoreVector(_diff_scores(sx_new, sx_base, psi1, psi0, margin, cost), "profit_diff")
    return confidence_interval(sv, level, allow_degenerate=True), sv


def _rho(data, nuis, t, t_prime) -> np.ndarray:
    return scores_sub(data, nuis, t, t_prime).values


def _require_both_groups(data: CausalDataset) -> None:
    for arm in (0, 1):
        if not np.any(data.t == arm):
            raise ValueError(f"treatment group {arm} is empty")


def tot(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> EstimateReport:
    """Average effect on the treated, ``rho_{1,1} - rho_{0,1}``."""
    _require_both_groups(data)
    sv = ScoreVector(_rho(data, nuis, 1, 1) - _rho(data, nuis, 0, 1), "tot")
    return confidence_interval(sv, level, allow_degenerate=True)


@dataclass(frozen=True)
class Decomposition:
    total: EstimateReport
    covariates: EstimateReport
    structure: EstimateReport


def decomposition(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> Decomposition:
    """Oaxaca-Blinder-type split ``Delta = Delta_X + Delta_mu`` of the raw gap."""
    _require_both_groups(data)
    r11 = _rho(data, nuis, 1, 1)
    r10 = _rho(data, nuis, 1, 0)
    r00 = _rho(data, nuis, 0, 0)
    return Decomposition(
        confidence_interval(ScoreVector(r11 - r00, "delta"), level, allow_degenerate=True),
        confidence_interval(ScoreVector(r11 - r10, "delta_x"), level, allow_degenerate=True),
        confidence_interval(ScoreVector(r10 - r00, "delta_mu"), level, allow_degenerate=True),
    )


@dataclass(frozen=True)
class Theorem3Diagnostics:
    """First-step quality measures against known truth (simulation only).

    ``mse_mu`` and ``product`` and ``leave_in`` are keyed by treatment arm.
    """

    n: int
    mse_p: float
    mse_mu: dict
    product: dict
    leave_in: dict

    def root_n_scaled(self) -> dict:
        rn = math.sqrt(self.n)
        return {
            "product": {t: rn * v for t, v in self.product.items()},
            "leave_in": {t: rn * v for t, v in self.leave_in.items()},
        }


def diagnostics_theorem3(
    data: CausalDataset, nuis: NuisanceEstimates, true_mu0: Regression, true_mu1: Regression, true_p
) -> Theorem3Diagnostics:
    """Consistency, product-rate and leave-in conditions for the first step.

    ``true_p`` may be a function or a constant. The propensity in the leave-in
    term is the true one.
    """
    X = data.X
    p_true = np.asarray(true_p(X), dtype=float) if callable(true_p) else np.full(data.n, float(true_p))
    p_hat = nuis.propensity(X)
    mse_p = float(np.mean((p_hat - p_true) ** 2))
    mse_mu, product, leave_in = {}, {}, {}
    for t, truth in ((0, true_mu0), (1, true_mu1)):
        err = nuis.regression(t, X) - np.asarray(truth(X), dtype=float)
        pt = p_true if t == 1 else 1.0 - p_true
        mse_mu[t] = float(np.mean(err**2))
        product[t] = math.sqrt(mse_mu[t]) * math.sqrt(mse_p)
        leave_in[t] = float(np.mean(err * (1.0 - (data.t == t) / pt)))
    return Theorem3Diagnostics(data.n, mse_p, mse_mu, product, leave_in)
