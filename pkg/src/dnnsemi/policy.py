"""Threshold targeting rules on one covariate: evaluation and empirical selection.

Policies here are chosen and evaluated on the same sample, so the pointwise
intervals along the curve are not valid for the value of the *selected* rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .causal import (
    CausalDataset,
    EstimateReport,
    NuisanceEstimates,
    Policy,
    ScoreVector,
    _diff_scores,
    _policy_values,
    confidence_interval,
    scores_full,
)


def treat_all(X) -> np.ndarray:
    return np.ones(np.asarray(X).shape[0])


def treat_none(X) -> np.ndarray:
    return np.zeros(np.asarray(X).shape[0])


@dataclass(frozen=True)
class ThresholdPolicyClass:
    """Rules ``s(x) = 1(x[covariate_index] > threshold)``, one per grid value."""

    covariate_index: int
    thresholds: tuple[float, ...]

    def __post_init__(self):
        grid = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", grid)
        if not grid:
            raise ValueError("threshold grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if self.covariate_index < 0:
            raise ValueError("covariate_index must be non-negative")

    @classmethod
    def from_range(cls, covariate_index: int, start: float, stop: float, step: float) -> "ThresholdPolicyClass":
        """Grid ``start, start+step, ..., stop`` (inclusive of ``stop`` up to rounding)."""
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return cls(covariate_index, tuple(start + k * step for k in range(count)))

    def policy(self, threshold: float) -> Policy:
        j = self.covariate_index

        def s(X):
            return (np.asarray(X)[:, j] > threshold).astype(float)

        return s

    def __len__(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    report: EstimateReport


@dataclass(frozen=True)
class PolicyEvalCurve:
    points: tuple[CurvePoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def rows(self) -> list[dict]:
        return [
            {
                "threshold": p.threshold,
                "estimate": p.report.estimate,
                "se": p.report.std_error,
                "ci_low": p.report.ci_low,
                "ci_high": p.report.ci_high,
            }
            for p in self.points
        ]


def evaluate_grid(
    data: CausalDataset,
    nuis: NuisanceEstimates,
    cls: ThresholdPolicyClass,
    s_base: Policy = treat_none,
    margin: float = 1.0,
    cost: float = 0.0,
    level: float = 0.95,
    return_scores: bool = False,
):
    """Profit gain of each grid rule over ``s_base`` with pointwise intervals."""
    if cls.covariate_index >= data.d:
        raise ValueError(f"covariate index {cls.covariate_index} out of range for d={data.d}")
    psi1 = scores_full(data, nuis, 1).values
    psi0 = scores_full(data, nuis, 0).values
    base = _policy_values(s_base, data.X)
    points, scores = [], []
    for thr in cls.thresholds:
        sx = _policy_values(cls.policy(thr), data.X)
        sv = ScoreVector(_diff_scores(sx, base, psi1, psi0, margin, cost), f"profit_diff>{thr:g}")
        points.append(CurvePoint(thr, confidence_interval(sv, level, allow_degenerate=True)))
        scores.append(sv)
    curve = PolicyEvalCurve(tuple(points))
    return (curve, scores) if return_scores else curve


def select_optimal(curve: PolicyEvalCurve) -> CurvePoint:
    """Grid point with the largest estimated gain; ties go to the smallest threshold."""
    if len(curve) == 0:
        raise ValueError("empty policy curve")
    est = np.array([p.report.estimate for p in curve.points])
    return curve.points[int(np.argmax(est))]
