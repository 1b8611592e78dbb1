"""Convex GLM-type losses ``l(f, y) = -<y, f> + g(f)`` and their curvature constants.

Scalar losses take ``f`` and ``y`` as arrays of equal shape and work
elementwise. The multinomial loss takes ``f`` and ``y`` as ``(..., K)``
arrays: K logits against an implicit baseline class with logit 0, and
``y`` one-hot over the K non-baseline classes (all zeros for the baseline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, logsumexp


class LossTag(str, Enum):
    LEAST_SQUARES = "leastsquares"
    LOGISTIC = "logistic"
    POISSON = "poisson"
    GAMMA = "gamma"
    MULTINOMIAL = "multinomial"


class LossDomainError(ValueError):
    """Raised when ``f`` or ``y`` fall outside a loss's domain."""


@dataclass(frozen=True)
class LossKind:
    tag: LossTag
    bound_M: float = 1.0
    n_classes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tag", LossTag(self.tag))
        if self.tag is LossTag.MULTINOMIAL and self.n_classes < 2:
            raise ValueError("multinomial loss needs K >= 2")
        if self.tag is not LossTag.MULTINOMIAL and self.n_classes != 1:
            raise ValueError(f"{self.tag.value} is a scalar loss")
        if not self.bound_M > 0:
            raise ValueError("bound_M must be positive")

    @property
    def output_dim(self) -> int:
        return self.n_classes

    @property
    def name(self) -> str:
        if self.tag is LossTag.MULTINOMIAL:
            return f"multinomial:{self.n_classes}"
        return self.tag.value

    @classmethod
    def parse(cls, text: str, bound_M: float = 1.0) -> "LossKind":
        """Parse ``leastsquares | logistic | poisson | gamma | multinomial:K``."""
        text = text.strip().lower()
        if text.startswith("multinomial"):
            _, _, k = text.partition(":")
            if not k:
                raise ValueError("multinomial loss must be written multinomial:K")
            return cls(LossTag.MULTINOMIAL, bound_M, int(k))
        return cls(LossTag(text), bound_M)


LEAST_SQUARES = LossKind(LossTag.LEAST_SQUARES)
LOGISTIC = LossKind(LossTag.LOGISTIC)


@dataclass(frozen=True)
class CurvatureConstants:
    c1: float
    c2: float
    C_ell: float


def _check_gamma(f):
    if np.any(np.asarray(f) >= 0):
        raise LossDomainError("gamma loss requires f < 0 (f = -1/mean)")


def loss_value(kind: LossKind, f, y) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    tag = kind.tag
    if tag is LossTag.LEAST_SQUARES:
        return 0.5 * (y - f) ** 2
    if tag is LossTag.LOGISTIC:
        # log(1 + e^f) computed stably
        return -y * f + np.logaddexp(0.0, f)
    if tag is LossTag.POISSON:
        return -y * f + np.exp(f)
    if tag is LossTag.GAMMA:
        _check_gamma(f)
        return -y * f - np.log(-f)
    zeros = np.zeros(f.shape[:-1] + (1,))
    return -np.sum(y * f, axis=-1) + logsumexp(np.concatenate([zeros, f], axis=-1), axis=-1)


def mean_from_f(kind: LossKind, f) -> np.ndarray:
    """Inverse link: the conditional mean at which ``f`` is the loss minimizer."""
    f = np.asarray(f, dtype=float)
    tag = kind.tag
    if tag is LossTag.LEAST_SQUARES:
        return f.copy()
    if tag is LossTag.LOGISTIC:
        return expit(f)
    if tag is LossTag.POISSON:
        return np.exp(f)
    if tag is LossTag.GAMMA:
        _check_gamma(f)
        return -1.0 / f
    zeros = np.zeros(f.shape[:-1] + (1,))
    full = np.concatenate([zeros, f], axis=-1)
    full = np.exp(full - full.max(axis=-1, keepdims=True))
    full /= full.sum(axis=-1, keepdims=True)
    return full[..., 1:]


def loss_grad(kind: LossKind, f, y) -> np.ndarray:
    """Derivative of the loss with respect to ``f``: ``grad g(f) - y``."""
    y = np.asarray(y, dtype=float)
    return mean_from_f(kind, f) - y


def curvature_constants(kind: LossKind, M: float | None = None) -> CurvatureConstants:
    """Curvature (c1, c2) and Lipschitz (C_ell) constants for ``|f|, |f_*| <= M``.

    For the GLM losses these come from bounds ``2 c1 <= Hessian[g] <= 2 c2`` over
    the admissible range of ``f``. The multinomial Lipschitz constant is for
    the Euclidean norm on ``f``.
    """
    M = kind.bound_M if M is None else float(M)
    tag = kind.tag
    if tag is LossTag.LEAST_SQUARES:
        return CurvatureConstants(0.5, 0.5, M)
    if tag is LossTag.LOGISTIC:
        return CurvatureConstants(1.0 / (2.0 * (math.exp(M) + math.exp(-M) + 2.0)), 0.125, 1.0)
    if tag is LossTag.POISSON:
        return CurvatureConstants(math.exp(-M) / 2.0, math.exp(M) / 2.0, math.exp(M) + M)
    if tag is LossTag.GAMMA:
        return CurvatureConstants(1.0 / (2.0 * M**2), M**2 / 2.0, 2.0 * M)
    K = kind.n_classes
    lam_min = 1.0 / (1.0 + K * math.exp(M)) ** 2
    lam_max = math.exp(M) / (1.0 + (K - 1) * math.exp(-M) + math.exp(M))
    return CurvatureConstants(lam_min / 2.0, lam_max / 2.0, math.sqrt(2.0))
