"""Empirical risk minimization for ReLU networks by minibatch SGD / Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .losses import LEAST_SQUARES, LOGISTIC, LossKind, loss_grad, loss_value, mean_from_f
from .network import (
    ArchitectureSpec,
    NetworkState,
    _backward_cached,
    _forward_cached,
    dropout_masks,
    forward,
    initialize,
)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 256
    epochs: int = 100
    optimizer: Literal["adam", "sgd"] = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class FitReport:
    training_loss: float
    validation_loss: float
    epochs_run: int


@dataclass
class TrainedModel:
    net: NetworkState
    kind: LossKind
    fit: FitReport

    def predict(self, X) -> np.ndarray:
        """Network output on the ``f`` scale; squeezed for scalar losses."""
        out = forward(self.net, X)
        return out[..., 0] if self.kind.output_dim == 1 else out

    def mean(self, X) -> np.ndarray:
        return mean_from_f(self.kind, self.predict(X))

    __call__ = mean


@dataclass
class JointModel:
    """Two-head least-squares fit ``y ~ mu0(x) + tau(x) t``."""

    net: NetworkState
    fit: FitReport

    def mu0(self, X) -> np.ndarray:
        return forward(self.net, X)[..., 0]

    def tau(self, X) -> np.ndarray:
        return forward(self.net, X)[..., 1]

    def mu1(self, X) -> np.ndarray:
        out = forward(self.net, X)
        return out[..., 0] + out[..., 1]


@dataclass
class ArmModels:
    """Outcome regressions fit separately on each treatment arm."""

    model0: TrainedModel
    model1: TrainedModel

    def mu0(self, X) -> np.ndarray:
        return self.model0.mean(X)

    def mu1(self, X) -> np.ndarray:
        return self.model1.mean(X)

    def tau(self, X) -> np.ndarray:
        return self.mu1(X) - self.mu0(X)


# An objective maps (network output for a batch, row indices) to
# (per-row losses, dloss/doutput per row).
Objective = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _split(n: int, cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n) if cfg.shuffle else np.arange(n)
    n_val = math.ceil(cfg.validation_fraction * n)
    return order[: n - n_val], order[n - n_val :]


def _mean_loss(net: NetworkState, X: np.ndarray, idx: np.ndarray, objective: Objective) -> float:
    if idx.size == 0:
        return float("nan")
    out, _ = _forward_cached(net, X[idx])
    losses, _ = objective(out, idx)
    return float(np.mean(losses))


def _train(
    net: NetworkState, X: np.ndarray, objective: Objective, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[NetworkState, FitReport]:
    n = X.shape[0]
    train_idx, val_idx = _split(n, cfg, rng)
    if cfg.batch_size > train_idx.size:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds training rows {train_idx.size}")
    net = net.copy()
    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    has_dropout = any(r > 0 for r in net.spec.dropout_rates)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx) if cfg.shuffle else train_idx
        for b, start in enumerate(range(0, order.size, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb = X[idx]
            masks = dropout_masks(net.spec, idx.size, rng) if has_dropout else None
            out, acts = _forward_cached(net, xb, masks)
            losses, dout = objective(out, idx)
            batch_loss = float(np.mean(losses))
            if not math.isfinite(batch_loss):
                raise NonFiniteLossError(epoch, b, batch_loss)
            grad = _backward_cached(net, acts, out, dout / idx.size, masks)
            grads = grad.weights + grad.biases
            step += 1
            if cfg.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= cfg.learning_rate * g
            else:
                b1, b2 = cfg.beta1, cfg.beta2
                lr_t = cfg.learning_rate * math.sqrt(1.0 - b2**step) / (1.0 - b1**step)
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= b1
                    mi += (1.0 - b1) * g
                    vi *= b2
                    vi += (1.0 - b2) * (g * g)
                    p -= lr_t * mi / (np.sqrt(vi) + cfg.eps)
    train_loss = _mean_loss(net, X, train_idx, objective)
    val_loss = _mean_loss(net, X, val_idx, objective) if val_idx.size else train_loss
    if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
        raise NonFiniteLossError(cfg.epochs, -1, train_loss)
    return net, FitReport(train_loss, val_loss, cfg.epochs)


def _rngs(seed: int) -> tuple[int, np.random.Generator]:
    init_ss, train_ss = np.random.SeedSequence(seed).spawn(2)
    return int(init_ss.generate_state(1)[0]), np.random.default_rng(train_ss)


def _check_X(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError(f"X must be an (n, d) matrix with n={n}, got shape {X.shape}")
    return X


def fit(X, y, spec: ArchitectureSpec, kind: LossKind, cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    """Minimize the mean loss of ``kind`` over networks with architecture ``spec``."""
    y = np.asarray(y, dtype=float)
    X = _check_X(X, y.shape[0])
    if spec.output_dim != kind.output_dim:
        raise ValueError(f"{kind.name} needs output_dim={kind.output_dim}, spec has {spec.output_dim}")
    if spec.input_dim != X.shape[1]:
        raise ValueError(f"spec input_dim {spec.input_dim} does not match X with {X.shape[1]} columns")
    y2 = y.reshape(y.shape[0], -1)

    def objective(out, idx):
        f = out if kind.output_dim > 1 else out[:, 0]
        yi = y2[idx] if kind.output_dim > 1 else y2[idx, 0]
        g = loss_grad(kind, f, yi)
        return loss_value(kind, f, yi), g.reshape(out.shape)

    init_seed, rng = _rngs(cfg.seed)
    net, report = _train(initialize(spec, init_seed), X, objective, cfg, rng)
    return TrainedModel(net, kind, report)


def fit_joint(X, y, t, spec: ArchitectureSpec, cfg: TrainConfig = TrainConfig()) -> JointModel:
    """Single network with heads (mu0, tau) minimizing ``sum 0.5 (y - mu0 - tau t)^2``."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    X = _check_X(X, y.shape[0])
    if t.shape != y.shape or not np.all((t == 0) | (t == 1)):
        raise ValueError("t must be a binary vector of the same length as y")
    if spec.output_dim != 2:
        raise ValueError("joint estimation needs output_dim=2")

    def objective(out, idx):
        ti = t[idx]
        resid = out[:, 0] + out[:, 1] * ti - y[idx]
        return 0.5 * resid**2, np.column_stack([resid, resid * ti])

    init_seed, rng = _rngs(cfg.seed)
    net, report = _train(initialize(spec, init_seed), X, objective, cfg, rng)
    return JointModel(net, report)


def fit_regressions_by_arm(X, y, t, spec: ArchitectureSpec, cfg: TrainConfig = TrainConfig()) -> ArmModels:
    y = np.asarray(y, dtype=float)
    t = np.asarray(t)
    X = _check_X(X, y.shape[0])
    models = []
    for arm in (0, 1):
        rows = t == arm
        if not rows.any():
            raise ValueError(f"treatment arm {arm} is empty")
        models.append(fit(X[rows], y[rows], spec.with_output_dim(1), LEAST_SQUARES, cfg))
    return ArmModels(*models)


def fit_propensity(X, t, spec: ArchitectureSpec, cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    """Logistic-loss network for ``P[T=1|X]``; ``model.mean(X)`` is the propensity."""
    t = np.asarray(t, dtype=float)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("treatment must be binary")
    if t.min() == t.max():
        raise ValueError("treatment is degenerate: both values must be present")
    return fit(X, t, spec.with_output_dim(1), LOGISTIC, cfg)
