"""Fully connected feedforward ReLU networks (multi-layer perceptrons).

Weights are stored per layer as ``(fan_out, fan_in)`` matrices with a
separate constant-term vector. All evaluation routines accept either a single
input vector of length ``input_dim`` or a batch ``(n, input_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

FORMAT_HEADER = "dnnsemi-network v1"


@dataclass(frozen=True)
class ArchitectureSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    dropout_rates: Optional[tuple[float, ...]] = None
    clamp_bound: Optional[float] = None

    def __post_init__(self):
        widths = tuple(int(h) for h in self.hidden_widths)
        object.__setattr__(self, "hidden_widths", widths)
        rates = self.dropout_rates
        rates = (0.0,) * len(widths) if rates is None else tuple(float(r) for r in rates)
        object.__setattr__(self, "dropout_rates", rates)
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(h < 1 for h in widths):
            raise ValueError(f"hidden widths must be >= 1, got {widths}")
        if len(rates) != len(widths):
            raise ValueError("need exactly one dropout rate per hidden layer")
        if any(not 0.0 <= r < 1.0 for r in rates):
            raise ValueError(f"dropout rates must lie in [0, 1), got {rates}")
        if self.clamp_bound is not None and not self.clamp_bound > 0:
            raise ValueError("clamp_bound must be positive or None")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, self.output_dim]

    def with_output_dim(self, output_dim: int) -> "ArchitectureSpec":
        return ArchitectureSpec(
            self.input_dim, self.hidden_widths, output_dim, self.dropout_rates, self.clamp_bound
        )

    @classmethod
    def parse(cls, structure: str, input_dim: int, output_dim: int = 1, **kwargs) -> "ArchitectureSpec":
        """Build a spec from a width string such as ``"{20, 15, 5}"`` or ``"[30,20]"``."""
        body = structure.strip().strip("{}[]()")
        widths = tuple(int(tok) for tok in body.replace(",", " ").split())
        return cls(input_dim, widths, output_dim, **kwargs)


@dataclass
class NetworkState:
    spec: ArchitectureSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match architecture")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(
                    f"layer {l}: expected weights {(sizes[l + 1], sizes[l])} and "
                    f"constants {(sizes[l + 1],)}, got {w.shape} and {b.shape}"
                )

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "NetworkState":
        return NetworkState(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def __call__(self, x):
        return forward(self, x)


@dataclass
class GradientState:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: NetworkState) -> "GradientState":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])


def param_count(spec: ArchitectureSpec) -> int:
    """Number of trainable scalars, weights plus constant terms."""
    sizes = spec.layer_sizes
    return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))


def initialize(spec: ArchitectureSpec, seed: int) -> NetworkState:
    """He initialization: N(0, 2/fan_in) weights and zero constant terms."""
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkState(spec, weights, biases)


def dropout_masks(spec: ArchitectureSpec, n: int, rng: np.random.Generator) -> list[Optional[np.ndarray]]:
    """Inverted-dropout masks, one ``(n, H_l)`` array per hidden layer.

    Kept units are scaled by ``1/(1-rate)`` so evaluation needs no rescaling.
    Layers with rate 0 get ``None``.
    """
    masks: list[Optional[np.ndarray]] = []
    for width, rate in zip(spec.hidden_widths, spec.dropout_rates):
        if rate == 0.0:
            masks.append(None)
        else:
            keep = rng.random((n, width)) >= rate
            masks.append(keep / (1.0 - rate))
    return masks


def _as_batch(net: NetworkState, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ValueError(f"expected inputs of length {net.spec.input_dim}, got shape {x.shape}")
    return x, single


def _forward_cached(net: NetworkState, x: np.ndarray, masks=None):
    """Forward pass keeping every hidden activation for back-propagation."""
    acts = [x]
    h = x
    n_hidden = net.spec.depth
    for l in range(n_hidden):
        h = h @ net.weights[l].T + net.biases[l]
        np.maximum(h, 0.0, out=h)
        if masks is not None and masks[l] is not None:
            h = h * masks[l]
        acts.append(h)
    out = h @ net.weights[-1].T + net.biases[-1]
    bound = net.spec.clamp_bound
    if bound is not None:
        out = np.clip(out, -2.0 * bound, 2.0 * bound)
    return out, acts


def _backward_cached(net: NetworkState, acts, out, dout: np.ndarray, masks=None) -> GradientState:
    bound = net.spec.clamp_bound
    if bound is not None:
        dout = np.where(np.abs(out) < 2.0 * bound, dout, 0.0)
    n_layers = len(net.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = dout
    for l in range(n_layers - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l == 0:
            break
        delta = delta @ net.weights[l]
        # ReLU derivative at exactly 0 is 0; dropped units have a == 0 too
        if masks is not None and masks[l - 1] is not None:
            delta = delta * masks[l - 1]
        delta = delta * (acts[l] > 0.0)
    return GradientState(gw, gb)


def forward(net: NetworkState, x, masks: Optional[Sequence[Optional[np.ndarray]]] = None) -> np.ndarray:
    """Evaluate the network.

    With ``masks=None`` this is the deterministic evaluation mode. Passing masks
    from :func:`dropout_masks` gives the training-mode output for that draw.
    Returns shape ``(output_dim,)`` for a single input, ``(n, output_dim)`` for
    a batch.
    """
    xb, single = _as_batch(net, x)
    out, _ = _forward_cached(net, xb, masks)
    return out[0] if single else out


def forward_train(net: NetworkState, x, dropout_seed: int) -> np.ndarray:
    xb, single = _as_batch(net, x)
    masks = dropout_masks(net.spec, xb.shape[0], np.random.default_rng(dropout_seed))
    out, _ = _forward_cached(net, xb, masks)
    return out[0] if single else out


def backward(net: NetworkState, x, dloss_df, masks=None) -> GradientState:
    """Exact gradient of ``sum_i <dloss_df_i, f(x_i)>`` with respect to all parameters.

    ``dloss_df`` has the same shape as the network output for ``x``. For a batch
    the per-row gradients are summed.
    """
    xb, single = _as_batch(net, x)
    d = np.asarray(dloss_df, dtype=float)
    d = d.reshape(xb.shape[0], net.spec.output_dim)
    out, acts = _forward_cached(net, xb, masks)
    return _backward_cached(net, acts, out, d, masks)


def advise_architecture(
    n: float, d: int, beta: float, c_width: float = 1.0, c_depth: float = 1.0
) -> ArchitectureSpec:
    """Width ~ n^{d/(2(beta+d))} log^2 n and depth ~ log n, with explicit constants."""
    if n < 2 or d < 1 or beta < 1 or c_width <= 0 or c_depth <= 0:
        raise ValueError("need n >= 2, d >= 1, beta >= 1 and positive constants")
    log_n = math.log(n)
    width = math.ceil(c_width * n ** (d / (2.0 * (beta + d))) * log_n**2)
    depth = max(1, math.ceil(c_depth * log_n))
    return ArchitectureSpec(d, (width,) * depth)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps(net: NetworkState) -> str:
    spec = net.spec
    lines = [
        FORMAT_HEADER,
        "input_dim={} hidden_widths={} output_dim={} dropout_rates={} clamp_bound={}".format(
            spec.input_dim,
            ",".join(str(h) for h in spec.hidden_widths),
            spec.output_dim,
            ",".join(_fmt(r) for r in spec.dropout_rates),
            "none" if spec.clamp_bound is None else _fmt(spec.clamp_bound),
        ),
    ]
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"layer {l} weights {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
        lines.append(f"layer {l} constants {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def loads(text: str) -> NetworkState:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ValueError(f"not a network file (expected header {FORMAT_HEADER!r})")
    fields = dict(tok.split("=", 1) for tok in lines[1].split())
    widths = tuple(int(h) for h in fields["hidden_widths"].split(",") if h)
    rates = tuple(float(r) for r in fields["dropout_rates"].split(",") if r)
    clamp = None if fields["clamp_bound"] == "none" else float(fields["clamp_bound"])
    spec = ArchitectureSpec(int(fields["input_dim"]), widths, int(fields["output_dim"]), rates, clamp)
    pos = 2
    weights, biases = [], []
    for l in range(spec.depth + 1):
        _, _, kind, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        w = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)]).reshape(rows, cols)
        pos += 1 + rows
        _, _, kind, size = lines[pos].split()
        b = np.array([float(v) for v in lines[pos + 1].split()]).reshape(int(size))
        pos += 2
        weights.append(w)
        biases.append(b)
    return NetworkState(spec, weights, biases)


def save(net: NetworkState, path) -> None:
    Path(path).write_text(dumps(net))


def load(path) -> NetworkState:
    return loads(Path(path).read_text())
