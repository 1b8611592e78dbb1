import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnnsemi.losses import LossKind, loss_grad, loss_value
from dnnsemi.network import (
    ArchitectureSpec,
    NetworkState,
    advise_architecture,
    backward,
    dropout_masks,
    dumps,
    forward,
    forward_train,
    initialize,
    loads,
    param_count,
)


def _loop_forward(net: NetworkState, x):
    """Straight-line scalar evaluation, one unit at a time."""
    a = [float(v) for v in x]
    n_layers = len(net.weights)
    for l in range(n_layers):
        W, b = net.weights[l], net.biases[l]
        nxt = []
        for h in range(W.shape[0]):
            s = b[h]
            for k in range(W.shape[1]):
                s += W[h, k] * a[k]
            nxt.append(s if l == n_layers - 1 else max(s, 0.0))
        a = nxt
    return a


@pytest.mark.parametrize(
    "d,widths,out,expected",
    [
        (2, (3, 3), 1, 25),
        (142, (60,), 2, 8702),
        (142, (100,), 2, 14502),
        (142, (30, 20), 2, 4952),
        (142, (30, 10), 2, 4622),
        (142, (30, 30), 2, 5282),
        (142, (100, 30, 20), 2, 17992),
        (142, (80, 30, 20), 2, 14532),
    ],
)
def test_param_count_reported_values(d, widths, out, expected):
    assert param_count(ArchitectureSpec(d, widths, out)) == expected


def test_param_count_constant_width_formula():
    # W = (d+1)H + (L-1)(H^2+H) + H + 1
    for d, H, L in [(2, 3, 2), (5, 7, 4), (1, 1, 1)]:
        assert param_count(ArchitectureSpec(d, (H,) * L)) == (d + 1) * H + (L - 1) * (H * H + H) + H + 1


@settings(max_examples=50, deadline=None)
@given(
    d=st.integers(1, 12),
    widths=st.lists(st.integers(1, 9), min_size=0, max_size=4),
    out=st.integers(1, 3),
    seed=st.integers(0, 2**31),
)
def test_param_count_matches_stored_scalars(d, widths, out, seed):
    spec = ArchitectureSpec(d, tuple(widths), out)
    net = initialize(spec, seed)
    assert net.n_params == param_count(spec) == net.flat().size


def test_spec_validation():
    with pytest.raises(ValueError):
        ArchitectureSpec(2, (3, 3), 1, dropout_rates=(0.5,))
    with pytest.raises(ValueError):
        ArchitectureSpec(0, (3,))
    with pytest.raises(ValueError):
        ArchitectureSpec(2, (0,))
    with pytest.raises(ValueError):
        ArchitectureSpec(2, (3,), dropout_rates=(1.0,))


def test_parse_structure_string():
    spec = ArchitectureSpec.parse("{20, 15, 5}", input_dim=20)
    assert spec.hidden_widths == (20, 15, 5)
    assert ArchitectureSpec.parse("[80, 80, 80, 80, 80, 80]", 100).depth == 6


def test_initialize_deterministic_and_zero_constants():
    spec = ArchitectureSpec(4, (6, 5), 2)
    a, b = initialize(spec, 7), initialize(spec, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert all(np.all(c == 0.0) for c in a.biases)
    assert not np.array_equal(initialize(spec, 8).weights[0], a.weights[0])


def test_initialize_layer_one_variance():
    d = 50
    net = initialize(ArchitectureSpec(d, (200,)), 3)
    w = net.weights[0]
    assert w.size == 10_000
    assert abs(w.var() / (2.0 / d) - 1.0) < 0.10


def test_forward_degenerate_affine():
    spec = ArchitectureSpec(3, (4, 2), 2)
    net = initialize(spec, 0)
    for w in net.weights:
        w[:] = 0.0
    net.biases[-1][:] = [1.5, -2.0]
    X = np.random.default_rng(1).normal(size=(5, 3))
    assert np.array_equal(forward(net, X), np.tile([1.5, -2.0], (5, 1)))


def test_forward_single_relu_unit():
    spec = ArchitectureSpec(1, (1,))
    net = NetworkState(spec, [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    assert forward(net, [-1.0])[0] == 0.0
    assert forward(net, [2.0])[0] == 2.0


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(11)
    spec = ArchitectureSpec(4, (5, 3, 6), 2)
    net = initialize(spec, 5)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape)
    X = rng.normal(size=(20, 4))
    batch = forward(net, X)
    for i in range(20):
        np.testing.assert_allclose(batch[i], _loop_forward(net, X[i]), rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(forward(net, X[i]), batch[i], rtol=1e-13, atol=1e-13)


def test_forward_dimension_mismatch():
    net = initialize(ArchitectureSpec(3, (2,)), 0)
    with pytest.raises(ValueError):
        forward(net, np.zeros(4))
    with pytest.raises(ValueError):
        backward(net, np.zeros((2, 2)), np.zeros((2, 1)))


def test_clamp_bounds_outputs():
    spec = ArchitectureSpec(2, (8,), 3, clamp_bound=0.25)
    net = initialize(spec, 2)
    out = forward(net, np.random.default_rng(0).normal(scale=50.0, size=(200, 2)))
    assert np.all(np.abs(out) <= 0.5)
    assert np.any(np.abs(out) == 0.5)


def test_backward_zero_upstream_gives_zero_gradient():
    net = initialize(ArchitectureSpec(3, (4, 4), 2), 1)
    g = backward(net, np.ones(3), np.zeros(2))
    assert not np.any(g.flat())


def test_dead_unit_has_zero_incoming_gradient():
    net = initialize(ArchitectureSpec(2, (3,)), 0)
    net.weights[0][1] = [-1.0, -1.0]
    net.biases[0][1] = -0.5
    x = np.array([0.3, 0.7])
    g = backward(net, x, np.array([1.0]))
    assert np.all(g.weights[0][1] == 0.0) and g.biases[0][1] == 0.0
    assert g.weights[1][0, 1] == 0.0


def _min_abs_preact(net, X):
    h = X
    m = np.inf
    for l in range(net.spec.depth):
        z = h @ net.weights[l].T + net.biases[l]
        m = min(m, np.abs(z).min())
        h = np.maximum(z, 0.0)
    return m


def _fd_gradient(net, total, h=1e-5):
    params = net.weights + net.biases
    out = []
    for p in params:
        g = np.empty_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = total()
            p[idx] = old - h
            dn = total()
            p[idx] = old
            g[idx] = (up - dn) / (2 * h)
        out.append(g)
    return np.concatenate([g.ravel() for g in out[: len(net.weights)]] + [g for g in out[len(net.weights) :]])


def _analytic_flat(g, n_layers):
    return np.concatenate([w.ravel() for w in g.weights] + list(g.biases))


def gradient_check_case(rng, kinds=("leastsquares", "logistic", "poisson", "multinomial:3")):
    """Random network, loss and batch; returns max coordinatewise relative error."""
    while True:
        kind = LossKind.parse(str(rng.choice(kinds)), bound_M=1.0)
        d = int(rng.integers(1, 5))
        widths = tuple(int(w) for w in rng.integers(1, 6, size=int(rng.integers(1, 4))))
        spec = ArchitectureSpec(d, widths, kind.output_dim)
        net = initialize(spec, int(rng.integers(2**31)))
        for b in net.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        X = rng.normal(size=(3, d))
        if _min_abs_preact(net, X) > 1e-3:
            break
    if kind.output_dim > 1:
        y = np.eye(kind.output_dim + 1)[rng.integers(0, kind.output_dim + 1, size=3)][:, 1:]
    elif kind.name == "poisson":
        y = rng.integers(0, 4, size=3).astype(float)
    elif kind.name == "logistic":
        y = rng.integers(0, 2, size=3).astype(float)
    else:
        y = rng.normal(size=3)

    def fvals():
        out = forward(net, X)
        return out if kind.output_dim > 1 else out[:, 0]

    def total():
        return float(np.sum(loss_value(kind, fvals(), y)))

    dl = loss_grad(kind, fvals(), y).reshape(3, kind.output_dim)
    analytic = _analytic_flat(backward(net, X, dl), len(net.weights))
    numeric = _fd_gradient(net, total)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2024)
    worst = max(gradient_check_case(rng) for _ in range(25))
    assert worst < 1e-5


def test_dropout_masks_scale_and_rate():
    spec = ArchitectureSpec(3, (400, 5), 1, dropout_rates=(0.3, 0.0))
    masks = dropout_masks(spec, 100, np.random.default_rng(0))
    assert masks[1] is None
    vals = np.unique(masks[0])
    np.testing.assert_allclose(vals, [0.0, 1.0 / 0.7])
    assert abs((masks[0] == 0).mean() - 0.3) < 0.01


def test_dropout_unbiased_single_layer():
    spec = ArchitectureSpec(3, (10,), 1, dropout_rates=(0.5,))
    net = initialize(spec, 4)
    net.biases[0][:] = 0.2
    x = np.array([0.5, -0.3, 1.2])
    draws = np.array([forward_train(net, x, s)[0] for s in range(10_000)])
    target = forward(net, x)[0]
    assert abs(draws.mean() - target) <= 3 * draws.std(ddof=1) / math.sqrt(draws.size)


def test_train_mode_deterministic_given_seed():
    spec = ArchitectureSpec(3, (10,), 1, dropout_rates=(0.5,))
    net = initialize(spec, 4)
    x = np.ones(3)
    assert forward_train(net, x, 9)[0] == forward_train(net, x, 9)[0]


def test_backward_with_dropout_masks_matches_fd():
    rng = np.random.default_rng(3)
    spec = ArchitectureSpec(2, (6, 4), 1, dropout_rates=(0.4, 0.2))
    net = initialize(spec, 1)
    for b in net.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    X = rng.normal(size=(4, 2))
    masks = dropout_masks(spec, 4, rng)
    y = rng.normal(size=4)
    kind = LossKind.parse("leastsquares")

    def total():
        return float(np.sum(loss_value(kind, forward(net, X, masks)[:, 0], y)))

    dl = loss_grad(kind, forward(net, X, masks)[:, 0], y)[:, None]
    analytic = _analytic_flat(backward(net, X, dl, masks), 3)
    np.testing.assert_allclose(analytic, _fd_gradient(net, total), rtol=1e-6, atol=1e-8)


def test_advise_architecture():
    spec = advise_architecture(math.e, 3, 2.0)
    assert spec.depth == 1
    spec = advise_architecture(10_000, 20, 21)
    expected = math.ceil(10_000 ** (20 / 82) * math.log(10_000) ** 2)
    assert expected == 802
    assert spec.hidden_widths[0] == 802 and set(spec.hidden_widths) == {802}
    assert spec.depth == math.ceil(math.log(10_000))


def test_advise_width_linear_in_constant():
    raw = 500 ** (4 / 14) * math.log(500) ** 2
    assert advise_architecture(500, 4, 3, c_width=2.0).hidden_widths[0] == math.ceil(2 * raw)
    assert advise_architecture(500, 4, 3, c_width=1.0).hidden_widths[0] == math.ceil(raw)


def test_text_format_roundtrip_bit_exact():
    spec = ArchitectureSpec(3, (4, 2), 2, dropout_rates=(0.5, 0.0), clamp_bound=7.25)
    net = initialize(spec, 12)
    net.biases[1][:] = [1 / 3, -math.pi]
    back = loads(dumps(net))
    assert back.spec == spec
    for a, b in zip(net.weights + net.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
    assert dumps(back) == dumps(net)


def test_text_format_rejects_foreign_file():
    with pytest.raises(ValueError):
        loads("something else\n")
