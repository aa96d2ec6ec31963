"""Network forward/Jacobian against naive reimplementation and finite differences."""

import io

import numpy as np
import pytest
from scipy.special import expit

from lagtrack.diffcore import (
    NetworkSpec,
    ParameterVector,
    init_params,
    jacobian_check,
    load_network,
    net_forward,
    net_input_jacobian,
    param_count,
    save_network,
)
from lagtrack.diffcore.network import dumps_network
from lagtrack.errors import DimensionMismatchError


def naive_forward(spec, params, x):
    """Straightforward layer-by-layer loop, independent of the package path."""
    a = np.asarray(x, dtype=float)
    values = np.asarray(params.values)
    layers = list(spec.layer_dims)
    off = 0
    for k, (fi, fo) in enumerate(layers):
        w = values[off : off + fo * fi].reshape(fo, fi)
        off += fo * fi
        b = values[off : off + fo]
        off += fo
        z = w @ a + b
        a = np.logaddexp(0, z) if (k < len(layers) - 1 and spec.activation == "softplus") else z
        if k < len(layers) - 1 and spec.activation == "tanh":
            a = np.tanh(z)
    return a


def test_identity_linear_net():
    spec = NetworkSpec(2, 2, hidden_layers=())
    params = ParameterVector.zeros(spec)
    params.values[:4] = np.eye(2).ravel()
    np.testing.assert_array_equal(net_forward(spec, params, np.array([1.0, 2.0])), [1.0, 2.0])


def test_forward_deterministic_bitwise():
    spec = NetworkSpec(3, 2, hidden_layers=(8, 8))
    params = init_params(spec, 7)
    x = np.random.default_rng(0).normal(size=3)
    a = net_forward(spec, params, x)
    b = net_forward(spec, params, x)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("hidden", [(), (5,), (8, 6)])
@pytest.mark.parametrize("activation", ["softplus", "tanh"])
def test_forward_matches_naive_oracle(hidden, activation):
    rng = np.random.default_rng(42)
    spec = NetworkSpec(3, 2, hidden_layers=hidden, activation=activation)
    params = init_params(spec, rng)
    params.values[:] += rng.normal(scale=0.1, size=len(params))  # nonzero biases too
    x = rng.normal(size=3)
    np.testing.assert_allclose(net_forward(spec, params, x), naive_forward(spec, params, x), atol=1e-12)


def test_forward_batched_matches_loop():
    rng = np.random.default_rng(3)
    spec = NetworkSpec(2, 3, hidden_layers=(6,))
    params = init_params(spec, rng)
    xs = rng.normal(size=(5, 2))
    batched = net_forward(spec, params, xs)
    for i, x in enumerate(xs):
        np.testing.assert_allclose(batched[i], net_forward(spec, params, x), atol=1e-14)


def test_jacobian_linear_net_is_weight_matrix():
    spec = NetworkSpec(3, 2, hidden_layers=())
    rng = np.random.default_rng(5)
    params = init_params(spec, rng)
    w = np.asarray(params.values)[:6].reshape(2, 3)
    np.testing.assert_array_equal(net_input_jacobian(spec, params, rng.normal(size=3)), w)


def test_jacobian_constant_net_is_zero():
    spec = NetworkSpec(2, 3, hidden_layers=(4,))
    params = ParameterVector.zeros(spec)
    params.values[-3:] = [1.0, -2.0, 3.0]  # output biases only
    np.testing.assert_array_equal(net_input_jacobian(spec, params, np.array([0.3, -0.7])), np.zeros((3, 2)))


def test_jacobian_against_finite_differences_100_draws():
    # spec invariant: <= 1e-5 max relative error at h = 1e-6 for repo-sized specs
    rng = np.random.default_rng(11)
    specs = [
        NetworkSpec(2, 3, hidden_layers=(64, 64)),
        NetworkSpec(2, 1, hidden_layers=(64, 64)),
        NetworkSpec(3, 6, hidden_layers=(64, 64)),
        NetworkSpec(3, 1, hidden_layers=(64, 64)),
        NetworkSpec(2, 3, hidden_layers=(8,), activation="tanh"),
    ]
    draws_per_spec = 20  # 100 draws across the repo's spec family
    for spec in specs:
        for _ in range(draws_per_spec):
            params = init_params(spec, rng)
            x = rng.normal(size=spec.input_dim)
            assert jacobian_check(spec, params, x, h=1e-6) <= 1e-5


def test_jacobian_batched_matches_per_sample():
    rng = np.random.default_rng(9)
    spec = NetworkSpec(2, 3, hidden_layers=(5, 4))
    params = init_params(spec, rng)
    xs = rng.normal(size=(6, 2))
    batched = net_input_jacobian(spec, params, xs)
    assert batched.shape == (6, 3, 2)
    for i, x in enumerate(xs):
        np.testing.assert_allclose(batched[i], net_input_jacobian(spec, params, x), atol=1e-14)


def test_dimension_mismatch_rejected():
    spec = NetworkSpec(2, 2, hidden_layers=())
    params = ParameterVector.zeros(spec)
    with pytest.raises(DimensionMismatchError):
        net_forward(spec, params, np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        NetworkSpec(0, 2)


def test_init_params_glorot_bounds_and_zero_biases():
    spec = NetworkSpec(4, 3, hidden_layers=(16,))
    params = init_params(spec, 123)
    for layer in params.layout:
        fo, fi = layer.shape
        bound = np.sqrt(6.0 / (fi + fo))
        w = params.values[layer.weights]
        assert np.all(np.abs(w) <= bound)
        np.testing.assert_array_equal(params.values[layer.bias], 0.0)
    assert np.array_equal(init_params(spec, 123).values, params.values)  # seeded


def test_checkpoint_round_trip_exact():
    spec = NetworkSpec(3, 2, hidden_layers=(7,), activation="tanh")
    params = init_params(spec, 77)
    params.values[:] += 1e-17  # exercise exact hex round-trip on awkward values
    text = dumps_network(spec, params, seed=77)
    spec2, params2, seed2 = load_network(io.StringIO(text))
    assert spec2 == spec and seed2 == 77
    assert np.array_equal(np.asarray(params2.values), np.asarray(params.values))
    assert dumps_network(spec2, params2, seed=77) == text


def test_param_count():
    spec = NetworkSpec(2, 3, hidden_layers=(8,))
    assert param_count(spec) == 2 * 8 + 8 + 8 * 3 + 3
    assert len(ParameterVector.zeros(spec)) == param_count(spec)
