import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evgp.distributions import BiasLaw, DistributionSpec
from evgp.net import (
    Architecture,
    GuardExceeded,
    SampledNet,
    ZeroPreactivation,
    batch_jacobians,
    forward,
    instantiate,
    jacobian_backprop,
    jacobian_finite_difference,
    jacobian_pathsum,
    kink_distance,
    sample_batch,
)

small_widths = st.lists(st.integers(1, 3), min_size=2, max_size=5)
kinds = st.sampled_from(["gaussian", "signed_bernoulli", "uniform"])


def _net(weights, biases):
    ws = tuple(np.array(w, dtype=float) for w in weights)
    bs = tuple(np.array(b, dtype=float) for b in biases)
    widths = (ws[0].shape[0],) + tuple(w.shape[1] for w in ws)
    return SampledNet(Architecture(widths), ws, bs)


def test_architecture_validation():
    a = Architecture.parse("784,100,100,10")
    assert a.depth == 3 and a.hidden == (100, 100) and a.n_in == 784 and a.n_out == 10
    assert Architecture.from_json(a.to_json()) == a
    for bad in ("5,0,2", "5", "a,b", ""):
        with pytest.raises(ValueError):
            Architecture.parse(bad)


def test_instantiate_is_deterministic_and_shaped():
    arch = Architecture((2, 3, 1))
    spec = DistributionSpec.homogeneous(arch)
    a, b = instantiate(arch, spec, 42), instantiate(arch, spec, 42)
    assert a.dump_binary() == b.dump_binary()
    assert [w.shape for w in a.weights] == [(2, 3), (3, 1)]
    assert [b.shape for b in a.biases] == [(3,), (1,)]
    assert instantiate(arch, spec, 43).dump_binary() != a.dump_binary()


def test_sample_index_is_independent_of_batching():
    arch = Architecture((3, 2, 2))
    spec = DistributionSpec.homogeneous(arch, "uniform")
    w, b = sample_batch(arch, spec, 9, 5, 7)
    for i in range(7):
        net = instantiate(arch, spec, 9, 5 + i)
        assert all(np.array_equal(w[j][i], net.weights[j]) for j in range(2))
        assert all(np.array_equal(b[j][i], net.biases[j]) for j in range(2))


def test_first_layer_weight_variance():
    arch = Architecture((4, 3, 1))
    w, _ = sample_batch(arch, DistributionSpec.homogeneous(arch), 1, 0, 100_000)
    x = w[0][:, 0, 0] ** 2
    assert abs(x.mean() - 0.5) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_nets_are_immutable():
    arch = Architecture((2, 2))
    net = instantiate(arch, DistributionSpec.homogeneous(arch), 0)
    with pytest.raises(ValueError):
        net.weights[0][0, 0] = 1.0


def test_forward_hand_arithmetic():
    net = _net([[[0.5], [-1.0]]], [[0.25]])
    tr = forward(net, [1.0, 1.0])
    assert tr.pre[1][0] == -0.25 and tr.post[1][0] == 0.0


def test_forward_linear_before_relu():
    arch = Architecture((3, 4, 2))
    net = instantiate(arch, DistributionSpec.homogeneous(arch), 3)
    x = np.array([0.3, -0.2, 0.5])
    a1 = forward(net, x).pre[1] - net.biases[0]
    a2 = forward(net, 2 * x).pre[1] - net.biases[0]
    assert np.allclose(a2, 2 * a1, rtol=1e-14, atol=1e-15)


def test_zero_input_with_zero_bias_gives_zero_activations():
    arch = Architecture((2, 3, 1))
    spec = DistributionSpec.homogeneous(arch, bias=BiasLaw("zero", allow_atoms=True))
    net = instantiate(arch, spec, 0)
    tr = forward(net, np.zeros(2))
    assert all(not np.any(a) for a in tr.pre[1:])
    with pytest.raises(ZeroPreactivation):
        jacobian_backprop(net, np.zeros(2))


def test_depth_one_jacobian():
    net = _net([[[1.5, -2.0]]], [[0.1, 0.1]])
    # act = (1.6, -1.9): only the first output is active
    assert np.array_equal(jacobian_backprop(net, [1.0]), np.array([[1.5], [0.0]]))


def test_width_one_chain_single_path():
    net = _net([[[2.0]], [[-0.5]], [[-3.0]]], [[0.1], [0.2], [0.3]])
    # acts: 2.1, -0.85 -> dead
    assert jacobian_pathsum(net, [1.0])[0, 0] == 0.0
    net = _net([[[2.0]], [[0.5]], [[3.0]]], [[0.1], [0.2], [0.3]])
    assert jacobian_pathsum(net, [1.0])[0, 0] == 3.0 and jacobian_backprop(net, [1.0])[0, 0] == 3.0


def test_all_zero_weights_give_zero_jacobian():
    net = _net([np.zeros((2, 2)), np.zeros((2, 2))], [[0.1, 0.1], [0.1, 0.1]])
    assert not np.any(jacobian_pathsum(net)) and not np.any(jacobian_backprop(net))


def test_pathsum_guard():
    arch = Architecture((10, 10, 10, 10, 10, 10, 10, 10))
    net = instantiate(arch, DistributionSpec.homogeneous(arch), 0)
    with pytest.raises(GuardExceeded):
        jacobian_pathsum(net)


@settings(max_examples=60, deadline=None)
@given(small_widths, kinds, st.integers(0, 2**32))
def test_backprop_equals_pathsum(widths, kind, seed):
    arch = Architecture(tuple(widths))
    net = instantiate(arch, DistributionSpec.homogeneous(arch, kind), seed)
    x = np.random.default_rng(seed).normal(size=arch.n_in)
    jb, jp = jacobian_backprop(net, x), jacobian_pathsum(net, x)
    assert np.max(np.abs(jb - jp)) <= 1e-12 * max(1.0, np.max(np.abs(jb)))


def test_arch_222_two_paths():
    arch = Architecture((2, 2, 2))
    net = instantiate(arch, DistributionSpec.homogeneous(arch), 5)
    assert np.allclose(jacobian_pathsum(net), jacobian_backprop(net), rtol=0, atol=1e-15)


def test_finite_differences_at_smooth_points():
    rng = np.random.default_rng(2)
    checked = 0
    for t in range(20):
        widths = tuple(rng.integers(1, 4, size=rng.integers(2, 5)))
        arch = Architecture(widths)
        net = instantiate(arch, DistributionSpec.homogeneous(arch), t)
        for _ in range(10):
            x = rng.normal(size=arch.n_in)
            if kink_distance(net, x) < 1e-3:
                continue
            assert np.max(np.abs(jacobian_finite_difference(net, x) - jacobian_backprop(net, x))) <= 1e-6
            checked += 1
    assert checked > 100


def test_batch_jacobians_match_single_net():
    arch = Architecture((3, 4, 2))
    spec = DistributionSpec.homogeneous(arch)
    w, b = sample_batch(arch, spec, 4, 0, 16)
    x = np.ones(3)
    jac, n_zero = batch_jacobians(w, b, x)
    assert n_zero == 0 and jac.shape == (16, 3, 2)
    for i in range(16):
        single = jacobian_backprop(instantiate(arch, spec, 4, i), x)
        assert np.allclose(jac[i], single.T, rtol=1e-13, atol=1e-15)


def test_net_json_and_binary_dump():
    arch = Architecture((2, 3, 1))
    net = instantiate(arch, DistributionSpec.homogeneous(arch), 0)
    doc = net.to_json()
    assert doc["widths"] == [2, 3, 1]
    raw = np.frombuffer(net.dump_binary(), dtype="<f8")
    assert raw.size == arch.n_parameters
    assert raw[0] == net.weights[0][0, 0]
