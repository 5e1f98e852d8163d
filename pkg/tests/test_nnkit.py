# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Layers, losses, SGD and checkpoints of the network toolkit."""
import numpy
import pytest

from make_test_ref import SEED
from tactev import nnkit
from tactev.exceptions import (CheckpointError, InvalidInputError, ShapeError,
                               TrainingError)
from tactev.force import build_force_network

# relative tolerance of the central-difference comparison
TOL = 1e-4
EPS = 1e-6


def dense_case(rng):
    n_in, n_out = rng.integers(1, 6, size=2)
    if rng.random() < 0.5:
        return [nnkit.Dense(n_in, n_out)], (int(n_in), )
    return [nnkit.Dense(n_in, n_out)], (int(rng.integers(1, 4)), int(n_in))


def conv_case(rng):
    c_in, c_out = rng.integers(1, 4, size=2)
    kernel = tuple(int(k) for k in rng.integers(1, 4, size=2))
    padding = ('valid', 'same')[rng.integers(2)]
    h, w = (k + int(rng.integers(0, 3)) for k in kernel)
    return [nnkit.Conv2D(c_in, c_out, kernel, padding)], (int(c_in), h, w)


def relu_case(rng):
    return [nnkit.ReLU()], (int(rng.integers(2, 8)), )


def sigmoid_case(rng):
    return [nnkit.Sigmoid()], (int(rng.integers(2, 8)), )


def dropout_case(rng):
    return [nnkit.Dropout(0.3)], (int(rng.integers(2, 8)), )


def flatten_case(rng):
    return [nnkit.Flatten()], tuple(int(s) for s in rng.integers(1, 4, 3))


def maxpool_case(rng):
    kernel = tuple(int(k) for k in rng.integers(1, 3, size=2))
    h, w = (k * 2 + int(rng.integers(0, 2)) for k in kernel)
    return [nnkit.MaxPool2D(kernel)], (int(rng.integers(1, 3)), h, w)


def lattice_case(rng):
    cells = sorted(rng.choice(12, size=int(rng.integers(1, 12)),
                              replace=False))
    return [nnkit.ToLattice(cells, (3, 4))], (len(cells),
                                              int(rng.integers(1, 4)))


CASES = {
    'Dense': dense_case,
    'Conv2D': conv_case,
    'ReLU': relu_case,
    'Sigmoid': sigmoid_case,
    'Dropout': dropout_case,
    'Flatten': flatten_case,
    'MaxPool2D': maxpool_case,
    'ToLattice': lattice_case,
}


def test_every_layer_kind_has_a_case():
    assert set(CASES) == set(nnkit.LAYER_KINDS)


@pytest.mark.parametrize('kind', sorted(CASES))
@pytest.mark.parametrize('seed', range(20))
def test_gradient_check(kind, seed):
    rng = numpy.random.default_rng(SEED + seed)
    layers, shape = CASES[kind](rng)
    net = nnkit.Network(layers, shape, seed=seed)
    x = rng.normal(size=(2, ) + shape)
    training = kind == 'Dropout'
    assert nnkit.gradient_check(net, x, eps=EPS, seed=seed,
                                training=training) < TOL


def test_gradient_check_slip_like_stack():
    rng = numpy.random.default_rng(SEED)
    layers = [
        nnkit.Dense(3, 4),
        nnkit.Sigmoid(),
        nnkit.ToLattice([0, 1, 2, 4, 5, 7], (3, 3)),
        nnkit.Conv2D(4, 2, (2, 2), 'same'),
        nnkit.Sigmoid(),
        nnkit.Flatten(),
        nnkit.Dense(18, 1),
        nnkit.Sigmoid(),
    ]
    net = nnkit.Network(layers, (6, 3), seed=SEED)
    assert net.output_shape == (1, )
    assert nnkit.gradient_check(net, rng.normal(size=(3, 6, 3)),
                                eps=EPS) < TOL


def test_force_network_parameter_count():
    assert build_force_network(126).n_params == 49026


def test_shapes_must_compose():
    with pytest.raises(ShapeError):
        nnkit.Network([nnkit.Dense(3, 4), nnkit.Dense(5, 2)], (3, ))


def test_input_shape_is_checked():
    net = nnkit.Network([nnkit.Dense(3, 1)], (3, ), seed=SEED)
    with pytest.raises(ShapeError):
        net.forward(numpy.zeros((2, 4)))


def test_same_padding_keeps_size():
    conv = nnkit.Conv2D(1, 1, (2, 2), 'same')
    assert conv.padding == ((0, 1), (0, 1))
    assert conv.output_shape((1, 7, 8)) == (1, 7, 8)


def test_maxpool_drops_partial_windows():
    assert nnkit.MaxPool2D((3, 3)).output_shape((2, 7, 8)) == (2, 2, 2)


@pytest.mark.parametrize('p', [-0.1, 1.0])
def test_dropout_probability_range(p):
    with pytest.raises(InvalidInputError):
        nnkit.Dropout(p)


def test_dropout_is_identity_at_inference():
    x = numpy.random.default_rng(SEED).normal(size=(4, 10))
    layer = nnkit.Dropout(0.5)
    assert numpy.array_equal(layer.forward(x, training=False), x)


def test_dropout_keeps_expectation():
    layer = nnkit.Dropout(0.25, seed=SEED)
    out = layer.forward(numpy.ones((1, 100000)), training=True)
    assert set(numpy.unique(out)) <= {0.0, 1.0 / 0.75}
    assert numpy.isclose(out.mean(), 1.0, atol=0.02)


def test_bce_of_one_half():
    assert numpy.isclose(nnkit.BCELoss()([0.5], [1.0]), numpy.log(2))


def test_bce_rejects_targets_out_of_range():
    with pytest.raises(InvalidInputError):
        nnkit.BCELoss()([0.5], [2.0])


def test_bce_gradient():
    loss = nnkit.BCELoss()
    p = numpy.array([0.2, 0.7, 0.9])
    y = numpy.array([0.0, 1.0, 1.0])
    numeric = numpy.empty(3)
    for k in range(3):
        d = numpy.zeros(3)
        d[k] = EPS
        numeric[k] = (loss(p + d, y) - loss(p - d, y)) / (2 * EPS)
    assert numpy.allclose(loss.gradient(p, y), numeric, rtol=1e-6)


def test_mse_loss():
    loss = nnkit.MSELoss()
    assert numpy.isclose(loss([1.0, 3.0], [0.0, 1.0]), 2.5)
    assert numpy.allclose(loss.gradient([1.0, 3.0], [0.0, 1.0]), [1.0, 2.0])


def scalar_net(w):
    net = nnkit.Network([nnkit.Dense(1, 1)], (1, ))
    net.set_params([[[w]], [0.0]])
    return net


def test_sgd_step():
    net = scalar_net(0.5)
    nnkit.sgd_step(net, [numpy.array([[2.0]]), numpy.zeros(1)], 0.001)
    assert numpy.isclose(net.layers[0].params['W'][0, 0], 0.498)


def test_sgd_zero_learning_rate():
    net = scalar_net(0.5)
    nnkit.sgd_step(net, [numpy.array([[2.0]]), numpy.ones(1)], 0.0)
    assert net.layers[0].params['W'][0, 0] == 0.5
    assert net.layers[0].params['b'][0] == 0.0


def test_sgd_rejects_non_finite_gradient():
    net = scalar_net(0.5)
    with pytest.raises(TrainingError):
        nnkit.sgd_step(net, [numpy.array([[numpy.nan]]), numpy.zeros(1)], 0.1)
    assert net.layers[0].params['W'][0, 0] == 0.5


def test_backward_reduces_loss():
    rng = numpy.random.default_rng(SEED)
    x = rng.normal(size=(64, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(float)[:, None]
    net = nnkit.Network([nnkit.Dense(2, 1), nnkit.Sigmoid()], (2, ),
                        seed=SEED)
    first, _ = nnkit.backward(net, x, y)
    for _ in range(200):
        value, grads = nnkit.backward(net, x, y)
        nnkit.sgd_step(net, grads, 0.5)
    assert value < first


@pytest.mark.parametrize('logit', [2.0, 10.0, 30.0, 40.0, -40.0])
def test_bce_gradient_through_saturated_sigmoid(logit):
    net = nnkit.Network([nnkit.Dense(1, 1), nnkit.Sigmoid()], (1, ),
                        seed=SEED)
    net.layers[0].params['W'][:] = logit
    net.layers[0].params['b'][:] = 0.0
    target = 0.0 if logit > 0 else 1.0
    value, grads = nnkit.backward(net, numpy.ones((1, 1)), [[target]])
    p = 1.0 / (1.0 + numpy.exp(-logit))
    assert numpy.isfinite(value)
    assert numpy.isclose(grads[0][0, 0], p - target)
    assert numpy.isclose(grads[1][0], p - target)
    assert abs(grads[0][0, 0]) > 0.8


def test_bce_logit_gradient_matches_chain_rule():
    rng = numpy.random.default_rng(SEED)
    x = rng.normal(size=(16, 3))
    y = (rng.random((16, 1)) > 0.5).astype(float)
    net = nnkit.Network([nnkit.Dense(3, 1), nnkit.Sigmoid()], (3, ),
                        seed=SEED)
    _, fused = nnkit.backward(net, x, y)
    net.zero_grad()
    p = net.forward(x)
    net.backward(nnkit.BCELoss().gradient(p, y))
    for a, b in zip(fused, net.gradients()):
        assert numpy.allclose(a, b)


@pytest.fixture
def network():
    layers = [
        nnkit.Dense(3, 4),
        nnkit.ReLU(),
        nnkit.Dropout(0.25),
        nnkit.ToLattice([0, 1, 2, 3], (2, 2)),
        nnkit.Conv2D(4, 2, (2, 2), 'same'),
        nnkit.MaxPool2D((2, 2)),
        nnkit.Flatten(),
        nnkit.Dense(2, 1),
        nnkit.Sigmoid(),
    ]
    return nnkit.Network(layers, (4, 3), seed=SEED, meta={'name': 'test'})


def test_checkpoint_round_trip(network, tmp_path):
    path = str(tmp_path / 'net.tnn')
    nnkit.save_checkpoint(network, path)
    loaded = nnkit.load_checkpoint(path)
    assert loaded.spec() == network.spec()
    assert loaded.meta == {'name': 'test'}
    x = numpy.random.default_rng(SEED).normal(size=(5, 4, 3))
    assert numpy.array_equal(nnkit.forward(loaded, x),
                             nnkit.forward(network, x))


def test_checkpoint_bad_magic(network, tmp_path):
    path = tmp_path / 'net.tnn'
    nnkit.save_checkpoint(network, str(path))
    data = bytearray(path.read_bytes())
    data[:4] = b'XXXX'
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        nnkit.load_checkpoint(str(path))


def test_checkpoint_digest_mismatch(network, tmp_path):
    path = tmp_path / 'net.tnn'
    nnkit.save_checkpoint(network, str(path))
    data = bytearray(path.read_bytes())
    data[nnkit._HEADER.size + 3] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        nnkit.load_checkpoint(str(path))


@pytest.mark.parametrize('cut', [8, 3, 13])
def test_checkpoint_truncated_parameters(network, tmp_path, cut):
    path = tmp_path / 'net.tnn'
    nnkit.save_checkpoint(network, str(path))
    path.write_bytes(path.read_bytes()[:-cut])
    with pytest.raises(CheckpointError):
        nnkit.load_checkpoint(str(path))


def test_unknown_layer_kind():
    with pytest.raises(CheckpointError):
        nnkit.layer_from_spec({'kind': 'Attention'})
