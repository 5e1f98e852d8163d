# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""A small differentiable-layer toolkit.

Layers work on batches (leading axis). Dense layers act on the last axis,
so a Dense stack applied to an input shaped (batch, n_dots, l) is a per-dot
encoder with weights shared across dots.

Checkpoint layout (little-endian)::

    magic     4 bytes  b'TNNK'
    version   u8       1
    digest    32 bytes SHA-256 of the JSON spec
    length    u32      JSON spec length
    spec      JSON     {"input_shape": [...], "layers": [...], "meta": {...}}
    params    float64  every parameter tensor, in layer order, C order
"""
import hashlib
import json
import logging
import struct
from abc import ABC, abstractmethod

import numpy
import scipy.special
from numpy.lib.stride_tricks import sliding_window_view

from tactev import package_setup
from tactev.exceptions import (CheckpointError, InvalidInputError, ShapeError,
                               TrainingError)

logger = logging.getLogger(__name__)

__all__ = [
    'Layer',
    'Dense',
    'Conv2D',
    'ReLU',
    'Sigmoid',
    'Dropout',
    'Flatten',
    'MaxPool2D',
    'ToLattice',
    'Network',
    'BCELoss',
    'MSELoss',
    'forward',
    'backward',
    'sgd_step',
    'gradient_check',
    'save_checkpoint',
    'load_checkpoint',
]

CHECKPOINT_MAGIC = b'TNNK'
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct('<4sB32sI')


def _glorot(rng, shape, fan_in, fan_out):
    limit = numpy.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer(ABC):
    """Base class for layers.

    Parameters and their gradients are dicts of arrays with the same keys.
    """

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def init(self, rng):
        """Initialise the parameters."""

    def zero_grad(self):
        for key, value in self.params.items():
            self.grads[key] = numpy.zeros_like(value)

    def spec(self):
        return {'kind': type(self).__name__}

    def output_shape(self, shape):
        """Per-sample output shape for a per-sample input shape."""
        return tuple(shape)

    @abstractmethod
    def forward(self, x, training=False):
        """Output for a batch, caching what backward needs."""

    @abstractmethod
    def backward(self, grad):
        """Input gradient; parameter gradients are accumulated."""


class Dense(Layer):
    """y = x W + b on the last axis."""

    def __init__(self, n_in, n_out):
        super().__init__()
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.params = {
            'W': numpy.zeros((self.n_in, self.n_out)),
            'b': numpy.zeros(self.n_out)
        }
        self.zero_grad()

    def init(self, rng):
        self.params['W'] = _glorot(rng, (self.n_in, self.n_out), self.n_in,
                                   self.n_out)
        self.params['b'] = numpy.zeros(self.n_out)

    def spec(self):
        return dict(super().spec(), n_in=self.n_in, n_out=self.n_out)

    def output_shape(self, shape):
        if not shape or shape[-1] != self.n_in:
            raise ShapeError('Dense(%d, %d) cannot take input %r' %
                             (self.n_in, self.n_out, tuple(shape)))
        return tuple(shape[:-1]) + (self.n_out, )

    def forward(self, x, training=False):
        self._cache = x
        return x @ self.params['W'] + self.params['b']

    def backward(self, grad):
        x = self._cache
        x2 = x.reshape(-1, self.n_in)
        g2 = grad.reshape(-1, self.n_out)
        self.grads['W'] += x2.T @ g2
        self.grads['b'] += g2.sum(axis=0)
        return grad @ self.params['W'].T


def _padding(kernel, padding):
    kh, kw = kernel
    if padding == 'valid':
        return ((0, 0), (0, 0))
    if padding == 'same':
        top, left = (kh - 1) // 2, (kw - 1) // 2
        return ((top, kh - 1 - top), (left, kw - 1 - left))
    (top, bottom), (left, right) = padding
    return ((int(top), int(bottom)), (int(left), int(right)))


class Conv2D(Layer):
    """Stride-1 cross-correlation on (batch, channels, height, width).

    `padding` is 'valid', 'same' (extra row/column at the bottom/right for
    even kernels) or ((top, bottom), (left, right)).
    """

    def __init__(self, in_channels, out_channels, kernel, padding='valid'):
        super().__init__()
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = tuple(int(k) for k in kernel)
        self.padding = _padding(self.kernel, padding)
        self.params = {
            'W': numpy.zeros((self.out_channels, self.in_channels) +
                             self.kernel),
            'b': numpy.zeros(self.out_channels)
        }
        self.zero_grad()

    def init(self, rng):
        area = self.kernel[0] * self.kernel[1]
        self.params['W'] = _glorot(rng, self.params['W'].shape,
                                   self.in_channels * area,
                                   self.out_channels * area)
        self.params['b'] = numpy.zeros(self.out_channels)

    def spec(self):
        return dict(super().spec(),
                    in_channels=self.in_channels,
                    out_channels=self.out_channels,
                    kernel=list(self.kernel),
                    padding=[list(p) for p in self.padding])

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.in_channels:
            raise ShapeError('Conv2D(%d -> %d) cannot take input %r' %
                             (self.in_channels, self.out_channels,
                              tuple(shape)))
        (top, bottom), (left, right) = self.padding
        h = shape[1] + top + bottom - self.kernel[0] + 1
        w = shape[2] + left + right - self.kernel[1] + 1
        if h < 1 or w < 1:
            raise ShapeError('kernel %r larger than padded input %r' %
                             (self.kernel, tuple(shape)))
        return (self.out_channels, h, w)

    def forward(self, x, training=False):
        xp = numpy.pad(x, ((0, 0), (0, 0)) + self.padding)
        windows = sliding_window_view(xp, self.kernel, axis=(2, 3))
        self._cache = (x.shape, windows)
        y = numpy.einsum('nchwij,ocij->nohw', windows, self.params['W'],
                         optimize=True)
        return y + self.params['b'][None, :, None, None]

    def backward(self, grad):
        shape, windows = self._cache
        kh, kw = self.kernel
        ho, wo = grad.shape[2:]
        self.grads['W'] += numpy.einsum('nohw,nchwij->ocij', grad, windows,
                                        optimize=True)
        self.grads['b'] += grad.sum(axis=(0, 2, 3))
        (top, bottom), (left, right) = self.padding
        dxp = numpy.zeros((shape[0], shape[1], shape[2] + top + bottom,
                           shape[3] + left + right))
        w = self.params['W']
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + ho, j:j + wo] += numpy.einsum(
                    'nohw,oc->nchw', grad, w[:, :, i, j])
        return dxp[:, :, top:top + shape[2], left:left + shape[3]]


class ReLU(Layer):

    def forward(self, x, training=False):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad):
        return grad * self._cache


class Sigmoid(Layer):

    def forward(self, x, training=False):
        y = scipy.special.expit(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._cache
        return grad * y * (1.0 - y)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1 / (1 - p) in training,
    inference is the identity."""

    def __init__(self, p=0.25, seed=0):
        super().__init__()
        if not 0 <= p < 1:
            raise InvalidInputError('dropout probability must be in [0, 1) '
                                    '(got %r)' % p)
        self.p = float(p)
        self.seed = seed
        self.rng = numpy.random.default_rng(seed)

    def init(self, rng):
        self.rng = numpy.random.default_rng(rng.integers(2**32))

    def spec(self):
        return dict(super().spec(), p=self.p)

    def forward(self, x, training=False):
        if not training or self.p == 0:
            self._cache = None
            return x
        mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        if self._cache is None:
            return grad
        return grad * self._cache


class Flatten(Layer):

    def output_shape(self, shape):
        return (int(numpy.prod(shape)), )

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cache)


class MaxPool2D(Layer):
    """Non-overlapping max pooling (stride = kernel), trailing rows and
    columns that do not fill a window are dropped."""

    def __init__(self, kernel):
        super().__init__()
        self.kernel = tuple(int(k) for k in kernel)

    def spec(self):
        return dict(super().spec(), kernel=list(self.kernel))

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError('MaxPool2D needs (channels, height, width), '
                             'got %r' % (tuple(shape), ))
        h, w = shape[1] // self.kernel[0], shape[2] // self.kernel[1]
        if h < 1 or w < 1:
            raise ShapeError('pool kernel %r larger than input %r' %
                             (self.kernel, tuple(shape)))
        return (shape[0], h, w)

    def forward(self, x, training=False):
        kh, kw = self.kernel
        n, c, h, w = x.shape
        ho, wo = h // kh, w // kw
        blocks = x[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo, kw)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, ho, wo, kh * kw)
        arg = blocks.argmax(axis=4)
        self._cache = (x.shape, arg)
        return numpy.take_along_axis(blocks, arg[..., None], axis=4)[..., 0]

    def backward(self, grad):
        shape, arg = self._cache
        kh, kw = self.kernel
        n, c, h, w = shape
        ho, wo = arg.shape[2:]
        onehot = numpy.zeros((n, c, ho, wo, kh * kw))
        numpy.put_along_axis(onehot, arg[..., None], grad[..., None], axis=4)
        blocks = onehot.reshape(n, c, ho, wo, kh, kw).transpose(
            0, 1, 2, 4, 3, 5).reshape(n, c, ho * kh, wo * kw)
        dx = numpy.zeros(shape)
        dx[:, :, :ho * kh, :wo * kw] = blocks
        return dx


class ToLattice(Layer):
    """(batch, n_dots, channels) to (batch, channels, rows, cols).

    `cells` is the flat lattice index row * cols + col of each dot; lattice
    cells without a dot are zero.
    """

    def __init__(self, cells, shape):
        super().__init__()
        self.cells = [int(c) for c in cells]
        self.shape = tuple(int(s) for s in shape)

    def spec(self):
        return dict(super().spec(), cells=self.cells, shape=list(self.shape))

    def output_shape(self, shape):
        if len(shape) != 2 or shape[0] != len(self.cells):
            raise ShapeError('ToLattice expects (%d, channels), got %r' %
                             (len(self.cells), tuple(shape)))
        return (shape[1], ) + self.shape

    def forward(self, x, training=False):
        n, _, c = x.shape
        out = numpy.zeros((n, c, self.shape[0] * self.shape[1]))
        out[:, :, self.cells] = x.transpose(0, 2, 1)
        return out.reshape((n, c) + self.shape)

    def backward(self, grad):
        n, c = grad.shape[:2]
        flat = grad.reshape(n, c, -1)
        return flat[:, :, self.cells].transpose(0, 2, 1)


LAYER_KINDS = package_setup.subclasses(Layer)


def layer_from_spec(spec):
    """Build a layer from its spec dict.

    Raises
    ------
    CheckpointError
        Unknown layer kind or invalid arguments.
    """
    spec = dict(spec)
    kind = spec.pop('kind', None)
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise CheckpointError('unknown layer kind %r' % kind)
    if 'padding' in spec and isinstance(spec['padding'], list):
        spec['padding'] = tuple(tuple(p) for p in spec['padding'])
    try:
        return cls(**spec)
    except TypeError as err:
        raise CheckpointError('%s: %s' % (kind, err))


class Network:
    """A sequence of layers with a fixed per-sample input shape.

    Parameters
    ----------
    layers : list of Layer
    input_shape : tuple
        Per-sample input shape.
    seed : int, optional
        Initialise the parameters with this seed; None keeps them.
    meta : dict, optional
        Free-form JSON-serialisable metadata saved with checkpoints.

    Raises
    ------
    ShapeError
        If adjacent layer shapes do not compose.
    """

    def __init__(self, layers, input_shape, seed=None, meta=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.meta = dict(meta or {})
        self.training = False
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape
        if seed is not None:
            rng = numpy.random.default_rng(seed)
            for layer in self.layers:
                layer.init(rng)
            self.zero_grad()

    def spec(self):
        return {
            'input_shape': list(self.input_shape),
            'layers': [layer.spec() for layer in self.layers],
            'meta': self.meta,
        }

    @property
    def n_params(self):
        return sum(p.size for _, _, p in self.parameters())

    def parameters(self):
        """(layer index, name, array) for every parameter tensor."""
        for k, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield k, name, layer.params[name]

    def gradients(self):
        """Gradient arrays, in the order of parameters()."""
        return [self.layers[k].grads[name] for k, name, _ in self.parameters()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def reseed(self, seed):
        """Reset the random state of the dropout layers."""
        rng = numpy.random.default_rng(seed)
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = numpy.random.default_rng(rng.integers(2**32))

    def forward(self, x, training=None):
        x = numpy.asarray(x, dtype=numpy.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError('input shape %r does not match %r' %
                             (x.shape[1:], self.input_shape))
        training = self.training if training is None else training
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    __call__ = forward

    def backward(self, grad, skip=0):
        """Backpropagate `grad` through all layers but the last `skip`."""
        for layer in reversed(self.layers[:len(self.layers) - skip]):
            grad = layer.backward(grad)
        return grad

    def copy_params(self):
        return [p.copy() for _, _, p in self.parameters()]

    def set_params(self, values):
        values = list(values)
        slots = list(self.parameters())
        if len(values) != len(slots):
            raise ShapeError('expected %d parameter tensors, got %d' %
                             (len(slots), len(values)))
        for (k, name, p), v in zip(slots, values):
            v = numpy.asarray(v, dtype=numpy.float64)
            if v.shape != p.shape:
                raise ShapeError('parameter %d/%s: shape %r, expected %r' %
                                 (k, name, v.shape, p.shape))
            self.layers[k].params[name] = v.copy()


class BCELoss:
    """Mean binary cross entropy of probabilities."""
    eps = 1e-12

    def _check(self, p, y):
        p = numpy.asarray(p, dtype=numpy.float64)
        y = numpy.asarray(y, dtype=numpy.float64).reshape(p.shape)
        if numpy.any((y < 0) | (y > 1)):
            raise InvalidInputError('targets must lie in [0, 1]')
        return numpy.clip(p, self.eps, 1 - self.eps), y

    def __call__(self, p, y):
        p, y = self._check(p, y)
        return float(-numpy.mean(y * numpy.log(p) +
                                 (1 - y) * numpy.log(1 - p)))

    def gradient(self, p, y):
        p, y = self._check(p, y)
        return (p - y) / (p * (1 - p)) / p.size

    def logit_gradient(self, p, y):
        """Gradient with respect to the logit of a sigmoid output p."""
        _, y = self._check(p, y)
        p = numpy.asarray(p, dtype=numpy.float64)
        return (p - y) / p.size


class MSELoss:
    """Mean squared error."""

    def __call__(self, y, t):
        y = numpy.asarray(y, dtype=numpy.float64)
        t = numpy.asarray(t, dtype=numpy.float64).reshape(y.shape)
        return float(numpy.mean((y - t)**2))

    def gradient(self, y, t):
        y = numpy.asarray(y, dtype=numpy.float64)
        t = numpy.asarray(t, dtype=numpy.float64).reshape(y.shape)
        return 2.0 * (y - t) / y.size


def forward(net, x):
    """Inference-mode output of the network."""
    return net.forward(x, training=False)


def backward(net, x, target, loss=None):
    """Loss and parameter gradients for one batch.

    Returns
    -------
    value : float
    grads : list of ndarray, in the order of net.parameters()
    """
    loss = loss or BCELoss()
    net.zero_grad()
    out = net.forward(x)
    value = loss(out, target)
    if isinstance(loss, BCELoss) and isinstance(net.layers[-1], Sigmoid):
        # sigmoid and cross entropy differentiated together on the logit
        net.backward(loss.logit_gradient(out, target), skip=1)
    else:
        net.backward(loss.gradient(out, target))
    return value, [g.copy() for g in net.gradients()]


def sgd_step(net, grads, lr):
    """theta <- theta - lr * g for every parameter.

    Raises
    ------
    TrainingError
        If a gradient is not finite.
    """
    grads = list(grads)
    for g in grads:
        if not numpy.all(numpy.isfinite(g)):
            raise TrainingError('non-finite gradient')
    for (k, name, p), g in zip(list(net.parameters()), grads):
        net.layers[k].params[name] = p - lr * g
    return net


def gradient_check(net, x, eps=1e-3, seed=0, training=False):
    """Largest relative error between analytic and central-difference
    gradients, over every parameter tensor and the input.

    The loss is sum(output * R) with a fixed random R. In training mode the
    dropout masks are reseeded before every evaluation.
    """
    x = numpy.array(x, dtype=numpy.float64)
    rng = numpy.random.default_rng(seed)
    weights = rng.normal(size=(len(x), ) + net.output_shape)

    def value(inp):
        net.reseed(seed)
        return float(numpy.sum(net.forward(inp, training=training) * weights))

    net.zero_grad()
    net.reseed(seed)
    net.forward(x, training=training)
    dx = net.backward(weights)
    analytic = [g.copy() for g in net.gradients()] + [dx]

    numeric = []
    for _, _, p in list(net.parameters()) + [(None, None, x)]:
        g = numpy.zeros_like(p)
        for idx in numpy.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + eps
            plus = value(x)
            p[idx] = saved - eps
            minus = value(x)
            p[idx] = saved
            g[idx] = (plus - minus) / (2 * eps)
        numeric.append(g)

    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = numpy.linalg.norm(a) + numpy.linalg.norm(n)
        if scale > 0:
            worst = max(worst, numpy.linalg.norm(a - n) / scale)
    return worst


def save_checkpoint(net, path):
    """Write a network checkpoint (atomically)."""
    from tactev.data import atomic_write
    spec = json.dumps(net.spec(), sort_keys=True).encode('utf-8')
    digest = hashlib.sha256(spec).digest()
    blob = numpy.concatenate([p.ravel() for _, _, p in net.parameters()
                              ]) if net.n_params else numpy.zeros(0)
    with atomic_write(path, binary=True) as fp:
        fp.write(
            _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, digest,
                         len(spec)))
        fp.write(spec)
        fp.write(blob.astype('<f8').tobytes())


def load_checkpoint(path):
    """Read a network checkpoint.

    Raises
    ------
    CheckpointError
        Bad magic or version, digest mismatch, truncated parameter blob.
    """
    try:
        with open(path, 'rb') as fp:
            data = fp.read()
    except FileNotFoundError:
        raise InvalidInputError('no such file: %s' % path)
    if len(data) < _HEADER.size:
        raise CheckpointError('%s: truncated header' % path)
    magic, version, digest, length = _HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError('%s: not a network checkpoint' % path)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError('%s: unsupported version %d' % (path, version))
    spec_bytes = data[_HEADER.size:_HEADER.size + length]
    if hashlib.sha256(spec_bytes).digest() != digest:
        raise CheckpointError('%s: spec digest mismatch' % path)
    spec = json.loads(spec_bytes.decode('utf-8'))
    net = Network([layer_from_spec(s) for s in spec['layers']],
                  spec['input_shape'],
                  meta=spec.get('meta'))
    if (len(data) - _HEADER.size - length) % 8:
        raise CheckpointError('%s: parameter blob is not a whole number '
                              'of float64 values' % path)
    blob = numpy.frombuffer(data, dtype='<f8', offset=_HEADER.size + length)
    if blob.size != net.n_params:
        raise CheckpointError('%s: %d parameters stored, %d expected' %
                              (path, blob.size, net.n_params))
    values, offset = [], 0
    for _, _, p in net.parameters():
        values.append(blob[offset:offset + p.size].reshape(p.shape))
        offset += p.size
    net.set_params(values)
    net.zero_grad()
    return net
