# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Shear-force reconstruction from dot displacements.

Two models share the estimator protocol of `tactev.base`:

* `LinearForceModel`: least-squares map from the summed displacement
  (sum dx, sum dy) of all dots to (F_x, F_y), with a bias.
* `NetworkForceModel`: standardised displacement vector of every dot
  (2 * n_dots inputs) through two 128-unit ReLU layers with dropout 0.25.

Trajectories are split as 3 training, 1 test (network model selection) and
1 evaluation trajectory.
"""
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy
import pandas
import scipy.linalg

from tactev import nnkit, package_setup
from tactev.base import BaseEstimator
from tactev.data import atomic_write
from tactev.exceptions import (ConfigError, FitError, InvalidInputError,
                               ShapeError, TrainingError)

logger = logging.getLogger(__name__)

__all__ = [
    'ForceTrajectory',
    'ForceDataset',
    'ForceModel',
    'LinearForceModel',
    'NetworkForceModel',
    'ForceEvaluation',
    'build_force_network',
    'fit_linear',
    'fit_network',
    'evaluate',
    'shuffled_control',
    'save_model',
    'load_model',
]

N_SAMPLES = 200


@dataclass
class ForceTrajectory:
    """Displacements and forces of one trajectory.

    Attributes
    ----------
    name : str
    displacement : ndarray, shape (n, n_dots, 2)
    force : ndarray, shape (n, 2)
        (F_x, F_y) in N.
    """
    name: str
    displacement: numpy.ndarray
    force: numpy.ndarray

    def __post_init__(self):
        self.displacement = numpy.asarray(self.displacement,
                                          dtype=numpy.float64)
        self.force = numpy.asarray(self.force, dtype=numpy.float64)
        if self.displacement.ndim != 3 or self.displacement.shape[2] != 2:
            raise ShapeError('displacement must be (n, n_dots, 2), got %r' %
                             (self.displacement.shape, ))
        if self.force.shape != (len(self.displacement), 2):
            raise ShapeError('force must be (%d, 2), got %r' %
                             (len(self.displacement), self.force.shape))
        if not numpy.all(numpy.isfinite(self.force)):
            raise InvalidInputError('%s: forces must be finite' % self.name)

    def __len__(self):
        return len(self.force)

    @property
    def n_dots(self):
        return self.displacement.shape[1]

    @property
    def inputs(self):
        """(n, 2 * n_dots) array, (dx, dy) of each dot in turn."""
        return self.displacement.reshape(len(self), -1)


class ForceDataset:
    """An ordered collection of force trajectories."""

    def __init__(self, trajectories):
        self.trajectories = list(trajectories)
        if not self.trajectories:
            raise InvalidInputError('empty force dataset')
        n_dots = {t.n_dots for t in self.trajectories}
        if len(n_dots) > 1:
            raise ShapeError('trajectories have different dot counts %r' %
                             sorted(n_dots))

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, index):
        return self.trajectories[index]

    @property
    def n_dots(self):
        return self.trajectories[0].n_dots

    @classmethod
    def from_truth(cls, truths, names=None, n_samples=N_SAMPLES,
                   displacements=None):
        """Dataset from simulator ground truth.

        Parameters
        ----------
        truths : sequence of GroundTruth
        names : sequence of str, optional
        n_samples : int
            Evenly spaced datapoints kept per trajectory.
        displacements : sequence of ndarray, optional
            Tracked displacements (n_ticks, n_dots, 2) to use instead of
            the true ones.
        """
        truths = list(truths)
        names = list(names) if names else [
            'trajectory-%d' % k for k in range(len(truths))
        ]
        out = []
        for k, truth in enumerate(truths):
            disp = (truth.displacements
                    if displacements is None else displacements[k])
            index = numpy.linspace(0, truth.n_ticks - 1,
                                   min(n_samples, truth.n_ticks)).astype(int)
            out.append(
                ForceTrajectory(names[k], disp[index], truth.force[index]))
        return cls(out)

    def split(self):
        """(train, test, evaluation) lists of trajectories.

        The last trajectory is held out for evaluation and the one before
        it is the test trajectory used for model selection.
        """
        if len(self) < 3:
            raise InvalidInputError('need at least 3 trajectories to split '
                                    '(got %d)' % len(self))
        return self.trajectories[:-2], [self.trajectories[-2]
                                        ], [self.trajectories[-1]]

    def to_frame(self):
        """Wide DataFrame: trajectory, sample, fx, fy, dx_k, dy_k."""
        frames = []
        for traj in self:
            data = {
                'trajectory': traj.name,
                'sample': numpy.arange(len(traj)),
                'fx': traj.force[:, 0],
                'fy': traj.force[:, 1],
            }
            for k in range(traj.n_dots):
                data['dx_%d' % k] = traj.displacement[:, k, 0]
                data['dy_%d' % k] = traj.displacement[:, k, 1]
            frames.append(pandas.DataFrame(data))
        return pandas.concat(frames, ignore_index=True)

    @classmethod
    def from_frame(cls, frame):
        """Inverse of to_frame.

        Raises
        ------
        InvalidInputError
            Missing columns.
        """
        missing = {'trajectory', 'fx', 'fy'} - set(frame.columns)
        n_dots = sum(1 for c in frame.columns if c.startswith('dx_'))
        if missing or n_dots == 0:
            raise InvalidInputError(
                'force data needs trajectory, fx, fy, dx_k, dy_k columns '
                '(missing %s)' % (sorted(missing) or ['dx_k']))
        dx = ['dx_%d' % k for k in range(n_dots)]
        dy = ['dy_%d' % k for k in range(n_dots)]
        if not set(dy) <= set(frame.columns):
            raise InvalidInputError('force data has dx_k without dy_k')
        out = []
        for name, group in frame.groupby('trajectory', sort=False):
            disp = numpy.stack([group[dx].to_numpy(), group[dy].to_numpy()],
                               axis=2)
            out.append(
                ForceTrajectory(str(name), disp,
                                group[['fx', 'fy']].to_numpy()))
        return cls(out)


def _stack(trajectories):
    trajectories = list(trajectories)
    if not trajectories:
        raise InvalidInputError('no trajectories')
    x = numpy.concatenate([t.inputs for t in trajectories])
    f = numpy.concatenate([t.force for t in trajectories])
    return x, f


def check_input(fit_function):
    """Check fit input args."""

    def wrapper(obj, x, f, *args, **kwargs):
        x = obj.check_x(x)
        f = numpy.asarray(f, dtype=numpy.float64)
        if f.shape != (len(x), 2):
            raise ShapeError('forces must be (%d, 2), got %r' %
                             (len(x), f.shape))
        if not numpy.all(numpy.isfinite(f)):
            raise InvalidInputError('forces must be finite')
        return fit_function(obj, x, f, *args, **kwargs)

    return wrapper


class ForceModel(BaseEstimator, ABC):
    """Base class for force models.

    Attributes
    ----------
    n_features_in_ : int
        2 * n_dots of the training data.
    """

    def __init__(self):
        self.n_features_in_ = None

    @staticmethod
    def check_x(x):
        x = numpy.asarray(x, dtype=numpy.float64)
        if x.ndim == 3:
            x = x.reshape(len(x), -1)
        if x.ndim != 2 or x.shape[1] % 2:
            raise ShapeError('inputs must be (n, n_dots, 2) or (n, 2 * n_dots)'
                             ', got %r' % (x.shape, ))
        if not numpy.all(numpy.isfinite(x)):
            raise InvalidInputError('displacements must be finite')
        return x

    def _check_fitted(self, x):
        if self.n_features_in_ is None:
            raise InvalidInputError('%s is not fitted' % type(self).__name__)
        x = self.check_x(x)
        if x.shape[1] != self.n_features_in_:
            raise ShapeError('%s expects %d inputs per sample, got %d' %
                             (type(self).__name__, self.n_features_in_,
                              x.shape[1]))
        return x

    @abstractmethod
    def fit(self, x, f):
        """Fit the model to inputs x and forces f."""

    @abstractmethod
    def predict(self, x):
        """(n, 2) predicted forces."""

    @abstractmethod
    def to_dict(self):
        """JSON-serialisable state (without network weights)."""


class LinearForceModel(ForceModel):
    """F = coef_ @ (sum dx, sum dy) + intercept_.

    Parameters
    ----------
    fit_intercept : bool
    rcond : float
        Relative singular-value cutoff for the rank of the design.

    Attributes
    ----------
    coef_ : ndarray, shape (2, 2)
    intercept_ : ndarray, shape (2,)
    """

    def __init__(self, fit_intercept=True, rcond=1e-10):
        super().__init__()
        self.fit_intercept = fit_intercept
        self.rcond = rcond
        self.coef_ = None
        self.intercept_ = None

    @staticmethod
    def design(x):
        """Summed displacement (n, 2) of (n, 2 * n_dots) inputs."""
        return x.reshape(len(x), -1, 2).sum(axis=1)

    @check_input
    def fit(self, x, f):
        """Ordinary least squares.

        Raises
        ------
        FitError
            Fewer than 2 samples, or a rank-deficient design whose
            minimum-norm solution does not reproduce the forces.
        """
        if len(x) < 2:
            raise FitError('need at least 2 samples (got %d)' % len(x))
        a = self.design(x)
        if self.fit_intercept:
            a = numpy.hstack([a, numpy.ones((len(a), 1))])
        sol, _, rank, _ = scipy.linalg.lstsq(a, f, cond=self.rcond)
        if rank < a.shape[1]:
            residual = numpy.abs(a @ sol - f).max()
            if residual > 1e-9 * max(1.0, numpy.abs(f).max()):
                raise FitError('rank-deficient design (rank %d of %d)' %
                               (rank, a.shape[1]))
            logger.warning('rank-deficient design (rank %d of %d), using the '
                           'minimum-norm solution', rank, a.shape[1])
        self.coef_ = sol[:2].T.copy()
        self.intercept_ = (sol[2].copy()
                           if self.fit_intercept else numpy.zeros(2))
        self.n_features_in_ = x.shape[1]
        logger.debug('linear force model: coef %r, intercept %r',
                     self.coef_.tolist(), self.intercept_.tolist())
        return self

    def predict(self, x):
        x = self._check_fitted(x)
        return self.design(x) @ self.coef_.T + self.intercept_

    def to_dict(self):
        return {
            'kind': type(self).__name__,
            'params': self.get_params(),
            'coef': self.coef_.tolist(),
            'intercept': self.intercept_.tolist(),
            'n_features_in': self.n_features_in_,
        }

    @classmethod
    def from_dict(cls, data):
        model = cls(**data.get('params', {}))
        model.coef_ = numpy.array(data['coef'], dtype=numpy.float64)
        model.intercept_ = numpy.array(data['intercept'], dtype=numpy.float64)
        model.n_features_in_ = int(data['n_features_in'])
        return model


def build_force_network(n_inputs, hidden=(128, 128), dropout=0.25, seed=0):
    """Dense ReLU network n_inputs -> hidden... -> 2 with dropout."""
    layers = []
    width = n_inputs
    for size in hidden:
        layers += [nnkit.Dense(width, size), nnkit.ReLU()]
        if dropout:
            layers.append(nnkit.Dropout(dropout))
        width = size
    layers.append(nnkit.Dense(width, 2))
    return nnkit.Network(layers, (n_inputs, ), seed=seed)


class NetworkForceModel(ForceModel):
    """Two-hidden-layer network on standardised displacements.

    Parameters
    ----------
    hidden : tuple of int
    dropout : float
    epochs : int
    lr : float
        SGD learning rate.
    batch_size : int
    seed : int

    Attributes
    ----------
    network_ : Network
    best_epoch_ : int
        Epoch with the lowest test loss (1-based).
    loss_curve_ : list of (train loss, test loss)
    """

    def __init__(self,
                 hidden=(128, 128),
                 dropout=0.25,
                 epochs=50,
                 lr=0.01,
                 batch_size=32,
                 seed=0):
        super().__init__()
        self.hidden = hidden
        self.dropout = dropout
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.network_ = None
        self.x_mean_ = self.x_scale_ = None
        self.f_mean_ = self.f_scale_ = None
        self.best_epoch_ = None
        self.loss_curve_ = []

    def _x(self, x):
        return (x - self.x_mean_) / self.x_scale_

    def _f(self, f):
        scale = numpy.where(self.f_scale_ > 0, self.f_scale_, 1.0)
        return (f - self.f_mean_) / scale

    @check_input
    def fit(self, x, f, x_test=None, f_test=None):
        """Train with SGD on the MSE loss, keeping the parameters of the
        epoch with the lowest test loss (training loss if no test set).

        Raises
        ------
        TrainingError
            If the loss or a gradient becomes non-finite.
        """
        rng = numpy.random.default_rng(self.seed)
        self.x_mean_ = x.mean(axis=0)
        std = x.std(axis=0)
        self.x_scale_ = numpy.where(std > 0, std, 1.0)
        self.f_mean_ = f.mean(axis=0)
        self.f_scale_ = f.std(axis=0)
        self.n_features_in_ = x.shape[1]
        if x_test is None:
            x_test, f_test = x, f
        x_test = self._check_fitted(x_test)
        xs, fs = self._x(x), self._f(f)
        xt, ft = self._x(x_test), self._f(numpy.asarray(f_test))

        net = build_force_network(x.shape[1], tuple(self.hidden),
                                  self.dropout, seed=self.seed)
        loss = nnkit.MSELoss()
        best, best_loss = net.copy_params(), numpy.inf
        self.loss_curve_ = []
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(xs))
            net.training = True
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                batch = order[start:start + self.batch_size]
                value, grads = nnkit.backward(net, xs[batch], fs[batch], loss)
                if not numpy.isfinite(value):
                    raise TrainingError('non-finite loss at epoch %d' % epoch)
                nnkit.sgd_step(net, grads, self.lr)
                total += value * len(batch)
            net.training = False
            test_loss = loss(nnkit.forward(net, xt), ft)
            self.loss_curve_.append((total / len(xs), test_loss))
            if test_loss < best_loss:
                best, best_loss = net.copy_params(), test_loss
                self.best_epoch_ = epoch
            logger.debug('epoch %d: train %.5f test %.5f', epoch,
                         total / len(xs), test_loss)
        net.set_params(best)
        self.network_ = net
        logger.info('force network: best test loss %.5f at epoch %s',
                    best_loss, self.best_epoch_)
        return self

    def predict(self, x):
        x = self._check_fitted(x)
        out = nnkit.forward(self.network_, self._x(x))
        return self.f_mean_ + out * self.f_scale_

    def to_dict(self):
        params = self.get_params()
        params['hidden'] = list(params['hidden'])
        return {
            'kind': type(self).__name__,
            'params': params,
            'x_mean': self.x_mean_.tolist(),
            'x_scale': self.x_scale_.tolist(),
            'f_mean': self.f_mean_.tolist(),
            'f_scale': self.f_scale_.tolist(),
            'best_epoch': self.best_epoch_,
            'n_features_in': self.n_features_in_,
        }

    @classmethod
    def from_dict(cls, data, network):
        params = dict(data.get('params', {}))
        params['hidden'] = tuple(params.get('hidden', (128, 128)))
        model = cls(**params)
        for key in ('x_mean', 'x_scale', 'f_mean', 'f_scale'):
            setattr(model, key + '_', numpy.array(data[key]))
        model.best_epoch_ = data.get('best_epoch')
        model.n_features_in_ = int(data['n_features_in'])
        model.network_ = network
        return model


force_models = package_setup.subclasses(ForceModel)


def check_model(model):
    """Model instance from an instance or a registered name."""
    if isinstance(model, str):
        aliases = {'linear': 'LinearForceModel', 'nn': 'NetworkForceModel'}
        name = aliases.get(model, model)
        try:
            return force_models[name]()
        except KeyError:
            raise ConfigError('%s is not a valid force model' % model)
    if not isinstance(model, ForceModel):
        raise ConfigError('%r is not a force model' % (model, ))
    return model


def fit_linear(trajectories, **params):
    """LinearForceModel fitted on the concatenated trajectories."""
    x, f = _stack(trajectories)
    return LinearForceModel(**params).fit(x, f)


def fit_network(train, test=None, **params):
    """NetworkForceModel trained on `train`, selected on `test`.

    If `test` is None the last training trajectory is held out as test
    trajectory (3 train / 1 test out of 4).
    """
    train = list(train)
    if test is None:
        if len(train) < 2:
            raise InvalidInputError('need 2 or more trajectories to hold one '
                                    'out for testing')
        train, test = train[:-1], train[-1:]
    x, f = _stack(train)
    x_test, f_test = _stack(test)
    return NetworkForceModel(**params).fit(x, f, x_test, f_test)


@dataclass
class ForceEvaluation:
    """MAE per axis and the prediction trace of one trajectory."""
    name: str
    mae: numpy.ndarray
    force: numpy.ndarray
    predicted: numpy.ndarray

    def to_frame(self):
        return pandas.DataFrame({
            'trajectory': self.name,
            'sample': numpy.arange(len(self.force)),
            'fx': self.force[:, 0],
            'fy': self.force[:, 1],
            'fx_pred': self.predicted[:, 0],
            'fy_pred': self.predicted[:, 1],
        })


def evaluate(model, trajectory):
    """Mean absolute error per axis on one trajectory.

    Raises
    ------
    ShapeError
        If the trajectory's dot count does not match the model.
    """
    predicted = model.predict(trajectory.inputs)
    mae = numpy.abs(predicted - trajectory.force).mean(axis=0)
    logger.info('%s on %s: MAE (%.4f, %.4f) N',
                type(model).__name__, trajectory.name, mae[0], mae[1])
    return ForceEvaluation(trajectory.name, mae, trajectory.force, predicted)


def shuffled_control(model, train, evaluation, seed=0):
    """Evaluation of `model` refitted on training forces shuffled across
    samples; a sanity baseline for the fitted error."""
    rng = numpy.random.default_rng(seed)
    x, f = _stack(train)
    clone = type(model)(**model.get_params())
    clone.fit(x, f[rng.permutation(len(f))])
    return evaluate(clone, evaluation)


def save_model(model, path):
    """Linear models are JSON documents, network models nnkit checkpoints
    with the standardisation in the checkpoint metadata."""
    if isinstance(model, NetworkForceModel):
        model.network_.meta = {'force_model': model.to_dict()}
        nnkit.save_checkpoint(model.network_, path)
    else:
        with atomic_write(path) as fp:
            json.dump(model.to_dict(), fp, indent=1)


def load_model(path):
    """Force model saved by save_model."""
    try:
        with open(path, 'rb') as fp:
            head = fp.read(len(nnkit.CHECKPOINT_MAGIC))
    except FileNotFoundError:
        raise InvalidInputError('no such file: %s' % path)
    if head == nnkit.CHECKPOINT_MAGIC:
        net = nnkit.load_checkpoint(path)
        try:
            data = net.meta['force_model']
        except KeyError:
            raise ConfigError('%s is not a force-model checkpoint' % path)
        return NetworkForceModel.from_dict(data, net)
    with open(path) as fp:
        try:
            data = json.load(fp)
        except ValueError as err:
            raise ConfigError('%s: %s' % (path, err))
    if data.get('kind') != 'LinearForceModel':
        raise ConfigError('%s: unknown force model %r' %
                          (path, data.get('kind')))
    return LinearForceModel.from_dict(data)
