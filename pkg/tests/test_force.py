# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Force reconstruction models."""
import numpy
import pytest

from make_test_ref import SEED, small_scene
from tactev import force
from tactev.exceptions import (ConfigError, FitError, InvalidInputError,
                               ShapeError)
from tactev.gelsim import simulate

K = numpy.array([[1.6, 0.2], [-0.1, 1.4]])
BIAS = numpy.array([0.05, -0.02])


def linear_trajectory(name, n=50, n_dots=6, seed=SEED):
    rng = numpy.random.default_rng(seed)
    disp = rng.normal(scale=2.0, size=(n, n_dots, 2))
    f = disp.sum(axis=1) @ K.T + BIAS
    return force.ForceTrajectory(name, disp, f)


@pytest.fixture
def trajectories():
    return [linear_trajectory('t%d' % k, seed=SEED + k) for k in range(5)]


def test_linear_recovers_coefficients(trajectories):
    model = force.fit_linear(trajectories)
    assert numpy.linalg.norm(model.coef_ - K) / numpy.linalg.norm(K) < 1e-9
    assert numpy.allclose(model.intercept_, BIAS)


def test_linear_without_intercept():
    traj = linear_trajectory('t')
    traj.force = traj.force - BIAS
    model = force.LinearForceModel(fit_intercept=False).fit(
        traj.displacement, traj.force)
    assert numpy.allclose(model.coef_, K)
    assert numpy.array_equal(model.intercept_, numpy.zeros(2))


def test_linear_needs_two_samples():
    traj = linear_trajectory('t', n=1)
    with pytest.raises(FitError):
        force.LinearForceModel().fit(traj.displacement, traj.force)


def pure_x_shear(n=20, n_dots=4, seed=SEED):
    rng = numpy.random.default_rng(seed)
    disp = numpy.zeros((n, n_dots, 2))
    disp[:, :, 0] = rng.normal(size=(n, n_dots))
    return disp


def test_rank_deficient_consistent():
    disp = pure_x_shear()
    f = numpy.outer(disp[:, :, 0].sum(axis=1), K[:, 0]) + BIAS
    model = force.LinearForceModel().fit(disp, f)
    assert numpy.allclose(model.predict(disp), f)


def test_rank_deficient_inconsistent():
    disp = pure_x_shear()
    f = numpy.random.default_rng(SEED).normal(size=(len(disp), 2))
    with pytest.raises(FitError):
        force.LinearForceModel().fit(disp, f)


def test_predict_checks():
    traj = linear_trajectory('t')
    model = force.LinearForceModel()
    with pytest.raises(InvalidInputError):
        model.predict(traj.displacement)
    model.fit(traj.displacement, traj.force)
    with pytest.raises(ShapeError):
        model.predict(numpy.zeros((3, 5, 2)))


def test_fit_checks_forces():
    traj = linear_trajectory('t')
    with pytest.raises(ShapeError):
        force.LinearForceModel().fit(traj.displacement, traj.force[:-1])
    bad = traj.force.copy()
    bad[0, 0] = numpy.nan
    with pytest.raises(InvalidInputError):
        force.LinearForceModel().fit(traj.displacement, bad)


@pytest.mark.parametrize('name, kind', [
    ('linear', force.LinearForceModel),
    ('nn', force.NetworkForceModel),
    ('LinearForceModel', force.LinearForceModel),
])
def test_check_model(name, kind):
    assert isinstance(force.check_model(name), kind)


@pytest.mark.parametrize('model', ['ridge', object()])
def test_check_model_rejects(model):
    with pytest.raises(ConfigError):
        force.check_model(model)


def test_evaluate(trajectories):
    model = force.fit_linear(trajectories[:3])
    ev = force.evaluate(model, trajectories[4])
    assert ev.mae.shape == (2, )
    assert numpy.all(ev.mae < 1e-9)
    frame = ev.to_frame()
    assert list(frame.columns) == [
        'trajectory', 'sample', 'fx', 'fy', 'fx_pred', 'fy_pred'
    ]
    assert len(frame) == len(trajectories[4])


def test_shuffled_control_is_worse(trajectories):
    train, _, evaluation = force.ForceDataset(trajectories).split()
    model = force.fit_linear(train)
    control = force.shuffled_control(model, train, evaluation[0], seed=SEED)
    fitted = force.evaluate(model, evaluation[0])
    assert numpy.all(control.mae > 10 * fitted.mae + 0.1)


def test_dataset_split(trajectories):
    train, test, evaluation = force.ForceDataset(trajectories).split()
    assert [t.name for t in train] == ['t0', 't1', 't2']
    assert [t.name for t in test] == ['t3']
    assert [t.name for t in evaluation] == ['t4']
    with pytest.raises(InvalidInputError):
        force.ForceDataset(trajectories[:2]).split()


def test_dataset_frame(trajectories):
    data = force.ForceDataset(trajectories)
    frame = data.to_frame()
    assert len(frame) == 5 * 50
    back = force.ForceDataset.from_frame(frame)
    assert [t.name for t in back] == [t.name for t in data]
    for a, b in zip(back, data):
        assert numpy.array_equal(a.displacement, b.displacement)
        assert numpy.array_equal(a.force, b.force)


def test_dataset_frame_needs_columns(trajectories):
    frame = force.ForceDataset(trajectories).to_frame().drop(columns='fx')
    with pytest.raises(InvalidInputError):
        force.ForceDataset.from_frame(frame)


def test_dataset_dot_counts_must_agree():
    with pytest.raises(ShapeError):
        force.ForceDataset(
            [linear_trajectory('a'),
             linear_trajectory('b', n_dots=3)])


def test_dataset_from_truth():
    _, truth = simulate(small_scene())
    data = force.ForceDataset.from_truth([truth], names=['small'],
                                         n_samples=10)
    traj = data[0]
    assert traj.name == 'small'
    assert traj.displacement.shape == (10, 9, 2)
    assert numpy.allclose(traj.force[-1], [4.5, 0.0])


def test_linear_save_load(trajectories, tmp_path):
    model = force.fit_linear(trajectories)
    path = str(tmp_path / 'linear.json')
    force.save_model(model, path)
    loaded = force.load_model(path)
    assert isinstance(loaded, force.LinearForceModel)
    x = trajectories[0].displacement
    assert numpy.array_equal(loaded.predict(x), model.predict(x))


@pytest.fixture
def network_model(trajectories):
    return force.fit_network(trajectories[:4],
                             hidden=(8, 8),
                             epochs=5,
                             seed=SEED)


def test_network_training(network_model):
    assert len(network_model.loss_curve_) == 5
    assert 1 <= network_model.best_epoch_ <= 5
    assert network_model.network_.n_params == (12 * 8 + 8) + (8 * 8 + 8) + (
        8 * 2 + 2)


def test_network_save_load(network_model, trajectories, tmp_path):
    path = str(tmp_path / 'network.tnn')
    force.save_model(network_model, path)
    loaded = force.load_model(path)
    assert isinstance(loaded, force.NetworkForceModel)
    assert loaded.best_epoch_ == network_model.best_epoch_
    x = trajectories[4].displacement
    assert numpy.array_equal(loaded.predict(x), network_model.predict(x))


def test_load_missing_model(tmp_path):
    with pytest.raises(InvalidInputError):
        force.load_model(str(tmp_path / 'missing.json'))


def test_load_unknown_model(tmp_path):
    path = tmp_path / 'other.json'
    path.write_text('{"kind": "Ridge"}')
    with pytest.raises(ConfigError):
        force.load_model(str(path))


@pytest.mark.parametrize('model, params', [
    (force.LinearForceModel(), {
        'fit_intercept': True,
        'rcond': 1e-10
    }),
    (force.NetworkForceModel(hidden=(8, 8), epochs=5), {
        'hidden': (8, 8),
        'dropout': 0.25,
        'epochs': 5,
        'lr': 0.01,
        'batch_size': 32,
        'seed': 0
    }),
])
def test_model_params(model, params):
    assert model.get_params() == params
    name = type(model).__name__
    assert repr(model).startswith(name + '(')
    for key in params:
        assert key + '=' in repr(model)


def test_set_params():
    model = force.LinearForceModel()
    assert model.set_params(fit_intercept=False) is model
    assert model.get_params()['fit_intercept'] is False
    traj = linear_trajectory('t')
    model.fit(traj.displacement, traj.force - BIAS)
    assert numpy.array_equal(model.intercept_, numpy.zeros(2))
    network = force.NetworkForceModel().set_params(epochs=3, seed=SEED)
    assert (network.epochs, network.seed) == (3, SEED)
    with pytest.raises(InvalidInputError):
        model.set_params(alpha=1.0)
