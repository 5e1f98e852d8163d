# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Slip models: configurations, training samples, evaluation, streaming."""
import inspect
import threading

import numpy
import pandas
import pytest

from make_test_ref import SEED, small_scene
from tactev import slipeval, slipnet
from tactev.exceptions import (ConfigError, InvalidInputError, TactevError,
                               TrainingError)
from tactev.features import FeatureSeries
from tactev.gelsim import simulate
from tactev.tracker import DotGrid, track

N_DOTS = 56


def dummy_series(n, n_dots=N_DOTS, seed=SEED):
    rng = numpy.random.default_rng(seed)
    n_events = numpy.where(numpy.arange(n) % 2 == 0, 30, 0)
    return FeatureSeries(t_i=(numpy.arange(n) + 1) * 1000,
                         n_events=n_events,
                         counts=rng.poisson(3.0, size=(n, n_dots)).astype(
                             numpy.float64),
                         displacement=rng.random((n, n_dots)),
                         displacement_xy=rng.random((n, n_dots, 2)))


def dummy_trajectory(name, first_slip, n=100, object_id='cup', seed=SEED):
    labels = numpy.zeros(n, dtype=bool)
    if first_slip is not None:
        labels[first_slip:] = True
    return slipnet.LabeledTrajectory(name, object_id,
                                     dummy_series(n, seed=seed), labels,
                                     first_slip)


@pytest.mark.parametrize('name, l_i, cut_ms', [
    ('no hist', 2, 15),
    ('hist 10', 20, 15),
    ('events only hist 10', 10, 15),
    ('disp only hist 10', 10, 15),
    ('hist 20', 40, 20),
    ('hist 50 down 5', 20, 50),
    ('fast slow hist 50', 30, 50),
    ('baseline image hist 10', 0, 15),
])
def test_model_table(name, l_i, cut_ms):
    cfg = slipnet.slip_config(name)
    assert cfg.l_i == l_i
    assert cfg.cut_ms == cut_ms


@pytest.mark.parametrize('kwargs', [
    dict(name='hist 30'),
    dict(name='hist 10', shift_ms=5),
    dict(name='hist 10', threshold=0.51),
    dict(name='hist 10', threshold=1.5),
])
def test_slip_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        slipnet.slip_config(**kwargs)


def test_prediction_label():
    assert slipnet.slip_config('hist 20', shift_ms=10).label == (
        'hist 20 pred 10')


@pytest.mark.parametrize('name', ['no hist', 'hist 20', 'fast slow hist 50'])
def test_build_model_shapes(name):
    cfg = slipnet.slip_config(name)
    net = slipnet.build_model(cfg, seed=SEED)
    assert net.input_shape == (N_DOTS, cfg.l_i)
    assert net.output_shape == (1, )
    p = net.forward(numpy.zeros((2, N_DOTS, cfg.l_i)))
    assert numpy.all((p > 0) & (p < 1))


def test_baseline_model_shape():
    net = slipnet.build_model('baseline image hist 10', seed=SEED)
    assert net.input_shape == (1, 385, 440)
    assert net.output_shape == (1, )


def test_rotate_square_lattice():
    a = numpy.arange(9).reshape(3, 3)
    assert numpy.array_equal(slipnet.rotate_lattice(a, 1), numpy.rot90(a))
    assert numpy.array_equal(slipnet.rotate_lattice(a, 4), a)


def test_rotate_rectangular_lattice():
    a = numpy.array([[1, 2, 3], [4, 5, 6]])
    assert numpy.array_equal(slipnet.rotate_lattice(a, 1),
                             [[3, 6, 0], [2, 5, 0]])
    assert numpy.array_equal(slipnet.rotate_lattice(a, 2), a[::-1, ::-1])


def test_rotate_features_matches_lattice():
    rng = numpy.random.default_rng(SEED)
    x = rng.random((N_DOTS, 3))
    cells = list(range(N_DOTS))
    rotated = slipnet.rotate_features(x, 2, cells)
    grid = x.T.reshape(3, 7, 8)
    expected = grid[:, ::-1, ::-1].reshape(3, -1).T
    assert numpy.array_equal(rotated, expected)


def test_shift_labels():
    labels = numpy.zeros(600, dtype=bool)
    labels[500:] = True
    shifted = slipnet.shift_labels(labels, 10)
    assert numpy.flatnonzero(shifted)[0] == 490
    assert shifted[-10:].all()
    assert numpy.array_equal(slipnet.shift_labels(labels, 0), labels)


def test_shift_labels_repeats_tail():
    assert slipnet.shift_labels([0, 0, 1, 1, 0], 2).tolist() == [
        True, True, False, False, False
    ]
    assert slipnet.shift_labels([0, 0, 0, 1], 2).tolist() == [
        False, True, True, True
    ]


def test_cut_tick():
    traj = dummy_trajectory('a', 60)
    assert slipnet.cut_tick(traj, 15) == 76
    assert slipnet.cut_tick(traj, 15, shift_ms=10) == 66
    assert slipnet.cut_tick(traj, 50) == 100
    assert slipnet.cut_tick(dummy_trajectory('b', None), 15) == 100


def test_build_pools():
    pools = slipnet.build_pools([dummy_trajectory('a', 60)], 'no hist')
    assert pools.sizes == (16, 30, 30)
    assert (pools.slip[:, 2] == 1).all()
    assert (pools.above[:, 1] % 2 == 0).all()
    assert (pools.below[:, 1] % 2 == 1).all()


def test_build_pools_with_history():
    # 'hist 20' reads ticks 0..19 for its first sample, cut 20 ms after slip
    pools = slipnet.build_pools([dummy_trajectory('a', 60)], 'hist 20')
    assert pools.sizes == (21, 20, 21)


def test_unlabeled_trajectory():
    traj = dummy_trajectory('a', 60)
    traj.labels = numpy.zeros(0, dtype=bool)
    with pytest.raises(InvalidInputError):
        slipnet.build_pools([traj], 'no hist')


def test_labels_must_match_series():
    with pytest.raises(InvalidInputError):
        slipnet.LabeledTrajectory('a', None, dummy_series(10),
                                  numpy.zeros(9), None)


@pytest.fixture
def training_set():
    return [
        dummy_trajectory('a', 60, seed=SEED),
        dummy_trajectory('b', 40, seed=SEED + 1),
        dummy_trajectory('c', None, seed=SEED + 2),
    ]


@pytest.mark.slow
def test_train_and_select(training_set, tmp_path):
    model = slipnet.SlipModel('no hist', seed=SEED)
    cfg = slipnet.TrainConfig(epochs=3, checkpoint_every=1, seed=SEED)
    checkpoints = slipnet.train(model, training_set, cfg,
                                checkpoint_dir=str(tmp_path))
    assert [c.epoch for c in checkpoints] == [1, 2, 3]
    assert len(list(tmp_path.iterdir())) == 3
    ckpt, threshold, table = slipeval.select_threshold(
        model, checkpoints, training_set)
    assert threshold in slipeval.THRESHOLDS
    assert model.threshold == threshold
    assert len(table) == 3 * 41
    # ties: lowest threshold first, then the earliest checkpoint
    top = table[table['score'] == table['score'].max()]
    top = top[top['threshold'] == top['threshold'].min()]
    assert top['epoch'].iloc[0] == ckpt.epoch
    assert top['threshold'].iloc[0] == threshold
    # selection scores the same per-tick probabilities as evaluation
    assert slipeval.evaluate(model, training_set).score == table['score'].max()


def test_select_threshold_batch_matches_evaluate():
    assert inspect.signature(slipeval.select_threshold).parameters[
        'batch_size'].default == inspect.signature(
            slipeval.evaluate).parameters['batch_size'].default == 1


def test_train_needs_slip_samples(training_set):
    model = slipnet.SlipModel('no hist', seed=SEED)
    with pytest.raises(TrainingError):
        slipnet.train(model, training_set[2:],
                      slipnet.TrainConfig(epochs=1))


def test_model_save_load(training_set, tmp_path):
    model = slipnet.SlipModel(slipnet.slip_config('hist 10', shift_ms=10),
                              seed=SEED,
                              threshold=0.3)
    path = str(tmp_path / 'slip.tnnk')
    model.save(path)
    loaded = slipnet.SlipModel.load(path)
    assert loaded.config == model.config
    assert loaded.threshold == 0.3
    traj = training_set[0]
    assert numpy.array_equal(loaded.predict_proba(traj),
                             model.predict_proba(traj))


def test_predict_proba_zero_before_history(training_set):
    model = slipnet.SlipModel('hist 20', seed=SEED)
    proba = model.predict_proba(training_set[0], batch_size=None)
    assert not proba[:19].any()
    assert numpy.all(proba[19:] > 0)
    assert numpy.allclose(proba, model.predict_proba(training_set[0]))


@pytest.mark.parametrize('counts, expected', [
    ((0, 0, 0), (1.0, 1.0, 1.0)),
    ((3, 1, 2), (0.75, 0.6, 2 / 3)),
    ((0, 2, 0), (0.0, 0.0, 0.0)),
    ((0, 0, 4), (0.0, 0.0, 0.0)),
])
def test_f1_score(counts, expected):
    assert numpy.allclose(slipeval.f1_score(*counts), expected)


@pytest.mark.parametrize('t_m, expected', [
    (450, slipeval.CORRECT),
    (449, slipeval.TOO_EARLY),
    (520, slipeval.CORRECT),
    (521, slipeval.TOO_LATE),
    (None, slipeval.TOO_LATE),
])
def test_timing_class(t_m, expected):
    assert slipeval.timing_class(t_m, 500) == expected


class FixedModel:
    """Stand-in model with stored probabilities."""

    def __init__(self, probas):
        self.probas = probas
        self.config = slipnet.slip_config('no hist')
        self.threshold = 0.5

    def predict_proba(self, trajectory, batch_size=1):
        return self.probas[trajectory.name]


@pytest.fixture
def report():
    trajectories = [
        dummy_trajectory('early', 100, n=200),
        dummy_trajectory('hold', None, n=200),
        dummy_trajectory('missed', 100, n=200, object_id='jar'),
    ]
    early = numpy.zeros(200)
    early[90:] = 0.9
    model = FixedModel({
        'early': early,
        'hold': numpy.zeros(200),
        'missed': numpy.zeros(200)
    })
    return slipeval.evaluate(model, trajectories)


def test_report_rows(report):
    rows = report.rows.set_index('trajectory')
    assert rows.loc['early', 'timing'] == slipeval.CORRECT
    assert rows.loc['early', 'delta_ms'] == -10
    assert rows.loc['missed', 'timing'] == slipeval.TOO_LATE
    assert rows.loc['missed', 'first_detection'] == -1
    assert pandas.isna(rows.loc['hold', 'timing'])
    assert (rows.loc['early', 'tp'], rows.loc['early', 'fp'],
            rows.loc['early', 'fn']) == (21, 10, 0)
    assert report.flags['early'].sum() == 110


def test_report_summary(report):
    assert report.counts() == (21, 10, 21)
    summary = report.summary()
    assert summary['correct'] == 1
    assert summary['too_late'] == 1
    assert summary['too_early'] == 0
    assert summary['threshold'] == 0.5
    precision, recall = 21 / 31, 0.5
    assert numpy.isclose(summary['f1'],
                         2 * precision * recall / (precision + recall))
    assert report.n_slipping == 2
    assert report.timing_correct_rate == 0.5


def test_report_per_object(report):
    table = report.per_object().set_index('object')
    assert table.loc['cup', 'n_trajectories'] == 2
    assert table.loc['jar', 'recall'] == 0.0
    assert table.loc['cup', 'recall'] == 1.0


def test_timing_cdf(report):
    cdf = slipeval.timing_cdf(report)
    assert cdf['delta_ms'].tolist() == [-10]
    assert cdf['cdf'].tolist() == [0.5]


def test_evaluate_needs_labels():
    traj = dummy_trajectory('a', 60)
    traj.labels = None
    with pytest.raises(InvalidInputError):
        slipeval.evaluate(FixedModel({'a': numpy.zeros(100)}), [traj])


def test_slip_counter():
    counter = slipeval.SlipCounter()
    reader = slipeval.CounterReader(counter)
    counter.increment()
    counter.increment(2)
    assert reader.delta() == 3
    assert reader.delta() == 0
    with pytest.raises(InvalidInputError):
        counter.increment(-1)
    counter._value = 0
    with pytest.raises(TactevError):
        reader.delta()


def test_slip_counter_reads_while_writer_runs():
    counter = slipeval.SlipCounter()
    reader = slipeval.CounterReader(counter)
    parked, resume = threading.Event(), threading.Event()

    def write():
        for k in range(2000):
            counter.increment()
            if k == 999:
                parked.set()
                resume.wait(5)

    writer = threading.Thread(target=write)
    writer.start()
    assert parked.wait(5)
    # writer parked inside its update loop: reads still return at once
    assert reader.delta() == 1000
    resume.set()
    seen = 0
    while writer.is_alive():
        seen += reader.delta()
    writer.join()
    seen += reader.delta()
    assert seen == 1000
    assert counter.value == 2000


@pytest.fixture(scope='module')
def small_run():
    scene = small_scene()
    frames, _ = simulate(scene)
    return scene, frames


@pytest.mark.slow
def test_stream_matches_offline(small_run):
    scene, frames = small_run
    grid = DotGrid.from_scene(scene)
    history = track(frames, grid)
    series = FeatureSeries.from_tracking(frames, history, grid)
    traj = slipnet.LabeledTrajectory('small', None, series,
                                     numpy.zeros(len(series)), None)
    cfg = slipnet.slip_config('hist 10')
    net = slipnet.build_model(cfg, cells=range(9), lattice=(3, 3), seed=SEED)
    model = slipnet.SlipModel(cfg, net)
    offline = model.predict_proba(traj, batch_size=1)
    result = slipeval.infer_stream(model, frames, DotGrid.from_scene(scene),
                                   budget_ms=1e9)
    assert numpy.array_equal(result.probas, offline)
    assert numpy.array_equal(result.flags, offline > model.threshold)
    assert result.counter.value == result.flags.sum()
    assert result.n_overruns == 0
    assert len(result.latencies_ms) == len(frames)


def test_labeled_dataset_round_trip(small_run, tmp_path):
    scene, frames = small_run
    _, truth = simulate(scene)
    grid = DotGrid.from_scene(scene)
    series = FeatureSeries.from_tracking(frames, track(frames, grid), grid)
    labels = numpy.zeros(len(series), dtype=bool)
    labels[25:] = True
    traj = slipnet.LabeledTrajectory('small-0', None, series, labels, 25,
                                     frames=frames, truth_slip=truth.slip)
    slipnet.write_labeled(traj, scene, str(tmp_path))
    (back, ), (scene_back, ) = slipnet.read_labeled(str(tmp_path))
    assert back.name == 'small-0'
    assert back.first_slip == 25
    assert numpy.array_equal(back.labels, labels)
    assert numpy.array_equal(back.truth_slip, truth.slip)
    assert numpy.array_equal(back.series.displacement, series.displacement)
    assert numpy.array_equal(back.series.counts, series.counts)
    assert back.frames is None
    assert scene_back.grid == scene.grid


def test_write_labeled_needs_frames(tmp_path):
    with pytest.raises(InvalidInputError):
        slipnet.write_labeled(dummy_trajectory('a', 60), small_scene(),
                              str(tmp_path))


def test_read_labeled_missing(tmp_path):
    with pytest.raises(InvalidInputError):
        slipnet.read_labeled(str(tmp_path / 'missing'))
