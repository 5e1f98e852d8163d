# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Command line tool: exit codes, error lines and file round trips."""
import argparse
import logging
import os

import pandas
import pytest

from make_test_ref import small_scene
from tactev import cli
from tactev.data import read_csv, write_csv
from tactev.force import ForceDataset
from tactev.scenes import dump_scene
from test_force import linear_trajectory


@pytest.fixture
def scene_file(tmp_path):
    path = str(tmp_path / 'small.yaml')
    dump_scene(small_scene(), path)
    return path


@pytest.fixture
def recording(tmp_path, scene_file):
    out = str(tmp_path / 'small.evtc')
    assert cli.main(['simulate', '--scene', scene_file, '--out', out]) == 0
    return out


def test_no_arguments(capsys):
    assert cli.main([]) == 2
    assert 'usage' in capsys.readouterr().err


def test_help(capsys):
    assert cli.main(['--help']) == 0
    assert 'simulate' in capsys.readouterr().out


def test_unknown_subcommand():
    assert cli.main(['teleport']) == 2


def test_unknown_scene(tmp_path, capsys):
    code = cli.main(
        ['simulate', '--scene', 'Z-nope', '--out',
         str(tmp_path / 'x.evtc')])
    assert code == 2
    assert capsys.readouterr().err.startswith('error: scene:')


def test_missing_input(tmp_path, capsys):
    code = cli.main([
        'track', '--input',
        str(tmp_path / 'missing.evtc'), '--grid', 'B-zero', '--out',
        str(tmp_path / 'track.csv')
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith('error: usage:')
    assert len(err.strip().splitlines()) == 1


def test_undecodable_recording(tmp_path, scene_file):
    path = tmp_path / 'bad.evtc'
    path.write_bytes(b'not an event stream at all')
    code = cli.main([
        'track', '--input',
        str(path), '--grid', scene_file, '--out',
        str(tmp_path / 'track.csv')
    ])
    assert code == 2


def test_simulate_track_features(tmp_path, scene_file, recording, capsys):
    truth = str(tmp_path / 'truth.csv')
    assert cli.main([
        'simulate', '--scene', scene_file, '--out', recording, '--truth',
        truth
    ]) == 0
    assert len(read_csv(truth)) == 60 * 9

    track_csv = str(tmp_path / 'track.csv')
    assert cli.main([
        'track', '--input', recording, '--grid', scene_file, '--out',
        track_csv
    ]) == 0
    table = read_csv(track_csv, ['tick', 'dot', 'x', 'y'])
    assert len(table) == 60 * 9
    assert 'endpoint success' in capsys.readouterr().out

    features_csv = str(tmp_path / 'features.csv')
    assert cli.main([
        'features', '--input', recording, '--grid', scene_file, '--out',
        features_csv
    ]) == 0
    assert len(read_csv(features_csv, ['n_events', 'count'])) == 60 * 9


def test_datarate(tmp_path, recording, capsys):
    out = str(tmp_path / 'rate.csv')
    assert cli.main([
        'datarate', '--input', recording, '--interval', '0,30', '--out', out
    ]) == 0
    table = read_csv(out, ['interval', 'n_events', 'ratio'])
    assert table['interval'].tolist() == ['full', 'window']
    assert 'window:' in capsys.readouterr().out


def test_relative_outputs_use_data_dir(tmp_path, scene_file, monkeypatch):
    data_dir = tmp_path / 'data'
    data_dir.mkdir()
    monkeypatch.setenv('TACTEV_DATA_DIR', str(data_dir))
    assert cli.main(['simulate', '--scene', scene_file, '--out',
                     'run.evtc']) == 0
    assert (data_dir / 'run.evtc').exists()


@pytest.fixture
def force_csv(tmp_path):
    path = str(tmp_path / 'force.csv')
    data = ForceDataset(
        [linear_trajectory('t%d' % k, seed=k) for k in range(5)])
    write_csv(data.to_frame(), path)
    return path


def test_force_fit_and_eval(tmp_path, force_csv, capsys):
    model = str(tmp_path / 'linear.json')
    assert cli.main(['force-fit', '--data', force_csv, '--out', model]) == 0
    assert os.path.exists(model)
    pred = str(tmp_path / 'pred.csv')
    assert cli.main([
        'force-eval', '--model', model, '--data', force_csv, '--out', pred
    ]) == 0
    assert len(read_csv(pred, ['fx_pred', 'fy_pred'])) == 5 * 50
    assert 'MAE' in capsys.readouterr().out


def test_force_eval_dot_mismatch(tmp_path, force_csv, capsys):
    model = str(tmp_path / 'linear.json')
    assert cli.main(['force-fit', '--data', force_csv, '--out', model]) == 0
    other = str(tmp_path / 'other.csv')
    write_csv(
        ForceDataset([linear_trajectory('x', n_dots=3)]).to_frame(), other)
    capsys.readouterr()
    assert cli.main(['force-eval', '--model', model, '--data', other]) == 1
    assert capsys.readouterr().err.startswith('error: shape:')


def test_force_fit_needs_three_trajectories(tmp_path):
    path = str(tmp_path / 'two.csv')
    write_csv(
        ForceDataset([linear_trajectory('a'),
                      linear_trajectory('b')]).to_frame(), path)
    assert cli.main([
        'force-fit', '--data', path, '--out',
        str(tmp_path / 'model.json')
    ]) == 2


@pytest.mark.slow
def test_grasp_sim(tmp_path):
    metrics = str(tmp_path / 'metrics.csv')
    log = str(tmp_path / 'log.csv')
    assert cli.main([
        'grasp-sim', '--object', 'bottle-empty', '--seed', '123', '--log',
        log, '--metrics', metrics
    ]) == 0
    row = read_csv(metrics).iloc[0]
    assert bool(row['success'])
    assert {'tick', 'x_g', 'x_ref', 'u_ff', 'u_c', 'slip',
            'travel'} <= set(read_csv(log).columns)


def test_grasp_sim_bad_detector(capsys):
    assert cli.main(['grasp-sim', '--detector', 'magic']) == 2
    assert capsys.readouterr().err.startswith('error: usage:')


def test_unknown_experiment():
    assert cli.main(['experiment', 'nothing']) == 2


@pytest.mark.parametrize('text, expected', [
    ('epochs=3', ('epochs', 3)),
    ('n-eval=2', ('n_eval', 2)),
    ('configs=[hist 20]', ('configs', ['hist 20'])),
    ('detector=oracle', ('detector', 'oracle')),
])
def test_param(text, expected):
    assert cli._param(text) == expected


def test_param_needs_value():
    with pytest.raises(argparse.ArgumentTypeError):
        cli._param('epochs')


@pytest.mark.parametrize('verbosity, level', [
    (-2, logging.ERROR),
    (0, logging.WARNING),
    (1, logging.INFO),
    (3, logging.DEBUG),
])
def test_log_level(verbosity, level):
    assert cli.RunConfig('track', verbosity=verbosity).log_level() == level


def test_categories():
    from tactev.exceptions import BadMagicError, ShapeError, UsageError
    assert cli._category(UsageError('x')) == 'usage'
    assert cli._category(FileNotFoundError('x')) == 'missing-file'
    assert cli._category(BadMagicError('x')) == 'bad-magic'
    assert cli._category(ShapeError('x')) == 'shape'


def test_run_config_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv('TACTEV_DATA_DIR', str(tmp_path))
    args = cli.build_parser().parse_args(
        ['simulate', '--scene', 'B-zero', '--out', 'x.evtc', '-v'])
    cfg = cli.RunConfig.from_args(args)
    assert cfg.inputs == {'scene': 'B-zero'}
    assert cfg.outputs == {'out': os.path.join(str(tmp_path), 'x.evtc')}
    assert cfg.verbosity == 1
    assert cfg.params['library_seed'] == 123
    assert isinstance(pandas.DataFrame([cfg.params]), pandas.DataFrame)
