# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Experiment harnesses on shortened runs."""
import os

import pytest

from make_test_ref import SEED
from tactev import experiments
from tactev.exceptions import ConfigError, InvalidInputError


def test_vibration_tables():
    result = experiments.vibration_experiment(frequencies=(200, ),
                                              duration_s=2.0,
                                              windows=(1.0, ),
                                              seed=SEED)
    table = result.tables['table']
    assert list(table['frequency']) == [200]
    assert table['segments'].iloc[0] == 2
    assert len(result.tables['segments']) == 2
    assert result.summary.startswith('vibration recovery')


def test_run_experiment_writes_files(tmp_path):
    result = experiments.run_experiment('vibration',
                                        str(tmp_path),
                                        frequencies=(300, ),
                                        duration_s=1.0,
                                        windows=(1.0, ))
    names = sorted(os.listdir(str(tmp_path)))
    assert names == [
        'vibration_segments.csv', 'vibration_summary.txt',
        'vibration_table.csv'
    ]
    with open(str(tmp_path / 'vibration_summary.txt')) as fp:
        assert fp.read() == result.summary + '\n'


def test_unknown_experiment(tmp_path):
    with pytest.raises(ConfigError):
        experiments.run_experiment('nothing', str(tmp_path))


@pytest.mark.parametrize('target', ['track', 'features'])
def test_benchmark(target):
    table = experiments.benchmark(target, scene='B-zero', duration=0.05)
    percentiles = table[table['kind'] == 'percentile']
    assert list(percentiles['name']) == ['p50', 'p90', 'p99']
    assert (percentiles['value_ms'] >= 0).all()
    hist = table[table['kind'] == 'histogram']
    assert hist['count'].astype(int).sum() == 50


def test_benchmark_checks():
    with pytest.raises(InvalidInputError):
        experiments.benchmark('render', scene='B-zero', duration=0.05)
    with pytest.raises(InvalidInputError):
        experiments.benchmark('infer', scene='B-zero', duration=0.05)
