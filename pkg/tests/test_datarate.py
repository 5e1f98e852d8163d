# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Data-rate accounting."""
import numpy
import pytest

from tactev.datarate import (data_rate_report, data_rate_series,
                             rgb_frame_bytes)
from tactev.events import EventFrame
from tactev.exceptions import InvalidInputError


def constant_frames(n_frames, n_events):
    return [
        EventFrame((k + 1) * 1000, numpy.zeros(n_events, dtype=int),
                   numpy.zeros(n_events, dtype=int),
                   numpy.full(n_events, k * 1000),
                   numpy.ones(n_events, dtype=int))
        for k in range(n_frames)
    ]


def test_rgb_frame_bytes():
    assert rgb_frame_bytes(540, 480) == 777600


def test_one_second_of_events():
    # 1000 frames of 10 events: 50 kB against 25 frames of 777.6 kB
    report = data_rate_report(constant_frames(1000, 10))
    assert report.n_events == 10000
    assert report.event_bytes == 50000
    assert numpy.isclose(report.rgb_bytes, 25 * 777600)
    assert numpy.isclose(report.ratio, 50000 / (25 * 777600))
    assert numpy.isclose(report.duration_s, 1.0)


def test_interval():
    frames = constant_frames(100, 1)
    frames[49] = EventFrame(50000, [0] * 5, [0] * 5, [49000] * 5, [1] * 5)
    report = data_rate_report(frames, interval=(49000, 50000))
    assert report.n_events == 5
    assert report.event_bytes == 25


@pytest.mark.parametrize('interval', [(1000, 1000), (2000, 1000),
                                      (-1000, 1000), (0, 200000)])
def test_invalid_interval(interval):
    with pytest.raises(InvalidInputError):
        data_rate_report(constant_frames(100, 1), interval=interval)


def test_empty_recording():
    with pytest.raises(InvalidInputError):
        data_rate_report([])


def test_series():
    t_end, rate = data_rate_series(constant_frames(250, 2), bin_ms=100)
    assert numpy.array_equal(t_end, [100000, 200000])
    assert numpy.allclose(rate, 2 * 5 * 1000)
