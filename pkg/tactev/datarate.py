# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Data-rate accounting: event bytes against an RGB camera stream."""
import logging
from dataclasses import dataclass

import numpy

from tactev.codec import EVENT_BYTES
from tactev.events import FRAME_US
from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

__all__ = ['DataRateReport', 'rgb_frame_bytes', 'data_rate_report',
           'data_rate_series']


@dataclass(frozen=True)
class DataRateReport:
    """Bytes over an interval for the event stream and an RGB stream."""
    start_us: int
    end_us: int
    n_events: int
    event_bytes: int
    rgb_bytes: float

    @property
    def duration_s(self):
        return (self.end_us - self.start_us) * 1e-6

    @property
    def ratio(self):
        """Event bytes over RGB bytes."""
        return self.event_bytes / self.rgb_bytes

    def as_dict(self):
        return {
            'start_us': self.start_us,
            'end_us': self.end_us,
            'duration_s': self.duration_s,
            'n_events': self.n_events,
            'event_bytes': self.event_bytes,
            'rgb_bytes': self.rgb_bytes,
            'ratio': self.ratio,
        }


def rgb_frame_bytes(width, height):
    """Bytes of one uncompressed RGB frame (3 bytes per pixel)."""
    return width * height * 3


def data_rate_report(frames, rgb_width=540, rgb_height=480, rgb_hz=25,
                     interval=None):
    """Compare event bytes with an uncompressed RGB stream over an interval.

    Parameters
    ----------
    frames : sequence of EventFrame
    rgb_width, rgb_height : int
        RGB frame size in pixels.
    rgb_hz : float
        RGB frame rate.
    interval : (start, end) in microseconds, optional
        Frames with start <= t_i - 1000 and t_i <= end are counted. Defaults
        to the whole recording.

    Raises
    ------
    InvalidInputError
        For a zero-length interval or one outside the recording.
    """
    frames = list(frames)
    if not frames:
        raise InvalidInputError('empty recording')
    t_i = numpy.array([f.t_i for f in frames], dtype=numpy.int64)
    counts = numpy.array([len(f) for f in frames], dtype=numpy.int64)
    first, last = int(t_i[0]) - FRAME_US, int(t_i[-1])
    if interval is None:
        start, end = first, last
    else:
        start, end = (int(v) for v in interval)
    if end <= start:
        raise InvalidInputError('zero-length interval [%d, %d]' % (start, end))
    if start < first or end > last:
        raise InvalidInputError('interval [%d, %d] outside the recording '
                                '[%d, %d]' % (start, end, first, last))
    mask = (t_i - FRAME_US >= start) & (t_i <= end)
    n_events = int(counts[mask].sum())
    duration = (end - start) * 1e-6
    rgb = rgb_frame_bytes(rgb_width, rgb_height) * rgb_hz * duration
    report = DataRateReport(start, end, n_events, EVENT_BYTES * n_events, rgb)
    logger.info('%d events over %.3f s: ratio %.4f', n_events, duration,
                report.ratio)
    return report


def data_rate_series(frames, bin_ms=100):
    """Event bytes per second in consecutive bins of `bin_ms` frames.

    Returns
    -------
    t_end : ndarray
        Bin end timestamps (microseconds).
    rate : ndarray
        Event bytes per second within each bin.
    """
    if bin_ms < 1:
        raise InvalidInputError('bin_ms must be >= 1')
    frames = list(frames)
    counts = numpy.array([len(f) for f in frames], dtype=numpy.int64)
    t_i = numpy.array([f.t_i for f in frames], dtype=numpy.int64)
    n_bins = len(counts) // bin_ms
    counts = counts[:n_bins * bin_ms].reshape(n_bins, bin_ms).sum(axis=1)
    t_end = t_i[bin_ms - 1:n_bins * bin_ms:bin_ms]
    return t_end, EVENT_BYTES * counts / (bin_ms * 1e-3)
