# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Touch features extracted at every tick, and their history vectors."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy

from tactev.events import EventImage
from tactev.exceptions import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

__all__ = [
    'FeatureFrame',
    'FeatureSeries',
    'HistoryConfig',
    'HISTORY_CONFIGS',
    'extract',
    'history_features',
    'history_config',
    'series_history',
]

COUNT_RADIUS = 20.0


@dataclass(frozen=True)
class FeatureFrame:
    """Features of one tick.

    Attributes
    ----------
    t_i : int
    n_events : int
        N_E, all events of the frame.
    counts : ndarray, shape (n_dots,)
        E_C, events closer than 20 px to each current center.
    positions : ndarray, shape (n_dots, 2)
        P_C, current centers.
    displacement : ndarray, shape (n_dots,)
        D_C, distance of each center from its rest position.
    displacement_xy : ndarray, shape (n_dots, 2)
        Displacement vectors.
    image : EventImage, optional
    """
    t_i: int
    n_events: int
    counts: numpy.ndarray
    positions: numpy.ndarray
    displacement: numpy.ndarray
    displacement_xy: numpy.ndarray
    image: Optional[EventImage] = None

    @property
    def n_dots(self):
        return len(self.counts)


def extract(frame, grid, radius=COUNT_RADIUS, image=None):
    """Features of one frame given the tracker state for that frame.

    Parameters
    ----------
    frame : EventFrame
    grid : DotGrid
        Tracker grid, synchronized with `frame`.
    radius : float
        Events closer than `radius` to a center count for that dot.
    image : EventImage, optional
    """
    centers = grid.centers.copy()
    xy = frame.xy
    if len(xy):
        d2 = ((xy[:, None, :] - centers[None, :, :])**2).sum(axis=2)
        counts = (d2 < radius * radius).sum(axis=0)
    else:
        counts = numpy.zeros(grid.n_dots, dtype=numpy.int64)
    disp = centers - grid.rest
    return FeatureFrame(t_i=frame.t_i,
                        n_events=len(frame),
                        counts=counts.astype(numpy.int64),
                        positions=centers,
                        displacement=numpy.hypot(disp[:, 0], disp[:, 1]),
                        displacement_xy=disp,
                        image=image)


@dataclass
class FeatureSeries:
    """Features of a whole trajectory, as arrays over ticks."""
    t_i: numpy.ndarray
    n_events: numpy.ndarray
    counts: numpy.ndarray
    displacement: numpy.ndarray
    displacement_xy: numpy.ndarray

    @classmethod
    def from_frames(cls, features):
        features = list(features)
        if not features:
            raise InvalidInputError('no feature frames')
        return cls(
            t_i=numpy.array([f.t_i for f in features], dtype=numpy.int64),
            n_events=numpy.array([f.n_events for f in features],
                                 dtype=numpy.int64),
            counts=numpy.stack([f.counts for f in features]).astype(
                numpy.float64),
            displacement=numpy.stack([f.displacement for f in features]),
            displacement_xy=numpy.stack(
                [f.displacement_xy for f in features]))

    @classmethod
    def from_tracking(cls, frames, history, grid, radius=COUNT_RADIUS):
        """Series from frames and the matching tracker history."""
        out = []
        saved = grid.centers
        try:
            for frame, centers in zip(frames, history):
                grid.centers = centers
                out.append(extract(frame, grid, radius=radius))
        finally:
            grid.centers = saved
        return cls.from_frames(out)

    def __len__(self):
        return len(self.t_i)

    @property
    def n_dots(self):
        return self.counts.shape[1]

    def to_frame(self):
        """Long-form pandas DataFrame, one row per (tick, dot)."""
        import pandas
        n_ticks, n_dots = self.counts.shape
        tick = numpy.repeat(numpy.arange(n_ticks), n_dots)
        return pandas.DataFrame({
            'tick': tick,
            't_i': self.t_i[tick],
            'n_events': self.n_events[tick],
            'dot': numpy.tile(numpy.arange(n_dots), n_ticks),
            'count': self.counts.ravel(),
            'displacement': self.displacement.ravel(),
            'dx': self.displacement_xy[:, :, 0].ravel(),
            'dy': self.displacement_xy[:, :, 1].ravel(),
        })


@dataclass(frozen=True)
class HistoryConfig:
    """How per-dot history vectors are built.

    Each block (start, length, weight) yields weight * sum of the samples
    at lags start .. start + length - 1 (lag 0 is the current tick). The
    displacement blocks come first, then the event-count blocks.
    """
    name: str
    blocks: Tuple[Tuple[int, int, float], ...]
    use_displacement: bool = True
    use_events: bool = True

    @property
    def window(self):
        """Number of ticks needed, current tick included."""
        return max(start + length for start, length, _ in self.blocks)

    @property
    def length(self):
        """Per-dot input length l_i."""
        return len(self.blocks) * (int(self.use_displacement) +
                                   int(self.use_events))


def _raw(n):
    return tuple((k, 1, 1.0) for k in range(n))


HISTORY_CONFIGS = {
    c.name: c
    for c in (
        HistoryConfig('no hist', _raw(1)),
        HistoryConfig('hist 10', _raw(10)),
        HistoryConfig('events only hist 10', _raw(10),
                      use_displacement=False),
        HistoryConfig('disp only hist 10', _raw(10), use_events=False),
        HistoryConfig('hist 20', _raw(20)),
        HistoryConfig('hist 50 down 5',
                      tuple((5 * k, 5, 0.2) for k in range(10))),
        HistoryConfig('fast slow hist 50',
                      _raw(10) + tuple((10 * k, 10, 0.1) for k in range(5))),
    )
}


def history_config(config):
    """HistoryConfig from a name or a config object."""
    if isinstance(config, HistoryConfig):
        return config
    try:
        return HISTORY_CONFIGS[config]
    except KeyError:
        raise ConfigError('unknown history configuration %r' % (config, ))


def _blocks(windows, blocks):
    """Block features of windows shaped (batch, window, n_dots).

    The window axis is oldest first; samples are added one at a time so
    that the result does not depend on the batch size.
    """
    last = windows.shape[1] - 1
    out = []
    for start, length, weight in blocks:
        acc = windows[:, last - start]
        for lag in range(start + 1, start + length):
            acc = acc + windows[:, last - lag]
        out.append(acc * weight if weight != 1.0 else acc)
    return out


def _history(disp_windows, count_windows, cfg):
    parts = []
    if cfg.use_displacement:
        parts += _blocks(disp_windows, cfg.blocks)
    if cfg.use_events:
        parts += _blocks(count_windows, cfg.blocks)
    # (batch, n_dots, l_i)
    return numpy.stack(parts, axis=2)


def history_features(window, config):
    """Per-dot input vectors from a window of FeatureFrames.

    Parameters
    ----------
    window : sequence of FeatureFrame, oldest first
        Only the last `config.window` frames are used.
    config : str or HistoryConfig

    Returns
    -------
    ndarray, shape (n_dots, l_i)

    Raises
    ------
    InvalidInputError
        If the window is shorter than the configuration needs.
    """
    cfg = history_config(config)
    window = list(window)
    if len(window) < cfg.window:
        raise InvalidInputError('%s needs %d ticks of history (got %d)' %
                                (cfg.name, cfg.window, len(window)))
    window = window[-cfg.window:]
    disp = numpy.stack([f.displacement for f in window])[None]
    counts = numpy.stack([f.counts for f in window]).astype(
        numpy.float64)[None]
    return _history(disp, counts, cfg)[0]


def series_history(series, config, ticks=None):
    """history_features for many ticks of a FeatureSeries at once.

    Parameters
    ----------
    ticks : array_like of int, optional
        Tick indices, each >= window - 1. Defaults to every tick with a full
        history.

    Returns
    -------
    ndarray, shape (n_ticks, n_dots, l_i)
    """
    cfg = history_config(config)
    w = cfg.window
    if ticks is None:
        ticks = numpy.arange(w - 1, len(series))
    ticks = numpy.asarray(ticks, dtype=numpy.int64)
    if len(ticks) and (ticks.min() < w - 1 or ticks.max() >= len(series)):
        raise InvalidInputError('%s: ticks need %d ticks of history' %
                                (cfg.name, w))
    index = ticks[:, None] + numpy.arange(-w + 1, 1)[None, :]
    disp = series.displacement[index]
    counts = series.counts[index]
    return _history(disp, counts, cfg)
