# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Slip-model evaluation, threshold selection and streaming inference.

A trajectory's first detection t^m is compared with the labeler's first
slip t^c: correct if t^c - 50 ms <= t^m <= t^c + 20 ms, too early before
that, too late after it or never. F1 is computed over the trajectory cut
20 ms after the (shifted) first slip, against the shifted labels.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy
import pandas

from tactev import nnkit
from tactev.events import render_image
from tactev.exceptions import InvalidInputError, TactevError
from tactev.features import extract, history_features
from tactev.slipnet import (IMAGE_CROP, IMAGE_HISTORY, check_labeled,
                            cut_tick, shift_labels)
from tactev.tracker import DotTracker

logger = logging.getLogger(__name__)

__all__ = [
    'CORRECT',
    'TOO_EARLY',
    'TOO_LATE',
    'EARLY_MS',
    'LATE_MS',
    'THRESHOLDS',
    'timing_class',
    'confusion',
    'f1_score',
    'SlipReport',
    'evaluate',
    'select_threshold',
    'timing_cdf',
    'SlipCounter',
    'CounterReader',
    'SlipStream',
    'infer_stream',
]

CORRECT = 'correct'
TOO_EARLY = 'too early'
TOO_LATE = 'too late'
EARLY_MS = 50
LATE_MS = 20
F1_CUT_MS = 20
THRESHOLDS = numpy.round(numpy.arange(41) * 0.025, 3)
LATENCY_BUDGET_MS = 1.0


def first_detection(flags):
    """Index of the first positive flag, None if there is none."""
    hits = numpy.flatnonzero(flags)
    return int(hits[0]) if len(hits) else None


def timing_class(t_m, t_c, early=EARLY_MS, late=LATE_MS):
    """Timing class of a first detection t_m (None: never) against t_c."""
    if t_m is None or t_m > t_c + late:
        return TOO_LATE
    if t_m < t_c - early:
        return TOO_EARLY
    return CORRECT


def confusion(predicted, labels):
    """(TP, FP, FN) counts."""
    predicted = numpy.asarray(predicted, dtype=bool)
    labels = numpy.asarray(labels, dtype=bool)
    tp = int(numpy.sum(predicted & labels))
    fp = int(numpy.sum(predicted & ~labels))
    fn = int(numpy.sum(~predicted & labels))
    return tp, fp, fn


def f1_score(tp, fp, fn):
    """(precision, recall, F1) from confusion counts.

    With no positive labels and no positive predictions every score is 1;
    an empty denominator elsewhere gives 0.
    """
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@dataclass
class SlipReport:
    """Per-trajectory rows and aggregate scores of one evaluation."""
    rows: pandas.DataFrame
    flags: Dict[str, numpy.ndarray] = field(repr=False)
    threshold: float = 0.5

    @property
    def n_slipping(self):
        return int(self.rows['timing'].notna().sum())

    @property
    def timing_correct_rate(self):
        timing = self.rows['timing'].dropna()
        return float((timing == CORRECT).mean()) if len(timing) else 0.0

    def counts(self):
        return tuple(int(self.rows[c].sum()) for c in ('tp', 'fp', 'fn'))

    @property
    def precision(self):
        return f1_score(*self.counts())[0]

    @property
    def recall(self):
        return f1_score(*self.counts())[1]

    @property
    def f1(self):
        return f1_score(*self.counts())[2]

    @property
    def score(self):
        """Selection score: timing-correct rate plus F1."""
        return self.timing_correct_rate + self.f1

    def summary(self):
        timing = self.rows['timing'].value_counts()
        return {
            'threshold': self.threshold,
            'n_trajectories': len(self.rows),
            'correct': int(timing.get(CORRECT, 0)),
            'too_early': int(timing.get(TOO_EARLY, 0)),
            'too_late': int(timing.get(TOO_LATE, 0)),
            'timing_correct_rate': self.timing_correct_rate,
            'precision': self.precision,
            'recall': self.recall,
            'f1': self.f1,
        }

    def per_object(self):
        """Timing-class histogram, precision, recall and F1 per object."""
        out = []
        for obj, group in self.rows.groupby('object', sort=True):
            timing = group['timing'].value_counts()
            tp, fp, fn = (int(group[c].sum()) for c in ('tp', 'fp', 'fn'))
            precision, recall, f1 = f1_score(tp, fp, fn)
            out.append({
                'object': obj,
                'n_trajectories': len(group),
                'correct': int(timing.get(CORRECT, 0)),
                'too_early': int(timing.get(TOO_EARLY, 0)),
                'too_late': int(timing.get(TOO_LATE, 0)),
                'precision': precision,
                'recall': recall,
                'f1': f1,
            })
        return pandas.DataFrame(out)


def _score(trajectories, probas, threshold, shift_ms):
    rows, flags = [], {}
    for traj, proba in zip(trajectories, probas):
        predicted = proba > threshold
        labels = shift_labels(traj.labels, shift_ms)
        end = cut_tick(traj, F1_CUT_MS, shift_ms)
        tp, fp, fn = confusion(predicted[:end], labels[:end])
        t_m = first_detection(predicted)
        t_c = traj.first_slip
        precision, recall, f1 = f1_score(tp, fp, fn)
        rows.append({
            'trajectory': traj.name,
            'object': traj.object_id or '',
            'first_slip': -1 if t_c is None else t_c,
            'first_detection': -1 if t_m is None else t_m,
            'delta_ms': (numpy.nan if t_c is None or t_m is None else t_m -
                         t_c),
            'timing': None if t_c is None else timing_class(t_m, t_c),
            'tp': tp,
            'fp': fp,
            'fn': fn,
            'precision': precision,
            'recall': recall,
            'f1': f1,
        })
        flags[traj.name] = predicted
    return SlipReport(pandas.DataFrame(rows), flags, threshold)


def _probas(model, trajectories, batch_size):
    out = []
    for traj in trajectories:
        check_labeled(traj)
        out.append(model.predict_proba(traj, batch_size=batch_size))
    return out


def evaluate(model, trajectories, threshold=None, batch_size=1):
    """Timing classes and F1 of a SlipModel over labeled trajectories.

    Raises
    ------
    UnlabeledTrajectoryError
        If a trajectory carries no labels.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise InvalidInputError('no trajectories to evaluate')
    t = model.threshold if threshold is None else threshold
    report = _score(trajectories, _probas(model, trajectories, batch_size),
                    t, model.config.shift_ms)
    logger.info('%s: timing correct %.3f, F1 %.3f', model.config.label,
                report.timing_correct_rate, report.f1)
    return report


def select_threshold(model, checkpoints, trajectories, batch_size=1):
    """Best (checkpoint, threshold) over the last three checkpoints and the
    0.025 threshold grid.

    The score is timing-correct rate plus F1; ties go to the lower
    threshold, then to the earlier checkpoint. The model is left with the
    selected parameters and threshold.

    Returns
    -------
    checkpoint : Checkpoint
    threshold : float
    table : DataFrame
        Score of every candidate.
    """
    checkpoints = list(checkpoints)[-3:]
    trajectories = list(trajectories)
    if not checkpoints:
        raise InvalidInputError('no checkpoints to select from')
    rows = []
    best = None
    for c, ckpt in enumerate(checkpoints):
        model.network.set_params(ckpt.params)
        probas = _probas(model, trajectories, batch_size)
        for t in THRESHOLDS:
            report = _score(trajectories, probas, float(t),
                            model.config.shift_ms)
            rows.append({
                'epoch': ckpt.epoch,
                'threshold': float(t),
                'timing_correct_rate': report.timing_correct_rate,
                'f1': report.f1,
                'score': report.score,
            })
            key = (report.score, -float(t), -c)
            if best is None or key > best[0]:
                best = (key, c, float(t))
    _, c, t = best
    model.network.set_params(checkpoints[c].params)
    model.threshold = t
    logger.info('%s: selected epoch %d, threshold %.3f',
                model.config.label, checkpoints[c].epoch, t)
    return checkpoints[c], t, pandas.DataFrame(rows)


def timing_cdf(report):
    """Cumulative distribution of t^m - t^c over slipping trajectories.

    Trajectories without a detection do not appear but count in the
    denominator, so the curve ends at the detection rate.
    """
    rows = report.rows[report.rows['timing'].notna()]
    delta = numpy.sort(rows['delta_ms'].dropna().to_numpy())
    n = max(len(rows), 1)
    return pandas.DataFrame({
        'delta_ms': delta,
        'cdf': numpy.arange(1, len(delta) + 1) / n,
    })


class SlipCounter:
    """Shared, monotonically non-decreasing slip counter.

    Lock-free: the streaming detector is the only writer and publishes each
    new value with a single attribute store, readers load it without
    waiting.
    """

    def __init__(self):
        self._value = 0

    def increment(self, n=1):
        if n < 0:
            raise InvalidInputError('the slip counter cannot decrease')
        value = self._value + n
        self._value = value
        return value

    @property
    def value(self):
        return self._value


class CounterReader:
    """Reads a SlipCounter and returns increments since the last read."""

    def __init__(self, counter):
        self.counter = counter
        self.last = counter.value

    def delta(self):
        value = self.counter.value
        if value < self.last:
            raise TactevError('slip counter decreased from %d to %d' %
                              (self.last, value))
        out, self.last = value - self.last, value
        return out


class SlipStream:
    """Per-tick slip detector: tracking, features and model in one step.

    Parameters
    ----------
    model : SlipModel
    grid : DotGrid
    tracker_cfg : TrackerConfig, optional
    counter : SlipCounter, optional
        Incremented on every positive tick.
    budget_ms : float
        Per-tick latency budget; overruns are counted and logged.
    """

    def __init__(self,
                 model,
                 grid,
                 tracker_cfg=None,
                 counter=None,
                 budget_ms=LATENCY_BUDGET_MS):
        self.model = model
        self.grid = grid.reset()
        self.tracker = DotTracker(self.grid, tracker_cfg)
        self.counter = counter if counter is not None else SlipCounter()
        self.budget_ms = budget_ms
        self.window = deque(maxlen=model.history)
        self.latencies = []
        self.n_overruns = 0

    def step(self, frame):
        """(flag, probability) for one EventFrame."""
        start = time.perf_counter()
        self.tracker.step(frame)
        if self.model.config.is_image:
            self.window.append(frame)
        else:
            self.window.append(extract(frame, self.grid))
        proba = 0.0
        if len(self.window) == self.window.maxlen:
            if self.model.config.is_image:
                x0, y0, x1, y1 = IMAGE_CROP
                image = render_image(self.window, window=IMAGE_HISTORY)
                x = image.values[y0:y1, x0:x1][None, None].astype(
                    numpy.float64)
            else:
                x = history_features(self.window, self.model.config.name)[None]
            proba = float(nnkit.forward(self.model.network, x)[0, 0])
        flag = proba > self.model.threshold
        if flag:
            self.counter.increment()
        elapsed = (time.perf_counter() - start) * 1e3
        self.latencies.append(elapsed)
        if elapsed > self.budget_ms:
            self.n_overruns += 1
            logger.warning('slip stream tick t_i=%d took %.3f ms (budget '
                           '%.3f ms)', frame.t_i, elapsed, self.budget_ms)
        return flag, proba


@dataclass
class StreamResult:
    flags: numpy.ndarray
    probas: numpy.ndarray
    latencies_ms: numpy.ndarray
    n_overruns: int
    counter: Optional[SlipCounter] = None

    def percentiles(self, q=(50, 90, 99)):
        return {p: float(numpy.percentile(self.latencies_ms, p)) for p in q}


def infer_stream(model, frames, grid, tracker_cfg=None, counter=None,
                 budget_ms=LATENCY_BUDGET_MS):
    """Replay frames through a SlipStream."""
    stream = SlipStream(model, grid, tracker_cfg, counter, budget_ms)
    flags, probas = [], []
    for frame in frames:
        flag, proba = stream.step(frame)
        flags.append(flag)
        probas.append(proba)
    if stream.n_overruns:
        logger.warning('%d of %d ticks over the %.2f ms budget',
                       stream.n_overruns, len(flags), budget_ms)
    return StreamResult(numpy.array(flags, dtype=bool), numpy.array(probas),
                        numpy.array(stream.latencies), stream.n_overruns,
                        stream.counter)
