# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Offline slip labels from the relative flow of a window region.

Where the elastomer is cut away, the camera sees the grasped object itself.
A tick is labeled slip when the flow in the window region, between the
event image of the tick and the one 4 ms later, exceeds the flow of the
marker region by more than a threshold. Gel and object moving together
produce equal flows and no label.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy
import pandas

from tactev import flow
from tactev.events import render_image
from tactev.exceptions import InvalidInputError, LabelingError

logger = logging.getLogger(__name__)

__all__ = [
    'SlipLabels',
    'slip_criterion',
    'label_slip',
    'label_scene',
    'marker_region',
    'label_agreement',
]

THRESHOLD = 1.0
LOOKAHEAD = 4
IMAGE_WINDOW = 2


def slip_criterion(window_flow, marker_flow, threshold=THRESHOLD):
    """Slip iff window flow - marker flow > threshold (elementwise)."""
    return (numpy.asarray(window_flow, dtype=numpy.float64) -
            numpy.asarray(marker_flow, dtype=numpy.float64)) > threshold


@dataclass
class SlipLabels:
    """Per-tick labels with the flows they come from.

    The last `lookahead` ticks have no future image and are labeled no-slip.
    """
    t_i: numpy.ndarray
    labels: numpy.ndarray
    window_flow: numpy.ndarray
    marker_flow: numpy.ndarray
    threshold: float

    @property
    def first_slip(self):
        """Index of the first slip tick (t^c_s0), None without slip."""
        hits = numpy.flatnonzero(self.labels)
        return int(hits[0]) if len(hits) else None

    def to_frame(self):
        first = self.first_slip
        return pandas.DataFrame({
            'tick': numpy.arange(len(self.labels)),
            't_i': self.t_i,
            'slip': self.labels.astype(int),
            'first_slip': -1 if first is None else first,
            'window_flow': self.window_flow,
            'marker_flow': self.marker_flow,
        })


def marker_region(scene, margin=None):
    """Bounding rectangle of the dots (radius-scaled margin)."""
    rest = scene.rest_centers()
    margin = 2 * scene.grid.radius if margin is None else margin
    lo = numpy.floor(rest.min(axis=0) - margin).astype(int)
    hi = numpy.ceil(rest.max(axis=0) + margin).astype(int)
    return (int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1]))


def label_slip(frames,
               window,
               marker,
               threshold=THRESHOLD,
               lookahead=LOOKAHEAD,
               image_window=IMAGE_WINDOW,
               **flow_kwargs):
    """Per-tick slip labels of a recording.

    Parameters
    ----------
    frames : sequence of EventFrame
    window : (x0, y0, x1, y1)
        Window region, where the object is visible.
    marker : (x0, y0, x1, y1)
        Marker region; blocks overlapping the window are not used.
    threshold : float
        Relative flow, px per `lookahead` ticks.
    image_window : int
        Frames rendered into each event image.

    Raises
    ------
    LabelingError
        If no window region is given.
    """
    if window is None:
        raise LabelingError('slip labeling needs a window region')
    frames = list(frames)
    if not frames:
        raise InvalidInputError('no frames to label')
    n = len(frames)
    images = [
        render_image(frames[max(0, k - image_window + 1):k + 1])
        for k in range(n)
    ]
    w_flow = numpy.zeros(n)
    m_flow = numpy.zeros(n)
    for k in range(n - lookahead):
        a, b = images[k], images[k + lookahead]
        w_flow[k] = flow.mean_flow(a, b, window, **flow_kwargs)
        m_flow[k] = flow.mean_flow(a, b, marker, exclude=window,
                                   **flow_kwargs)
    labels = slip_criterion(w_flow, m_flow, threshold)
    labels[n - lookahead:] = False
    result = SlipLabels(numpy.array([f.t_i for f in frames]), labels, w_flow,
                        m_flow, threshold)
    logger.info('labeled %d ticks, %d slip, first slip at %s', n,
                int(labels.sum()), result.first_slip)
    return result


def label_scene(scene, frames, threshold=THRESHOLD, **kwargs):
    """label_slip with the window and marker regions of a scene.

    Raises
    ------
    LabelingError
        If the scene has no window region.
    """
    if scene.window is None:
        raise LabelingError('scene %s has no window region' % scene.name)
    return label_slip(frames,
                      scene.window,
                      marker_region(scene),
                      threshold=threshold,
                      **kwargs)


def label_agreement(labels, truth, ignore: Optional[int] = LOOKAHEAD):
    """Fraction of ticks where labels equal the ground truth slip flags.

    The last `ignore` ticks, which carry no label, are left out.
    """
    labels = numpy.asarray(labels, dtype=bool)
    truth = numpy.asarray(truth, dtype=bool)
    if labels.shape != truth.shape:
        raise InvalidInputError('labels %r and truth %r differ in shape' %
                                (labels.shape, truth.shape))
    if ignore:
        labels, truth = labels[:-ignore], truth[:-ignore]
    return float(numpy.mean(labels == truth))
