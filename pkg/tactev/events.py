# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Event and frame types, image-form rendering.

Events are (x, y, t, p) tuples with the timestamp t in microseconds and the
polarity p in {-1, +1}. The sensor is read out every millisecond: an
EventFrame holds every event with t_i - 1000 <= t < t_i.

Frames store their events as parallel numpy columns, read-only once built.
"""
import logging
from dataclasses import dataclass

import numpy

from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

__all__ = [
    'WIDTH',
    'HEIGHT',
    'FRAME_US',
    'Event',
    'EventFrame',
    'EventImage',
    'render_image',
    'frames_from_arrays',
    'frames_to_arrays',
    'check_frames',
]

WIDTH = 640
HEIGHT = 480
FRAME_US = 1000

OFF, NONE, ON = -1, 0, 1


@dataclass(frozen=True)
class Event:
    """A single brightness change event."""
    x: int
    y: int
    t: int
    p: int

    def __post_init__(self):
        if not 0 <= self.x < WIDTH or not 0 <= self.y < HEIGHT:
            raise InvalidInputError('event (%r, %r) outside the %dx%d sensor' %
                                    (self.x, self.y, WIDTH, HEIGHT))
        if self.p not in (-1, 1):
            raise InvalidInputError('polarity must be -1 or +1 (got %r)' %
                                    self.p)


def _frozen(a, dtype):
    a = numpy.array(a, dtype=dtype).ravel()
    a.flags.writeable = False
    return a


class EventFrame:
    """Events accumulated over one millisecond, ending at t_i (exclusive).

    Parameters
    ----------
    t_i : int
        Frame-end timestamp in microseconds.
    x, y, t, p : array_like
        Event columns, same length.
    check : bool
        Validate the frame invariants (sensor bounds, polarity, timestamps
        within the frame and sorted).
    """

    __slots__ = ('t_i', 'x', 'y', 't', 'p')

    def __init__(self, t_i, x=(), y=(), t=(), p=(), check=True):
        self.t_i = int(t_i)
        self.x = _frozen(x, numpy.uint16)
        self.y = _frozen(y, numpy.uint16)
        self.t = _frozen(t, numpy.int64)
        self.p = _frozen(p, numpy.int8)
        if check:
            self.check()

    @classmethod
    def from_events(cls, t_i, events):
        """Build a frame from a sequence of Event."""
        events = list(events)
        return cls(t_i, [e.x for e in events], [e.y for e in events],
                   [e.t for e in events], [e.p for e in events])

    @classmethod
    def empty(cls, t_i):
        return cls(t_i, check=False)

    def check(self):
        """
        Raises
        ------
        InvalidInputError
            If any frame invariant is violated.
        """
        n = len(self.x)
        if not len(self.y) == len(self.t) == len(self.p) == n:
            raise InvalidInputError('event columns have different lengths')
        if not n:
            return
        if self.x.max() >= WIDTH or self.y.max() >= HEIGHT:
            raise InvalidInputError('event outside the %dx%d sensor' %
                                    (WIDTH, HEIGHT))
        if not numpy.all(numpy.abs(self.p) == 1):
            raise InvalidInputError('polarity must be -1 or +1')
        if self.t.min() < self.t_i - FRAME_US or self.t.max() >= self.t_i:
            raise InvalidInputError(
                'event timestamps must lie in [%d, %d)' %
                (self.t_i - FRAME_US, self.t_i))
        if numpy.any(numpy.diff(self.t) < 0):
            raise InvalidInputError('events must be sorted by timestamp')

    @property
    def n_events(self):
        """N_E, the number of events in the frame."""
        return len(self.x)

    @property
    def events(self):
        return tuple(iter(self))

    @property
    def xy(self):
        """Event coordinates as a float (n, 2) array of (x, y)."""
        return numpy.column_stack((self.x, self.y)).astype(numpy.float64)

    def __len__(self):
        return len(self.x)

    def __iter__(self):
        for x, y, t, p in zip(self.x, self.y, self.t, self.p):
            yield Event(int(x), int(y), int(t), int(p))

    def __eq__(self, other):
        if not isinstance(other, EventFrame):
            return NotImplemented
        return (self.t_i == other.t_i and numpy.array_equal(self.x, other.x)
                and numpy.array_equal(self.y, other.y)
                and numpy.array_equal(self.t, other.t)
                and numpy.array_equal(self.p, other.p))

    def __repr__(self):
        return 'EventFrame(t_i=%d, n_events=%d)' % (self.t_i, len(self))


@dataclass(frozen=True)
class EventImage:
    """Events in image form: -1 off-event, 0 none, +1 on-event per pixel."""
    width: int
    height: int
    values: numpy.ndarray

    @property
    def n_on(self):
        return int(numpy.count_nonzero(self.values == ON))

    @property
    def n_off(self):
        return int(numpy.count_nonzero(self.values == OFF))


def render_image(frames, window=1, width=WIDTH, height=HEIGHT):
    """Render the last `window` frames as an EventImage.

    A pixel reads on (off) if an on (off) event occurred there within the
    window; when both occurred, the latest event wins.

    Parameters
    ----------
    frames : sequence of EventFrame
        Frames in time order; only the last `window` are used.
    window : int
        Number of frames, >= 1.

    Raises
    ------
    InvalidInputError
        If frames is empty or window < 1.
    """
    frames = list(frames)
    if not frames:
        raise InvalidInputError('cannot render an empty frame sequence')
    if window < 1:
        raise InvalidInputError('window must be >= 1 (got %r)' % window)
    frames = frames[-window:]
    values = numpy.zeros((height, width), dtype=numpy.int8)
    x = numpy.concatenate([f.x for f in frames]).astype(numpy.int64)
    y = numpy.concatenate([f.y for f in frames]).astype(numpy.int64)
    p = numpy.concatenate([f.p for f in frames])
    if len(x):
        flat = (y * width + x)[::-1]
        # first occurrence in the reversed stream is the latest event
        _, last = numpy.unique(flat, return_index=True)
        values.flat[flat[last]] = p[::-1][last]
    values.flags.writeable = False
    return EventImage(width, height, values)


def frames_to_arrays(frames):
    """Flatten frames into columns.

    Returns
    -------
    t_i : ndarray, shape (n_frames,)
    counts : ndarray, shape (n_frames,)
    x, y, t, p : ndarray, shape (n_events,)
    """
    frames = list(frames)
    t_i = numpy.array([f.t_i for f in frames], dtype=numpy.int64)
    counts = numpy.array([len(f) for f in frames], dtype=numpy.int64)

    def cat(name, dtype):
        if not frames:
            return numpy.zeros(0, dtype=dtype)
        return numpy.concatenate([getattr(f, name) for f in frames])

    return (t_i, counts, cat('x', numpy.uint16), cat('y', numpy.uint16),
            cat('t', numpy.int64), cat('p', numpy.int8))


def frames_from_arrays(t_i, counts, x, y, t, p, check=True):
    """Inverse of frames_to_arrays."""
    counts = numpy.asarray(counts, dtype=numpy.int64)
    if counts.sum() != len(x):
        raise InvalidInputError('frame counts do not match the event columns')
    bounds = numpy.concatenate(([0], numpy.cumsum(counts)))
    return [
        EventFrame(ti, x[a:b], y[a:b], t[a:b], p[a:b], check=check)
        for ti, a, b in zip(t_i, bounds[:-1], bounds[1:])
    ]


def check_frames(frames):
    """Check that frame timestamps are strictly increasing.

    Raises
    ------
    InvalidInputError
        If frame end times are not strictly increasing.
    """
    frames = list(frames)
    t_i = numpy.array([f.t_i for f in frames], dtype=numpy.int64)
    if numpy.any(numpy.diff(t_i) <= 0):
        raise InvalidInputError('frame timestamps must be increasing')
    return frames
