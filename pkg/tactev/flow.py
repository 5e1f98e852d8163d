# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Block-matching flow between two event images.

Each 16 x 16 block of the first image is compared, by the sum of absolute
differences, with every block of the second image displaced by up to 8 px
in each direction. Blocks with fewer than `min_events` events in the first
image carry no flow. Ties go to the smallest displacement.
"""
import logging
from dataclasses import dataclass

import numba
import numpy

from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

__all__ = ['BlockFlow', 'block_flow', 'mean_flow']

BLOCK = 16
SEARCH = 8
MIN_EVENTS = 4


@numba.njit(cache=True)
def _match(img0, img1, origins, block, search, min_events):
    h, w = img0.shape
    n = origins.shape[0]
    flow = numpy.zeros((n, 2), dtype=numpy.int64)
    valid = numpy.zeros(n, dtype=numpy.bool_)
    for b in range(n):
        x0 = origins[b, 0]
        y0 = origins[b, 1]
        n_events = 0
        for y in range(y0, y0 + block):
            for x in range(x0, x0 + block):
                if img0[y, x] != 0:
                    n_events += 1
        if n_events < min_events:
            continue
        best = -1
        best_r2 = 0
        for dy in range(-search, search + 1):
            if y0 + dy < 0 or y0 + dy + block > h:
                continue
            for dx in range(-search, search + 1):
                if x0 + dx < 0 or x0 + dx + block > w:
                    continue
                sad = 0
                for y in range(y0, y0 + block):
                    for x in range(x0, x0 + block):
                        d = numpy.int64(img0[y, x]) - numpy.int64(
                            img1[y + dy, x + dx])
                        sad += d if d >= 0 else -d
                    if best >= 0 and sad > best:
                        break
                r2 = dx * dx + dy * dy
                if best < 0 or sad < best or (sad == best and r2 < best_r2):
                    best = sad
                    best_r2 = r2
                    flow[b, 0] = dx
                    flow[b, 1] = dy
        valid[b] = True
    return flow, valid


@dataclass(frozen=True)
class BlockFlow:
    """Per-block flow.

    Attributes
    ----------
    origins : ndarray, shape (n_blocks, 2)
        Top-left (x, y) of each block.
    flow : ndarray, shape (n_blocks, 2)
        Displacement (dx, dy) in px from the first to the second image.
    valid : ndarray of bool, shape (n_blocks,)
    """
    origins: numpy.ndarray
    flow: numpy.ndarray
    valid: numpy.ndarray

    @property
    def magnitude(self):
        return numpy.linalg.norm(self.flow, axis=1)

    def mean_magnitude(self):
        """Mean flow magnitude over valid blocks, 0 if there is none."""
        if not self.valid.any():
            return 0.0
        return float(self.magnitude[self.valid].mean())


def _overlaps(origins, block, rect):
    x0, y0, x1, y1 = rect
    return ((origins[:, 0] < x1) & (origins[:, 0] + block > x0)
            & (origins[:, 1] < y1) & (origins[:, 1] + block > y0))


def block_origins(rect, block=BLOCK, exclude=None):
    """Top-left corners of the blocks tiling `rect` (x0, y0, x1, y1).

    Blocks that overlap the `exclude` rectangle are dropped.
    """
    x0, y0, x1, y1 = (int(v) for v in rect)
    xs = numpy.arange(x0, x1 - block + 1, block)
    ys = numpy.arange(y0, y1 - block + 1, block)
    origins = numpy.array([(x, y) for y in ys for x in xs],
                          dtype=numpy.int64).reshape(-1, 2)
    if exclude is not None and len(origins):
        origins = origins[~_overlaps(origins, block, exclude)]
    return origins


def _values(image):
    return getattr(image, 'values', image)


def block_flow(image0,
               image1,
               rect,
               exclude=None,
               block=BLOCK,
               search=SEARCH,
               min_events=MIN_EVENTS):
    """Flow of the blocks of `rect` from image0 to image1.

    Parameters
    ----------
    image0, image1 : EventImage or 2-D array
    rect : (x0, y0, x1, y1)
    exclude : (x0, y0, x1, y1), optional
        Blocks overlapping this rectangle are not matched.

    Raises
    ------
    InvalidInputError
        Different image shapes or a region smaller than one block.
    """
    a = numpy.ascontiguousarray(_values(image0))
    b = numpy.ascontiguousarray(_values(image1))
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidInputError('images must be 2-D with equal shapes, got '
                                '%r and %r' % (a.shape, b.shape))
    h, w = a.shape
    x0, y0, x1, y1 = rect
    rect = (max(0, x0), max(0, y0), min(w, x1), min(h, y1))
    origins = block_origins(rect, block, exclude)
    if not len(origins):
        raise InvalidInputError('region %r holds no %d x %d block' %
                                (rect, block, block))
    flow, valid = _match(a, b, origins, block, search, min_events)
    if not valid.any():
        logger.debug('no block of %r has %d or more events', rect, min_events)
    return BlockFlow(origins, flow, valid)


def mean_flow(image0, image1, rect, exclude=None, **kwargs):
    """Mean flow magnitude over the valid blocks of `rect`."""
    return block_flow(image0, image1, rect, exclude, **kwargs).mean_magnitude()
