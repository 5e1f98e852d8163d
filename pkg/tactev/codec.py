# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""The .evtc binary container.

Layout (little-endian)::

    magic      4 bytes   b'EVTC'
    version    u8        1
    width      u16
    height     u16
    then, for every frame:
    t_i        u64       frame-end timestamp, microseconds
    count      u32
    count x    (x u16, y u16, polarity u8 0=off/1=on)

Each event costs exactly 5 bytes. Timestamps are stored per frame only: a
decoded event carries the start time of its frame (t_i - 1000).
"""
import logging
import struct

import numpy

from tactev.events import FRAME_US, HEIGHT, WIDTH, EventFrame
from tactev.exceptions import (BadMagicError, InvalidInputError,
                               TruncatedStreamError, VersionMismatchError)

logger = logging.getLogger(__name__)

__all__ = [
    'MAGIC',
    'VERSION',
    'EVENT_BYTES',
    'encode_frames',
    'decode_frames',
    'decode_stream',
    'quantize_frames',
    'write_evtc',
    'read_evtc',
]

MAGIC = b'EVTC'
VERSION = 1
EVENT_BYTES = 5

_HEADER = struct.Struct('<4sBHH')
_FRAME_HEADER = struct.Struct('<QI')
_EVENT = numpy.dtype([('x', '<u2'), ('y', '<u2'), ('p', 'u1')])


def encode_frames(frames, width=WIDTH, height=HEIGHT):
    """Encode a sequence of EventFrame as bytes."""
    chunks = [_HEADER.pack(MAGIC, VERSION, width, height)]
    for frame in frames:
        chunks.append(_FRAME_HEADER.pack(frame.t_i, len(frame)))
        payload = numpy.empty(len(frame), dtype=_EVENT)
        payload['x'] = frame.x
        payload['y'] = frame.y
        payload['p'] = frame.p > 0
        chunks.append(payload.tobytes())
    return b''.join(chunks)


def decode_stream(data):
    """Decode bytes into (frames, width, height).

    Raises
    ------
    BadMagicError, VersionMismatchError, TruncatedStreamError
    """
    data = memoryview(data)
    if len(data) < _HEADER.size:
        if bytes(data[:len(MAGIC)]) != MAGIC[:len(data)]:
            raise BadMagicError('not an .evtc stream')
        raise TruncatedStreamError('stream shorter than the %d-byte header' %
                                   _HEADER.size)
    magic, version, width, height = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError('bad magic %r' % magic)
    if version != VERSION:
        raise VersionMismatchError('unsupported version %d (expected %d)' %
                                   (version, VERSION))
    frames = []
    offset = _HEADER.size
    while offset < len(data):
        if len(data) - offset < _FRAME_HEADER.size:
            raise TruncatedStreamError('truncated frame header at byte %d' %
                                       offset)
        t_i, count = _FRAME_HEADER.unpack_from(data, offset)
        offset += _FRAME_HEADER.size
        size = count * EVENT_BYTES
        if len(data) - offset < size:
            raise TruncatedStreamError(
                'frame at t_i=%d declares %d events, stream truncated' %
                (t_i, count))
        payload = numpy.frombuffer(data, dtype=_EVENT, count=count,
                                   offset=offset)
        offset += size
        p = numpy.where(payload['p'] > 0, 1, -1)
        t = numpy.full(count, t_i - FRAME_US, dtype=numpy.int64)
        frames.append(EventFrame(t_i, payload['x'], payload['y'], t, p))
    logger.debug('decoded %d frames (%dx%d)', len(frames), width, height)
    return frames, width, height


def decode_frames(data):
    """Decode bytes into a list of EventFrame."""
    return decode_stream(data)[0]


def quantize_frames(frames):
    """Frames with every event timestamp moved to its frame start.

    This is the form preserved by an encode/decode round trip.
    """
    return [
        EventFrame(f.t_i, f.x, f.y,
                   numpy.full(len(f), f.t_i - FRAME_US, dtype=numpy.int64),
                   f.p) for f in frames
    ]


def write_evtc(path, frames, width=WIDTH, height=HEIGHT):
    """Write frames to an .evtc file (atomically)."""
    from tactev.data import atomic_write
    with atomic_write(path, binary=True) as fp:
        fp.write(encode_frames(frames, width=width, height=height))


def read_evtc(path):
    """Read frames from an .evtc file."""
    try:
        with open(path, 'rb') as fp:
            data = fp.read()
    except FileNotFoundError:
        raise InvalidInputError('no such file: %s' % path)
    return decode_frames(data)
