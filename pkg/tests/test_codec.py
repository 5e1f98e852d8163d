# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""The .evtc codec."""
import numpy
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from make_test_ref import random_frames
from tactev.codec import (EVENT_BYTES, decode_frames, decode_stream,
                          encode_frames, quantize_frames, read_evtc,
                          write_evtc)
from tactev.events import EventFrame
from tactev.exceptions import (BadMagicError, InvalidInputError,
                               TruncatedStreamError, VersionMismatchError)

HEADER = 9
FRAME_HEADER = 12


@st.composite
def frame_lists(draw):
    n_frames = draw(st.integers(min_value=0, max_value=5))
    frames = []
    for k in range(1, n_frames + 1):
        t_i = k * 1000
        events = draw(
            st.lists(st.tuples(st.integers(0, 639), st.integers(0, 479),
                               st.integers(t_i - 1000, t_i - 1),
                               st.sampled_from([-1, 1])),
                     max_size=20))
        events.sort(key=lambda e: e[2])
        x, y, t, p = (list(c) for c in zip(*events)) if events else ([], ) * 4
        frames.append(EventFrame(t_i, x, y, t, p))
    return frames


@settings(max_examples=50, deadline=None)
@given(frame_lists())
def test_round_trip(frames):
    data = encode_frames(frames)
    assert decode_frames(data) == quantize_frames(frames)
    n_events = sum(len(f) for f in frames)
    assert len(data) == HEADER + FRAME_HEADER * len(frames) + (EVENT_BYTES *
                                                               n_events)


def test_single_event_layout():
    frame = EventFrame(1000, [1], [2], [0], [1])
    data = encode_frames([frame])
    assert data[:4] == b'EVTC'
    assert data[-5:] == bytes([1, 0, 2, 0, 1])


def test_header_dimensions():
    _, width, height = decode_stream(encode_frames([], width=320, height=240))
    assert (width, height) == (320, 240)


def test_empty_frames():
    frames = [EventFrame.empty(1000), EventFrame.empty(2000)]
    assert decode_frames(encode_frames(frames)) == frames


def test_bad_magic():
    data = bytearray(encode_frames(random_frames(2)))
    data[0:4] = b'XXXX'
    with pytest.raises(BadMagicError):
        decode_frames(bytes(data))


def test_version_mismatch():
    data = bytearray(encode_frames(random_frames(2)))
    data[4] = 2
    with pytest.raises(VersionMismatchError):
        decode_frames(bytes(data))


@pytest.mark.parametrize('cut', [1, 3, 5, 12])
def test_truncated(cut):
    frames = [EventFrame(1000, [1, 2], [1, 2], [0, 0], [1, -1])]
    data = encode_frames(frames)
    with pytest.raises(TruncatedStreamError):
        decode_frames(data[:-cut])


def test_short_header():
    with pytest.raises(TruncatedStreamError):
        decode_frames(b'EVT')


def test_file_round_trip(tmp_path):
    frames = random_frames()
    path = str(tmp_path / 'rec.evtc')
    write_evtc(path, frames)
    decoded = read_evtc(path)
    assert decoded == quantize_frames(frames)
    assert numpy.array_equal([len(f) for f in decoded],
                             [len(f) for f in frames])


def test_missing_file(tmp_path):
    with pytest.raises(InvalidInputError):
        read_evtc(str(tmp_path / 'missing.evtc'))
