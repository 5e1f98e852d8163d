# -*- coding: utf-8 -*-
"""Shared test cases and reference values."""
# pylint: disable=missing-docstring
import json
import sys

import numpy

from tactev.events import FRAME_US, HEIGHT, WIDTH, EventFrame
from tactev.scenes import GelKeyframe, GelScene, GridSpec

SEED = 123


def random_frames(n_frames=20, max_events=50, seed=SEED):
    """Valid random frames: sorted timestamps inside each frame."""
    rng = numpy.random.default_rng(seed)
    frames = []
    for k in range(1, n_frames + 1):
        t_i = k * FRAME_US
        n = int(rng.integers(0, max_events + 1))
        t = numpy.sort(rng.integers(t_i - FRAME_US, t_i, size=n))
        frames.append(
            EventFrame(t_i, rng.integers(0, WIDTH, size=n),
                       rng.integers(0, HEIGHT, size=n), t,
                       rng.choice([-1, 1], size=n)))
    return frames


def small_scene(duration_ms=60, shift=(3.0, 0.0), noise_rate=0.0, seed=SEED):
    """3 x 3 grid moved by `shift` px over the first 40 ms."""
    return GelScene(name='small',
                    duration_ms=duration_ms,
                    grid=GridSpec(rows=3, cols=3),
                    keyframes=[
                        GelKeyframe(0.0),
                        GelKeyframe(40.0, shift[0], shift[1]),
                    ],
                    noise_rate=noise_rate,
                    seed=seed)


def ring_events(center, r, n, t_i=FRAME_US):
    """n events evenly spaced on a circle, as an EventFrame."""
    angle = numpy.linspace(0, 2 * numpy.pi, n, endpoint=False)
    x = numpy.round(center[0] + r * numpy.cos(angle)).astype(int)
    y = numpy.round(center[1] + r * numpy.sin(angle)).astype(int)
    t = numpy.full(n, t_i - FRAME_US)
    return EventFrame(t_i, x, y, t, numpy.ones(n, dtype=int))


def main():
    """Print reference event counts of the small scene."""
    from tactev.gelsim import simulate
    frames, _ = simulate(small_scene())
    json.dump([len(f) for f in frames], sys.stdout)


if __name__ == '__main__':
    main()
