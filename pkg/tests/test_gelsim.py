# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Gel simulator."""
import numpy
import pytest

from make_test_ref import SEED, small_scene
from tactev.exceptions import InvalidInputError, SceneError
from tactev.gelsim import GelStream, log_intensity_image, simulate
from tactev.scenes import GelKeyframe, GelScene, GridSpec


@pytest.fixture(scope='module')
def small_run():
    return simulate(small_scene())


def test_frames_per_tick(small_run):
    frames, truth = small_run
    assert len(frames) == 60
    assert [f.t_i for f in frames[:3]] == [1000, 2000, 3000]
    assert truth.n_ticks == 60
    for frame in frames:
        frame.check()


def test_events_only_while_moving(small_run):
    frames, _ = small_run
    assert sum(len(f) for f in frames[:40]) > 0
    assert sum(len(f) for f in frames[40:]) == 0


def test_polarity_follows_motion(small_run):
    frames, _ = small_run
    scene = small_scene()
    cx = scene.rest_centers()[:, 0]
    x = numpy.concatenate([f.x for f in frames]).astype(float)
    p = numpy.concatenate([f.p for f in frames])
    dx = x[:, None] - cx[None, :]
    nearest = numpy.abs(dx).argmin(axis=1)
    rel = dx[numpy.arange(len(x)), nearest]
    # a dark dot moving right darkens its right rim
    assert (p[rel > 5] == -1).mean() > 0.9
    assert (p[rel < -5] == 1).mean() > 0.9


def test_ground_truth(small_run):
    _, truth = small_run
    scene = small_scene()
    assert numpy.allclose(truth.centers[-1], scene.rest_centers() + [3.0, 0])
    assert numpy.allclose(truth.displacements[19], [1.5, 0.0])
    assert numpy.allclose(truth.force[-1], [4.5, 0.0])
    assert not truth.slip.any()
    frame = truth.to_frame()
    assert len(frame) == 60 * 9
    assert {'tick', 'dot', 'x', 'y', 'fx', 'fy', 'slip'} <= set(frame.columns)


def test_reproducible():
    scene = small_scene(noise_rate=1e-3)
    a, _ = simulate(scene, seed=1)
    b, _ = simulate(scene, seed=1)
    assert a == b


def test_static_scene_is_silent():
    frames, _ = simulate(GelScene(duration_ms=20, noise_rate=0.0))
    assert sum(len(f) for f in frames) == 0


def test_noise_rate():
    scene = GelScene(duration_ms=1000, grid=GridSpec(rows=2, cols=2),
                     noise_rate=1e-3)
    frames, _ = simulate(scene, seed=SEED)
    # 1e-3 events per pixel per second over 640 x 480 pixels
    assert 200 < sum(len(f) for f in frames) < 420


def test_duration_override():
    frames, truth = simulate(small_scene(), duration=0.01)
    assert len(frames) == 10 == truth.n_ticks


@pytest.mark.parametrize('duration', [0.0, -1.0, 0.0001])
def test_invalid_duration(duration):
    with pytest.raises(InvalidInputError):
        simulate(small_scene(), duration=duration)


def test_overlapping_dots():
    scene = GelScene(grid=GridSpec(rows=2, cols=2, spacing=40.0),
                     keyframes=[GelKeyframe(0.0),
                                GelKeyframe(10.0, 6.0, 0.0)])
    with pytest.raises(SceneError):
        simulate(scene)


def test_log_intensity_image():
    scene = small_scene()
    image = log_intensity_image(scene)
    cx, cy = scene.rest_centers()[0]
    assert image.shape == (480, 640)
    assert numpy.isclose(image[int(cy), int(cx)], numpy.log(0.05))
    assert numpy.isclose(image[0, 0], 0.0)


def test_stream_matches_scripted_motion():
    scene = small_scene(duration_ms=40)
    frames, _ = simulate(scene)
    stream = GelStream(scene)
    disp = scene.displacements(numpy.arange(1, 41, dtype=float))
    streamed = [stream.step(d) for d in disp]
    assert [f.t_i for f in streamed] == [f.t_i for f in frames]
    total = sum(len(f) for f in frames)
    assert abs(sum(len(f) for f in streamed) - total) <= 0.05 * total


def test_stream_clips_displacement():
    scene = small_scene()
    stream = GelStream(scene, max_displacement=2.0)
    stream.step(numpy.full((9, 2), 10.0))
    assert numpy.allclose(numpy.linalg.norm(stream.displacement, axis=1), 2.0)
