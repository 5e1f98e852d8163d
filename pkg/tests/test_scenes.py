# -*- coding: utf-8 -*-
# pylint: disable=missing-docstring
"""Scene definitions and config files."""
import numpy
import pytest

from make_test_ref import SEED, small_scene
from tactev.exceptions import SceneError
from tactev.scenes import (SLIP_OBJECTS, GelKeyframe, GelScene, GridSpec,
                           VibrationSpec, dump_scene, load_grid, load_scene,
                           scene_from_dict, scene_library, scene_to_dict,
                           slip_scenes)


def test_library_names():
    library = scene_library(SEED)
    for f in (100, 200, 300, 400, 498, 600):
        assert 'A-vib-%d' % f in library
    assert len([k for k in library if k.startswith('B-shear')]) == 5
    assert 'C-grasp-slip' in library
    assert len([k for k in library if k.startswith('D-distractor')]) == 10


def test_grid_row_major():
    centers, rc = GridSpec(rows=2, cols=3, spacing=50.0,
                           origin=(100.0, 100.0)).full_centers()
    assert numpy.array_equal(rc[:3], [[0, 0], [0, 1], [0, 2]])
    assert numpy.allclose(centers[1], [150.0, 100.0])
    assert numpy.allclose(centers[3], [100.0, 150.0])


def test_default_grid_is_centered():
    centers, _ = GridSpec().full_centers()
    assert numpy.allclose(centers.mean(axis=0), [320.0, 240.0])


def test_window_removes_dots():
    scene = slip_scenes(SLIP_OBJECTS[0], 1, seed=SEED)[0]
    assert len(scene.rest_centers()) == 56
    assert scene.lattice_shape() == (7, 8)


def test_keyframe_interpolation():
    scene = small_scene(shift=(4.0, -2.0))
    assert numpy.allclose(scene.shift([0.0, 20.0, 40.0, 50.0]),
                          [[0, 0], [2, -1], [4, -2], [4, -2]])
    d = scene.displacements([20.0])
    assert d.shape == (1, 9, 2)
    assert numpy.allclose(d[0], [2.0, -1.0])


def test_half_wave_vibration():
    scene = GelScene(vibration=VibrationSpec(250.0, amplitude=1.0))
    d = scene.displacements([1.0, 2.0, 3.0])
    # quarter period is 1 ms: sin = 1, 0, -1 (clipped to 0)
    assert numpy.allclose(d[:, 0, 0], [1.0, 0.0, 0.0], atol=1e-9)


@pytest.mark.parametrize('kwargs', [
    dict(grid=GridSpec(rows=0)),
    dict(grid=GridSpec(rows=20, cols=20)),
    dict(threshold=0.0),
    dict(noise_rate=-1.0),
    dict(duration_ms=0),
    dict(vibration=VibrationSpec(600.0)),
    dict(keyframes=[GelKeyframe(10.0), GelKeyframe(0.0)]),
    dict(window=(0, 0, 700, 100)),
])
def test_invalid_scenes(kwargs):
    with pytest.raises(SceneError):
        GelScene(**kwargs).check()


def test_aliasing_allowed():
    GelScene(vibration=VibrationSpec(600.0), allow_aliasing=True).check()


def test_yaml_round_trip(tmp_path):
    scene = load_scene('C-grasp-slip', seed=SEED)
    path = str(tmp_path / 'scene.yaml')
    dump_scene(scene, path)
    assert load_scene(path) == scene


def test_unknown_key():
    data = scene_to_dict(small_scene())
    data['colour'] = 'red'
    with pytest.raises(SceneError):
        scene_from_dict(data)


def test_unknown_scene():
    with pytest.raises(SceneError):
        load_scene('no-such-scene')


def test_grid_only_config(tmp_path):
    path = tmp_path / 'grid.yaml'
    path.write_text('rows: 2\ncols: 4\n')
    scene = load_grid(str(path))
    assert len(scene.rest_centers()) == 8


def test_slip_scenes_reproducible():
    a = slip_scenes('bottle', 2, seed=SEED)
    b = slip_scenes('bottle', 2, seed=SEED)
    assert a == b
    assert all(s.slip_window_ms is not None for s in a)
    hold = slip_scenes('bottle', 2, seed=SEED, slip=False)
    assert all(s.slip_window_ms is None for s in hold)
