# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Scene descriptions for the gel simulator and the built-in scene library.

A scene scripts the gel deformation (keyframes of a global shift, a radial
press and a relaxation of the contact periphery), an optional textured
object seen through or over the gel, an optional vibration and the
shear-force law used as ground truth.

Scenes are plain dataclasses and round-trip through YAML::

    name: my-scene
    duration_ms: 500
    threshold: 0.2
    noise_rate: 1.0e-05
    grid: {rows: 7, cols: 8, radius: 15.0, spacing: 55.0}
    keyframes:
      - {t_ms: 0, dx: 0.0, dy: 0.0}
      - {t_ms: 200, dx: 3.0, dy: 0.0, press: 1.0}
    texture: {rect: [515, 50, 600, 430], period: 12.0, opacity: 0.5,
              keyframes: [{t_ms: 0, ox: 0.0, oy: 0.0}]}
    vibration: {frequency: 300.0, amplitude: 0.8, angle: 0.0}
    force: {stiffness: [[1.5, 0.0], [0.0, 1.5]], noise_std: 0.1}
    window: [515, 50, 600, 430]
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy
import yaml

from tactev.events import HEIGHT, WIDTH
from tactev.exceptions import SceneError

logger = logging.getLogger(__name__)

__all__ = [
    'GridSpec',
    'GelKeyframe',
    'TextureKeyframe',
    'TextureSpec',
    'VibrationSpec',
    'ForceSpec',
    'GelScene',
    'SlipObject',
    'SLIP_OBJECTS',
    'scene_library',
    'slip_scenes',
    'load_scene',
    'load_grid',
    'dump_scene',
    'scene_from_dict',
    'scene_to_dict',
]

NYQUIST_HZ = 500.0


@dataclass
class GridSpec:
    """Rest layout of the dot grid, centered on the sensor by default."""
    rows: int = 7
    cols: int = 8
    radius: float = 15.0
    spacing: float = 55.0
    origin: Optional[Tuple[float, float]] = None

    def full_centers(self):
        """Rest centers (x, y) of every grid position, row-major.

        Returns
        -------
        centers : ndarray, shape (rows * cols, 2)
        rc : ndarray, shape (rows * cols, 2)
            (row, col) index of each center.
        """
        if self.origin is None:
            x0 = (WIDTH - (self.cols - 1) * self.spacing) / 2
            y0 = (HEIGHT - (self.rows - 1) * self.spacing) / 2
        else:
            x0, y0 = self.origin
        rr, cc = numpy.meshgrid(numpy.arange(self.rows),
                                numpy.arange(self.cols),
                                indexing='ij')
        rc = numpy.column_stack((rr.ravel(), cc.ravel()))
        centers = numpy.column_stack(
            (x0 + rc[:, 1] * self.spacing,
             y0 + rc[:, 0] * self.spacing)).astype(numpy.float64)
        return centers, rc


@dataclass
class GelKeyframe:
    """Gel deformation waypoint, linearly interpolated in time.

    dx, dy is the global shift in px, `press` the radial displacement of the
    outermost dots in px and `edge_relax` the fraction of the deformation
    released by the dots on the periphery of the lattice.
    """
    t_ms: float
    dx: float = 0.0
    dy: float = 0.0
    press: float = 0.0
    edge_relax: float = 0.0


@dataclass
class TextureKeyframe:
    t_ms: float
    ox: float = 0.0
    oy: float = 0.0


@dataclass
class TextureSpec:
    """Smooth dark blob texture of an object, visible inside `rect`."""
    rect: Tuple[int, int, int, int]
    period: float = 12.0
    opacity: float = 0.5
    keyframes: List[TextureKeyframe] = field(
        default_factory=lambda: [TextureKeyframe(0.0)])


@dataclass
class VibrationSpec:
    """Intermittent contact with a vibrating object.

    The gel is displaced by amplitude * max(0, sin(2 pi f t)) along `angle`
    (degrees) from `start_ms` on.
    """
    frequency: float
    amplitude: float = 0.8
    angle: float = 0.0
    start_ms: float = 0.0


@dataclass
class ForceSpec:
    """Shear force law F = K @ mean dot displacement + gaussian noise."""
    stiffness: List[List[float]] = field(
        default_factory=lambda: [[1.5, 0.0], [0.0, 1.5]])
    noise_std: float = 0.0


@dataclass
class GelScene:
    """A scripted scene for the gel simulator."""
    name: str = 'scene'
    duration_ms: int = 1000
    grid: GridSpec = field(default_factory=GridSpec)
    keyframes: List[GelKeyframe] = field(
        default_factory=lambda: [GelKeyframe(0.0)])
    texture: Optional[TextureSpec] = None
    vibration: Optional[VibrationSpec] = None
    force: ForceSpec = field(default_factory=ForceSpec)
    noise_rate: float = 1e-5
    threshold: float = 0.2
    window: Optional[Tuple[int, int, int, int]] = None
    slip_window_ms: Optional[Tuple[float, float]] = None
    object_id: Optional[str] = None
    allow_aliasing: bool = False
    seed: int = 0

    def check(self):
        """
        Raises
        ------
        SceneError
            If a scene invariant is violated.
        """
        g = self.grid
        if g.rows < 1 or g.cols < 1:
            raise SceneError('%s: empty grid' % self.name)
        if g.radius <= 0 or g.spacing <= 0:
            raise SceneError('%s: radius and spacing must be positive' %
                             self.name)
        if self.threshold <= 0:
            raise SceneError('%s: contrast threshold must be > 0 (got %r)' %
                             (self.name, self.threshold))
        if self.noise_rate < 0:
            raise SceneError('%s: negative noise rate' % self.name)
        if self.duration_ms <= 0:
            raise SceneError('%s: duration must be > 0' % self.name)
        centers, _ = g.full_centers()
        margin = 2 * g.radius
        if (centers[:, 0].min() < margin or centers[:, 1].min() < margin
                or centers[:, 0].max() > WIDTH - 1 - margin
                or centers[:, 1].max() > HEIGHT - 1 - margin):
            raise SceneError('%s: grid does not fit the sensor with a '
                             'margin of %g px' % (self.name, margin))
        if self.vibration is not None:
            f = self.vibration.frequency
            limit = 2 * NYQUIST_HZ if self.allow_aliasing else NYQUIST_HZ
            if not 0 < f < limit:
                raise SceneError('%s: vibration frequency %g Hz outside '
                                 '(0, %g)' % (self.name, f, limit))
        times = [k.t_ms for k in self.keyframes]
        if not times or numpy.any(numpy.diff(times) < 0):
            raise SceneError('%s: keyframes must be sorted in time' %
                             self.name)
        for rect in (self.window,
                     self.texture.rect if self.texture else None):
            if rect is not None and not (0 <= rect[0] < rect[2] <= WIDTH
                                         and 0 <= rect[1] < rect[3] <= HEIGHT):
                raise SceneError('%s: invalid rectangle %r' %
                                 (self.name, rect))
        if not len(self.rest_centers()):
            raise SceneError('%s: the window region removes every dot' %
                             self.name)
        return self

    @property
    def valid_vibration(self):
        """Whether the vibration is below the 500 Hz Nyquist limit."""
        return self.vibration is None or self.vibration.frequency < NYQUIST_HZ

    def _dot_mask(self):
        centers, _ = self.grid.full_centers()
        if self.window is None:
            return numpy.ones(len(centers), dtype=bool)
        x0, y0, x1, y1 = self.window
        inside = ((centers[:, 0] >= x0) & (centers[:, 0] < x1)
                  & (centers[:, 1] >= y0) & (centers[:, 1] < y1))
        return ~inside

    def rest_centers(self):
        """Rest centers of the dots outside the window region."""
        centers, _ = self.grid.full_centers()
        return centers[self._dot_mask()]

    def lattice_index(self):
        """(row, col) lattice index of each dot, starting at (0, 0)."""
        _, rc = self.grid.full_centers()
        rc = rc[self._dot_mask()]
        return rc - rc.min(axis=0)

    def lattice_shape(self):
        rc = self.lattice_index()
        return tuple(int(v) for v in rc.max(axis=0) + 1)

    def _keyframe_track(self, name, t_ms):
        times = [k.t_ms for k in self.keyframes]
        values = [getattr(k, name) for k in self.keyframes]
        return numpy.interp(t_ms, times, values)

    def shift(self, t_ms):
        """Global gel shift (dx, dy) at times t_ms, shape (T, 2)."""
        t_ms = numpy.atleast_1d(numpy.asarray(t_ms, dtype=numpy.float64))
        return numpy.column_stack((self._keyframe_track('dx', t_ms),
                                   self._keyframe_track('dy', t_ms)))

    def deform(self, shift, press, relax):
        """Dot displacements for given gel states, shape (T, n_dots, 2).

        Parameters
        ----------
        shift : array_like, shape (T, 2)
            Global shift (dx, dy) in px.
        press : array_like, shape (T,)
            Radial spread, px at the outermost dot.
        relax : array_like, shape (T,)
            Fraction of the displacement released at the grid periphery.
        """
        shift = numpy.atleast_2d(numpy.asarray(shift, dtype=numpy.float64))
        press = numpy.atleast_1d(numpy.asarray(press, dtype=numpy.float64))
        relax = numpy.atleast_1d(numpy.asarray(relax, dtype=numpy.float64))
        rest = self.rest_centers()
        full, _ = self.grid.full_centers()
        center = full.mean(axis=0)
        radial = rest - center
        reach = numpy.linalg.norm(full - center, axis=1).max()
        if reach > 0:
            radial = radial / reach
        rc = self.lattice_index()
        nr, nc = self.lattice_shape()
        edge = ((rc[:, 0] == 0) | (rc[:, 0] == nr - 1) | (rc[:, 1] == 0)
                | (rc[:, 1] == nc - 1))
        d = shift[:, None, :] + press[:, None, None] * radial[None, :, :]
        keep = numpy.where(edge[None, :], 1.0 - relax[:, None], 1.0)
        return d * keep[:, :, None]

    def displacements(self, t_ms, vibration=True):
        """Dot displacements from rest at times t_ms, shape (T, n_dots, 2)."""
        t_ms = numpy.atleast_1d(numpy.asarray(t_ms, dtype=numpy.float64))
        d = self.deform(self.shift(t_ms), self._keyframe_track('press', t_ms),
                        self._keyframe_track('edge_relax', t_ms))
        if vibration and self.vibration is not None:
            v = self.vibration
            phase = 2 * numpy.pi * v.frequency * (t_ms - v.start_ms) * 1e-3
            amp = v.amplitude * numpy.maximum(0.0, numpy.sin(phase))
            amp = numpy.where(t_ms >= v.start_ms, amp, 0.0)
            direction = numpy.array(
                [numpy.cos(numpy.radians(v.angle)),
                 numpy.sin(numpy.radians(v.angle))])
            d = d + amp[:, None, None] * direction[None, None, :]
        return d

    def dot_positions(self, t_ms):
        """Dot centers at times t_ms, shape (T, n_dots, 2)."""
        return self.rest_centers()[None, :, :] + self.displacements(t_ms)

    def texture_offset(self, t_ms):
        """Texture offset (ox, oy) at times t_ms, shape (T, 2)."""
        t_ms = numpy.atleast_1d(numpy.asarray(t_ms, dtype=numpy.float64))
        if self.texture is None:
            return numpy.zeros((len(t_ms), 2))
        kf = self.texture.keyframes
        times = [k.t_ms for k in kf]
        return numpy.column_stack(
            (numpy.interp(t_ms, times, [k.ox for k in kf]),
             numpy.interp(t_ms, times, [k.oy for k in kf])))

    def max_displacement(self):
        """Largest dot displacement over the scene, in px."""
        t = numpy.arange(0, self.duration_ms + 1, 0.5)
        d = float(numpy.linalg.norm(self.displacements(t, vibration=False),
                                    axis=2).max())
        if self.vibration is not None:
            d += self.vibration.amplitude
        return d


@dataclass
class SlipObject:
    """Synthetic grasped object for the slip dataset."""
    name: str
    slip_speed: float
    shear: float
    period: float
    opacity: float
    precursor_ms: float


SLIP_OBJECTS = [
    SlipObject('sponge', 0.40, 2.5, 14.0, 0.45, 25.0),
    SlipObject('bottle', 0.60, 3.0, 10.0, 0.55, 22.0),
    SlipObject('box', 0.50, 3.5, 12.0, 0.50, 28.0),
    SlipObject('can', 0.70, 2.8, 9.0, 0.60, 20.0),
    SlipObject('cup', 0.45, 3.2, 16.0, 0.40, 26.0),
    SlipObject('ball', 0.80, 2.2, 11.0, 0.50, 21.0),
    SlipObject('brick', 0.35, 4.0, 13.0, 0.65, 30.0),
    SlipObject('tube', 0.55, 2.6, 15.0, 0.45, 24.0),
    SlipObject('jar', 0.65, 3.4, 10.5, 0.55, 23.0),
    SlipObject('towel', 0.50, 3.0, 17.0, 0.35, 27.0),
]

# 7 x 9 gel whose last column is cut away: 7 x 8 = 56 dots remain
_CUT_GRID = GridSpec(rows=7, cols=9)
_WINDOW = (515, 50, 600, 430)


def _vibration_scene(frequency, duration_ms=100000):
    return GelScene(name='A-vib-%g' % frequency,
                    duration_ms=duration_ms,
                    grid=GridSpec(rows=3, cols=4),
                    keyframes=[GelKeyframe(0.0)],
                    vibration=VibrationSpec(frequency=frequency),
                    noise_rate=1e-5,
                    allow_aliasing=frequency >= NYQUIST_HZ)


def _shear_scene(index, rng, duration_ms=2000, noise_std=0.1):
    times = numpy.arange(0, duration_ms + 1, 200.0)
    shifts = rng.uniform(-6, 6, size=(len(times), 2))
    shifts[0] = 0.0
    press = rng.uniform(0.0, 1.5, size=len(times))
    press[0] = 0.0
    keyframes = [
        GelKeyframe(float(t), float(s[0]), float(s[1]), float(p))
        for t, s, p in zip(times, shifts, press)
    ]
    return GelScene(name='B-shear-%d' % index,
                    duration_ms=duration_ms,
                    grid=GridSpec(rows=7, cols=9),
                    keyframes=keyframes,
                    force=ForceSpec([[1.6, 0.2], [-0.1, 1.4]], noise_std),
                    noise_rate=0.0,
                    seed=index)


def _grasp_slip_scene():
    keyframes = [
        GelKeyframe(0.0),
        GelKeyframe(1000.0),
        GelKeyframe(1500.0, press=1.5),
        GelKeyframe(2200.0, press=1.5),
        GelKeyframe(2250.0, 0.6, 0.0, press=1.5),
        GelKeyframe(2300.0, press=1.5),
        GelKeyframe(2500.0, press=1.5),
        GelKeyframe(3000.0, 0.0, 2.0, press=1.5),
        GelKeyframe(4000.0, 0.0, 2.0, press=1.5),
        GelKeyframe(4500.0, 0.0, 0.2, press=1.2),
        GelKeyframe(6000.0, 0.0, 0.2, press=1.2),
    ]
    return GelScene(name='C-grasp-slip',
                    duration_ms=6000,
                    keyframes=keyframes,
                    slip_window_ms=(4000.0, 4500.0),
                    noise_rate=1e-5)


def _distractor_scene(index, rng, duration_ms=1500):
    shift = rng.uniform(-2.5, 2.5, size=2)
    keyframes = [
        GelKeyframe(0.0),
        GelKeyframe(200.0, press=1.0),
        GelKeyframe(500.0, float(shift[0]), float(shift[1]), 1.0),
        GelKeyframe(1100.0, float(shift[0]), float(shift[1]), 1.0),
        GelKeyframe(1400.0),
        GelKeyframe(float(duration_ms)),
    ]
    # a textured object slides across a band of the dot grid
    row0 = int(rng.integers(60, 220))
    rect = (100, row0, 540, row0 + 140)
    angle = rng.uniform(0, 2 * numpy.pi)
    travel = 0.3 * 900.0
    texture = TextureSpec(
        rect=rect,
        period=float(rng.uniform(10.0, 16.0)),
        opacity=0.7,
        keyframes=[
            TextureKeyframe(0.0),
            TextureKeyframe(300.0),
            TextureKeyframe(1200.0, float(travel * numpy.cos(angle)),
                            float(travel * numpy.sin(angle))),
        ])
    return GelScene(name='D-distractor-%d' % index,
                    duration_ms=duration_ms,
                    keyframes=keyframes,
                    texture=texture,
                    noise_rate=1e-5,
                    seed=index)


def slip_scenes(obj, n, seed=0, slip=True, duration_ms=400):
    """Labeled trajectories of one object pressed against the cut gel.

    Slip trajectories stick for a while, release the contact periphery
    during a short precursor, then slide: the texture in the window moves
    while the dots relax. Non-slip trajectories shear and release without
    relative motion.

    Parameters
    ----------
    obj : SlipObject or str
    n : int
        Number of trajectories.
    slip : bool
        Slip or non-slip (perturbation) trajectories.
    """
    if isinstance(obj, str):
        obj = {o.name: o for o in SLIP_OBJECTS}[obj]
    rng = numpy.random.default_rng([seed, int(slip),
                                    sum(map(ord, obj.name))])
    scenes = []
    for k in range(n):
        angle = rng.uniform(0, 2 * numpy.pi)
        u = numpy.array([numpy.cos(angle), numpy.sin(angle)])
        shear = obj.shear * rng.uniform(0.8, 1.2)
        sx, sy = shear * u
        if slip:
            onset = float(rng.uniform(200.0, 260.0))
            pre = onset - obj.precursor_ms
            slide = obj.slip_speed * 60.0
            keyframes = [
                GelKeyframe(0.0),
                GelKeyframe(50.0),
                GelKeyframe(150.0, sx, sy),
                GelKeyframe(pre, sx, sy),
                GelKeyframe(onset, sx, sy, edge_relax=0.5),
                GelKeyframe(onset + 40.0, 0.2 * sx, 0.2 * sy),
                GelKeyframe(float(duration_ms), 0.2 * sx, 0.2 * sy),
            ]
            tex = [
                TextureKeyframe(0.0),
                TextureKeyframe(50.0),
                TextureKeyframe(150.0, sx, sy),
                TextureKeyframe(onset, sx, sy),
                TextureKeyframe(onset + 60.0, sx + slide * u[0],
                                sy + slide * u[1]),
            ]
            window_ms = (onset, onset + 60.0)
        else:
            t1 = float(rng.uniform(80.0, 150.0))
            t2 = t1 + float(rng.uniform(60.0, 120.0))
            press = float(rng.uniform(0.0, 1.0))
            keyframes = [
                GelKeyframe(0.0),
                GelKeyframe(t1, sx, sy, press),
                GelKeyframe(t2, sx, sy, press),
                GelKeyframe(t2 + 100.0),
                GelKeyframe(float(duration_ms)),
            ]
            tex = [
                TextureKeyframe(0.0),
                TextureKeyframe(t1, sx, sy),
                TextureKeyframe(t2, sx, sy),
                TextureKeyframe(t2 + 100.0),
            ]
            window_ms = None
        scenes.append(
            GelScene(name='E-%s-%s-%d' % (obj.name,
                                          'slip' if slip else 'hold', k),
                     duration_ms=duration_ms,
                     grid=dataclasses.replace(_CUT_GRID),
                     keyframes=keyframes,
                     texture=TextureSpec(rect=_WINDOW,
                                         period=obj.period,
                                         opacity=obj.opacity,
                                         keyframes=tex),
                     window=_WINDOW,
                     slip_window_ms=window_ms,
                     object_id=obj.name,
                     noise_rate=1e-5,
                     seed=seed * 1000 + k))
    return scenes


def scene_library(seed=123):
    """Named built-in scenes.

    A: vibration at 100, 200, 300, 400, 498 Hz (and 600 Hz, above Nyquist);
    B: shear with a linear force law (five trajectories, plus a zero one);
    C: grasp, perturbation and slip; D: ten distractor trajectories ending
    at rest; E: one slip trajectory per synthetic object, with a window
    region.
    """
    rng = numpy.random.default_rng(seed)
    scenes = {}
    for f in (100, 200, 300, 400, 498, 600):
        s = _vibration_scene(f)
        scenes[s.name] = s
    for k in range(5):
        s = _shear_scene(k, rng)
        scenes[s.name] = s
    scenes['B-zero'] = GelScene(name='B-zero',
                                duration_ms=500,
                                grid=GridSpec(rows=7, cols=9),
                                noise_rate=0.0)
    s = _grasp_slip_scene()
    scenes[s.name] = s
    for k in range(10):
        s = _distractor_scene(k, rng)
        scenes[s.name] = s
    for obj in SLIP_OBJECTS[:8]:
        s = slip_scenes(obj, 1, seed=seed)[0]
        scenes['E-%s' % obj.name] = s
    return scenes


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise SceneError('%s: expected a mapping' % where)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise SceneError('%s: unknown keys %s' %
                         (where, ', '.join(sorted(unknown))))
    try:
        return cls(**data)
    except TypeError as err:
        raise SceneError('%s: %s' % (where, err))


def scene_from_dict(data):
    """Build a GelScene from plain python data (parsed YAML)."""
    data = dict(data)
    if 'grid' in data:
        data['grid'] = _build(GridSpec, data['grid'], 'grid')
    if 'keyframes' in data:
        data['keyframes'] = [
            _build(GelKeyframe, k, 'keyframes') for k in data['keyframes']
        ]
    if data.get('texture') is not None:
        tex = dict(data['texture'])
        if 'keyframes' in tex:
            tex['keyframes'] = [
                _build(TextureKeyframe, k, 'texture.keyframes')
                for k in tex['keyframes']
            ]
        if 'rect' in tex:
            tex['rect'] = tuple(tex['rect'])
        data['texture'] = _build(TextureSpec, tex, 'texture')
    if data.get('vibration') is not None:
        data['vibration'] = _build(VibrationSpec, data['vibration'],
                                   'vibration')
    if 'force' in data:
        data['force'] = _build(ForceSpec, data['force'], 'force')
    for key in ('window', 'slip_window_ms'):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return _build(GelScene, data, 'scene').check()


def scene_to_dict(scene):
    """Plain python data for a GelScene (tuples become lists)."""

    def plain(obj):
        if isinstance(obj, dict):
            return {k: plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, numpy.generic):
            return obj.item()
        return obj

    return plain(dataclasses.asdict(scene))


def dump_scene(scene, path):
    """Write a scene as YAML."""
    from tactev.data import atomic_write
    with atomic_write(path) as fp:
        yaml.safe_dump(scene_to_dict(scene), fp, sort_keys=False)


def load_scene(name_or_path, seed=123):
    """A library scene by name, or a scene read from a YAML file.

    Raises
    ------
    SceneError
        Unknown name, unreadable file or schema mismatch.
    """
    library = scene_library(seed=seed)
    if name_or_path in library:
        return library[name_or_path].check()
    return scene_from_dict(_read_yaml(name_or_path))


def _read_yaml(path):
    try:
        with open(path) as fp:
            return yaml.safe_load(fp)
    except (FileNotFoundError, IsADirectoryError):
        raise SceneError('unknown scene %r (not a library name or a file)' %
                         path)
    except yaml.YAMLError as err:
        raise SceneError('%s: invalid YAML: %s' % (path, err))


def load_grid(name_or_path, seed=123):
    """Scene whose dot layout defines a tracker grid.

    Accepts a library scene name, a scene YAML file, or a YAML file holding
    only GridSpec keys (rows, cols, radius, spacing, origin).
    """
    library = scene_library(seed=seed)
    if name_or_path in library:
        return library[name_or_path].check()
    data = _read_yaml(name_or_path)
    names = {f.name for f in dataclasses.fields(GridSpec)}
    if isinstance(data, dict) and data and set(data) <= names:
        grid = _build(GridSpec, data, 'grid')
        return GelScene(name=str(name_or_path), grid=grid).check()
    return scene_from_dict(data)
