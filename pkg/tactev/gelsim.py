# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Event simulator for a marker gel seen by an event camera.

Every 1 ms tick is simulated in substeps. At each substep the intensity of
the pixels that can change (boxes around moving dots and the texture
rectangle) is rendered: background 1.0, dot and texture interiors 0.05,
anti-aliased dot rims through a coverage fraction. A pixel fires an event
whenever its log intensity differs from its reference level by at least the
contrast threshold C; the reference level then steps by C towards the new
value, once per event.
"""
import logging
import math
from dataclasses import dataclass

import numba
import numpy
import pandas

from tactev.events import FRAME_US, HEIGHT, WIDTH, EventFrame
from tactev.exceptions import InvalidInputError, SceneError

logger = logging.getLogger(__name__)

__all__ = [
    'GroundTruth',
    'GelStream',
    'simulate',
    'log_intensity_image',
    'SUBSTEPS',
]

SUBSTEPS = 10
BACKGROUND = 1.0
DARK = 0.05
MIN_INTENSITY = 0.01
MAX_MULTIPLICITY = 16
CHUNK_TICKS = 1000


@numba.njit(cache=True)
def _coverage(x, y, owner, centers, radius, rect, tex_x, tex_y, period,
              opacity):
    c = 0.0
    o = owner[y, x]
    if o >= 0:
        dx = x - centers[o, 0]
        dy = y - centers[o, 1]
        c = radius + 0.5 - math.sqrt(dx * dx + dy * dy)
        if c < 0.0:
            c = 0.0
        elif c > 1.0:
            c = 1.0
    if rect[0] <= x < rect[2] and rect[1] <= y < rect[3]:
        k = 2.0 * math.pi / period
        ct = opacity * 0.25 * (1.0 + math.cos(k * (x - tex_x))) * (
            1.0 + math.cos(k * (y - tex_y)))
        if ct > c:
            c = ct
    return c


@numba.njit(cache=True)
def _log_level(c):
    i = BACKGROUND - (BACKGROUND - DARK) * c
    if i < MIN_INTENSITY:
        i = MIN_INTENSITY
    return math.log(i)


@numba.njit(cache=True)
def _initial_levels(owner, centers, radius, rect, tex_x, tex_y, period,
                    opacity):
    height, width = owner.shape
    ref = numpy.empty((height, width), numpy.float64)
    for y in range(height):
        for x in range(width):
            ref[y, x] = _log_level(
                _coverage(x, y, owner, centers, radius, rect, tex_x, tex_y,
                          period, opacity))
    return ref


@numba.njit(cache=True)
def _render_chunk(ref, owner, centers, tex, t0_us, sub_us, radius, rect,
                  period, opacity, threshold, max_mult):
    """Events for consecutive substeps.

    centers[0] and tex[0] hold the state before the chunk, centers[s] and
    tex[s] the state at the end of substep s.
    """
    height, width = ref.shape
    n_sub = centers.shape[0] - 1
    n_dots = centers.shape[1]
    cap = 4096
    xs = numpy.empty(cap, numpy.int64)
    ys = numpy.empty(cap, numpy.int64)
    ts = numpy.empty(cap, numpy.int64)
    ps = numpy.empty(cap, numpy.int64)
    n_out = 0
    boxes = numpy.empty((n_dots + 1, 4), numpy.int64)
    pad = radius + 2.0
    for s in range(1, n_sub + 1):
        t_ev = t0_us + s * sub_us - sub_us // 2
        cur = centers[s]
        prev = centers[s - 1]
        nb = 0
        for d in range(n_dots):
            if cur[d, 0] == prev[d, 0] and cur[d, 1] == prev[d, 1]:
                continue
            x0 = int(math.floor(min(cur[d, 0], prev[d, 0]) - pad))
            x1 = int(math.ceil(max(cur[d, 0], prev[d, 0]) + pad))
            y0 = int(math.floor(min(cur[d, 1], prev[d, 1]) - pad))
            y1 = int(math.ceil(max(cur[d, 1], prev[d, 1]) + pad))
            boxes[nb, 0] = max(x0, 0)
            boxes[nb, 1] = max(y0, 0)
            boxes[nb, 2] = min(x1 + 1, width)
            boxes[nb, 3] = min(y1 + 1, height)
            nb += 1
        if tex[s, 0] != tex[s - 1, 0] or tex[s, 1] != tex[s - 1, 1]:
            boxes[nb, 0] = rect[0]
            boxes[nb, 1] = rect[1]
            boxes[nb, 2] = rect[2]
            boxes[nb, 3] = rect[3]
            nb += 1
        for b in range(nb):
            for y in range(boxes[b, 1], boxes[b, 3]):
                for x in range(boxes[b, 0], boxes[b, 2]):
                    level = _log_level(
                        _coverage(x, y, owner, cur, radius, rect, tex[s, 0],
                                  tex[s, 1], period, opacity))
                    diff = level - ref[y, x]
                    k = int(abs(diff) / threshold)
                    if k == 0:
                        continue
                    if k > max_mult:
                        k = max_mult
                    pol = 1 if diff > 0 else -1
                    ref[y, x] += pol * k * threshold
                    if n_out + k > cap:
                        cap = max(2 * cap, n_out + k)
                        xs2 = numpy.empty(cap, numpy.int64)
                        ys2 = numpy.empty(cap, numpy.int64)
                        ts2 = numpy.empty(cap, numpy.int64)
                        ps2 = numpy.empty(cap, numpy.int64)
                        xs2[:n_out] = xs[:n_out]
                        ys2[:n_out] = ys[:n_out]
                        ts2[:n_out] = ts[:n_out]
                        ps2[:n_out] = ps[:n_out]
                        xs, ys, ts, ps = xs2, ys2, ts2, ps2
                    for _ in range(k):
                        xs[n_out] = x
                        ys[n_out] = y
                        ts[n_out] = t_ev
                        ps[n_out] = pol
                        n_out += 1
    return xs[:n_out], ys[:n_out], ts[:n_out], ps[:n_out]


@dataclass(frozen=True)
class GroundTruth:
    """Per-tick simulator oracle.

    Attributes
    ----------
    t_i : ndarray, shape (n_ticks,)
        Frame-end timestamps, microseconds.
    centers : ndarray, shape (n_ticks, n_dots, 2)
        True dot centers at each frame end.
    rest : ndarray, shape (n_dots, 2)
    force : ndarray, shape (n_ticks, 2)
        Shear force (F_x, F_y) in N.
    slip : ndarray of bool, shape (n_ticks,)
        Relative motion of object and gel during the tick.
    pose : ndarray, shape (n_ticks, 2)
        Object (texture) offset in px.
    """
    t_i: numpy.ndarray
    centers: numpy.ndarray
    rest: numpy.ndarray
    force: numpy.ndarray
    slip: numpy.ndarray
    pose: numpy.ndarray

    @property
    def n_ticks(self):
        return len(self.t_i)

    @property
    def displacements(self):
        return self.centers - self.rest[None, :, :]

    def to_frame(self):
        """Truth as a long-form DataFrame, one row per (tick, dot)."""
        n_ticks, n_dots, _ = self.centers.shape
        tick = numpy.repeat(numpy.arange(n_ticks), n_dots)
        frame = pandas.DataFrame({
            'tick': tick,
            't_i': self.t_i[tick],
            'dot': numpy.tile(numpy.arange(n_dots), n_ticks),
            'x': self.centers[:, :, 0].ravel(),
            'y': self.centers[:, :, 1].ravel(),
            'fx': self.force[tick, 0],
            'fy': self.force[tick, 1],
            'slip': self.slip[tick].astype(int),
            'pose_x': self.pose[tick, 0],
            'pose_y': self.pose[tick, 1],
        })
        return frame


def _owner_map(rest, reach, width=WIDTH, height=HEIGHT):
    """Index of the dot that may cover each pixel, -1 for none."""
    owner = numpy.full((height, width), -1, dtype=numpy.int64)
    best = numpy.full((height, width), numpy.inf)
    r = int(math.ceil(reach))
    for d, (cx, cy) in enumerate(rest):
        x0, x1 = max(int(cx) - r, 0), min(int(cx) + r + 1, width)
        y0, y1 = max(int(cy) - r, 0), min(int(cy) + r + 1, height)
        yy, xx = numpy.mgrid[y0:y1, x0:x1]
        dist = numpy.hypot(xx - cx, yy - cy)
        closer = (dist <= reach) & (dist < best[y0:y1, x0:x1])
        owner[y0:y1, x0:x1][closer] = d
        best[y0:y1, x0:x1][closer] = dist[closer]
    return owner


def _texture_args(scene):
    tex = scene.texture
    if tex is None:
        return numpy.zeros(4, dtype=numpy.int64), 1.0, 0.0
    return numpy.array(tex.rect, dtype=numpy.int64), float(tex.period), float(
        tex.opacity)


def log_intensity_image(scene, t_ms=0.0):
    """Log intensity of the whole sensor at time t_ms."""
    rest = scene.rest_centers()
    reach = scene.grid.radius + 1.0 + scene.max_displacement()
    owner = _owner_map(rest, reach)
    rect, period, opacity = _texture_args(scene)
    tex = scene.texture_offset([t_ms])[0]
    return _initial_levels(owner, scene.dot_positions([t_ms])[0],
                           float(scene.grid.radius), rect, tex[0], tex[1],
                           period, opacity)


def _noise_events(rng, rate, t0_us, n_ticks):
    """Uniform spurious events over n_ticks ticks from t0_us."""
    mean = rate * WIDTH * HEIGHT * n_ticks * FRAME_US * 1e-6
    n = rng.poisson(mean)
    x = rng.integers(0, WIDTH, size=n)
    y = rng.integers(0, HEIGHT, size=n)
    t = t0_us + rng.integers(0, n_ticks * FRAME_US, size=n)
    p = rng.choice(numpy.array([-1, 1]), size=n)
    return x, y, t, p


def simulate(scene, duration=None, seed=None, substeps=SUBSTEPS):
    """Simulate a scene.

    Parameters
    ----------
    scene : GelScene
    duration : float, optional
        Seconds. Defaults to the scene duration.
    seed : int, optional
        Noise seed. Defaults to the scene seed.
    substeps : int
        Substeps per 1 ms tick.

    Returns
    -------
    frames : list of EventFrame
        One frame per millisecond, t_i = 1000, 2000, ...
    truth : GroundTruth

    Raises
    ------
    SceneError
        If the scene is invalid or its dots would overlap.
    InvalidInputError
        If duration <= 0.
    """
    scene.check()
    if duration is None:
        duration = scene.duration_ms * 1e-3
    if duration <= 0:
        raise InvalidInputError('duration must be > 0 (got %r)' % duration)
    n_ticks = int(round(duration * 1000))
    if n_ticks < 1:
        raise InvalidInputError('duration shorter than one tick')
    rng = numpy.random.default_rng(scene.seed if seed is None else seed)
    radius = float(scene.grid.radius)
    reach = radius + 1.0 + scene.max_displacement()
    if 2 * reach >= scene.grid.spacing:
        raise SceneError('%s: dot displacement of %.1f px lets dots overlap' %
                         (scene.name, reach - radius - 1.0))
    rest = scene.rest_centers()
    owner = _owner_map(rest, reach)
    rect, period, opacity = _texture_args(scene)
    sub_us = FRAME_US // substeps
    tex0 = scene.texture_offset([0.0])[0]
    ref = _initial_levels(owner, scene.dot_positions([0.0])[0], radius, rect,
                          tex0[0], tex0[1], period, opacity)

    frames = []
    n_events = 0
    for start in range(0, n_ticks, CHUNK_TICKS):
        stop = min(start + CHUNK_TICKS, n_ticks)
        # substep times, including the state before the chunk
        t_sub = (start * FRAME_US +
                 numpy.arange((stop - start) * substeps + 1) * sub_us) * 1e-3
        centers = numpy.ascontiguousarray(scene.dot_positions(t_sub))
        tex = numpy.ascontiguousarray(scene.texture_offset(t_sub))
        x, y, t, p = _render_chunk(ref, owner, centers, tex,
                                   start * FRAME_US, sub_us, radius, rect,
                                   period, opacity, float(scene.threshold),
                                   MAX_MULTIPLICITY)
        if scene.noise_rate > 0:
            nx, ny, nt, np_ = _noise_events(rng, scene.noise_rate,
                                            start * FRAME_US, stop - start)
            x = numpy.concatenate((x, nx))
            y = numpy.concatenate((y, ny))
            t = numpy.concatenate((t, nt))
            p = numpy.concatenate((p, np_))
            order = numpy.argsort(t, kind='stable')
            x, y, t, p = x[order], y[order], t[order], p[order]
        t_i = numpy.arange(start + 1, stop + 1, dtype=numpy.int64) * FRAME_US
        bounds = numpy.searchsorted(t, numpy.concatenate(
            ([start * FRAME_US], t_i)), side='left')
        for k, ti in enumerate(t_i):
            a, b = bounds[k], bounds[k + 1]
            frames.append(EventFrame(ti, x[a:b], y[a:b], t[a:b], p[a:b],
                                     check=False))
        n_events += len(x)
    truth = _ground_truth(scene, n_ticks, rng)
    logger.info('%s: %d ticks, %d events', scene.name, n_ticks, n_events)
    return frames, truth


def _ground_truth(scene, n_ticks, rng):
    t_end = numpy.arange(1, n_ticks + 1, dtype=numpy.float64)
    centers = scene.dot_positions(t_end)
    rest = scene.rest_centers()
    disp = scene.displacements(t_end, vibration=False)
    stiffness = numpy.asarray(scene.force.stiffness, dtype=numpy.float64)
    force = disp.mean(axis=1) @ stiffness.T
    if scene.force.noise_std > 0:
        force = force + rng.normal(0.0, scene.force.noise_std, size=force.shape)
    t_edges = numpy.arange(0, n_ticks + 1, dtype=numpy.float64)
    pose = scene.texture_offset(t_edges)
    if scene.texture is None:
        slip = numpy.zeros(n_ticks, dtype=bool)
    else:
        shift = scene.shift(t_edges)
        relative = numpy.diff(pose, axis=0) - numpy.diff(shift, axis=0)
        slip = numpy.linalg.norm(relative, axis=1) > 1e-9
    return GroundTruth(t_i=(t_end * FRAME_US).astype(numpy.int64),
                       centers=centers,
                       rest=rest,
                       force=force,
                       slip=slip,
                       pose=pose[1:])


class GelStream:
    """Tick-by-tick simulator driven by externally computed gel states.

    The layout (grid, window, texture look, noise, threshold) comes from a
    scene; keyframes are ignored. Each step takes the dot displacements and
    texture offset at the end of the tick and interpolates linearly over the
    substeps.

    Parameters
    ----------
    scene : GelScene
    max_displacement : float
        Displacements are clipped to this norm, in px.
    seed : int, optional
    substeps : int
    """

    def __init__(self, scene, max_displacement=6.0, seed=None,
                 substeps=SUBSTEPS):
        scene.check()
        self.scene = scene
        self.radius = float(scene.grid.radius)
        self.max_displacement = float(max_displacement)
        reach = self.radius + 1.0 + self.max_displacement
        if 2 * reach >= scene.grid.spacing:
            raise SceneError('%s: displacements up to %.1f px let dots '
                             'overlap' % (scene.name, self.max_displacement))
        self.rest = scene.rest_centers()
        self.owner = _owner_map(self.rest, reach)
        self.rect, self.period, self.opacity = _texture_args(scene)
        self.substeps = substeps
        self.rng = numpy.random.default_rng(
            scene.seed if seed is None else seed)
        self.displacement = numpy.zeros_like(self.rest)
        self.texture = scene.texture_offset([0.0])[0]
        self.ref = _initial_levels(self.owner, self.rest, self.radius,
                                   self.rect, self.texture[0],
                                   self.texture[1], self.period, self.opacity)
        self.t_i = 0

    def _clip(self, displacement):
        d = numpy.array(displacement, dtype=numpy.float64).reshape(
            self.rest.shape)
        norm = numpy.linalg.norm(d, axis=1)
        over = norm > self.max_displacement
        d[over] *= (self.max_displacement / norm[over])[:, None]
        return d

    def step(self, displacement, texture=(0.0, 0.0)):
        """EventFrame of the next tick.

        Parameters
        ----------
        displacement : array_like, shape (n_dots, 2)
        texture : (ox, oy)
        """
        new = self._clip(displacement)
        tex = numpy.asarray(texture, dtype=numpy.float64)
        alpha = (numpy.arange(self.substeps + 1) / self.substeps)[:, None]
        centers = numpy.ascontiguousarray(
            self.rest[None] + self.displacement[None] + alpha[:, :, None] *
            (new - self.displacement)[None])
        texs = numpy.ascontiguousarray(self.texture[None] + alpha *
                                       (tex - self.texture)[None])
        start = self.t_i
        sub_us = FRAME_US // self.substeps
        x, y, t, p = _render_chunk(self.ref, self.owner, centers, texs, start,
                                   sub_us, self.radius, self.rect,
                                   self.period, self.opacity,
                                   float(self.scene.threshold),
                                   MAX_MULTIPLICITY)
        if self.scene.noise_rate > 0:
            nx, ny, nt, np_ = _noise_events(self.rng, self.scene.noise_rate,
                                            start, 1)
            x = numpy.concatenate((x, nx))
            y = numpy.concatenate((y, ny))
            t = numpy.concatenate((t, nt))
            p = numpy.concatenate((p, np_))
            order = numpy.argsort(t, kind='stable')
            x, y, t, p = x[order], y[order], t[order], p[order]
        self.displacement = new
        self.texture = tex
        self.t_i = start + FRAME_US
        return EventFrame(self.t_i, x, y, t, p, check=False)
