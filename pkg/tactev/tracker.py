# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Regularized gradient-based dot tracker.

Each dot is a circle of radius r centred at c. Events attributed to a dot
(those inside the receptive ring around its center) should lie on its rim,
so the center follows the gradient of

    sum_l (||x_l|| - r)^2        x_l event position relative to c

whose per-event gradient with respect to c is -2 (x_l - r x_l / ||x_l||).
A pairwise term keeps neighboring dots at their squared rest distance d:

    sum_j (||c - c_j||^2 - d_j)^2   gradient  4 (c - c_j)(||c - c_j||^2 - d_j)

weighted by w_dist * 8 / n_neighbors. A dot is updated once per frame, and
only when more than `gate` events were attributed to it.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy

from tactev.base import BaseEstimator
from tactev.events import check_frames
from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

__all__ = [
    'TrackerConfig',
    'DotState',
    'DotGrid',
    'DotTracker',
    'assign_events',
    'event_gradient',
    'regularizer_gradient',
    'update_dot',
    'track',
    'endpoint_report',
    'tracking_rmse',
]

MAX_NEIGHBORS = 8
MIN_NEIGHBORS = 3


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker parameters.

    inner, outer : receptive ring radii (px)
    alpha : step size
    w_dist : regularizer weight before the 8 / n_neighbors scaling
    gate : a dot is updated only with more than `gate` events
    """
    inner: float = 10.0
    outer: float = 20.0
    alpha: float = 0.003
    w_dist: float = 0.001
    gate: int = 10

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise InvalidInputError('ring radii must satisfy 0 < inner < '
                                    'outer (got %r, %r)' %
                                    (self.inner, self.outer))
        if self.alpha <= 0:
            raise InvalidInputError('alpha must be > 0')
        if self.w_dist < 0:
            raise InvalidInputError('w_dist must be >= 0')
        if self.gate < 0:
            raise InvalidInputError('gate must be >= 0')


@dataclass
class DotState:
    """A single marker: rest and current center, radius, neighbors.

    `rest_sq` holds the squared rest distance to each neighbor.
    """
    id: int
    c0: numpy.ndarray
    c: numpy.ndarray
    r: float
    neighbors: List[int] = field(default_factory=list)
    rest_sq: List[float] = field(default_factory=list)


class DotGrid:
    """Rest layout, neighbor graph and current centers of all dots.

    Parameters
    ----------
    rest : array_like, shape (n_dots, 2)
        Rest centers (x, y).
    lattice : array_like, shape (n_dots, 2)
        (row, col) index of each dot; neighbors are the 8-connected lattice
        positions.
    radius : float
    """

    def __init__(self, rest, lattice, radius=15.0):
        self.rest = numpy.array(rest, dtype=numpy.float64)
        self.lattice = numpy.asarray(lattice, dtype=numpy.int64)
        self.radius = float(radius)
        if self.rest.ndim != 2 or self.rest.shape[1] != 2:
            raise InvalidInputError('rest centers must have shape (n, 2)')
        if len(self.lattice) != len(self.rest):
            raise InvalidInputError('one lattice index per dot is required')
        if self.radius <= 0:
            raise InvalidInputError('radius must be > 0')
        self.centers = self.rest.copy()
        index = {tuple(rc): i for i, rc in enumerate(self.lattice)}
        src, dst = [], []
        for i, (row, col) in enumerate(self.lattice):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    j = index.get((row + dr, col + dc))
                    if (dr or dc) and j is not None:
                        src.append(i)
                        dst.append(j)
        self.edges = numpy.array([src, dst], dtype=numpy.int64).reshape(2, -1)
        diff = self.rest[self.edges[0]] - self.rest[self.edges[1]]
        self.edge_rest_sq = numpy.einsum('ij,ij->i', diff, diff)
        self.n_neighbors = numpy.bincount(self.edges[0],
                                          minlength=self.n_dots)
        if self.n_dots > 1 and self.n_neighbors.max() > MAX_NEIGHBORS:
            raise InvalidInputError('a dot has more than 8 neighbors')
        if self.n_dots > 1 and self.n_neighbors.min() < MIN_NEIGHBORS:
            sparse = numpy.flatnonzero(self.n_neighbors < MIN_NEIGHBORS)
            logger.warning('%d dots with fewer than %d neighbors (first: %d); '
                           'their regularizer is weak', len(sparse),
                           MIN_NEIGHBORS, sparse[0])

    @classmethod
    def from_scene(cls, scene):
        """Grid of the dots of a GelScene (window region excluded)."""
        return cls(scene.rest_centers(), scene.lattice_index(),
                   scene.grid.radius)

    @classmethod
    def from_spec(cls, spec):
        """Grid of every position of a GridSpec."""
        centers, rc = spec.full_centers()
        return cls(centers, rc, spec.radius)

    @property
    def n_dots(self):
        return len(self.rest)

    def reset(self):
        """Move every dot back to rest."""
        self.centers = self.rest.copy()
        return self

    def copy(self):
        other = DotGrid.__new__(DotGrid)
        other.__dict__.update(self.__dict__)
        other.centers = self.centers.copy()
        return other

    @property
    def dots(self):
        """DotState view of every dot."""
        out = []
        for i in range(self.n_dots):
            mask = self.edges[0] == i
            out.append(
                DotState(id=i,
                         c0=self.rest[i].copy(),
                         c=self.centers[i].copy(),
                         r=self.radius,
                         neighbors=[int(j) for j in self.edges[1][mask]],
                         rest_sq=[float(d) for d in self.edge_rest_sq[mask]]))
        return out


def assign_events(frame, centers, cfg=None):
    """Index of the dot each event belongs to, -1 for none.

    An event is attributed to its nearest center when its distance to that
    center lies strictly between the inner and outer ring radii.

    Parameters
    ----------
    frame : EventFrame or array_like, shape (n, 2)
        Events, or their (x, y) positions.
    centers : DotGrid or array_like, shape (n_dots, 2)
    cfg : TrackerConfig, optional

    Returns
    -------
    owner : ndarray of int, shape (n,)
    """
    cfg = cfg or TrackerConfig()
    xy = frame.xy if hasattr(frame, 'xy') else numpy.asarray(
        frame, dtype=numpy.float64).reshape(-1, 2)
    if isinstance(centers, DotGrid):
        centers = centers.centers
    centers = numpy.asarray(centers, dtype=numpy.float64)
    if not len(xy) or not len(centers):
        return numpy.full(len(xy), -1, dtype=numpy.int64)
    d2 = ((xy[:, None, :] - centers[None, :, :])**2).sum(axis=2)
    nearest = numpy.argmin(d2, axis=1)
    dist = numpy.sqrt(d2[numpy.arange(len(xy)), nearest])
    inside = (dist > cfg.inner) & (dist < cfg.outer)
    return numpy.where(inside, nearest, -1)


def event_gradient(rel, r):
    """Per-event gradient -2 (x - r x / ||x||) for dot-relative positions.

    Events at the center have no direction and get a zero gradient.
    """
    rel = numpy.asarray(rel, dtype=numpy.float64).reshape(-1, 2)
    norm = numpy.hypot(rel[:, 0], rel[:, 1])
    grad = numpy.zeros_like(rel)
    ok = norm > 0
    grad[ok] = -2.0 * (rel[ok] - r * rel[ok] / norm[ok, None])
    return grad, ok


def regularizer_gradient(c, neighbor_centers, rest_sq):
    """Sum over neighbors of 4 (c - c_j)(||c - c_j||^2 - d_j)."""
    c = numpy.asarray(c, dtype=numpy.float64)
    diff = c[None, :] - numpy.asarray(neighbor_centers,
                                      dtype=numpy.float64).reshape(-1, 2)
    sq = numpy.einsum('ij,ij->i', diff, diff)
    grad = numpy.zeros(2)
    for k in range(len(diff)):
        grad += 4.0 * diff[k] * (sq[k] - rest_sq[k])
    return grad


def update_dot(dot, events, neighbors, cfg=None):
    """New center of a single dot.

    Parameters
    ----------
    dot : DotState
    events : array_like, shape (n, 2)
        Absolute (x, y) positions of the events attributed to the dot.
    neighbors : sequence of DotState
        Neighbors, in the order of `dot.neighbors` / `dot.rest_sq`.
    cfg : TrackerConfig, optional

    Returns
    -------
    c : ndarray, shape (2,)
    """
    cfg = cfg or TrackerConfig()
    c = numpy.asarray(dot.c, dtype=numpy.float64)
    events = numpy.asarray(events, dtype=numpy.float64).reshape(-1, 2)
    if len(events) <= cfg.gate:
        return c.copy()
    grad, ok = event_gradient(events - c, dot.r)
    total = numpy.zeros(2)
    for g in grad[ok]:
        total += g
    if neighbors:
        reg = regularizer_gradient(c, [n.c for n in neighbors], dot.rest_sq)
        total = total + cfg.w_dist * (MAX_NEIGHBORS / len(neighbors)) * reg
    return c - cfg.alpha * total


class DotTracker(BaseEstimator):
    """Frame-by-frame tracker state for a DotGrid.

    Parameters are the grid and the TrackerConfig; `n_skipped_` and
    `last_t_i_` are estimated while tracking.

    All dots are updated from the previous frame's centers, so the result
    does not depend on the order in which dots are visited.
    """

    def __init__(self, grid, cfg=None):
        self.grid = grid
        self.cfg = cfg or TrackerConfig()
        self.n_skipped_ = 0
        self.last_t_i_ = None

    def step(self, frame):
        """Update every dot with one EventFrame, return the new centers."""
        if self.last_t_i_ is not None and frame.t_i <= self.last_t_i_:
            raise InvalidInputError('frame t_i=%d does not follow %d' %
                                    (frame.t_i, self.last_t_i_))
        self.last_t_i_ = frame.t_i
        grid, cfg = self.grid, self.cfg
        prev = grid.centers
        n = grid.n_dots
        owner = assign_events(frame, prev, cfg)
        hit = owner >= 0
        if not hit.any():
            return prev.copy()
        counts = numpy.bincount(owner[hit], minlength=n)
        active = counts > cfg.gate
        if not active.any():
            return prev.copy()
        xy = frame.xy[hit]
        idx = owner[hit]
        grad, ok = event_gradient(xy - prev[idx], grid.radius)
        self.n_skipped_ += int((~ok).sum())
        total = numpy.zeros((n, 2))
        numpy.add.at(total, idx[ok], grad[ok])
        if cfg.w_dist > 0 and grid.edges.shape[1]:
            i, j = grid.edges
            diff = prev[i] - prev[j]
            sq = numpy.einsum('ij,ij->i', diff, diff)
            reg = numpy.zeros((n, 2))
            numpy.add.at(reg, i, 4.0 * diff * (sq - grid.edge_rest_sq)[:, None])
            scale = numpy.zeros(n)
            has = grid.n_neighbors > 0
            scale[has] = MAX_NEIGHBORS / grid.n_neighbors[has]
            total = total + cfg.w_dist * scale[:, None] * reg
        new = prev.copy()
        new[active] = prev[active] - cfg.alpha * total[active]
        grid.centers = new
        return new.copy()


def track(frames, grid, cfg=None):
    """Track all dots over a frame sequence, starting at rest.

    Returns
    -------
    history : ndarray, shape (n_frames, n_dots, 2)
        Dot centers after each frame.

    Raises
    ------
    InvalidInputError
        If frame timestamps are not increasing.
    """
    frames = check_frames(frames)
    tracker = DotTracker(grid.reset(), cfg)
    history = numpy.empty((len(frames), grid.n_dots, 2))
    for k, frame in enumerate(frames):
        history[k] = tracker.step(frame)
    if tracker.n_skipped_:
        logger.debug('skipped %d events at a dot center', tracker.n_skipped_)
    return history


def endpoint_report(history, rest, radius=20.0):
    """Endpoint consistency of a trajectory that starts and ends unloaded.

    Returns
    -------
    success : bool
        Every dot ends within `radius` px of its rest position.
    lost : int
        Number of dots ending farther away.
    """
    final = numpy.asarray(history)[-1]
    dist = numpy.linalg.norm(final - numpy.asarray(rest), axis=1)
    lost = int((dist > radius).sum())
    return lost == 0, lost


def tracking_rmse(history, truth_centers):
    """Per-dot RMS distance between tracked and true centers."""
    err = numpy.asarray(history) - numpy.asarray(truth_centers)
    return numpy.sqrt((err**2).sum(axis=2).mean(axis=0))
