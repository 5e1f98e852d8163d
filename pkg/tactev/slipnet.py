# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Slip detection networks, labeled trajectories and training.

Per-dot models encode the history vector of every dot with a shared
two-layer encoder, place the embeddings on the 7 x 8 dot lattice and run two
convolutions, a (7, 6) same-padded one and a (3, 3) valid one (32 x 5 x 6
outputs), before three dense layers with a sigmoid head. The baseline model
is an image CNN on the event image of the last 10 frames, cropped to the
uncut gel.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy

from tactev import nnkit
from tactev.events import render_image
from tactev.exceptions import (ConfigError, InvalidInputError, TrainingError,
                               UnlabeledTrajectoryError)
from tactev.features import FeatureSeries, history_config, series_history
from tactev.gelsim import simulate
from tactev.labeling import label_scene
from tactev.tracker import DotGrid, TrackerConfig, track

logger = logging.getLogger(__name__)

__all__ = [
    'SlipModelConfig',
    'SLIP_CONFIGS',
    'BASELINE',
    'slip_config',
    'build_model',
    'SlipModel',
    'LabeledTrajectory',
    'labeled_trajectory',
    'build_dataset',
    'write_labeled',
    'read_labeled',
    'rotate_lattice',
    'shift_labels',
    'cut_tick',
    'SlipPools',
    'build_pools',
    'TrainConfig',
    'train',
]

LATTICE = (7, 8)
BASELINE = 'baseline image hist 10'
# (x0, y0, x1, y1) of the uncut gel fed to the baseline model, 440 x 385
IMAGE_CROP = (70, 47, 510, 432)
IMAGE_HISTORY = 10
EVENT_THRESHOLD = 25
PREDICTION_SHIFTS = (0, 10, 20)

# name: (l_fc1, l_fc2)
_PER_DOT = {
    'no hist': (10, 4),
    'hist 10': (12, 4),
    'events only hist 10': (8, 4),
    'disp only hist 10': (8, 4),
    'hist 20': (20, 8),
    'hist 50 down 5': (12, 4),
    'fast slow hist 50': (15, 8),
}


@dataclass(frozen=True)
class SlipModelConfig:
    """One row of the model table, plus the prediction shift.

    Attributes
    ----------
    name : str
    l_i, l_fc1, l_fc2 : int
        Per-dot input and encoder sizes (0 for the image baseline).
    conv1, conv2 : (kh, kw, channels)
    l_fc3, l_fc4 : int
    shift_ms : int
        Prediction horizon, labels are shifted this many ticks earlier.
    threshold : float
        Decision threshold, on the 0.025 grid.
    """
    name: str
    l_i: int
    l_fc1: int
    l_fc2: int
    conv1: Tuple[int, int, int] = (7, 6, 16)
    conv2: Tuple[int, int, int] = (3, 3, 32)
    l_fc3: int = 32
    l_fc4: int = 10
    shift_ms: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.shift_ms not in PREDICTION_SHIFTS:
            raise ConfigError('prediction shift must be one of %r (got %r)' %
                              (PREDICTION_SHIFTS, self.shift_ms))
        if not 0 <= self.threshold <= 1 or not math.isclose(
                self.threshold * 40, round(self.threshold * 40)):
            raise ConfigError('threshold %r is not on the 0.025 grid' %
                              self.threshold)

    @property
    def is_image(self):
        return self.name == BASELINE

    @property
    def history(self):
        """Ticks of history the model reads, current tick included."""
        if self.is_image:
            return IMAGE_HISTORY
        return history_config(self.name).window

    @property
    def cut_ms(self):
        """Training trajectories end this long after the first slip."""
        if self.history <= 10:
            return 15
        if self.history <= 20:
            return 20
        return 50

    @property
    def label(self):
        if self.shift_ms:
            return '%s pred %d' % (self.name, self.shift_ms)
        return self.name


SLIP_CONFIGS = {
    name: SlipModelConfig(name, history_config(name).length, fc1, fc2)
    for name, (fc1, fc2) in _PER_DOT.items()
}
SLIP_CONFIGS[BASELINE] = SlipModelConfig(BASELINE, 0, 0, 0)


def slip_config(name, shift_ms=0, threshold=0.5):
    """SlipModelConfig by name.

    Raises
    ------
    ConfigError
        Unknown configuration name or prediction shift.
    """
    if isinstance(name, SlipModelConfig):
        return name
    try:
        base = SLIP_CONFIGS[name]
    except KeyError:
        raise ConfigError('unknown slip model configuration %r' % (name, ))
    return SlipModelConfig(base.name, base.l_i, base.l_fc1, base.l_fc2,
                           base.conv1, base.conv2, base.l_fc3, base.l_fc4,
                           int(shift_ms), float(threshold))


def _image_layers():
    x0, y0, x1, y1 = IMAGE_CROP
    layers = []
    channels = 1
    for out, pool in zip((15, 20, 25, 32), ((3, 3), (3, 3), (4, 4), (9, 7))):
        layers += [
            nnkit.Conv2D(channels, out, (5, 5), 'same'),
            nnkit.ReLU(),
            nnkit.MaxPool2D(pool)
        ]
        channels = out
    layers += [
        nnkit.Flatten(),
        nnkit.Dense(32, 10),
        nnkit.ReLU(),
        nnkit.Dense(10, 1),
        nnkit.Sigmoid()
    ]
    return layers, (1, y1 - y0, x1 - x0)


def build_model(config, cells=None, lattice=LATTICE, seed=0):
    """Untrained network for a configuration.

    Parameters
    ----------
    config : str or SlipModelConfig
    cells : sequence of int, optional
        Flat lattice index row * cols + col of each dot, default row-major
        over the full lattice.
    lattice : (rows, cols)

    Returns
    -------
    Network
        Input (n_dots, l_i), or (1, 385, 440) for the image baseline;
        output (1,) in (0, 1).
    """
    cfg = slip_config(config)
    meta = {'slip_config': cfg.name, 'shift_ms': cfg.shift_ms}
    if cfg.is_image:
        layers, shape = _image_layers()
        return nnkit.Network(layers, shape, seed=seed, meta=meta)
    rows, cols = lattice
    if cells is None:
        cells = range(rows * cols)
    cells = list(cells)
    kh1, kw1, c1 = cfg.conv1
    kh2, kw2, c2 = cfg.conv2
    head = nnkit.Conv2D(c1, c2, (kh2, kw2), 'valid')
    flat = c2 * (rows - kh2 + 1) * (cols - kw2 + 1)
    layers = [
        nnkit.Dense(cfg.l_i, cfg.l_fc1),
        nnkit.ReLU(),
        nnkit.Dense(cfg.l_fc1, cfg.l_fc2),
        nnkit.ReLU(),
        nnkit.ToLattice(cells, lattice),
        nnkit.Conv2D(cfg.l_fc2, c1, (kh1, kw1), 'same'),
        nnkit.ReLU(),
        head,
        nnkit.ReLU(),
        nnkit.Flatten(),
        nnkit.Dense(flat, cfg.l_fc3),
        nnkit.ReLU(),
        nnkit.Dense(cfg.l_fc3, cfg.l_fc4),
        nnkit.ReLU(),
        nnkit.Dense(cfg.l_fc4, 1),
        nnkit.Sigmoid(),
    ]
    meta['cells'] = cells
    return nnkit.Network(layers, (len(cells), cfg.l_i), seed=seed, meta=meta)


@dataclass
class LabeledTrajectory:
    """Features, labels and first slip tick of one recording.

    Attributes
    ----------
    name, object_id : str
    series : FeatureSeries
    labels : ndarray of bool, shape (n_ticks,)
    first_slip : int or None
        t^c_s0, tick index of the first labeled slip.
    frames : list of EventFrame, optional
        Kept for the image baseline.
    truth_slip : ndarray of bool, optional
        Simulator slip flags, for labeler agreement.
    """
    name: str
    object_id: Optional[str]
    series: FeatureSeries
    labels: numpy.ndarray
    first_slip: Optional[int]
    frames: Optional[list] = None
    truth_slip: Optional[numpy.ndarray] = None

    def __post_init__(self):
        self.labels = numpy.asarray(self.labels, dtype=bool)
        if len(self.labels) != len(self.series):
            raise InvalidInputError('%s: %d labels for %d ticks' %
                                    (self.name, len(self.labels),
                                     len(self.series)))

    def __len__(self):
        return len(self.labels)

    @property
    def slipping(self):
        return self.first_slip is not None


def check_labeled(trajectory):
    """
    Raises
    ------
    UnlabeledTrajectoryError
        If the trajectory carries no labels.
    """
    labels = getattr(trajectory, 'labels', None)
    if labels is None or len(labels) == 0:
        raise UnlabeledTrajectoryError(
            '%s has no slip labels' % getattr(trajectory, 'name', trajectory))
    return trajectory


def labeled_trajectory(scene,
                       tracker_cfg=None,
                       seed=None,
                       keep_frames=False,
                       **label_kwargs):
    """Simulate, track, extract features and label one scene."""
    frames, truth = simulate(scene, seed=seed)
    grid = DotGrid.from_scene(scene)
    history = track(frames, grid, tracker_cfg or TrackerConfig())
    series = FeatureSeries.from_tracking(frames, history, grid)
    labels = label_scene(scene, frames, **label_kwargs)
    return LabeledTrajectory(scene.name,
                             scene.object_id,
                             series,
                             labels.labels,
                             labels.first_slip,
                             frames=frames if keep_frames else None,
                             truth_slip=truth.slip)


def build_dataset(objects, n_slip, n_hold, seed=0, duration_ms=400,
                  **kwargs):
    """Labeled trajectories of slip and hold scenes for several objects."""
    from tactev.scenes import slip_scenes
    out = []
    for obj in objects:
        scenes = (slip_scenes(obj, n_slip, seed=seed, duration_ms=duration_ms)
                  + slip_scenes(obj, n_hold, seed=seed, slip=False,
                                duration_ms=duration_ms))
        for scene in scenes:
            out.append(labeled_trajectory(scene, **kwargs))
        logger.info('object %s: %d trajectories',
                    getattr(obj, 'name', obj), len(scenes))
    return out


LABEL_COLUMNS = ('tick', 't_i', 'slip', 'first_slip')


def write_labeled(trajectory, scene, out_dir):
    """Write one labeled trajectory as <name>.evtc, <name>.labels.csv and
    <name>.yaml (the scene, which defines the dot grid).

    The labels CSV has columns tick, t_i, slip, first_slip (-1 without
    slip) and, when known, the simulator slip flags.
    """
    import pandas
    from tactev.codec import write_evtc
    from tactev.data import write_csv
    from tactev.scenes import dump_scene
    if trajectory.frames is None:
        raise InvalidInputError('%s: frames are needed to write a dataset' %
                                trajectory.name)
    base = os.path.join(out_dir, trajectory.name)
    write_evtc(base + '.evtc', trajectory.frames)
    labels = pandas.DataFrame({
        'tick': numpy.arange(len(trajectory)),
        't_i': trajectory.series.t_i,
        'slip': trajectory.labels.astype(int),
        'first_slip': (-1 if trajectory.first_slip is None else
                       trajectory.first_slip),
    })
    if trajectory.truth_slip is not None:
        labels['truth_slip'] = numpy.asarray(trajectory.truth_slip, dtype=int)
    write_csv(labels, base + '.labels.csv')
    dump_scene(scene, base + '.yaml')
    return base


def read_labeled(out_dir, tracker_cfg=None, keep_frames=False):
    """Labeled trajectories of a directory written by write_labeled, sorted
    by name.

    Returns
    -------
    trajectories : list of LabeledTrajectory
    scenes : list of GelScene
    """
    from tactev.codec import read_evtc
    from tactev.data import read_csv
    from tactev.scenes import load_scene
    if not os.path.isdir(out_dir):
        raise InvalidInputError('no such dataset directory: %s' % out_dir)
    names = sorted(f[:-len('.labels.csv')] for f in os.listdir(out_dir)
                   if f.endswith('.labels.csv'))
    if not names:
        raise InvalidInputError('%s holds no labeled trajectories' % out_dir)
    trajectories, scenes = [], []
    for name in names:
        base = os.path.join(out_dir, name)
        scene = load_scene(base + '.yaml')
        frames = read_evtc(base + '.evtc')
        labels = read_csv(base + '.labels.csv', LABEL_COLUMNS)
        grid = DotGrid.from_scene(scene)
        history = track(frames, grid, tracker_cfg or TrackerConfig())
        series = FeatureSeries.from_tracking(frames, history, grid)
        first = int(labels['first_slip'].iloc[0])
        truth = (labels['truth_slip'].to_numpy().astype(bool)
                 if 'truth_slip' in labels else None)
        trajectories.append(
            LabeledTrajectory(name,
                              scene.object_id,
                              series,
                              labels['slip'].to_numpy().astype(bool),
                              None if first < 0 else first,
                              frames=frames if keep_frames else None,
                              truth_slip=truth))
        scenes.append(scene)
    logger.info('read %d labeled trajectories from %s', len(names), out_dir)
    return trajectories, scenes


def rotate_lattice(a, k):
    """Rotate the last two axes by k * 90 degrees, keeping their shape.

    Odd rotations of a non-square lattice are center-cropped to the common
    square and zero-padded back (at the end of the longer axis).
    """
    a = numpy.asarray(a)
    k %= 4
    r = numpy.rot90(a, k, axes=(-2, -1))
    if r.shape == a.shape:
        return r.copy()
    h, w = a.shape[-2:]
    rh, rw = r.shape[-2:]
    top = (rh - min(h, rh)) // 2
    left = (rw - min(w, rw)) // 2
    r = r[..., top:top + min(h, rh), left:left + min(w, rw)]
    pad = [(0, 0)] * (a.ndim - 2) + [(0, h - r.shape[-2]),
                                      (0, w - r.shape[-1])]
    return numpy.pad(r, pad)


def rotate_features(x, k, cells, lattice=LATTICE):
    """Rotate per-dot inputs (..., n_dots, l) on the dot lattice."""
    x = numpy.asarray(x)
    rows, cols = lattice
    grid = numpy.zeros(x.shape[:-2] + (x.shape[-1], rows * cols))
    grid[..., cells] = numpy.swapaxes(x, -1, -2)
    grid = grid.reshape(grid.shape[:-1] + (rows, cols))
    rotated = rotate_lattice(grid, k).reshape(grid.shape[:-2] + (-1, ))
    return numpy.swapaxes(rotated[..., cells], -1, -2)


def shift_labels(labels, shift):
    """Labels moved `shift` ticks earlier; the tail repeats the last label."""
    labels = numpy.asarray(labels, dtype=bool)
    if shift <= 0:
        return labels.copy()
    if shift >= len(labels):
        return numpy.full_like(labels, labels[-1] if len(labels) else False)
    return numpy.concatenate(
        [labels[shift:], numpy.full(shift, labels[-1], dtype=bool)])


def cut_tick(trajectory, after_ms, shift_ms=0):
    """Last tick (exclusive) kept: after_ms past the (shifted) first slip."""
    if trajectory.first_slip is None:
        return len(trajectory)
    first = max(0, trajectory.first_slip - shift_ms)
    return min(len(trajectory), first + after_ms + 1)


def _image_input(frames, ticks):
    x0, y0, x1, y1 = IMAGE_CROP
    out = numpy.empty((len(ticks), 1, y1 - y0, x1 - x0))
    for n, k in enumerate(ticks):
        image = render_image(frames[:k + 1], window=IMAGE_HISTORY)
        out[n, 0] = image.values[y0:y1, x0:x1]
    return out


def model_inputs(trajectory, config, ticks):
    """Network inputs for the given tick indices of a trajectory."""
    cfg = slip_config(config)
    ticks = numpy.asarray(ticks, dtype=numpy.int64)
    if cfg.is_image:
        if trajectory.frames is None:
            raise InvalidInputError('%s: the image model needs the event '
                                    'frames' % trajectory.name)
        return _image_input(trajectory.frames, ticks)
    return series_history(trajectory.series, cfg.name, ticks)


class SlipModel:
    """A slip network with its configuration and decision threshold."""

    def __init__(self, config, network=None, threshold=None, seed=0):
        self.config = slip_config(config)
        self.network = network or build_model(self.config, seed=seed)
        self.threshold = (self.config.threshold
                          if threshold is None else float(threshold))

    @property
    def history(self):
        return self.config.history

    def predict_proba(self, trajectory, batch_size=1):
        """Slip probability at every tick; 0 before the history is full.

        With batch_size=1 every tick is evaluated on its own, exactly as the
        streaming detector does.
        """
        n = len(trajectory)
        out = numpy.zeros(n)
        ticks = numpy.arange(self.history - 1, n)
        batch_size = batch_size or len(ticks) or 1
        for start in range(0, len(ticks), batch_size):
            chunk = ticks[start:start + batch_size]
            x = model_inputs(trajectory, self.config, chunk)
            out[chunk] = nnkit.forward(self.network, x)[:, 0]
        return out

    def predict(self, trajectory, threshold=None, batch_size=1):
        t = self.threshold if threshold is None else threshold
        return self.predict_proba(trajectory, batch_size) > t

    def save(self, path):
        self.network.meta.update({
            'slip_config': self.config.name,
            'shift_ms': self.config.shift_ms,
            'threshold': self.threshold,
        })
        nnkit.save_checkpoint(self.network, path)

    @classmethod
    def load(cls, path):
        net = nnkit.load_checkpoint(path)
        try:
            name = net.meta['slip_config']
        except KeyError:
            raise ConfigError('%s is not a slip-model checkpoint' % path)
        cfg = slip_config(name, net.meta.get('shift_ms', 0))
        return cls(cfg, net, threshold=net.meta.get('threshold', 0.5))


@dataclass
class SlipPools:
    """Training samples as (trajectory index, tick, label) in three pools:
    slip, non-slip with more than 25 events, and the other non-slip ticks.
    """
    slip: numpy.ndarray
    above: numpy.ndarray
    below: numpy.ndarray

    @property
    def sizes(self):
        return len(self.slip), len(self.above), len(self.below)


def build_pools(trajectories, config, event_threshold=EVENT_THRESHOLD):
    """Split the (cut, label-shifted) training ticks into the three pools.

    Each row is (trajectory index, tick, label).
    """
    cfg = slip_config(config)
    rows = []
    for i, traj in enumerate(trajectories):
        check_labeled(traj)
        labels = shift_labels(traj.labels, cfg.shift_ms)
        end = cut_tick(traj, cfg.cut_ms, cfg.shift_ms)
        ticks = numpy.arange(cfg.history - 1, end)
        if not len(ticks):
            continue
        rows.append(
            numpy.column_stack(
                (numpy.full(len(ticks), i), ticks, labels[ticks].astype(int),
                 traj.series.n_events[ticks] > event_threshold)))
    if not rows:
        raise TrainingError('no training samples')
    rows = numpy.concatenate(rows)
    slip = rows[:, 2] == 1
    above = ~slip & (rows[:, 3] == 1)
    below = ~slip & ~above
    pools = SlipPools(rows[slip, :3], rows[above, :3], rows[below, :3])
    logger.info('%s pools: %d slip, %d above, %d below', cfg.label,
                *pools.sizes)
    return pools


@dataclass
class TrainConfig:
    """Training protocol."""
    epochs: int = 70
    lr: float = 0.001
    batch: Tuple[int, int, int] = (32, 32, 8)
    rotate_p: float = 0.5
    checkpoint_every: int = 10
    seed: int = 0

    def batches_per_epoch(self, n_above):
        return math.ceil(n_above / self.batch[1])


class _Cycler:
    """Endless reshuffled pass over the rows of a pool."""

    def __init__(self, rows, rng):
        self.rows = rows
        self.rng = rng
        self.order = rng.permutation(len(rows))
        self.pos = 0

    def take(self, n):
        out = []
        while n > 0:
            if self.pos == len(self.order):
                self.order = self.rng.permutation(len(self.rows))
                self.pos = 0
            k = min(n, len(self.order) - self.pos)
            out.append(self.rows[self.order[self.pos:self.pos + k]])
            self.pos += k
            n -= k
        return numpy.concatenate(out) if out else self.rows[:0]


def _gather(trajectories, rows, cfg):
    x = numpy.empty((len(rows), ) + _input_shape(trajectories, cfg))
    for i in numpy.unique(rows[:, 0]):
        sel = rows[:, 0] == i
        x[sel] = model_inputs(trajectories[i], cfg, rows[sel, 1])
    return x


def _input_shape(trajectories, cfg):
    if cfg.is_image:
        x0, y0, x1, y1 = IMAGE_CROP
        return (1, y1 - y0, x1 - x0)
    return (trajectories[0].series.n_dots, cfg.l_i)


def _augment(x, rng, p, cells):
    for n in numpy.flatnonzero(rng.random(len(x)) < p):
        k = int(rng.integers(1, 4))
        if cells is None:
            x[n] = rotate_lattice(x[n], k)
        else:
            x[n] = rotate_features(x[n], k, cells)
    return x


@dataclass
class Checkpoint:
    epoch: int
    params: List[numpy.ndarray] = field(repr=False)


def train(model, trajectories, train_cfg=None, checkpoint_dir=None):
    """Train a SlipModel with balanced batches.

    Every batch draws 32 slip, 32 non-slip-above and 8 non-slip-below
    samples; an epoch is one pass over the non-slip-above pool. Samples are
    rotated with probability 0.5 by 90, 180 or 270 degrees.

    Returns
    -------
    list of Checkpoint
        Parameters every `checkpoint_every` epochs. With `checkpoint_dir`
        they are also written as network checkpoints.

    Raises
    ------
    TrainingError
        If a pool is empty or the loss becomes non-finite.
    """
    tc = train_cfg or TrainConfig()
    cfg = model.config
    pools = build_pools(trajectories, cfg)
    for name, rows in zip(('slip', 'non-slip above', 'non-slip below'),
                          (pools.slip, pools.above, pools.below)):
        if not len(rows):
            raise TrainingError('empty %s pool' % name)
    rng = numpy.random.default_rng(tc.seed)
    net = model.network
    model.network.reseed(tc.seed)
    cells = None if cfg.is_image else net.meta.get('cells')
    slip, below = _Cycler(pools.slip, rng), _Cycler(pools.below, rng)
    n_batches = tc.batches_per_epoch(len(pools.above))
    loss = nnkit.BCELoss()
    checkpoints = []
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(pools.above))
        total = 0.0
        net.training = True
        for b in range(n_batches):
            above = pools.above[order[b * tc.batch[1]:(b + 1) * tc.batch[1]]]
            rows = numpy.concatenate(
                [slip.take(tc.batch[0]), above,
                 below.take(tc.batch[2])])
            x = _augment(_gather(trajectories, rows, cfg), rng, tc.rotate_p,
                         cells)
            y = rows[:, 2:3].astype(numpy.float64)
            value, grads = nnkit.backward(net, x, y, loss)
            if not numpy.isfinite(value):
                raise TrainingError('non-finite loss at epoch %d' % epoch)
            nnkit.sgd_step(net, grads, tc.lr)
            total += value
        net.training = False
        logger.info('%s epoch %d: loss %.5f', cfg.label, epoch,
                    total / n_batches)
        if epoch % tc.checkpoint_every == 0 or epoch == tc.epochs:
            checkpoints.append(Checkpoint(epoch, net.copy_params()))
            if checkpoint_dir:
                path = os.path.join(
                    checkpoint_dir, '%s-seed%d-epoch%d.tnnk' %
                    (cfg.label.replace(' ', '_'), tc.seed, epoch))
                model.save(path)
    return checkpoints
