# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Closed-loop grasp control on slip feedback, with a 1-D gripper model.

Control law, every controller tick (500 Hz)::

    u_c = K_p * (x_e + u_ff),   x_e = x_ref - x_g  (0 before x_ref is set)

Lift: u_ff += -1 on slip, +0.01 otherwise, clipped to [-5, 0]; on a
slip -> no-slip transition x_ref is latched to the current width (later
latches only tighten). Balance: u_ff += -2 on slip, +0.01 otherwise,
clipped to [-5, 2] until the first slip, which latches x_ref = x_g(t - 1)
and lowers the upper bound to 0.

Physics, every detector tick (1 kHz): normal force N = k_c * penetration,
friction capacity 2 * mu * N. An object whose load exceeds the capacity
slides down at `slip_rate` * (load - capacity) mm per tick, or stays on the
table while the fingers slide up along it. The commanded u_c moves the
fingers at `width_rate` mm per unit per controller tick.
"""
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy
import pandas

from tactev.exceptions import (ConfigError, DetectorStallError,
                               InvalidInputError)
from tactev.slipeval import CounterReader, SlipCounter, SlipStream

logger = logging.getLogger(__name__)

__all__ = [
    'GraspSimObject',
    'GRASP_OBJECTS',
    'GraspConfig',
    'GripperState',
    'lift_step',
    'balance_step',
    'PhysicsSnapshot',
    'GraspPhysics',
    'OracleDetector',
    'TransducedSlipDetector',
    'Episode',
    'run_episode',
    'PERTURBATIONS',
]

G_N_PER_G = 9.81e-3
APPROACH, LIFT, BALANCE = 'approach', 'lift', 'balance'
PERTURBATIONS = {'none': 0.0, '20g': 20.0, '100g': 100.0}


@dataclass
class GraspSimObject:
    """A graspable object.

    Attributes
    ----------
    mass : float
        Grams.
    friction : float
        Friction coefficient mu.
    stiffness : float
        Contact stiffness k_c, N/mm.
    width : float
        Object width at the grasp, mm.
    look : str
        Slip-object look used by the full-stack detector.
    load_profile : list of (t_ms, extra grams)
        Extra loads from the given episode time on.
    """
    name: str
    mass: float
    friction: float
    stiffness: float = 5.0
    width: float = 60.0
    look: str = 'bottle'
    load_profile: List[Tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.mass <= 0:
            raise InvalidInputError('%s: mass must be > 0' % self.name)
        if self.friction <= 0:
            raise InvalidInputError('%s: friction must be > 0' % self.name)
        if self.stiffness <= 0 or self.width <= 0:
            raise InvalidInputError('%s: stiffness and width must be > 0' %
                                    self.name)

    def mass_at(self, t_ms):
        return self.mass + sum(g for t, g in self.load_profile if t_ms >= t)

    def load(self, t_ms):
        """Gravity load in N."""
        return self.mass_at(t_ms) * G_N_PER_G


GRASP_OBJECTS = [
    GraspSimObject('bottle-empty', 248.0, 0.6, width=65.0, look='bottle'),
    GraspSimObject('bottle-filled', 550.0, 0.6, width=65.0, look='bottle'),
    GraspSimObject('can', 350.0, 0.5, width=66.0, look='can'),
    GraspSimObject('box', 180.0, 0.7, width=50.0, look='box'),
    GraspSimObject('cup', 220.0, 0.55, width=80.0, look='cup'),
    GraspSimObject('jar', 450.0, 0.5, width=70.0, look='jar'),
    GraspSimObject('sponge', 150.0, 0.9, width=45.0, stiffness=2.0,
                   look='sponge'),
    GraspSimObject('tube', 300.0, 0.65, width=40.0, look='tube'),
    GraspSimObject('brick', 500.0, 0.8, width=55.0, look='brick'),
    GraspSimObject('ball', 270.0, 0.45, width=68.0, look='ball'),
]


def grasp_object(name):
    """GraspSimObject by name.

    Raises
    ------
    ConfigError
    """
    for obj in GRASP_OBJECTS:
        if obj.name == name:
            return dataclasses.replace(obj, load_profile=[])
    raise ConfigError('unknown grasp object %r' % (name, ))


@dataclass
class GraspConfig:
    """Controller gains, phase durations and plant constants."""
    k_p: float = 50.0
    lift_slip: float = -1.0
    lift_hold: float = 0.01
    lift_clip: Tuple[float, float] = (-5.0, 0.0)
    balance_slip: float = -2.0
    balance_hold: float = 0.01
    balance_clip: Tuple[float, float] = (-5.0, 2.0)
    approach_u_ff: float = -2.0
    contact_ticks: int = 5
    lift_s: float = 10.0
    balance_s: float = 20.0
    lift_mm: float = 100.0
    width_rate: float = 0.0002
    slip_rate: float = 0.1
    success_mm: float = 80.0
    finger_mm: float = 40.0
    start_gap: float = 2.0
    max_approach_s: float = 5.0
    control_every: int = 2
    stall_ms: float = 50.0
    open_loop: bool = False
    perturb_g: float = 0.0
    perturb_s: float = 5.0

    def __post_init__(self):
        if self.k_p <= 0:
            raise ConfigError('K_p must be > 0 (got %r)' % self.k_p)
        if self.control_every < 1:
            raise ConfigError('control_every must be >= 1')


@dataclass
class GripperState:
    """Controller state.

    Attributes
    ----------
    x_g : float
        Opening width, mm.
    x_prev : float
        Opening width at the previous controller tick.
    x_ref : float or None
        Reference width, None until latched.
    u_ff : float
    phase : str
    clip : (float, float)
        Active bounds of u_ff.
    k_p : float
    slipping : bool
        Slip seen at the previous controller tick.
    balance_slip : bool
        A slip has been seen during balance.
    """
    x_g: float
    x_prev: float
    x_ref: Optional[float] = None
    u_ff: float = 0.0
    phase: str = APPROACH
    clip: Tuple[float, float] = (-5.0, 0.0)
    k_p: float = 50.0
    slipping: bool = False
    balance_slip: bool = False

    def __post_init__(self):
        if self.k_p <= 0:
            raise InvalidInputError('K_p must be > 0')
        lo, hi = self.clip
        if not lo <= self.u_ff <= hi:
            raise InvalidInputError('u_ff=%g outside [%g, %g]' %
                                    (self.u_ff, lo, hi))

    @property
    def x_e(self):
        return 0.0 if self.x_ref is None else self.x_ref - self.x_g

    def command(self):
        """u_c = K_p (x_e + u_ff)."""
        return self.k_p * (self.x_e + self.u_ff)


def lift_step(state, delta, cfg=None):
    """Lift-phase update for a slip-counter increment `delta`.

    Returns
    -------
    state : GripperState
    u_c : float
    """
    cfg = cfg or GraspConfig()
    slip = delta > 0
    lo, hi = cfg.lift_clip
    u_ff = float(numpy.clip(
        state.u_ff + (cfg.lift_slip if slip else cfg.lift_hold), lo, hi))
    x_ref = state.x_ref
    if state.slipping and not slip and (x_ref is None or state.x_g < x_ref):
        x_ref = state.x_g
    new = dataclasses.replace(state,
                              u_ff=u_ff,
                              x_ref=x_ref,
                              phase=LIFT,
                              clip=(lo, hi),
                              slipping=slip)
    return new, new.command()


def balance_step(state, delta, cfg=None):
    """Balance-phase update for a slip-counter increment `delta`."""
    cfg = cfg or GraspConfig()
    slip = delta > 0
    x_ref = state.x_ref
    first = slip and not state.balance_slip
    lo, hi = state.clip if state.phase == BALANCE else cfg.balance_clip
    if first:
        x_ref = state.x_prev
        hi = min(hi, 0.0)
    u_ff = float(numpy.clip(
        state.u_ff + (cfg.balance_slip if slip else cfg.balance_hold), lo,
        hi))
    new = dataclasses.replace(state,
                              u_ff=u_ff,
                              x_ref=x_ref,
                              phase=BALANCE,
                              clip=(lo, hi),
                              slipping=slip,
                              balance_slip=state.balance_slip or slip)
    return new, new.command()


@dataclass(frozen=True)
class PhysicsSnapshot:
    """Plant state after one tick."""
    tick: int
    normal: float
    capacity: float
    load: float
    slip_mm: float
    slipping: bool
    z_gripper: float
    z_object: float
    lost: bool

    @property
    def transmitted(self):
        """Tangential force carried by the contact, N."""
        return min(self.load, self.capacity)


class GraspPhysics:
    """1-D gripper and object: width and vertical coordinates."""

    def __init__(self, obj, cfg=None):
        self.obj = obj
        self.cfg = cfg or GraspConfig()
        self.z_g = 0.0
        self.z_o = 0.0
        self.lost = False
        self.travel = 0.0
        self.tick_count = 0

    def penetration(self, x_g):
        return max(0.0, self.obj.width - x_g)

    def step(self, x_g, lift_mm=0.0):
        """Advance one tick with the fingers at x_g, raised by lift_mm."""
        t_ms = float(self.tick_count)
        self.tick_count += 1
        normal = 0.0 if self.lost else self.obj.stiffness * self.penetration(
            x_g)
        capacity = 2.0 * self.obj.friction * normal
        load = self.obj.load(t_ms)
        before = self.z_g - self.z_o
        self.z_g += lift_mm
        if capacity >= load and not self.lost:
            self.z_o = max(0.0, self.z_o + lift_mm)
        else:
            self.z_o = max(0.0, self.z_o + lift_mm - self.cfg.slip_rate *
                           (load - capacity))
        rel = (self.z_g - self.z_o) - before
        self.travel += abs(rel)
        if self.z_g - self.z_o > self.cfg.finger_mm and not self.lost:
            self.lost = True
            logger.debug('%s lost at tick %d', self.obj.name, self.tick_count)
        return PhysicsSnapshot(self.tick_count, normal, capacity, load, rel,
                               abs(rel) > 1e-9, self.z_g, self.z_o,
                               self.lost)


class OracleDetector:
    """Ground-truth slip flag of the plant."""

    def __init__(self, counter):
        self.counter = counter

    def step(self, snapshot):
        if snapshot.slipping:
            self.counter.increment()
        return snapshot.slipping


class TransducedSlipDetector:
    """Full-stack detector: plant state -> gel deformation -> events ->
    tracker -> features -> slip model.

    Linear transduction, first-order filtered with `tau_ms`:

    * shear (px, along +y) = shear_gain * transmitted force, relaxing to
      20 % while the object slides;
    * press (px) = press_gain * normal force, at most 1.5;
    * periphery release = 0.5 once the transmitted force exceeds 80 % of
      the capacity (incipient slip);
    * the object texture in the window moves px_per_mm * slip.
    """

    def __init__(self,
                 model,
                 counter,
                 look='bottle',
                 seed=0,
                 shear_gain=0.6,
                 press_gain=0.1,
                 px_per_mm=10.0,
                 tau_ms=5.0,
                 max_shear=4.0,
                 budget_ms=1.0):
        from tactev.gelsim import GelStream
        from tactev.scenes import slip_scenes
        from tactev.tracker import DotGrid
        self.layout = slip_scenes(look, 1, seed=seed)[0]
        self.gel = GelStream(self.layout, seed=seed)
        self.stream = SlipStream(model,
                                 DotGrid.from_scene(self.layout),
                                 counter=counter,
                                 budget_ms=budget_ms)
        self.shear_gain = shear_gain
        self.press_gain = press_gain
        self.px_per_mm = px_per_mm
        self.alpha = 1.0 / max(tau_ms, 1.0)
        self.max_shear = max_shear
        self.shear = 0.0
        self.press = 0.0
        self.relax = 0.0
        self.texture = 0.0

    def gel_state(self, snapshot):
        """Filtered (shear, press, relax) after one plant tick."""
        target = min(self.shear_gain * snapshot.transmitted, self.max_shear)
        if snapshot.slipping:
            target = 0.2 * min(target, self.shear)
        press = min(self.press_gain * snapshot.normal, 1.5)
        relax = 0.0
        if snapshot.capacity > 0 and snapshot.transmitted > (
                0.8 * snapshot.capacity):
            relax = 0.5
        a = self.alpha
        self.shear += a * (target - self.shear)
        self.press += a * (press - self.press)
        self.relax += a * (relax - self.relax)
        self.texture += self.px_per_mm * snapshot.slip_mm
        return self.shear, self.press, self.relax

    def step(self, snapshot):
        shear, press, relax = self.gel_state(snapshot)
        disp = self.layout.deform([(0.0, shear)], [press], [relax])[0]
        frame = self.gel.step(disp, (0.0, self.texture))
        flag, _ = self.stream.step(frame)
        return flag


def make_detector(detector, counter, look='bottle', seed=0):
    """Detector from 'oracle', a SlipModel or a 'model:<checkpoint>' spec."""
    if isinstance(detector, str):
        if detector == 'oracle':
            return OracleDetector(counter)
        if detector.startswith('model:'):
            from tactev.slipnet import SlipModel
            return TransducedSlipDetector(SlipModel.load(detector[6:]),
                                          counter,
                                          look=look,
                                          seed=seed)
        raise ConfigError('unknown detector %r' % detector)
    if hasattr(detector, 'network'):
        return TransducedSlipDetector(detector, counter, look=look, seed=seed)
    return detector


@dataclass
class Episode:
    """Controller log (one row per controller tick) and metrics."""
    log: pandas.DataFrame
    metrics: dict


def _metrics(log, contact_width, cfg, physics, lift_end, lost_at_lift):
    lift = log[log['phase'] == LIFT]
    balance = log[log['phase'] == BALANCE]
    end_lift_width = lift['x_g'].iloc[-1] if len(lift) else contact_width
    end_width = log['x_g'].iloc[-1]
    z_lift = lift['z_object'].iloc[-1] if len(lift) else 0.0
    z_end = log['z_object'].iloc[-1]
    lift_ok = bool(z_lift >= cfg.success_mm and not lost_at_lift)
    balance_ok = bool(lift_ok and z_end >= cfg.success_mm
                      and not physics.lost)
    peak = float(lift['normal'].max()) if len(lift) else 0.0
    mean_balance = float(balance['normal'].mean()) if len(balance) else 0.0
    return {
        'lift_success': lift_ok,
        'balance_success': balance_ok,
        'success': lift_ok and balance_ok,
        'contact_width': contact_width,
        'width_change_lift': float(end_lift_width - contact_width),
        'width_change_balance': float(end_width - end_lift_width),
        'width_change': float(end_width - contact_width),
        'travel_mm': physics.travel,
        'peak_lift_force': peak,
        'mean_balance_force': mean_balance,
        'effort_reduction': (1.0 - mean_balance / peak) if peak > 0 else 0.0,
        'n_slip_ticks': int(log['slip'].sum()),
        'lift_end_tick': lift_end,
    }


def run_episode(obj, detector='oracle', cfg=None, seed=0):
    """Approach, lift and balance one object.

    Detector (1 kHz) and controller (every `control_every` detector ticks)
    run in lockstep and exchange slip only through a SlipCounter.

    Parameters
    ----------
    obj : GraspSimObject or str
    detector : 'oracle', 'model:<checkpoint>', SlipModel or detector object
    cfg : GraspConfig
    seed : int

    Raises
    ------
    DetectorStallError
        If one detector tick takes longer than `cfg.stall_ms`.
    """
    cfg = cfg or GraspConfig()
    if isinstance(obj, str):
        obj = grasp_object(obj)
    rng = numpy.random.default_rng(seed)
    obj = dataclasses.replace(obj, load_profile=list(obj.load_profile))
    counter = SlipCounter()
    reader = CounterReader(counter)
    det = make_detector(detector, counter, look=obj.look, seed=seed)
    physics = GraspPhysics(obj, cfg)
    x0 = obj.width + cfg.start_gap * rng.uniform(0.8, 1.2)
    state = GripperState(x_g=x0, x_prev=x0, u_ff=cfg.approach_u_ff,
                         phase=APPROACH, clip=(cfg.approach_u_ff, 0.0),
                         k_p=cfg.k_p)
    n_lift = int(round(cfg.lift_s * 1000))
    n_balance = int(round(cfg.balance_s * 1000))
    max_approach = int(round(cfg.max_approach_s * 1000))
    rows = []
    contact, contact_width = 0, None
    lift_start = None
    lost_at_lift = False
    last_reading = 0
    tick = 0
    while True:
        if state.phase == APPROACH and tick >= max_approach:
            logger.warning('%s: no contact after %d ticks', obj.name, tick)
            break
        if lift_start is not None and tick >= lift_start + n_lift + n_balance:
            break
        phase = state.phase
        lift_mm = cfg.lift_mm / n_lift if phase == LIFT else 0.0
        snap = physics.step(state.x_g, lift_mm)
        start = time.perf_counter()
        det.step(snap)
        elapsed = (time.perf_counter() - start) * 1e3
        if elapsed > cfg.stall_ms:
            raise DetectorStallError(
                '%s: detector took %.1f ms at tick %d (limit %.1f ms)' %
                (obj.name, elapsed, tick, cfg.stall_ms))
        tick += 1
        if phase == APPROACH:
            contact = contact + 1 if physics.penetration(state.x_g) > 0 else 0
            if contact >= cfg.contact_ticks:
                contact_width = state.x_g
                lift_start = tick
                state = dataclasses.replace(state,
                                            phase=LIFT,
                                            u_ff=0.0,
                                            clip=cfg.lift_clip)
                reader.delta()
                logger.debug('%s: contact at tick %d, width %.3f mm',
                             obj.name, tick, state.x_g)
                continue
        elif (phase == BALANCE and cfg.perturb_g and not obj.load_profile
              and tick >= lift_start + n_lift + cfg.perturb_s * 1000):
            obj.load_profile.append((float(physics.tick_count),
                                     cfg.perturb_g))
            logger.info('%s: %+g g at tick %d', obj.name, cfg.perturb_g, tick)
        if tick % cfg.control_every:
            continue
        delta = reader.delta()
        last_reading = delta
        if phase == APPROACH:
            u_c = state.command()
        elif cfg.open_loop:
            u_c = 0.0
        elif phase == LIFT:
            state, u_c = lift_step(state, delta, cfg)
        else:
            state, u_c = balance_step(state, delta, cfg)
        x_new = max(0.0, state.x_g + cfg.width_rate * u_c)
        rows.append({
            'tick': tick,
            'phase': phase,
            'x_g': state.x_g,
            'x_ref': numpy.nan if state.x_ref is None else state.x_ref,
            'u_ff': state.u_ff,
            'u_c': u_c,
            'slip': int(last_reading > 0),
            'travel': physics.travel,
            'normal': snap.normal,
            'load': snap.load,
            'z_object': snap.z_object,
        })
        state = dataclasses.replace(state, x_prev=state.x_g, x_g=x_new)
        if lift_start is not None and phase == LIFT and (tick >= lift_start +
                                                         n_lift):
            lost_at_lift = physics.lost
            state = dataclasses.replace(state,
                                        phase=BALANCE,
                                        clip=cfg.balance_clip)
    log = pandas.DataFrame(rows)
    if contact_width is None:
        metrics = {
            'lift_success': False,
            'balance_success': False,
            'success': False,
            'travel_mm': physics.travel,
        }
    else:
        metrics = _metrics(log, contact_width, cfg, physics,
                           lift_start + n_lift, lost_at_lift)
    metrics.update(object=obj.name, seed=seed)
    logger.info('%s (seed %d): success %s, width change %.3f mm', obj.name,
                seed, metrics['success'], metrics.get('width_change', 0.0))
    return Episode(log, metrics)
