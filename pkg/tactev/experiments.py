# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Experiment harnesses: each returns tables and a plain-text summary.

* vibration: detected vibration frequency per segment of event counts
* datarate: event bytes against a 25 Hz RGB stream
* endpoint: tracker endpoint consistency with and without the regularizer
* force: linear and network force reconstruction
* slip: slip-model training, threshold selection and evaluation
* grasp: closed-loop grasp episodes
"""
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict

import numpy
import pandas

from tactev import force as force_recon
from tactev.data import write_csv, write_text
from tactev.datarate import data_rate_report, data_rate_series
from tactev.exceptions import ConfigError, InvalidInputError
from tactev.features import extract
from tactev.gelsim import simulate
from tactev.scenes import SLIP_OBJECTS, load_scene
from tactev.spectral import vibration_report
from tactev.tracker import (DotGrid, DotTracker, TrackerConfig,
                            endpoint_report, track, tracking_rmse)

logger = logging.getLogger(__name__)

__all__ = [
    'ExperimentResult',
    'EXPERIMENTS',
    'vibration_experiment',
    'datarate_experiment',
    'endpoint_experiment',
    'force_experiment',
    'slip_experiment',
    'grasp_experiment',
    'benchmark',
    'run_experiment',
]


@dataclass
class ExperimentResult:
    name: str
    tables: Dict[str, pandas.DataFrame] = field(default_factory=dict)
    summary: str = ''

    def write(self, out_dir):
        """Write <name>_<table>.csv files and <name>_summary.txt."""
        paths = []
        for key, table in self.tables.items():
            path = os.path.join(out_dir, '%s_%s.csv' % (self.name, key))
            write_csv(table, path)
            paths.append(path)
        path = os.path.join(out_dir, '%s_summary.txt' % self.name)
        write_text(self.summary + '\n', path)
        paths.append(path)
        return paths


def event_counts(frames):
    """N_E of every frame."""
    return numpy.array([len(f) for f in frames], dtype=numpy.float64)


def vibration_experiment(frequencies=(100, 200, 300, 400, 498, 600),
                         duration_s=100.0,
                         windows=(10.0, 1.0),
                         seed=123,
                         substeps=4):
    """Recover vibration frequencies from event counts."""
    rows, segments = [], []
    for f in frequencies:
        scene = load_scene('A-vib-%g' % f, seed=seed)
        frames, _ = simulate(scene, duration=duration_s, substeps=substeps)
        series = event_counts(frames)
        for w in windows:
            report = vibration_report(series, f, window=w)
            report.insert(0, 'window_s', w)
            report.insert(0, 'frequency', f)
            segments.append(report)
            detected = report['detected'].dropna()
            rows.append({
                'frequency': f,
                'window_s': w,
                'segments': len(report),
                'successes': int(report['success'].sum()),
                'success_rate': float(report['success'].mean()),
                'median_detected': (float(detected.median())
                                    if len(detected) else numpy.nan),
            })
    table = pandas.DataFrame(rows)
    lines = ['vibration recovery (+-1 Hz)']
    for w in windows:
        sub = table[(table['window_s'] == w) & (table['frequency'] < 500)]
        lines.append('T_w = %g s: mean success %.3f' %
                     (w, sub['success_rate'].mean() if len(sub) else 0.0))
    for row in rows:
        lines.append('%6g Hz, T_w=%5g s: %d/%d, median peak %s Hz' %
                     (row['frequency'], row['window_s'], row['successes'],
                      row['segments'], row['median_detected']))
    return ExperimentResult('vibration', {
        'table': table,
        'segments': pandas.concat(segments, ignore_index=True)
    }, '\n'.join(lines))


def datarate_experiment(scene='C-grasp-slip', seed=123, bin_ms=100):
    """Event data rate over a whole trajectory and its slip window."""
    scene = load_scene(scene, seed=seed)
    frames, _ = simulate(scene)
    rows = [dict(interval='full', **data_rate_report(frames).as_dict())]
    if scene.slip_window_ms is not None:
        a, b = scene.slip_window_ms
        report = data_rate_report(frames, interval=(a * 1000, b * 1000))
        rows.append(dict(interval='slip', **report.as_dict()))
    table = pandas.DataFrame(rows)
    t_end, rate = data_rate_series(frames, bin_ms)
    series = pandas.DataFrame({'t_end_us': t_end, 'bytes_per_s': rate})
    summary = '\n'.join('%s: %d events, ratio %.4f' %
                        (r['interval'], r['n_events'], r['ratio'])
                        for r in rows)
    return ExperimentResult('datarate', {
        'table': table,
        'series': series
    }, summary)


def endpoint_experiment(n=10, seed=123):
    """Endpoint consistency of regularized and unregularized tracking over
    the distractor scenes."""
    rows = []
    variants = {
        'regularized': TrackerConfig(),
        'unregularized': TrackerConfig(w_dist=0.0),
    }
    for k in range(n):
        scene = load_scene('D-distractor-%d' % k, seed=seed)
        frames, truth = simulate(scene)
        grid = DotGrid.from_scene(scene)
        for name, cfg in variants.items():
            history = track(frames, grid, cfg)
            success, lost = endpoint_report(history, grid.rest)
            rows.append({
                'trajectory': scene.name,
                'variant': name,
                'success': success,
                'lost': lost,
                'rmse': float(tracking_rmse(history, truth.centers).mean()),
            })
    table = pandas.DataFrame(rows)
    agg = table.groupby('variant').agg(successes=('success', 'sum'),
                                       mean_lost=('lost', 'mean'))
    lines = ['endpoint consistency over %d trajectories' % n]
    for variant, row in agg.iterrows():
        lines.append('%s: %d successes, %.2f lost dots on average' %
                     (variant, row['successes'], row['mean_lost']))
    return ExperimentResult('endpoint', {
        'table': table,
        'summary': agg.reset_index()
    }, '\n'.join(lines))


def force_experiment(seed=123, epochs=50, tracked=True):
    """Force reconstruction on the shear scenes from true and tracked
    displacements."""
    names = ['B-shear-%d' % k for k in range(5)]
    truths, tracked_disp = [], []
    for name in names:
        scene = load_scene(name, seed=seed)
        frames, truth = simulate(scene)
        truths.append(truth)
        if tracked:
            grid = DotGrid.from_scene(scene)
            tracked_disp.append(track(frames, grid) - grid.rest[None])
    inputs = {'truth': None}
    if tracked:
        inputs['tracked'] = tracked_disp
    rows, traces = [], []
    for source, disp in inputs.items():
        data = force_recon.ForceDataset.from_truth(truths, names,
                                                   displacements=disp)
        train, test, evaluation = data.split()
        linear = force_recon.fit_linear(train + test)
        network = force_recon.fit_network(train, test, epochs=epochs,
                                          seed=seed)
        for label, model in (('linear', linear), ('network', network)):
            result = force_recon.evaluate(model, evaluation[0])
            rows.append({'input': source, 'model': label,
                         'mae_x': result.mae[0], 'mae_y': result.mae[1]})
            trace = result.to_frame()
            trace.insert(0, 'model', label)
            trace.insert(0, 'input', source)
            traces.append(trace)
        control = force_recon.shuffled_control(linear, train + test,
                                               evaluation[0], seed=seed)
        rows.append({'input': source, 'model': 'linear shuffled',
                     'mae_x': control.mae[0], 'mae_y': control.mae[1]})
    table = pandas.DataFrame(rows)
    summary = '\n'.join('%-8s %-16s MAE %.3f / %.3f N' %
                        (r['input'], r['model'], r['mae_x'], r['mae_y'])
                        for r in rows)
    return ExperimentResult('force', {
        'table': table,
        'trace': pandas.concat(traces, ignore_index=True)
    }, summary)


def slip_experiment(configs=('hist 20', 'fast slow hist 50'),
                    shifts=(0, 10),
                    seeds=(0, ),
                    n_train=10,
                    n_test=3,
                    n_eval=5,
                    epochs=70,
                    held_out=2,
                    seed=123):
    """Train, select and evaluate slip models.

    The first objects provide the training and test trajectories, the
    last `held_out` objects of the object set the evaluation ones. Each
    evaluation trajectory is replayed through the streaming detector and
    compared with the offline flags.
    """
    from tactev.slipeval import (evaluate, infer_stream, select_threshold,
                                 timing_cdf)
    from tactev.slipnet import (SlipModel, TrainConfig, build_dataset,
                                labeled_trajectory, slip_config, train)
    from tactev.scenes import slip_scenes
    train_objects = SLIP_OBJECTS[:-held_out]
    eval_objects = SLIP_OBJECTS[-held_out:]
    training = build_dataset(train_objects, n_train, n_train, seed=seed)
    testing = build_dataset(train_objects, n_test, 0, seed=seed + 1)
    evaluation, layouts = [], []
    for obj in eval_objects:
        for scene in slip_scenes(obj, n_eval, seed=seed + 2):
            evaluation.append(labeled_trajectory(scene, keep_frames=True))
            layouts.append(scene)
    agreement = pandas.DataFrame([{
        'trajectory': t.name,
        'agreement': float(numpy.mean(t.labels[:-4] == t.truth_slip[:-4])),
    } for t in training + testing + evaluation])

    rows, per_object, cdfs = [], [], []
    for name in configs:
        for shift in shifts:
            for s in seeds:
                model = SlipModel(slip_config(name, shift), seed=s)
                ckpts = train(model, training, TrainConfig(epochs=epochs,
                                                           seed=s))
                ckpt, threshold, _ = select_threshold(model, ckpts, testing)
                report = evaluate(model, evaluation)
                mismatches, latencies = 0, []
                for traj, scene in zip(evaluation, layouts):
                    result = infer_stream(model, traj.frames,
                                          DotGrid.from_scene(scene))
                    mismatches += int(
                        (result.flags != report.flags[traj.name]).sum())
                    latencies.append(result.latencies_ms)
                latencies = numpy.concatenate(latencies)
                row = dict(config=name, shift_ms=shift, seed=s,
                           epoch=ckpt.epoch, **report.summary())
                row.update(stream_mismatches=mismatches,
                           latency_p50_ms=numpy.percentile(latencies, 50),
                           latency_p99_ms=numpy.percentile(latencies, 99))
                rows.append(row)
                obj = report.per_object()
                obj.insert(0, 'seed', s)
                obj.insert(0, 'shift_ms', shift)
                obj.insert(0, 'config', name)
                per_object.append(obj)
                cdf = timing_cdf(report)
                cdf.insert(0, 'seed', s)
                cdf.insert(0, 'shift_ms', shift)
                cdf.insert(0, 'config', name)
                cdfs.append(cdf)
    table = pandas.DataFrame(rows)
    lines = ['label agreement with ground truth: %.3f' %
             agreement['agreement'].mean()]
    for r in rows:
        lines.append('%s pred %d seed %d: timing correct %.3f, F1 %.3f, '
                     'threshold %.3f, %d stream mismatches, p99 %.3f ms' %
                     (r['config'], r['shift_ms'], r['seed'],
                      r['timing_correct_rate'], r['f1'], r['threshold'],
                      r['stream_mismatches'], r['latency_p99_ms']))
    return ExperimentResult(
        'slip', {
            'table': table,
            'per_object': pandas.concat(per_object, ignore_index=True),
            'timing_cdf': pandas.concat(cdfs, ignore_index=True),
            'label_agreement': agreement,
        }, '\n'.join(lines))


def grasp_experiment(detector='oracle', n_per_object=4, seed=123,
                     pairs=10):
    """Closed-loop, open-loop, mass-pair and perturbation episodes."""
    from tactev.grasp import GRASP_OBJECTS, GraspConfig, run_episode
    rows = []

    def record(mode, obj, cfg, s, det=detector):
        metrics = run_episode(obj, det, cfg, seed=s).metrics
        metrics['mode'] = mode
        rows.append(metrics)
        return metrics

    for obj in GRASP_OBJECTS:
        for k in range(n_per_object):
            record('closed loop', obj, GraspConfig(), seed + k)
            record('open loop', obj, GraspConfig(open_loop=True), seed + k)
    pair_wins = 0
    for k in range(pairs):
        light = record('pair light', 'bottle-empty', GraspConfig(), seed + k)
        heavy = record('pair heavy', 'bottle-filled', GraspConfig(),
                       seed + k)
        pair_wins += (abs(heavy.get('width_change', 0.0)) >
                      abs(light.get('width_change', 0.0)))
    for grams, k_p in ((20.0, 50.0), (100.0, 100.0)):
        for obj in GRASP_OBJECTS:
            record('drop %dg' % grams, obj,
                   GraspConfig(k_p=k_p, perturb_g=grams), seed)
    table = pandas.DataFrame(rows)
    lines = []
    for mode, group in table.groupby('mode', sort=False):
        ok = group[group['success']]
        reduced = (ok['effort_reduction'] > 0).mean() if len(ok) else 0.0
        lines.append('%-12s %d episodes: lift %.2f, balance %.2f, overall '
                     '%.2f, effort reduced in %.2f of successes' %
                     (mode, len(group), group['lift_success'].mean(),
                      group['balance_success'].mean(),
                      group['success'].mean(), reduced))
    lines.append('heavier bottle closes further in %d/%d pairs' %
                 (pair_wins, pairs))
    return ExperimentResult('grasp', {'table': table}, '\n'.join(lines))


def benchmark(target='track', scene='C-grasp-slip', duration=10.0,
              model=None, seed=123):
    """Per-tick latency of tracking, feature extraction or inference.

    Returns
    -------
    DataFrame
        Percentiles p50/p90/p99 and a latency histogram, in ms.
    """
    if target not in ('track', 'features', 'infer'):
        raise InvalidInputError('unknown benchmark target %r' % target)
    scene = load_scene(scene, seed=seed)
    frames, _ = simulate(scene, duration=duration)
    grid = DotGrid.from_scene(scene)
    latencies = []
    if target == 'infer':
        from tactev.slipeval import infer_stream
        from tactev.slipnet import SlipModel
        if model is None:
            raise InvalidInputError('the infer benchmark needs a model')
        if isinstance(model, str):
            model = SlipModel.load(model)
        latencies = list(infer_stream(model, frames, grid).latencies_ms)
    else:
        tracker = DotTracker(grid.reset())
        for frame in frames:
            start = time.perf_counter()
            tracker.step(frame)
            if target == 'features':
                extract(frame, grid)
            latencies.append((time.perf_counter() - start) * 1e3)
    latencies = numpy.asarray(latencies)
    counts, edges = numpy.histogram(latencies, bins=20)
    rows = [{'kind': 'percentile', 'name': 'p%d' % q,
             'value_ms': float(numpy.percentile(latencies, q)), 'count': ''}
            for q in (50, 90, 99)]
    rows += [{'kind': 'histogram', 'name': '%.4f-%.4f' % (a, b),
              'value_ms': float(a), 'count': int(c)}
             for a, b, c in zip(edges[:-1], edges[1:], counts)]
    logger.info('%s: p50 %.3f ms, p99 %.3f ms over %d ticks', target,
                numpy.percentile(latencies, 50),
                numpy.percentile(latencies, 99), len(latencies))
    return pandas.DataFrame(rows)


EXPERIMENTS = {
    'vibration': vibration_experiment,
    'datarate': datarate_experiment,
    'endpoint': endpoint_experiment,
    'force': force_experiment,
    'slip': slip_experiment,
    'grasp': grasp_experiment,
}


def run_experiment(name, out_dir, **kwargs):
    """Run an experiment and write its CSV tables and summary.

    Raises
    ------
    ConfigError
        Unknown experiment name.
    """
    try:
        func = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError('unknown experiment %r (choose from %s)' %
                          (name, ', '.join(EXPERIMENTS)))
    result = func(**kwargs)
    result.write(out_dir)
    return result
