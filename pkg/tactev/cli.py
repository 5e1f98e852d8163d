# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Command line interface: one subcommand per pipeline stage.

Exit codes: 0 on success, 2 for usage errors (bad flags, missing files,
unknown scenes or configurations, undecodable streams), 1 for any other
failure. Errors are reported on stderr as a single line
``error: <category>: <message>``.

Relative output paths are resolved against the data directory
(the TACTEV_DATA_DIR environment variable, default: the working directory).
"""
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy
import pandas
import yaml

from tactev import __version__
from tactev.exceptions import (ConfigError, DecodeError, SceneError,
                               TactevError, UsageError)
from tactev.package_setup import data_path

logger = logging.getLogger(__name__)

__all__ = ['RunConfig', 'build_parser', 'main']

USAGE_ERRORS = (UsageError, SceneError, ConfigError, DecodeError)


@dataclass
class RunConfig:
    """A validated invocation: subcommand, paths, seed and verbosity."""
    subcommand: str
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    verbosity: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args):
        inputs, outputs = {}, {}
        for name in _INPUTS:
            value = getattr(args, name, None)
            if value is not None:
                inputs[name] = value
        for name in _OUTPUTS:
            value = getattr(args, name, None)
            if value is not None:
                outputs[name] = data_path(value)
        skip = set(_INPUTS) | set(_OUTPUTS) | {
            'command', 'seed', 'verbose', 'quiet', 'func'
        }
        params = {k: v for k, v in vars(args).items() if k not in skip}
        verbosity = args.verbose - 2 * int(args.quiet)
        return cls(args.command, inputs, outputs, getattr(args, 'seed', None),
                   verbosity, params).check()

    def check(self):
        """
        Raises
        ------
        UsageError
            If an input path does not exist.
        """
        for name, path in self.inputs.items():
            if name in _MAYBE_NAMES and not os.path.exists(path):
                continue
            if not os.path.exists(path):
                raise UsageError('%s: no such file or directory: %s' %
                                 (name, path))
        return self

    def log_level(self):
        if self.verbosity < 0:
            return logging.ERROR
        return (logging.WARNING, logging.INFO,
                logging.DEBUG)[min(self.verbosity, 2)]


# argument names holding input and output paths
_INPUTS = ('input', 'data', 'model', 'scene', 'grid', 'test')
_OUTPUTS = ('out', 'truth', 'spectrum', 'series', 'report', 'per_object',
            'cdf', 'log', 'metrics', 'save_data', 'out_dir',
            'checkpoint_dir')
# inputs that may also be library scene names
_MAYBE_NAMES = ('scene', 'grid')


def _interval(text):
    try:
        start, end = (float(v) for v in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError('expected <start,end> in ms, got %r' %
                                         text)
    return start, end


def _param(text):
    key, sep, value = text.partition('=')
    if not sep or not key:
        raise argparse.ArgumentTypeError('expected key=value, got %r' % text)
    return key.replace('-', '_'), yaml.safe_load(value)


def _grid(name_or_path, seed):
    from tactev.scenes import load_grid
    from tactev.tracker import DotGrid
    return DotGrid.from_scene(load_grid(name_or_path, seed=seed))


def _frames(path):
    from tactev.codec import read_evtc
    return read_evtc(path)


# subcommands


def cmd_simulate(cfg):
    from tactev.codec import write_evtc
    from tactev.data import write_csv
    from tactev.gelsim import simulate
    from tactev.scenes import load_scene
    p = cfg.params
    scene = load_scene(cfg.inputs['scene'], seed=p['library_seed'])
    frames, truth = simulate(scene, duration=p['duration'], seed=cfg.seed,
                             substeps=p['substeps'])
    write_evtc(cfg.outputs['out'], frames)
    if 'truth' in cfg.outputs:
        write_csv(truth.to_frame(), cfg.outputs['truth'])
    print('%s: %d frames, %d events' %
          (scene.name, len(frames), sum(len(f) for f in frames)))


def cmd_track(cfg):
    from tactev.data import write_csv
    from tactev.tracker import TrackerConfig, endpoint_report, track
    frames = _frames(cfg.inputs['input'])
    grid = _grid(cfg.inputs['grid'], cfg.params['library_seed'])
    tracker_cfg = TrackerConfig(w_dist=cfg.params['w_dist'])
    history = track(frames, grid, tracker_cfg)
    n_ticks, n_dots, _ = history.shape
    table = pandas.DataFrame({
        'tick': numpy.repeat(numpy.arange(n_ticks), n_dots),
        'dot': numpy.tile(numpy.arange(n_dots), n_ticks),
        'x': history[:, :, 0].ravel(),
        'y': history[:, :, 1].ravel(),
    })
    write_csv(table, cfg.outputs['out'])
    success, lost = endpoint_report(history, grid.rest)
    print('%d ticks, %d dots; endpoint success %s, %d lost' %
          (n_ticks, n_dots, success, lost))


def cmd_features(cfg):
    from tactev.data import write_csv
    from tactev.features import FeatureSeries
    from tactev.tracker import track
    frames = _frames(cfg.inputs['input'])
    grid = _grid(cfg.inputs['grid'], cfg.params['library_seed'])
    history = track(frames, grid)
    series = FeatureSeries.from_tracking(frames, history, grid,
                                         radius=cfg.params['radius'])
    write_csv(series.to_frame(), cfg.outputs['out'])
    print('%d ticks, %d dots' % (len(series), series.n_dots))


def _counts(path):
    """N_E series from a recording or from a CSV with an n_events column
    (one row per tick, or the long-form features CSV)."""
    if not path.endswith('.csv'):
        return numpy.array([len(f) for f in _frames(path)],
                           dtype=numpy.float64)
    from tactev.data import read_csv
    frame = read_csv(path, ['n_events'])
    if 'tick' in frame:
        frame = frame.groupby('tick', sort=True).first()
    return frame['n_events'].to_numpy(dtype=numpy.float64)


def cmd_vibration(cfg):
    from tactev.data import write_csv
    from tactev.spectral import spectrum, vibration_report
    p = cfg.params
    series = _counts(cfg.inputs['input'])
    report = vibration_report(series, p['target'], window=p['window'])
    if 'out' in cfg.outputs:
        write_csv(report, cfg.outputs['out'])
    if 'spectrum' in cfg.outputs:
        s = spectrum(series[:int(round(p['window'] * 1000))], p['window'])
        write_csv(s.to_frame(), cfg.outputs['spectrum'])
    for row in report.itertuples():
        print('segment %d: detected %s Hz, success %s' %
              (row.segment, row.detected, row.success))
    print('success rate %.3f (%d/%d)' %
          (report['success'].mean(), report['success'].sum(), len(report)))


def cmd_datarate(cfg):
    from tactev.data import write_csv
    from tactev.datarate import data_rate_report, data_rate_series
    p = cfg.params
    frames = _frames(cfg.inputs['input'])
    rows = [dict(interval='full', **data_rate_report(frames).as_dict())]
    if p['interval'] is not None:
        a, b = p['interval']
        report = data_rate_report(frames,
                                  interval=(round(a * 1000), round(b * 1000)))
        rows.append(dict(interval='window', **report.as_dict()))
    table = pandas.DataFrame(rows)
    if 'out' in cfg.outputs:
        write_csv(table, cfg.outputs['out'])
    if 'series' in cfg.outputs:
        t_end, rate = data_rate_series(frames, p['bin_ms'])
        write_csv(pandas.DataFrame({
            't_end_us': t_end,
            'bytes_per_s': rate
        }), cfg.outputs['series'])
    for r in rows:
        print('%s: %d events, %d event bytes, %.0f RGB bytes, ratio %.4f' %
              (r['interval'], r['n_events'], r['event_bytes'], r['rgb_bytes'],
               r['ratio']))


def _force_data(cfg):
    from tactev.data import read_csv, write_csv
    from tactev.force import ForceDataset
    if cfg.params.get('scenes'):
        from tactev.gelsim import simulate
        from tactev.scenes import load_scene
        truths, names = [], []
        for name in cfg.params['scenes']:
            scene = load_scene(name, seed=cfg.params['library_seed'])
            truths.append(simulate(scene, seed=cfg.seed)[1])
            names.append(scene.name)
        data = ForceDataset.from_truth(truths, names)
        if 'save_data' in cfg.outputs:
            write_csv(data.to_frame(), cfg.outputs['save_data'])
        return data
    if 'data' not in cfg.inputs:
        raise UsageError('either --data or --scenes is required')
    return ForceDataset.from_frame(read_csv(cfg.inputs['data']))


def cmd_force_fit(cfg):
    from tactev import force
    p = cfg.params
    kind = force.check_model(p['kind'])
    data = _force_data(cfg)
    if len(data) < 3:
        raise UsageError('force data needs at least 3 trajectories '
                         '(train, test, eval), got %d' % len(data))
    train, test, evaluation = data.split()
    if isinstance(kind, force.LinearForceModel):
        model = force.fit_linear(train + test)
    else:
        model = force.fit_network(train, test, epochs=p['epochs'],
                                  seed=cfg.seed or 0)
    force.save_model(model, cfg.outputs['out'])
    result = force.evaluate(model, evaluation[0])
    print('%s: MAE on %s %.4f / %.4f N' %
          (type(model).__name__, evaluation[0].name, result.mae[0],
           result.mae[1]))


def cmd_force_eval(cfg):
    from tactev import force
    from tactev.data import write_csv
    model = force.load_model(cfg.inputs['model'])
    data = _force_data(cfg)
    results = [force.evaluate(model, traj) for traj in data]
    if 'out' in cfg.outputs:
        write_csv(pandas.concat([r.to_frame() for r in results],
                                ignore_index=True), cfg.outputs['out'])
    for r in results:
        print('%s: MAE %.4f / %.4f N' % (r.name, r.mae[0], r.mae[1]))


def cmd_slip_label(cfg):
    from tactev.scenes import SLIP_OBJECTS, slip_scenes
    from tactev.slipnet import labeled_trajectory, write_labeled
    p = cfg.params
    known = {o.name: o for o in SLIP_OBJECTS}
    names = p['objects'] or list(known)
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ConfigError('unknown objects %s (choose from %s)' %
                          (', '.join(unknown), ', '.join(known)))
    seed = cfg.seed or 0
    n = 0
    for name in names:
        scenes = (slip_scenes(name, p['n_slip'], seed=seed,
                              duration_ms=p['duration_ms']) +
                  slip_scenes(name, p['n_hold'], seed=seed, slip=False,
                              duration_ms=p['duration_ms']))
        for scene in scenes:
            traj = labeled_trajectory(scene, keep_frames=True,
                                      threshold=p['flow_threshold'])
            write_labeled(traj, scene, cfg.outputs['out_dir'])
            n += 1
    print('%d labeled trajectories written to %s' %
          (n, cfg.outputs['out_dir']))


def cmd_slip_train(cfg):
    from tactev.slipeval import evaluate, select_threshold
    from tactev.slipnet import (SlipModel, TrainConfig, read_labeled,
                                slip_config, train)
    p = cfg.params
    seed = cfg.seed or 0
    config = slip_config(p['config'], p['shift'])
    training, _ = read_labeled(cfg.inputs['data'],
                               keep_frames=config.is_image)
    model = SlipModel(config, seed=seed)
    checkpoints = train(model,
                        training,
                        TrainConfig(epochs=p['epochs'], seed=seed),
                        checkpoint_dir=cfg.outputs.get('checkpoint_dir'))
    if 'test' in cfg.inputs:
        testing, _ = read_labeled(cfg.inputs['test'],
                                  keep_frames=config.is_image)
        ckpt, threshold, _ = select_threshold(model, checkpoints, testing)
        report = evaluate(model, testing)
        print('selected epoch %d, threshold %.3f: timing correct %.3f, '
              'F1 %.3f' % (ckpt.epoch, threshold,
                           report.timing_correct_rate, report.f1))
    model.save(cfg.outputs['out'])
    print('%s saved to %s' % (config.label, cfg.outputs['out']))


def cmd_slip_eval(cfg):
    from tactev.data import write_csv
    from tactev.slipeval import evaluate, infer_stream, timing_cdf
    from tactev.slipnet import SlipModel, read_labeled
    from tactev.tracker import DotGrid
    p = cfg.params
    model = SlipModel.load(cfg.inputs['model'])
    trajectories, scenes = read_labeled(cfg.inputs['data'],
                                        keep_frames=True)
    report = evaluate(model, trajectories, threshold=p['threshold'])
    if 'report' in cfg.outputs:
        write_csv(report.rows, cfg.outputs['report'])
    if 'per_object' in cfg.outputs:
        write_csv(report.per_object(), cfg.outputs['per_object'])
    if 'cdf' in cfg.outputs:
        write_csv(timing_cdf(report), cfg.outputs['cdf'])
    summary = report.summary()
    print(' '.join('%s=%s' % item for item in summary.items()))
    if p['stream']:
        mismatches = 0
        for traj, scene in zip(trajectories, scenes):
            result = infer_stream(model, traj.frames,
                                  DotGrid.from_scene(scene))
            mismatches += int((result.flags != report.flags[traj.name]).sum())
        print('stream mismatches: %d' % mismatches)


def cmd_grasp_sim(cfg):
    from tactev.data import write_csv
    from tactev.grasp import PERTURBATIONS, GraspConfig, run_episode
    p = cfg.params
    grasp_cfg = GraspConfig(k_p=p['k_p'],
                            open_loop=p['open_loop'],
                            perturb_g=PERTURBATIONS[p['perturb']])
    detector = p['detector']
    if detector != 'oracle' and not detector.startswith('model:'):
        raise UsageError("detector must be 'oracle' or 'model:<checkpoint>'")
    if detector.startswith('model:') and not os.path.exists(detector[6:]):
        raise UsageError('detector: no such file: %s' % detector[6:])
    episode = run_episode(p['object'], detector, grasp_cfg,
                          seed=cfg.seed or 0)
    if 'log' in cfg.outputs:
        write_csv(episode.log, cfg.outputs['log'])
    if 'metrics' in cfg.outputs:
        write_csv(pandas.DataFrame([episode.metrics]), cfg.outputs['metrics'])
    for key, value in episode.metrics.items():
        print('%s: %s' % (key, value))


def cmd_bench(cfg):
    from tactev.data import write_csv
    from tactev.experiments import benchmark
    p = cfg.params
    table = benchmark(p['target'], cfg.inputs.get('scene', 'C-grasp-slip'),
                      duration=p['duration'], model=cfg.inputs.get('model'),
                      seed=p['library_seed'])
    if 'out' in cfg.outputs:
        write_csv(table, cfg.outputs['out'])
    for row in table[table['kind'] == 'percentile'].itertuples():
        print('%s: %.4f ms' % (row.name, row.value_ms))


def cmd_experiment(cfg):
    from tactev.experiments import run_experiment
    p = cfg.params
    kwargs = dict(p['param'] or [])
    if cfg.seed is not None:
        kwargs.setdefault('seed', cfg.seed)
    out_dir = cfg.outputs.get('out_dir', data_path('.'))
    result = run_experiment(p['name'], out_dir, **kwargs)
    print(result.summary)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='tactev',
        description='Event-based tactile sensing pipeline.',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='more logging (repeatable)')
    common.add_argument('-q', '--quiet', action='store_true',
                        help='log errors only')
    common.add_argument('--seed', type=int, default=None,
                        help='random seed (default: the scene seed or 0)')
    common.add_argument('--library-seed', type=int, default=123,
                        help='seed of the built-in scene library')
    sub = parser.add_subparsers(dest='command', metavar='command')

    def add(name, func, help):
        p = sub.add_parser(
            name, parents=[common], help=help, description=help,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add('simulate', cmd_simulate, 'simulate a scene to an .evtc file')
    p.add_argument('--scene', required=True, help='library name or YAML file')
    p.add_argument('--duration', type=float, default=None,
                   help='seconds (default: the scene duration)')
    p.add_argument('--substeps', type=int, default=10)
    p.add_argument('--out', required=True, help='output .evtc')
    p.add_argument('--truth', help='ground-truth CSV')

    p = add('track', cmd_track, 'track dots over an .evtc recording')
    p.add_argument('--input', required=True)
    p.add_argument('--grid', required=True,
                   help='scene name, scene YAML or grid YAML')
    p.add_argument('--w-dist', type=float, default=0.001,
                   help='regularizer weight')
    p.add_argument('--out', required=True, help='CSV: tick, dot, x, y')

    p = add('features', cmd_features, 'extract per-tick touch features')
    p.add_argument('--input', required=True)
    p.add_argument('--grid', required=True)
    p.add_argument('--radius', type=float, default=20.0)
    p.add_argument('--out', required=True)

    p = add('vibration', cmd_vibration, 'detect a vibration frequency')
    p.add_argument('--input', required=True,
                   help='.evtc recording or CSV with an n_events column')
    p.add_argument('--window', type=float, default=1.0, help='seconds')
    p.add_argument('--target', type=float, required=True, help='Hz')
    p.add_argument('--out', help='per-segment CSV')
    p.add_argument('--spectrum', help='spectrum CSV of the first segment')

    p = add('datarate', cmd_datarate, 'event bytes against an RGB stream')
    p.add_argument('--input', required=True)
    p.add_argument('--interval', type=_interval, default=None,
                   help='<start,end> in ms')
    p.add_argument('--bin-ms', type=int, default=100)
    p.add_argument('--out', help='report CSV')
    p.add_argument('--series', help='rate series CSV')

    for name, func, text in (
            ('force-fit', cmd_force_fit, 'fit a force model'),
            ('force-eval', cmd_force_eval, 'evaluate a force model'),
    ):
        p = add(name, func, text)
        p.add_argument('--data', help='force dataset CSV')
        p.add_argument('--scenes', nargs='+',
                       help='build the dataset from scenes instead')
        p.add_argument('--save-data', help='write the built dataset CSV')
        if name == 'force-fit':
            p.add_argument('--kind', '--model-kind', default='linear',
                           choices=('linear', 'nn'))
            p.add_argument('--epochs', type=int, default=50)
            p.add_argument('--out', required=True, help='model file')
        else:
            p.add_argument('--model', required=True)
            p.add_argument('--out', help='prediction CSV')

    p = add('slip-label', cmd_slip_label, 'simulate and label slip data')
    p.add_argument('--objects', nargs='*', default=None)
    p.add_argument('--n-slip', type=int, default=10)
    p.add_argument('--n-hold', type=int, default=10)
    p.add_argument('--duration-ms', type=int, default=400)
    p.add_argument('--flow-threshold', type=float, default=1.0)
    p.add_argument('--out-dir', required=True)

    p = add('slip-train', cmd_slip_train, 'train a slip model')
    p.add_argument('--data', required=True, help='training dataset dir')
    p.add_argument('--test', help='dataset dir for threshold selection')
    p.add_argument('--config', default='fast slow hist 50')
    p.add_argument('--shift', type=int, default=0, choices=(0, 10, 20),
                   help='prediction shift (ms)')
    p.add_argument('--epochs', type=int, default=70)
    p.add_argument('--checkpoint-dir')
    p.add_argument('--out', required=True)

    p = add('slip-eval', cmd_slip_eval, 'evaluate a slip model')
    p.add_argument('--model', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--threshold', type=float, default=None)
    p.add_argument('--stream', action='store_true',
                   help='compare with streaming inference')
    p.add_argument('--report', help='per-trajectory CSV')
    p.add_argument('--per-object', help='per-object CSV')
    p.add_argument('--cdf', help='detection timing CDF CSV')

    p = add('grasp-sim', cmd_grasp_sim, 'run one grasp episode')
    p.add_argument('--object', default='bottle-empty')
    p.add_argument('--detector', default='oracle',
                   help="'oracle' or 'model:<checkpoint>'")
    p.add_argument('--k-p', type=float, default=50.0)
    p.add_argument('--open-loop', action='store_true')
    p.add_argument('--perturb', default='none',
                   choices=('none', '20g', '100g'))
    p.add_argument('--log', help='per-tick CSV')
    p.add_argument('--metrics', help='metrics CSV')

    p = add('bench', cmd_bench, 'per-tick latency')
    p.add_argument('target', choices=('track', 'features', 'infer'))
    p.add_argument('--scene', default=None)
    p.add_argument('--duration', type=float, default=10.0)
    p.add_argument('--model', help='slip model for the infer target')
    p.add_argument('--out', help='latency CSV')

    from tactev.experiments import EXPERIMENTS
    p = add('experiment', cmd_experiment, 'run an experiment harness')
    p.add_argument('name', choices=sorted(EXPERIMENTS))
    p.add_argument('--param', type=_param, action='append',
                   help='experiment keyword, key=value (YAML value)')
    p.add_argument('--out-dir')
    return parser


def _category(err):
    if isinstance(err, FileNotFoundError):
        return 'missing-file'
    if isinstance(err, UsageError):
        return 'usage'
    name = type(err).__name__
    if name.endswith('Error'):
        name = name[:-len('Error')]
    return ''.join('-' + c.lower() if c.isupper() else c
                   for c in name).lstrip('-') or 'internal'


def main(argv=None):
    """Run the command line tool, return the exit code."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = RunConfig.from_args(args)
        logging.basicConfig(level=cfg.log_level(),
                            format='%(levelname)s %(name)s: %(message)s')
        logger.debug('%r', cfg)
        args.func(cfg)
    except (FileNotFoundError, ) + USAGE_ERRORS as err:
        print('error: %s: %s' % (_category(err), err), file=sys.stderr)
        return 2
    except TactevError as err:
        print('error: %s: %s' % (_category(err), err), file=sys.stderr)
        return 1
    except Exception as err:  # pylint: disable=broad-except
        logger.debug('unexpected failure', exc_info=True)
        print('error: internal: %s: %s' % (type(err).__name__, err),
              file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
