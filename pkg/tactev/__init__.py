# -*- coding: utf-8 -*-
# License: BSD 3 clause
# pylint: disable=line-too-long
"""
# tactev - event-based tactile sensing

The **tactev** package simulates a marker-dotted gel observed by an event
camera and runs the whole sensing stack on the resulting 1 kHz event frames:
gradient-based dot tracking, per-tick touch features, vibration frequency
detection, shear-force reconstruction, learned slip detection and a
slip-driven grasp controller.

## Basic usage

```python
>>> import tactev
>>> scene = tactev.load_scene('B-shear-0')
>>> frames, truth = tactev.simulate(scene, duration=0.5)
>>> grid = tactev.DotGrid.from_scene(scene)
>>> history = tactev.track(frames, grid)
>>> history.shape
(500, 63, 2)
```

Event recordings are stored in the compact `.evtc` format (5 bytes per
event):

```python
>>> tactev.write_evtc('shear.evtc', frames)
>>> len(tactev.read_evtc('shear.evtc')) == len(frames)
True
```

Every stage is also exposed by the `tactev` command line tool
(`tactev --help`).
"""
from tactev import package_setup
from tactev.codec import decode_frames, encode_frames, read_evtc, write_evtc
from tactev.events import EventFrame, EventImage, render_image
from tactev.features import FeatureSeries, extract, history_features
from tactev.force import ForceModel, LinearForceModel, NetworkForceModel
from tactev.gelsim import simulate
from tactev.grasp import run_episode
from tactev.nnkit import LAYER_KINDS, Network
from tactev.scenes import GelScene, GridSpec, load_scene
from tactev.slipeval import SlipCounter, SlipStream
from tactev.slipnet import SlipModel
from tactev.spectral import detect_vibration
from tactev.tracker import DotGrid, DotTracker, TrackerConfig, track

package_name = package_setup.package_name
package_path = package_setup.package_path
__version__ = package_setup.package_version()
__all__ = [
    'EventFrame',
    'EventImage',
    'render_image',
    'encode_frames',
    'decode_frames',
    'read_evtc',
    'write_evtc',
    'GelScene',
    'GridSpec',
    'load_scene',
    'simulate',
    'DotGrid',
    'DotTracker',
    'TrackerConfig',
    'track',
    'extract',
    'FeatureSeries',
    'history_features',
    'detect_vibration',
    'Network',
    'LinearForceModel',
    'NetworkForceModel',
    'SlipModel',
    'SlipStream',
    'SlipCounter',
    'run_episode',
]

force_models = list(package_setup.subclasses(ForceModel))
layer_kinds = sorted(LAYER_KINDS)
