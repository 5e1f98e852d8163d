# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Exception hierarchy for tactev."""
import logging

logger = logging.getLogger(__name__)


class TactevError(Exception):
    """Base class for tactev exceptions."""


class InvalidInputError(TactevError):
    """Invalid arguments or data passed to a public function."""


class ShapeError(InvalidInputError):
    """Array shapes do not compose (layers, networks, datasets)."""


class UnlabeledTrajectoryError(InvalidInputError):
    """A trajectory without slip labels was passed to the evaluation."""


class DecodeError(TactevError):
    """Invalid .evtc byte stream."""


class TruncatedStreamError(DecodeError):
    """The stream ends in the middle of a header or a frame."""


class BadMagicError(DecodeError):
    """The stream does not start with the container magic."""


class VersionMismatchError(DecodeError):
    """Unsupported container version."""


class SceneError(TactevError):
    """Scene invariant violation or invalid scene config."""


class NoPeakError(TactevError):
    """No spectral component above the cutoff frequency."""


class TrainingError(TactevError):
    """Training cannot proceed (empty pool, non-finite values)."""


class FitError(TactevError):
    """Least-squares design is rank deficient and inconsistent."""


class LabelingError(TactevError):
    """Slip labeling is impossible for this recording."""


class ConfigError(TactevError):
    """Unknown model configuration or model kind."""


class CheckpointError(TactevError):
    """Invalid checkpoint file."""


class DetectorStallError(TactevError):
    """The slip detector exceeded its stall budget during an episode."""


class UsageError(TactevError):
    """Invalid command line usage."""
