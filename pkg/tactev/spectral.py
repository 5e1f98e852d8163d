# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Vibration frequency recovery from the event-count series."""
import logging
from dataclasses import dataclass

import numpy
import pandas
import scipy.fft

from tactev.exceptions import InvalidInputError, NoPeakError

logger = logging.getLogger(__name__)

__all__ = [
    'Spectrum',
    'VibrationResult',
    'spectrum',
    'detect_vibration',
    'segment_series',
    'vibration_report',
]

SAMPLE_RATE = 1000.0
CUTOFF_HZ = 25.0
TOLERANCE_HZ = 1.0
TOP_K = 3


@dataclass(frozen=True)
class Spectrum:
    """Amplitude spectrum normalised to [0, 1] above the cutoff."""
    frequencies: numpy.ndarray
    amplitudes: numpy.ndarray
    sample_rate: float
    window: float

    @property
    def resolution(self):
        """Bin width in Hz, 1 / T_w."""
        return 1.0 / self.window

    def top(self, k=TOP_K):
        """The k largest components as (frequencies, amplitudes).

        Ties go to the lower frequency.
        """
        order = numpy.lexsort((self.frequencies, -self.amplitudes))[:k]
        return self.frequencies[order], self.amplitudes[order]

    def to_frame(self):
        return pandas.DataFrame({
            'frequency': self.frequencies,
            'amplitude': self.amplitudes
        })


@dataclass(frozen=True)
class VibrationResult:
    detected: float
    success: bool
    top_frequencies: numpy.ndarray
    top_amplitudes: numpy.ndarray
    spectrum: Spectrum


def _check_series(series, window, sample_rate):
    series = numpy.asarray(series, dtype=numpy.float64).ravel()
    n = int(round(window * sample_rate))
    if n < 2:
        raise InvalidInputError('window of %g s is too short' % window)
    if len(series) < n:
        raise InvalidInputError('series of %d samples is shorter than the '
                                '%g s window (%d samples)' %
                                (len(series), window, n))
    return series[:n]


def spectrum(series, window=1.0, cutoff=CUTOFF_HZ, sample_rate=SAMPLE_RATE):
    """Normalised amplitude spectrum of the raw count series.

    Components below `cutoff` are removed. No window function, no
    detrending.

    Raises
    ------
    InvalidInputError
        If the series is shorter than the window.
    NoPeakError
        If nothing is left above the cutoff.
    """
    x = _check_series(series, window, sample_rate)
    amplitudes = numpy.abs(scipy.fft.rfft(x))
    frequencies = scipy.fft.rfftfreq(len(x), d=1.0 / sample_rate)
    amplitudes[frequencies < cutoff] = 0.0
    peak = amplitudes.max()
    # rounding leaves ~1e-12 in the bins of a constant series
    floor = 1e-9 * len(x) * max(numpy.abs(x).max(), 1.0)
    if peak <= floor:
        raise NoPeakError('no spectral component above %g Hz' % cutoff)
    return Spectrum(frequencies, amplitudes / peak, sample_rate, window)


def detect_vibration(series,
                     window=1.0,
                     cutoff=CUTOFF_HZ,
                     target=None,
                     tol=TOLERANCE_HZ,
                     sample_rate=SAMPLE_RATE,
                     top_k=TOP_K):
    """Dominant vibration frequency of an event-count series.

    Parameters
    ----------
    series : array_like
        N_E samples at `sample_rate`; the first window * sample_rate
        samples are used.
    window : float
        T_w in seconds.
    cutoff : float
        Components below cutoff (Hz) are discarded.
    target : float, optional
        Expected frequency f_d; success iff |detected - f_d| <= tol.
    tol : float
    top_k : int
        Number of largest components returned.

    Returns
    -------
    VibrationResult
    """
    spec = spectrum(series, window=window, cutoff=cutoff,
                    sample_rate=sample_rate)
    # argmax returns the first maximum, the lower frequency on ties
    detected = float(spec.frequencies[numpy.argmax(spec.amplitudes)])
    success = target is not None and abs(detected - target) <= tol
    freqs, amps = spec.top(top_k)
    return VibrationResult(detected, bool(success), freqs, amps, spec)


def segment_series(series, window=1.0, sample_rate=SAMPLE_RATE):
    """Contiguous non-overlapping segments of window * sample_rate samples.

    A trailing partial segment is dropped.
    """
    series = numpy.asarray(series, dtype=numpy.float64).ravel()
    n = int(round(window * sample_rate))
    if n < 1:
        raise InvalidInputError('window of %g s is too short' % window)
    k = len(series) // n
    return series[:k * n].reshape(k, n)


def _in_top(freqs, f, tol):
    return bool(numpy.any(numpy.abs(freqs - f) <= tol))


def vibration_report(series,
                     target,
                     window=1.0,
                     cutoff=CUTOFF_HZ,
                     tol=TOLERANCE_HZ,
                     sample_rate=SAMPLE_RATE):
    """Per-segment detection results as a DataFrame.

    Columns: segment, detected, success, target_in_top, half_in_top,
    double_in_top. Segments without any component above the cutoff are
    reported with detected = NaN and success = False.
    """
    rows = []
    for k, segment in enumerate(segment_series(series, window, sample_rate)):
        try:
            res = detect_vibration(segment, window, cutoff, target, tol,
                                   sample_rate)
        except NoPeakError:
            rows.append({'segment': k, 'detected': numpy.nan,
                         'success': False, 'target_in_top': False,
                         'half_in_top': False, 'double_in_top': False})
            continue
        rows.append({
            'segment': k,
            'detected': res.detected,
            'success': res.success,
            'target_in_top': _in_top(res.top_frequencies, target, tol),
            'half_in_top': _in_top(res.top_frequencies, target / 2, tol),
            'double_in_top': _in_top(res.top_frequencies, target * 2, tol),
        })
    report = pandas.DataFrame(rows, columns=[
        'segment', 'detected', 'success', 'target_in_top', 'half_in_top',
        'double_in_top'
    ])
    if len(report):
        logger.info('%g Hz, T_w=%g s: %d/%d segments', target, window,
                    int(report['success'].sum()), len(report))
    return report
