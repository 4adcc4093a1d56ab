"""Automatic repetition segmentation of the inclination signal.

Clinical trials come with manually placed event labels; this module produces
compatible labels when none exist, and diagnoses suspicious ones.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .data import STANDARD_REPS, SegmentationLabels
from .errors import SegmentationError

log = logging.getLogger(__name__)

DEFAULT_MIN_AMPLITUDE = 5.0   # deg above baseline; below plausible movement scale
DEFAULT_MIN_GAP = 0.3         # s between distinct repetition peaks
DEFAULT_SMOOTH_WINDOW = 0.15  # s of centered moving average before peak picking
BAND_FRACTION = 0.1           # start/end anchored at 10% of peak prominence


def auto_segment(theta: np.ndarray, t: np.ndarray, expected_reps: int = STANDARD_REPS,
                 min_amplitude: float = DEFAULT_MIN_AMPLITUDE,
                 min_gap: float = DEFAULT_MIN_GAP,
                 smooth_window: float = DEFAULT_SMOOTH_WINDOW) -> SegmentationLabels:
    """Detect repetition events from the inclination signal.

    Peaks are local maxima of the smoothed signal rising at least
    ``min_amplitude`` above the baseline (median of theta) and separated by
    ``min_gap``. Each repetition's start/end are the crossings of the
    baseline band (baseline + 10% of that peak's prominence) nearest before/
    after the peak, linearly interpolated between samples.

    Returns at most ``expected_reps`` labels; fewer detected peaks yield a
    flagged partial result, zero peaks raise SegmentationError.
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    if theta.ndim != 1 or theta.shape != t.shape or len(theta) < 3:
        raise SegmentationError("theta and t must be equal-length 1-D series")
    if not np.all(np.isfinite(theta)):
        raise SegmentationError("non-finite inclination value")
    if expected_reps < 1:
        raise SegmentationError("expected_reps must be >= 1")

    fs = 1.0 / float(np.median(np.diff(t)))
    win = max(1, int(round(smooth_window * fs)))
    if win % 2 == 0:
        win += 1
    smoothed = uniform_filter1d(theta, size=win, mode="nearest")
    baseline = float(np.median(theta))

    distance = max(1, int(round(min_gap * fs)))
    peaks, _ = find_peaks(smoothed, height=baseline + min_amplitude, distance=distance)
    if peaks.size == 0:
        raise SegmentationError(
            f"no repetition peaks above baseline {baseline:.3g} + {min_amplitude:.3g} deg")
    if peaks.size > expected_reps:
        order = np.argsort(smoothed[peaks])[::-1][:expected_reps]
        peaks = np.sort(peaks[order])
    if peaks.size < expected_reps:
        log.warning("found %d of %d expected repetitions", peaks.size, expected_reps)

    starts, tops, ends = [], [], []
    for j, p in enumerate(peaks):
        prominence = theta[p] - baseline
        level = baseline + BAND_FRACTION * prominence
        left_bound = peaks[j - 1] if j > 0 else 0
        right_bound = peaks[j + 1] if j + 1 < len(peaks) else len(theta) - 1
        starts.append(_cross_before(theta, t, p, left_bound, level))
        tops.append(float(t[p]))
        ends.append(_cross_after(theta, t, p, right_bound, level))

    # Repair overlaps between consecutive repetitions at the valley sample.
    for j in range(len(peaks) - 1):
        if ends[j] > starts[j + 1]:
            seg = slice(peaks[j], peaks[j + 1] + 1)
            valley = peaks[j] + int(np.argmin(theta[seg]))
            ends[j] = starts[j + 1] = float(t[valley])

    return SegmentationLabels(np.array(starts), np.array(tops), np.array(ends))


def _cross_before(theta, t, peak: int, bound: int, level: float) -> float:
    for i in range(peak - 1, bound - 1, -1):
        if theta[i] <= level:
            return _interp_crossing(t[i], theta[i], t[i + 1], theta[i + 1], level)
    seg = slice(bound, peak)
    i = bound + int(np.argmin(theta[seg]))
    return float(t[i])


def _cross_after(theta, t, peak: int, bound: int, level: float) -> float:
    for i in range(peak + 1, bound + 1):
        if theta[i] <= level:
            return _interp_crossing(t[i - 1], theta[i - 1], t[i], theta[i], level)
    seg = slice(peak + 1, bound + 1)
    i = peak + 1 + int(np.argmin(theta[seg]))
    return float(t[i])


def _interp_crossing(t0, v0, t1, v1, level) -> float:
    if v1 == v0:
        return float(t0)
    frac = (level - v0) / (v1 - v0)
    frac = min(1.0, max(0.0, frac))
    return float(t0 + frac * (t1 - t0))


@dataclass(frozen=True)
class LabelDiagnostics:
    """validate_labels output; empty lists mean the labels look sound."""

    ordering_violations: tuple[str, ...]
    peak_mismatches: tuple[tuple[int, float, float], ...]  # (r, theta_at_peak, interval_max)

    @property
    def ok(self) -> bool:
        return not self.ordering_violations and not self.peak_mismatches


def validate_labels(labels: SegmentationLabels, theta: np.ndarray, t: np.ndarray,
                    tol_deg: float = 1.0) -> LabelDiagnostics:
    """Diagnose labels against the signal (never raises).

    Reports ordering-chain violations and, per repetition, whether the
    labelled peak realizes the interval maximum of theta within ``tol_deg``.
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    violations = tuple(labels.ordering_violations())
    mismatches = []
    for r in range(labels.n_reps):
        ts, tp, te = labels.t_start[r], labels.t_peak[r], labels.t_end[r]
        if not (ts < tp < te):
            continue  # already reported as an ordering violation
        mask = (t >= ts) & (t <= te)
        if not mask.any():
            continue
        interval_max = float(np.max(theta[mask]))
        at_peak = float(np.interp(tp, t, theta))
        if at_peak < interval_max - tol_deg:
            mismatches.append((r + 1, at_peak, interval_max))
    return LabelDiagnostics(violations, tuple(mismatches))
