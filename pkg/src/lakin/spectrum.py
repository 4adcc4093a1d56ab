"""Frequency-domain features: mean-centered amplitude spectra and their power.

The spectrum of a length-N segment is |FFT(x - mean(x))| / N over all N bins
(no window, no zero padding); its power is the mean of the squared bins.
By Parseval this equals sum((x - mean)^2) / N^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

RESAMPLE_TOLERANCE = 0.1  # fraction of the nominal sample period


@dataclass(frozen=True)
class AmplitudeSpectrum:
    values: np.ndarray   # (N,) bin amplitudes, same units as the input signal
    bin_hz: float        # frequency resolution fs / N

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def n(self) -> int:
        return len(self.values)

    def one_sided(self) -> tuple[np.ndarray, np.ndarray]:
        """(frequencies, amplitudes) up to the Nyquist bin, for display."""
        half = self.n // 2 + 1
        freqs = np.arange(half) * self.bin_hz
        return freqs, self.values[:half]


def amplitude_spectrum(x, sample_rate: float) -> AmplitudeSpectrum:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValidationError("need a 1-D segment with at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite sample in segment")
    centered = x - x.mean()
    n = len(x)
    return AmplitudeSpectrum(np.abs(np.fft.fft(centered)) / n, sample_rate / n)


def spectrum_power(spec: AmplitudeSpectrum) -> float:
    """Mean of the squared amplitude-spectrum bins."""
    v = spec.values
    return float(v @ v) / spec.n


def extract_segment(t, x, t_start: float, t_end: float,
                    sample_rate: float) -> np.ndarray:
    """Samples of x within [t_start, t_end], uniformly resampled if needed.

    The transform assumes uniform sampling; when any step inside the segment
    deviates from the nominal period by more than 10%, the segment is
    linearly resampled onto the nominal rate.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t_end <= t_start:
        raise ValidationError("empty segment")
    mask = (t >= t_start) & (t <= t_end)
    if mask.sum() < 2:
        raise ValidationError("segment must contain at least 2 samples")
    ts = t[mask]
    xs = x[mask]
    period = 1.0 / sample_rate
    steps = np.diff(ts)
    if np.max(np.abs(steps - period)) > RESAMPLE_TOLERANCE * period:
        n = int(np.floor((ts[-1] - ts[0]) / period)) + 1
        grid = ts[0] + np.arange(n) * period
        xs = np.interp(grid, ts, xs)
    return xs
