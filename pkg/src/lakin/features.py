"""Time-domain kinematic features of labelled repetitions.

Per repetition r: ascent/descent angular amplitudes from the inclination at
the start/peak/end instants, their mean, and the angular speed over the
repetition. Per consecutive pair: the pause between repetitions and the
peak-to-peak regularity interval. Per trial: means, sample standard
deviations and the repetition frequency, plus relative left/right
differences when both legs are available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import SegmentationLabels
from .errors import FeatureError

#: Canonical order of the scalar feature set used downstream.
FEATURE_NAMES = ("Theta", "Omega", "P", "R", "Theta_SD", "Omega_SD",
                 "P_SD", "R_SD", "F", "P_Xomega", "P_Xtheta")

TIME_FEATURE_COLUMNS = ("Theta", "Omega", "P", "R", "Theta_SD", "Omega_SD",
                        "P_SD", "R_SD", "F")


@dataclass(frozen=True)
class RepetitionFeatures:
    r: int                      # 1-based repetition index
    theta_a: float              # deg, ascent amplitude
    theta_d: float              # deg, descent amplitude
    theta: float                # deg, (theta_a + theta_d) / 2
    omega: float                # deg/s, (theta_a + theta_d) / duration
    duration: float             # s, t_end - t_start
    pause: float | None         # s, to next repetition (None for the last)
    regularity: float | None    # s, peak-to-peak interval (None for the last)


@dataclass(frozen=True)
class TrialTimeFeatures:
    theta: float
    omega: float
    pause: float
    regularity: float
    theta_sd: float
    omega_sd: float
    pause_sd: float
    regularity_sd: float
    frequency: float
    n_reps: int

    def as_dict(self) -> dict[str, float]:
        return {
            "Theta": self.theta, "Omega": self.omega, "P": self.pause,
            "R": self.regularity, "Theta_SD": self.theta_sd,
            "Omega_SD": self.omega_sd, "P_SD": self.pause_sd,
            "R_SD": self.regularity_sd, "F": self.frequency,
        }


@dataclass(frozen=True)
class LRFeatures:
    """Relative left-minus-right differences, in percent of the right leg."""

    d_theta: tuple[float, ...]   # per repetition
    d_omega: tuple[float, ...]
    d_theta_mean: float
    d_omega_mean: float


def interp_at(theta: np.ndarray, t: np.ndarray, times) -> np.ndarray:
    """Linearly interpolate theta at label instants; reject out-of-range times."""
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.min() < t[0] or times.max() > t[-1]:
        raise FeatureError(
            f"label time outside recorded range [{t[0]:.6g}, {t[-1]:.6g}]")
    return np.interp(times, t, theta)


def repetition_features(theta: np.ndarray, t: np.ndarray,
                        labels: SegmentationLabels, r: int) -> RepetitionFeatures:
    """Features of repetition r (1-based)."""
    if not 1 <= r <= labels.n_reps:
        raise FeatureError(f"repetition {r} out of range 1..{labels.n_reps}")
    i = r - 1
    v_s, v_p, v_e = interp_at(theta, t, [labels.t_start[i], labels.t_peak[i],
                                         labels.t_end[i]])
    theta_a = float(v_p - v_s)
    theta_d = float(v_p - v_e)
    duration = float(labels.t_end[i] - labels.t_start[i])
    pause = regularity = None
    if r < labels.n_reps:
        pause, regularity = pause_and_regularity(labels, r)
    return RepetitionFeatures(
        r=r,
        theta_a=theta_a,
        theta_d=theta_d,
        theta=0.5 * (theta_a + theta_d),
        omega=(theta_a + theta_d) / duration,
        duration=duration,
        pause=pause,
        regularity=regularity,
    )


def pause_and_regularity(labels: SegmentationLabels, r: int) -> tuple[float, float]:
    """Pause t_start(r+1) - t_end(r) and regularity t_peak(r+1) - t_peak(r)."""
    if not 1 <= r < labels.n_reps:
        raise FeatureError(
            f"pause/regularity need a following repetition; r={r} of {labels.n_reps}")
    i = r - 1
    return (float(labels.t_start[i + 1] - labels.t_end[i]),
            float(labels.t_peak[i + 1] - labels.t_peak[i]))


def all_repetition_features(theta, t, labels) -> list[RepetitionFeatures]:
    return [repetition_features(theta, t, labels, r)
            for r in range(1, labels.n_reps + 1)]


def trial_time_features(theta, t, labels: SegmentationLabels) -> TrialTimeFeatures:
    """Trial-level aggregation: means over the n repetitions (n-1 for pause
    and regularity), sample SDs, and frequency n / (t_end(n) - t_start(1)).
    """
    n = labels.n_reps
    if n < 3:
        raise FeatureError(
            f"need at least 3 repetitions for sample SDs of pause/regularity, got {n}")
    reps = all_repetition_features(theta, t, labels)
    thetas = [f.theta for f in reps]
    omegas = [f.omega for f in reps]
    pauses = [f.pause for f in reps[:-1]]
    regs = [f.regularity for f in reps[:-1]]
    span = float(labels.t_end[-1] - labels.t_start[0])
    return TrialTimeFeatures(
        theta=_mean(thetas), omega=_mean(omegas),
        pause=_mean(pauses), regularity=_mean(regs),
        theta_sd=_sample_sd(thetas), omega_sd=_sample_sd(omegas),
        pause_sd=_sample_sd(pauses), regularity_sd=_sample_sd(regs),
        frequency=n / span, n_reps=n,
    )


def lr_differences(left: Sequence[RepetitionFeatures],
                   right: Sequence[RepetitionFeatures]) -> LRFeatures:
    """Per-repetition relative differences (LLA - RLA) / RLA * 100."""
    if len(left) != len(right) or not left:
        raise FeatureError(
            f"left/right repetition counts differ: {len(left)} vs {len(right)}")
    d_theta, d_omega = [], []
    for fl, fr in zip(left, right):
        if fr.theta == 0.0 or fr.omega == 0.0:
            raise FeatureError(
                f"right-leg amplitude/speed is zero at repetition {fr.r}")
        d_theta.append((fl.theta - fr.theta) / fr.theta * 100.0)
        d_omega.append((fl.omega - fr.omega) / fr.omega * 100.0)
    return LRFeatures(tuple(d_theta), tuple(d_omega),
                      _mean(d_theta), _mean(d_omega))


def _mean(values) -> float:
    return float(sum(values) / len(values))


def _sample_sd(values) -> float:
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))
