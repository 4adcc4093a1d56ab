"""Deterministic synthetic leg-agility trials with exact ground truth.

The inclination trace is built from raised-cosine pulses with per-repetition
amplitude decay, inter-repetition rests at zero, and optional mid-raise
hesitations realized as a smooth time warp (the raise slows but never
reverses, so the pulse stays unimodal). The angular velocity is the exact
analytic derivative. Sensor streams are synthesized by inverting the
orientation pipeline: the gyroscope reads the exact body rates, the
accelerometer the rotated gravity, the magnetometer the rotated north, so a
correct fusion filter can reproduce the inclination exactly.

Event labels are anchored where each pulse crosses 10% of its amplitude,
the same convention the automatic segmenter uses for its baseline band;
ground-truth features follow analytically from that convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import (DEFAULT_SAMPLE_RATE, STANDARD_REPS, ManifestEntry,
                   SegmentationLabels, TrialMeta, TrialRecording, as_updrs,
                   write_labels, write_manifest, write_trial)
from .errors import ValidationError
from .features import TrialTimeFeatures
from .orientation import rotate_vectors
from .segmentation import BAND_FRACTION

GRAVITY = 9.81
# Unit world magnetic field: north with a 60 degree downward dip.
MAG_WORLD = np.array([0.5, 0.0, -math.sqrt(3.0) / 2.0])

# Pulse phase where the raised cosine crosses the label anchor level.
_S0 = math.acos(1.0 - 2.0 * BAND_FRACTION) / (2.0 * math.pi)

_BUMP_WIDTH = 0.05            # hesitation bump width in cycle fraction
_BUMP_CENTERS = (0.20, 0.27, 0.34, 0.41)

LEAD_IN = 1.5                 # s of rest before the first repetition
TAIL = 0.5                    # s of rest after the last


@dataclass(frozen=True)
class SynthParams:
    reps: int = STANDARD_REPS
    base_amplitude: float = 30.0     # deg, first-repetition pulse height
    decrement_per_rep: float = 0.0   # fractional amplitude loss per repetition
    cycle_period: float = 1.0        # s per raise-stomp pulse
    pause: float = 1.2               # s of rest between pulses
    hesitation_count: int = 0        # mid-raise slowdowns per repetition
    hesitation_depth: float = 0.0    # fractional rate reduction in a slowdown
    noise_sd: float = 0.0            # additive Gaussian SD per sensor channel
    severity: float = 0.0            # scalar the schedules were derived from
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if not self.base_amplitude > 0:
            raise ValidationError("base_amplitude must be > 0")
        if not 0.0 <= self.decrement_per_rep < 1.0:
            raise ValidationError("decrement_per_rep must be in [0, 1)")
        if not (self.cycle_period > 0 and self.pause >= 0):
            raise ValidationError("cycle_period must be > 0 and pause >= 0")
        if not 0 <= self.hesitation_count <= len(_BUMP_CENTERS):
            raise ValidationError(
                f"hesitation_count must be in 0..{len(_BUMP_CENTERS)}")
        if not 0.0 <= self.hesitation_depth < 1.0:
            raise ValidationError("hesitation_depth must be in [0, 1)")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if not 0.0 <= self.severity <= 4.0:
            raise ValidationError("severity must be in [0, 4]")

    @classmethod
    def from_severity(cls, severity: float, seed: int = 0,
                      noise_sd: float = 0.0, reps: int = STANDARD_REPS,
                      amplitude_scale: float = 1.0) -> "SynthParams":
        """Fixed monotone schedules: worse scores move less, slower, with
        longer pauses and more hesitation."""
        s = float(severity)
        return cls(
            reps=reps,
            base_amplitude=(30.0 - 4.0 * s) * amplitude_scale,
            decrement_per_rep=0.008 + 0.018 * s,
            cycle_period=1.0 + 0.2 * s,
            pause=1.2 + 0.25 * s,
            hesitation_count=int(round(s)),
            hesitation_depth=0.08 * s,
            noise_sd=noise_sd,
            severity=s,
            seed=seed,
        )


class _PulseShape:
    """One warped raised-cosine pulse on the unit interval."""

    def __init__(self, hesitation_count: int, hesitation_depth: float):
        self.depth = hesitation_depth if hesitation_count else 0.0
        self.centers = _BUMP_CENTERS[:hesitation_count]
        self.width = _BUMP_WIDTH
        self.z = 1.0 - self.depth * len(self.centers) * self.width / 2.0
        self.u_start = self._invert(_S0)
        self.u_peak = self._invert(0.5)
        self.u_end = self._invert(1.0 - _S0)

    def warp(self, u):
        u = np.asarray(u, dtype=float)
        total = np.zeros_like(u)
        for c in self.centers:
            x = np.clip(u - c, -self.width / 2.0, self.width / 2.0)
            total += (x / 2.0 + self.width / 4.0
                      + (self.width / (4.0 * np.pi)) * np.sin(2.0 * np.pi * x / self.width))
        return (u - self.depth * total) / self.z

    def warp_rate(self, u):
        u = np.asarray(u, dtype=float)
        total = np.zeros_like(u)
        for c in self.centers:
            x = u - c
            inside = np.abs(x) <= self.width / 2.0
            total[inside] += (1.0 + np.cos(2.0 * np.pi * x[inside] / self.width)) / 2.0
        return (1.0 - self.depth * total) / self.z

    def value(self, u):
        """Pulse height fraction in [0, 1] at cycle fraction u."""
        s = self.warp(u)
        return (1.0 - np.cos(2.0 * np.pi * s)) / 2.0

    def rate(self, u):
        """d(value)/du."""
        s = self.warp(u)
        return np.pi * np.sin(2.0 * np.pi * s) * self.warp_rate(u)

    def _invert(self, target: float) -> float:
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(self.warp(mid)) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SynthTruth:
    """Exact per-sample kinematics and analytic feature values."""

    t: np.ndarray
    theta: np.ndarray         # deg
    omega: np.ndarray         # deg/s
    quats: np.ndarray         # (n, 4) true device orientation
    labels: SegmentationLabels
    rep_theta: tuple[float, ...]
    rep_omega: tuple[float, ...]
    rep_pause: tuple[float, ...]
    rep_regularity: tuple[float, ...]
    time_features: TrialTimeFeatures


def generate_trial(params: SynthParams, meta: TrialMeta | None = None,
                   sample_rate: float = DEFAULT_SAMPLE_RATE,
                   world_yaw_deg: float = 0.0) -> tuple[TrialRecording, SegmentationLabels, SynthTruth]:
    """Synthesize one trial: recording, labels and exact ground truth.

    Cycle starts snap to the sample grid so the signal's rest-to-rise
    transitions coincide with samples. The same seed always produces the
    same recording byte-for-byte.
    """
    if meta is None:
        meta = TrialMeta(trial_id=f"synth-{params.seed}", patient_id="synth",
                         leg="RLA", updrs=_grid_score(params.severity),
                         sample_rate=sample_rate)
    dt = 1.0 / sample_rate
    n_cycle = max(2, int(round(params.cycle_period * sample_rate)))
    n_pause = int(round(params.pause * sample_rate))
    n_lead = int(round(LEAD_IN * sample_rate))
    n_tail = int(round(TAIL * sample_rate))
    cycle = n_cycle * dt

    shape = _PulseShape(params.hesitation_count, params.hesitation_depth)
    amplitudes = [params.base_amplitude * (1.0 - params.decrement_per_rep) ** r
                  for r in range(params.reps)]

    n_total = n_lead + params.reps * n_cycle + (params.reps - 1) * n_pause + n_tail
    t = np.arange(n_total) * dt
    theta = np.zeros(n_total)
    omega = np.zeros(n_total)
    starts, peaks, ends = [], [], []
    for r in range(params.reps):
        i0 = n_lead + r * (n_cycle + n_pause)
        start_time = i0 * dt
        seg = slice(i0, i0 + n_cycle + 1)
        u = (t[seg] - start_time) / cycle
        theta[seg] = amplitudes[r] * shape.value(u)
        omega[seg] = amplitudes[r] * shape.rate(u) / cycle
        starts.append(start_time + shape.u_start * cycle)
        peaks.append(start_time + shape.u_peak * cycle)
        ends.append(start_time + shape.u_end * cycle)
    labels = SegmentationLabels(np.array(starts), np.array(peaks), np.array(ends))

    quats = _orientation_from_inclination(theta, world_yaw_deg)
    gyr = np.zeros((n_total, 3))
    gyr[:, 1] = -omega
    alpha = np.deg2rad(theta)
    acc = GRAVITY * np.column_stack([np.sin(alpha), np.zeros(n_total), np.cos(alpha)])
    mag = _device_mag(alpha, math.radians(world_yaw_deg))

    if params.noise_sd > 0:
        rng = np.random.default_rng(params.seed)
        gyr = gyr + rng.normal(0.0, params.noise_sd, gyr.shape)
        acc = acc + rng.normal(0.0, params.noise_sd, acc.shape)
        mag = mag + rng.normal(0.0, params.noise_sd, mag.shape)

    recording = TrialRecording(meta=meta, t=t, acc=acc, gyr=gyr, mag=mag)
    truth = _build_truth(t, theta, omega, quats, labels, amplitudes, shape,
                         cycle, n_pause * dt, params.reps)
    return recording, labels, truth


def _grid_score(severity: float) -> Fraction:
    return as_updrs(Fraction(round(severity * 2), 2))


def _orientation_from_inclination(theta_deg: np.ndarray, world_yaw_deg: float) -> np.ndarray:
    """True device->world quaternion: yaw about world z after a pitch that
    raises the device x axis to the inclination angle."""
    half = np.deg2rad(theta_deg) / 2.0
    q = np.zeros((len(theta_deg), 4))
    q[:, 0] = np.cos(half)
    q[:, 2] = -np.sin(half)   # rotation about world y by -theta
    if world_yaw_deg:
        h = math.radians(world_yaw_deg) / 2.0
        yw, yz = math.cos(h), math.sin(h)
        # quat multiply (yaw) x (pitch); yaw quat is (yw, 0, 0, yz)
        out = np.empty_like(q)
        out[:, 0] = yw * q[:, 0] - yz * q[:, 3]
        out[:, 1] = yw * q[:, 1] - yz * q[:, 2]
        out[:, 2] = yw * q[:, 2] + yz * q[:, 1]
        out[:, 3] = yw * q[:, 3] + yz * q[:, 0]
        q = out
    return q


def _device_mag(alpha_rad: np.ndarray, yaw_rad: float) -> np.ndarray:
    """Magnetic field in the device frame for pitch alpha after world yaw."""
    c, s = math.cos(yaw_rad), math.sin(yaw_rad)
    mx = c * MAG_WORLD[0] + s * MAG_WORLD[1]
    my = -s * MAG_WORLD[0] + c * MAG_WORLD[1]
    mz = MAG_WORLD[2]
    ca, sa = np.cos(alpha_rad), np.sin(alpha_rad)
    return np.column_stack([ca * mx + sa * mz,
                            np.full_like(ca, my),
                            -sa * mx + ca * mz])


def _build_truth(t, theta, omega, quats, labels, amplitudes, shape: _PulseShape,
                 cycle: float, pause: float, reps: int) -> SynthTruth:
    span_u = shape.u_end - shape.u_start
    # The anchor level sits at BAND_FRACTION of the pulse height, so both
    # ascent and descent amplitudes are (1 - BAND_FRACTION) * A.
    rep_theta = tuple((1.0 - BAND_FRACTION) * a for a in amplitudes)
    rep_omega = tuple(2.0 * (1.0 - BAND_FRACTION) * a / (span_u * cycle)
                      for a in amplitudes)
    rep_pause = tuple([pause + cycle * (1.0 - span_u)] * (reps - 1))
    rep_reg = tuple([cycle + pause] * (reps - 1))
    span = float(labels.t_end[-1] - labels.t_start[0])
    features = TrialTimeFeatures(
        theta=_mean(rep_theta), omega=_mean(rep_omega),
        pause=_mean(rep_pause), regularity=_mean(rep_reg),
        theta_sd=_sd(rep_theta), omega_sd=_sd(rep_omega),
        pause_sd=_sd(rep_pause), regularity_sd=_sd(rep_reg),
        frequency=reps / span, n_reps=reps,
    )
    return SynthTruth(t=t, theta=theta, omega=omega, quats=quats, labels=labels,
                      rep_theta=rep_theta, rep_omega=rep_omega,
                      rep_pause=rep_pause, rep_regularity=rep_reg,
                      time_features=features)


def _mean(v):
    return float(sum(v) / len(v))


def _sd(v):
    if len(v) < 2:
        return 0.0
    m = _mean(v)
    return math.sqrt(sum((x - m) ** 2 for x in v) / (len(v) - 1))


def constant_rotation_trial(axis, rate_dps: float, duration: float,
                            sample_rate: float = DEFAULT_SAMPLE_RATE,
                            meta: TrialMeta | None = None) -> tuple[TrialRecording, np.ndarray]:
    """Rigid rotation at a constant rate about a fixed world axis, with
    consistent gyro/accel/mag streams. Returns the recording and the true
    per-sample quaternions (closed-form rotation generator).
    """
    axis = np.asarray(axis, dtype=float)
    n_ax = np.linalg.norm(axis)
    if n_ax == 0:
        raise ValidationError("rotation axis must be nonzero")
    axis = axis / n_ax
    if meta is None:
        meta = TrialMeta(trial_id=f"rot-{rate_dps:g}", patient_id="synth",
                         leg="RLA", updrs=Fraction(0), sample_rate=sample_rate)
    n = int(round(duration * sample_rate)) + 1
    t = np.arange(n) / sample_rate
    half = np.deg2rad(rate_dps) * t / 2.0
    quats = np.column_stack([np.cos(half), np.outer(np.sin(half), axis)])

    # Device-frame streams: v_dev = R(t)^T v_world.
    conj = quats.copy()
    conj[:, 1:] *= -1.0
    omega_world = rate_dps * axis
    gyr = rotate_vectors(conj, omega_world)
    acc = rotate_vectors(conj, np.array([0.0, 0.0, GRAVITY]))
    mag = rotate_vectors(conj, MAG_WORLD)
    recording = TrialRecording(meta=meta, t=t, acc=acc, gyr=gyr, mag=mag)
    return recording, quats


SEVERITY_GRID = tuple(Fraction(k, 2) for k in range(9))


def make_dataset(out_dir, patients: int = 36, seed: int = 0,
                 noise_sd: float = 0.0, reps: int = STANDARD_REPS,
                 sample_rate: float = DEFAULT_SAMPLE_RATE) -> Path:
    """Write a synthetic clinic: two legs per patient, severities cycling
    through the half-step grid, worse patients more asymmetric. Returns the
    manifest path.
    """
    out_dir = Path(out_dir)
    (out_dir / "recordings").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(patients):
        severity = SEVERITY_GRID[i % len(SEVERITY_GRID)]
        patient_id = f"P{i:03d}"
        for leg_idx, leg in enumerate(("RLA", "LLA")):
            rng = np.random.default_rng([seed, i, leg_idx])
            trial_seed = int(rng.integers(0, 2 ** 31))
            jitter = 1.0 + 0.04 * float(rng.standard_normal())
            asym = (0.01 + 0.0125 * float(severity)) if leg == "RLA" else 0.0
            params = SynthParams.from_severity(
                float(severity), seed=trial_seed, noise_sd=noise_sd, reps=reps,
                amplitude_scale=max(0.5, jitter) * (1.0 - asym))
            meta = TrialMeta(trial_id=f"{patient_id}-{leg}", patient_id=patient_id,
                             leg=leg, updrs=severity, sample_rate=sample_rate)
            recording, labels, _ = generate_trial(params, meta, sample_rate)
            rec_path = out_dir / "recordings" / f"{meta.trial_id}.csv"
            lab_path = out_dir / "labels" / f"{meta.trial_id}.csv"
            write_trial(recording, rec_path)
            write_labels(labels, lab_path)
            entries.append(ManifestEntry(meta=meta, recording=rec_path,
                                         labels=lab_path))
    manifest = out_dir / "manifest.json"
    write_manifest(entries, manifest)
    return manifest
