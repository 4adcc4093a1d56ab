"""Batch processing: manifest -> kinematics -> features -> CSV tables."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import features as ft
from . import spectrum as sp
from .data import (STANDARD_REPS, ManifestEntry, SegmentationLabels, TrialMeta,
                   load_labels, load_trial)
from .errors import LakinError, ValidationError
from .ml import FeatureMatrix, resolve_workers
from .orientation import (MountingConfig, angular_velocity_series,
                          fuse_orientation, inclination_series, resolve_sign)
from .segmentation import auto_segment

log = logging.getLogger(__name__)

FEATURE_CSV_COLUMNS = ("trial_id", "patient_id", "leg", "updrs") + ft.FEATURE_NAMES
LR_CSV_COLUMNS = ("patient_id", "left_trial_id", "right_trial_id",
                  "updrs_left", "updrs_right", "D_Theta_LR", "D_Omega_LR")


@dataclass(frozen=True)
class TrialResult:
    meta: TrialMeta
    t: np.ndarray | None = None
    theta: np.ndarray | None = None
    omega: np.ndarray | None = None
    labels: SegmentationLabels | None = None
    rep_features: tuple[ft.RepetitionFeatures, ...] | None = None
    time_features: ft.TrialTimeFeatures | None = None
    p_xtheta: float | None = None
    p_xomega: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def feature_row(self) -> dict:
        row = {"trial_id": self.meta.trial_id, "patient_id": self.meta.patient_id,
               "leg": self.meta.leg, "updrs": float(self.meta.updrs)}
        row.update(self.time_features.as_dict())
        row["P_Xtheta"] = self.p_xtheta
        row["P_Xomega"] = self.p_xomega
        return row


def process_trial(entry: ManifestEntry, mounting: MountingConfig | None = None,
                  segmentation: str = "labels", use_mag: bool = True,
                  expected_reps: int = STANDARD_REPS) -> TrialResult:
    """Full single-trial pipeline; failures come back in ``error`` so a batch
    run can continue past a corrupt trial."""
    mounting = mounting or MountingConfig()
    try:
        recording = load_trial(entry.recording, entry.meta)
        quats = fuse_orientation(recording, mounting, use_mag=use_mag)
        theta = inclination_series(quats, mounting)
        omega = angular_velocity_series(recording, mounting)

        if segmentation == "labels":
            if entry.labels is None:
                raise ValidationError("manifest entry has no labels file")
            labels = load_labels(entry.labels)
            theta, omega, _ = resolve_sign(theta, omega, recording.t, labels.t_peak)
        elif segmentation == "auto":
            theta, omega, _ = resolve_sign(theta, omega, recording.t)
            labels = auto_segment(theta, recording.t, expected_reps=expected_reps)
        else:
            raise ValidationError(f"unknown segmentation mode {segmentation!r}")

        _check_labels_in_range(labels, recording.t)
        reps = ft.all_repetition_features(theta, recording.t, labels)
        time_features = ft.trial_time_features(theta, recording.t, labels)
        t0, t1 = labels.span()
        rate = entry.meta.sample_rate
        seg_theta = sp.extract_segment(recording.t, theta, t0, t1, rate)
        seg_omega = sp.extract_segment(recording.t, omega, t0, t1, rate)
        p_xtheta = sp.spectrum_power(sp.amplitude_spectrum(seg_theta, rate))
        p_xomega = sp.spectrum_power(sp.amplitude_spectrum(seg_omega, rate))
        return TrialResult(meta=entry.meta, t=recording.t, theta=theta, omega=omega,
                           labels=labels, rep_features=tuple(reps),
                           time_features=time_features,
                           p_xtheta=p_xtheta, p_xomega=p_xomega)
    except (LakinError, OSError) as exc:
        log.error("trial %s failed: %s", entry.meta.trial_id, exc)
        return TrialResult(meta=entry.meta, error=str(exc))


def _check_labels_in_range(labels: SegmentationLabels, t: np.ndarray) -> None:
    lo, hi = labels.t_start[0], labels.t_end[-1]
    if lo < t[0] or hi > t[-1]:
        raise ValidationError(
            f"labels [{lo:.6g}, {hi:.6g}] outside recording [{t[0]:.6g}, {t[-1]:.6g}]")


def _process_args(args) -> TrialResult:
    return process_trial(*args)


def run_pipeline(entries: list[ManifestEntry], mounting: MountingConfig | None = None,
                 segmentation: str = "labels", use_mag: bool = True,
                 workers: int | None = None) -> list[TrialResult]:
    """Process trials with a worker pool; results come back in manifest order."""
    jobs = [(e, mounting, segmentation, use_mag) for e in entries]
    n_workers = resolve_workers(workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
            return list(pool.map(_process_args, jobs))
    return [_process_args(j) for j in jobs]


def lr_pairs(results: list[TrialResult]) -> list[tuple[TrialResult, TrialResult]]:
    """Match each patient's left and right trials (first of each side wins)."""
    by_patient: dict[str, dict[str, TrialResult]] = {}
    order: list[str] = []
    for res in results:
        if not res.ok:
            continue
        sides = by_patient.setdefault(res.meta.patient_id, {})
        if res.meta.patient_id not in order:
            order.append(res.meta.patient_id)
        sides.setdefault(res.meta.leg, res)
    pairs = []
    for pid in order:
        sides = by_patient[pid]
        if "LLA" in sides and "RLA" in sides:
            pairs.append((sides["LLA"], sides["RLA"]))
    return pairs


def write_features_csv(results: list[TrialResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FEATURE_CSV_COLUMNS)
        writer.writeheader()
        for res in results:
            if res.ok:
                writer.writerow({k: _fmt(v) for k, v in res.feature_row().items()})


def write_lr_csv(results: list[TrialResult], path) -> list[str]:
    """One row per matched left/right pair; returns per-pair errors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    errors = []
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LR_CSV_COLUMNS)
        writer.writeheader()
        for left, right in lr_pairs(results):
            try:
                lr = ft.lr_differences(left.rep_features, right.rep_features)
            except LakinError as exc:
                errors.append(f"{left.meta.patient_id}: {exc}")
                continue
            writer.writerow({
                "patient_id": left.meta.patient_id,
                "left_trial_id": left.meta.trial_id,
                "right_trial_id": right.meta.trial_id,
                "updrs_left": _fmt(float(left.meta.updrs)),
                "updrs_right": _fmt(float(right.meta.updrs)),
                "D_Theta_LR": _fmt(lr.d_theta_mean),
                "D_Omega_LR": _fmt(lr.d_omega_mean),
            })
    return errors


def write_kinematics_csv(result: TrialResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "omega"])
        for row in zip(result.t, result.theta, result.omega):
            writer.writerow([_fmt(v) for v in row])


def feature_matrix_from_results(results: list[TrialResult]) -> FeatureMatrix:
    rows, labels, ids = [], [], []
    for res in results:
        if not res.ok:
            continue
        row = res.feature_row()
        rows.append([row[name] for name in ft.FEATURE_NAMES])
        labels.append(res.meta.updrs)
        ids.append(res.meta.trial_id)
    if not rows:
        raise ValidationError("no successfully processed trials")
    return FeatureMatrix(np.array(rows, dtype=float), ft.FEATURE_NAMES,
                         tuple(labels), tuple(ids))


def load_feature_matrix(path) -> FeatureMatrix:
    """Read a features CSV back into a matrix (all 11 canonical columns)."""
    path = Path(path)
    rows, labels, ids = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FEATURE_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            rows.append([float(rec[name]) for name in ft.FEATURE_NAMES])
            labels.append(Fraction(rec["updrs"]))
            ids.append(rec["trial_id"])
    if not rows:
        raise ValidationError(f"{path}: no feature rows")
    return FeatureMatrix(np.array(rows, dtype=float), ft.FEATURE_NAMES,
                         tuple(labels), tuple(ids))


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))
