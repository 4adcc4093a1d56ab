"""Trial, label, and manifest data model with CSV/JSON ingestion.

One trial is a single-leg execution of the leg-agility exercise: a 9-axis
inertial recording plus metadata (leg side, clinician score on the half-step
0..4 grid). Repetition boundaries live in a separate label file.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

STANDARD_REPS = 10
DEFAULT_SAMPLE_RATE = 102.4

TRIAL_HEADER = ("t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")
LABEL_HEADER = ("r", "t_start", "t_peak", "t_end")

LEGS = ("RLA", "LLA")

# Numeric text output keeps 9 significant digits so that files written with
# <= 9 significant decimal digits round-trip bit-exactly.
_FLOAT_FMT = "%.9g"


def as_updrs(value) -> Fraction:
    """Coerce a score to an exact rational and check the half-step grid."""
    if isinstance(value, Fraction):
        u = value
    elif isinstance(value, int):
        u = Fraction(value)
    elif isinstance(value, float) or isinstance(value, str):
        u = Fraction(str(value))
    else:
        raise ValidationError(f"unsupported UPDRS value type: {type(value)!r}")
    if (2 * u).denominator != 1 or not (0 <= u <= 4):
        raise ValidationError(f"UPDRS score {u} is not on the half-step grid 0..4")
    return u


class ImuSample(NamedTuple):
    """One timestamped 9-axis sample (acc m/s^2, gyr deg/s, mag normalized)."""

    t: float
    acc: tuple[float, float, float]
    gyr: tuple[float, float, float]
    mag: tuple[float, float, float]


@dataclass(frozen=True)
class TrialMeta:
    trial_id: str
    patient_id: str
    leg: str
    updrs: Fraction
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.leg not in LEGS:
            raise ValidationError(f"leg must be one of {LEGS}, got {self.leg!r}")
        object.__setattr__(self, "updrs", as_updrs(self.updrs))
        if not self.sample_rate > 0:
            raise ValidationError(f"sample_rate must be > 0, got {self.sample_rate}")


@dataclass(frozen=True)
class TrialRecording:
    """Raw sensor streams of one trial, timestamps strictly increasing."""

    meta: TrialMeta
    t: np.ndarray          # (n,) seconds
    acc: np.ndarray        # (n, 3) m/s^2
    gyr: np.ndarray        # (n, 3) deg/s
    mag: np.ndarray | None  # (n, 3) normalized, optional

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "acc", _as_vec3(self.acc, len(t), "acc"))
        object.__setattr__(self, "gyr", _as_vec3(self.gyr, len(t), "gyr"))
        if self.mag is not None:
            object.__setattr__(self, "mag", _as_vec3(self.mag, len(t), "mag"))
        if len(t) < 2:
            raise ValidationError("recording needs at least 2 samples")
        if not np.all(np.isfinite(t)):
            raise ValidationError("non-finite timestamp")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise ValidationError(
                f"timestamps not strictly increasing at sample {bad[0] + 1} "
                f"(t={t[bad[0]]:.6g} -> t={t[bad[0] + 1]:.6g})"
            )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def samples(self) -> Iterator[ImuSample]:
        mag = self.mag if self.mag is not None else np.zeros_like(self.acc)
        for i in range(len(self.t)):
            yield ImuSample(
                float(self.t[i]),
                tuple(self.acc[i]),
                tuple(self.gyr[i]),
                tuple(mag[i]),
            )


def _as_vec3(a, n: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (n, 3):
        raise ValidationError(f"{name} must have shape ({n}, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"non-finite value in {name}")
    return a


@dataclass(frozen=True)
class SegmentationLabels:
    """Per-repetition event times: start, peak of inclination, end.

    Invariant (when ``validate``): t_start(r) < t_peak(r) < t_end(r) and
    t_end(r) <= t_start(r+1) for every consecutive pair.
    """

    t_start: np.ndarray
    t_peak: np.ndarray
    t_end: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        for name in ("t_start", "t_peak", "t_end"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.t_start)
        if not (len(self.t_peak) == n and len(self.t_end) == n):
            raise ValidationError("label arrays must have equal length")
        if n == 0:
            raise ValidationError("empty label set")
        if self.validate:
            problems = self.ordering_violations()
            if problems:
                raise ValidationError(problems[0])
        if n < STANDARD_REPS:
            log.warning("short trial: %d repetitions (standard is %d)", n, STANDARD_REPS)

    @property
    def n_reps(self) -> int:
        return len(self.t_start)

    @property
    def complete(self) -> bool:
        return self.n_reps >= STANDARD_REPS

    def ordering_violations(self) -> list[str]:
        """All violations of the event-ordering chain, 1-based repetition index."""
        out = []
        for r in range(self.n_reps):
            if not self.t_start[r] < self.t_peak[r]:
                out.append(f"repetition {r + 1}: t_peak must follow t_start")
            if not self.t_peak[r] < self.t_end[r]:
                out.append(f"repetition {r + 1}: t_peak {self.t_peak[r]:.6g} outside "
                           f"(t_start, t_end)")
            if r + 1 < self.n_reps and not self.t_end[r] <= self.t_start[r + 1]:
                out.append(f"repetition {r + 1}: t_end {self.t_end[r]:.6g} overlaps "
                           f"start of repetition {r + 2}")
        return out

    def span(self) -> tuple[float, float]:
        return float(self.t_start[0]), float(self.t_end[-1])


@dataclass(frozen=True)
class ManifestEntry:
    meta: TrialMeta
    recording: Path
    labels: Path | None


def load_trial(path, meta: TrialMeta) -> TrialRecording:
    """Parse a trial CSV (header t,ax,..,mz) into a recording."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRIAL_HEADER:
            raise ParseError(f"expected header {','.join(TRIAL_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRIAL_HEADER):
                raise ParseError(f"expected {len(TRIAL_HEADER)} fields, got {len(row)}",
                                 path, lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"bad numeric field: {exc}", path, lineno) from exc
    if len(rows) < 2:
        raise ValidationError(f"{path}: recording needs at least 2 samples")
    arr = np.asarray(rows, dtype=float)
    return TrialRecording(meta=meta, t=arr[:, 0], acc=arr[:, 1:4],
                          gyr=arr[:, 4:7], mag=arr[:, 7:10])


def write_trial(recording: TrialRecording, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mag = recording.mag if recording.mag is not None \
        else np.zeros_like(recording.acc)
    data = np.column_stack([recording.t, recording.acc, recording.gyr, mag])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_HEADER)
        for row in data:
            writer.writerow([_FLOAT_FMT % v for v in row])


def load_labels(path) -> SegmentationLabels:
    """Parse a labels CSV (header r,t_start,t_peak,t_end), r ascending from 1."""
    path = Path(path)
    starts, peaks, ends = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LABEL_HEADER:
            raise ParseError(f"expected header {','.join(LABEL_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path, lineno)
            try:
                r = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"bad numeric field: {exc}", path, lineno) from exc
            if r != len(starts) + 1:
                raise ParseError(f"repetition index {r} out of order", path, lineno)
            starts.append(values[0])
            peaks.append(values[1])
            ends.append(values[2])
    if not starts:
        raise ValidationError(f"{path}: no repetitions")
    return SegmentationLabels(np.array(starts), np.array(peaks), np.array(ends))


def write_labels(labels: SegmentationLabels, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_HEADER)
        for r in range(labels.n_reps):
            writer.writerow([str(r + 1)] + [_FLOAT_FMT % v for v in
                                            (labels.t_start[r], labels.t_peak[r],
                                             labels.t_end[r])])


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest JSON array; paths resolve relative to the manifest."""
    path = Path(path)
    with path.open() as fh:
        # parse_float=Fraction keeps half-step scores exact and makes
        # off-grid decimals like 1.3 detectable without float fuzz.
        raw = json.load(fh, parse_float=Fraction)
    if not isinstance(raw, list):
        raise ParseError("manifest must be a JSON array", path)
    base = path.parent
    entries = []
    for i, obj in enumerate(raw):
        try:
            meta = TrialMeta(
                trial_id=str(obj["trial_id"]),
                patient_id=str(obj["patient_id"]),
                leg=str(obj["leg"]),
                updrs=obj["updrs"],
                sample_rate=float(obj.get("sample_rate", DEFAULT_SAMPLE_RATE)),
            )
        except KeyError as exc:
            raise ParseError(f"entry {i}: missing key {exc}", path) from exc
        rec = base / str(obj["recording"])
        lab = obj.get("labels")
        entries.append(ManifestEntry(meta=meta, recording=rec,
                                     labels=base / str(lab) if lab else None))
    return entries


def write_manifest(entries: list[ManifestEntry], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent
    payload = []
    for e in entries:
        payload.append({
            "trial_id": e.meta.trial_id,
            "patient_id": e.meta.patient_id,
            "leg": e.meta.leg,
            "updrs": float(e.meta.updrs),
            "sample_rate": e.meta.sample_rate,
            "recording": str(e.recording.relative_to(base)),
            "labels": str(e.labels.relative_to(base)) if e.labels else None,
        })
    with path.open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
