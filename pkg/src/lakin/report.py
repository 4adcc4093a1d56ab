"""Report bundles: delimited plot data plus rendered figures.

Every product is written twice: a CSV/JSON table for external tooling and a
PNG rendered with the Agg canvas. Rendering avoids pyplot global state so
library use stays side-effect free.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from . import spectrum as sp
from .errors import ValidationError
from .ml import ERROR_GRID, FeatureMatrix, TrajectoryPoint, centroid_trajectory
from .pipeline import TrialResult

log = logging.getLogger(__name__)

HEATMAP_FMAX = 8.0     # Hz, movement band upper edge for the common grid
HEATMAP_BINS = 257


@dataclass(frozen=True)
class HeatmapData:
    freqs: np.ndarray          # common frequency grid
    matrix: np.ndarray         # (n_trials, n_bins), rows grouped by score
    trial_ids: tuple[str, ...]
    updrs: tuple[Fraction, ...]
    group_bounds: tuple[int, ...]  # row indices where a new score group starts


def build_updrs_histogram(metas) -> list[tuple[Fraction, int]]:
    counts = {g: 0 for g in ERROR_GRID}
    for meta in metas:
        counts[meta.updrs] += 1
    return [(g, counts[g]) for g in ERROR_GRID]


def build_spectrum_heatmap(results: list[TrialResult], signal: str = "theta",
                           fmax: float = HEATMAP_FMAX,
                           bins: int = HEATMAP_BINS) -> HeatmapData:
    """One-sided amplitude spectra on a common frequency grid, trials ordered
    and grouped by score (stable within a group)."""
    ok = [r for r in results if r.ok]
    if not ok:
        raise ValidationError("no processed trials to build a heatmap from")
    ok.sort(key=lambda r: r.meta.updrs)
    grid = np.linspace(0.0, fmax, bins)
    rows = []
    for res in ok:
        series = res.theta if signal == "theta" else res.omega
        t0, t1 = res.labels.span()
        seg = sp.extract_segment(res.t, series, t0, t1, res.meta.sample_rate)
        freqs, amps = sp.amplitude_spectrum(seg, res.meta.sample_rate).one_sided()
        rows.append(np.interp(grid, freqs, amps))
    bounds = [i for i in range(1, len(ok))
              if ok[i].meta.updrs != ok[i - 1].meta.updrs]
    return HeatmapData(freqs=grid, matrix=np.array(rows),
                       trial_ids=tuple(r.meta.trial_id for r in ok),
                       updrs=tuple(r.meta.updrs for r in ok),
                       group_bounds=tuple(bounds))


# -- delimited writers ---------------------------------------------------------

def write_histogram_csv(hist, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["updrs", "count"])
        for g, count in hist:
            writer.writerow([repr(float(g)), count])


def write_heatmap_csv(data: HeatmapData, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "updrs"] + [repr(float(f)) for f in data.freqs])
        for tid, u, row in zip(data.trial_ids, data.updrs, data.matrix):
            writer.writerow([tid, repr(float(u))] + [repr(float(v)) for v in row])


def write_trajectory_csv(points: list[TrajectoryPoint], feature_names, path) -> None:
    names = list(feature_names)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["updrs", "present"] + names + ["n_members", "members"])
        for p in points:
            coords = [repr(v) for v in p.centroid] if p.present else [""] * len(names)
            writer.writerow([repr(float(p.updrs)), int(p.present)] + coords
                            + [len(p.members), ";".join(p.members)])


def write_trajectory_json(points: list[TrajectoryPoint], feature_names, path) -> None:
    payload = {
        "features": list(feature_names),
        "points": [
            {"updrs": float(p.updrs), "present": p.present,
             "centroid": list(p.centroid) if p.present else None,
             "members": list(p.members)}
            for p in points
        ],
    }
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cdf_csv(cdf, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["error", "cdf"])
        for g, v in zip(ERROR_GRID, cdf):
            writer.writerow([repr(float(g)), repr(float(v))])


def write_spectrum_csv(freqs, amps, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_hz", "amplitude"])
        for f, a in zip(freqs, amps):
            writer.writerow([repr(float(f)), repr(float(a))])


# -- figure rendering ----------------------------------------------------------

def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120)


def render_histogram(hist, path) -> None:
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    xs = [float(g) for g, _ in hist]
    ax.bar(xs, [c for _, c in hist], width=0.4, color="tab:blue", edgecolor="black")
    ax.set_xlabel("UPDRS score")
    ax.set_ylabel("trials")
    ax.set_xticks(xs)
    ax.set_title("Score distribution")
    fig.tight_layout()
    _save(fig, path)


def render_heatmap(data: HeatmapData, path, signal: str) -> None:
    fig = Figure(figsize=(7, 5))
    ax = fig.add_subplot()
    im = ax.imshow(data.matrix, aspect="auto", origin="upper", cmap="jet",
                   extent=(data.freqs[0], data.freqs[-1], len(data.matrix), 0))
    for b in data.group_bounds:
        ax.axhline(b, color="red", linewidth=1.2)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("trials (grouped by UPDRS)")
    ax.set_title(f"Amplitude spectra of {signal}")
    fig.colorbar(im, ax=ax, label="amplitude")
    fig.tight_layout()
    _save(fig, path)


def render_trajectory(points: list[TrajectoryPoint], feature_names, path) -> None:
    present = [p for p in points if p.present]
    if len(present) < 2:
        log.info("fewer than two centroids; skipping trajectory figure")
        return
    names = list(feature_names)
    fig = Figure(figsize=(6, 5))
    if len(names) == 3:
        ax = fig.add_subplot(projection="3d")
        coords = np.array([p.centroid for p in present])
        ax.plot(coords[:, 0], coords[:, 1], coords[:, 2], "k-", linewidth=1.2)
        sc = ax.scatter(coords[:, 0], coords[:, 1], coords[:, 2], marker="*", s=120,
                        c=[float(p.updrs) for p in present], cmap="viridis",
                        vmin=0.0, vmax=4.0)
        ax.set_zlabel(names[2])
    else:
        ax = fig.add_subplot()
        coords = np.array([p.centroid for p in present])
        ax.plot(coords[:, 0], coords[:, 1], "k-", linewidth=1.2)
        sc = ax.scatter(coords[:, 0], coords[:, 1], marker="*", s=140,
                        c=[float(p.updrs) for p in present], cmap="viridis",
                        vmin=0.0, vmax=4.0)
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1])
    ax.set_title("Per-score centroid trajectory")
    fig.colorbar(sc, ax=ax, label="UPDRS")
    fig.tight_layout()
    _save(fig, path)


def render_cdf(cdf, path, label: str = "") -> None:
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    xs = [float(g) for g in ERROR_GRID]
    ax.step(xs, list(cdf), where="post", color="black", marker="o")
    ax.set_xlabel("absolute UPDRS error")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(label or "Absolute-error CDF")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def feature_matrix_or_none(m: FeatureMatrix | None, results) -> FeatureMatrix | None:
    if m is not None:
        return m
    from .pipeline import feature_matrix_from_results
    try:
        return feature_matrix_from_results(results)
    except ValidationError:
        return None


def emit_report(results: list[TrialResult], out_dir,
                matrix: FeatureMatrix | None = None,
                trajectory_features=("Theta", "Omega"),
                eval_cdf=None) -> list[Path]:
    """Write the full bundle; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    ok = [r for r in results if r.ok]
    hist = build_updrs_histogram([r.meta for r in ok])
    p = out / "updrs_histogram.csv"
    write_histogram_csv(hist, p)
    written.append(p)
    render_histogram(hist, out / "updrs_histogram.png")
    written.append(out / "updrs_histogram.png")

    spectra_dir = out / "spectra"
    spectra_dir.mkdir(exist_ok=True)
    for res in ok:
        for signal, series in (("theta", res.theta), ("omega", res.omega)):
            t0, t1 = res.labels.span()
            seg = sp.extract_segment(res.t, series, t0, t1, res.meta.sample_rate)
            freqs, amps = sp.amplitude_spectrum(seg, res.meta.sample_rate).one_sided()
            sp_path = spectra_dir / f"{res.meta.trial_id}_{signal}.csv"
            write_spectrum_csv(freqs, amps, sp_path)
            written.append(sp_path)

    for signal in ("theta", "omega"):
        data = build_spectrum_heatmap(results, signal)
        p = out / f"spectrum_heatmap_{signal}.csv"
        write_heatmap_csv(data, p)
        written.append(p)
        render_heatmap(data, out / f"spectrum_heatmap_{signal}.png", signal)
        written.append(out / f"spectrum_heatmap_{signal}.png")

    m = feature_matrix_or_none(matrix, results)
    if m is not None and trajectory_features:
        names = tuple(trajectory_features)
        points = centroid_trajectory(m, names)
        stem = "trajectory_" + "_".join(names)
        write_trajectory_csv(points, names, out / f"{stem}.csv")
        write_trajectory_json(points, names, out / f"{stem}.json")
        written += [out / f"{stem}.csv", out / f"{stem}.json"]
        render_trajectory(points, names, out / f"{stem}.png")
        if len([pt for pt in points if pt.present]) >= 2:
            written.append(out / f"{stem}.png")

    if eval_cdf is not None:
        p = out / "error_cdf.csv"
        write_cdf_csv(eval_cdf, p)
        written.append(p)
        render_cdf(eval_cdf, out / "error_cdf.png")
        written.append(out / "error_cdf.png")
    return written
