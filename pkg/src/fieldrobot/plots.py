"""Deterministic SVG figures for tracking runs and counting evaluations."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import CountingReport, TrackingReport  # noqa: E402

# fixed salt and no timestamp make repeated saves byte-identical
matplotlib.rcParams["svg.hashsalt"] = "fieldrobot"
matplotlib.rcParams["svg.fonttype"] = "path"
_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def _col(log, name) -> np.ndarray:
    return log.column(name) if len(log) else np.array([])


def _on_track_time(t, report) -> float | None:
    if report is None or report.on_track_index is None or not len(t):
        return None
    return float(t[report.on_track_index])


def plot_tracking(log, report: TrackingReport | None, out_dir) -> list:
    """Trajectory, error, violations, traction, speeds and yaw-rate panels."""
    out = Path(out_dir)
    t = _col(log, "t")
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(_col(log, "ref_x"), _col(log, "ref_y"), "k--", lw=1, label="reference")
    ax.plot(_col(log, "x"), _col(log, "y"), lw=1, label="robot")
    ax.plot(_col(log, "est_x"), _col(log, "est_y"), lw=0.8, alpha=0.7, label="estimate")
    if len(t):
        bad = _col(log, "valid_gnss") == 0
        ax.plot(_col(log, "z_x")[bad], _col(log, "z_y")[bad], "rx", ms=4, label="GNSS dropout")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=7)
    written.append(_save(fig, out / "trajectory.svg"))

    err = np.asarray(report.errors) if report is not None else np.array([])
    start = _on_track_time(t, report)
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t[: len(err)], err, lw=0.8)
    if start is not None:
        ax.axvline(start, color="gray", ls=":", lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("Euclidean error [m]")
    written.append(_save(fig, out / "error.svg"))

    fig, ax = plt.subplots(figsize=(7, 3))
    thr = report.violation_threshold if report is not None else 0.12
    if len(err):
        i0 = report.on_track_index if report.on_track_index is not None else len(err)
        tail_t, tail = t[i0 : len(err)], err[i0:]
        ax.plot(tail_t, tail, lw=0.8)
        over = tail > thr
        ax.plot(tail_t[over], tail[over], "r.", ms=4)
    ax.axhline(thr, color="r", ls="--", lw=1)
    ax.axhline(-thr, color="r", ls="--", lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("error after on-track [m]")
    if report is not None:
        ax.set_title(f"violations: {report.violations}", fontsize=9)
    written.append(_save(fig, out / "violations.svg"))

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, _col(log, "est_mu"), lw=1, label="mu estimate")
    ax.plot(t, _col(log, "est_kappa"), lw=1, label="kappa estimate")
    ax.plot(t, _col(log, "mu_true"), "k--", lw=0.8, label="mu true")
    ax.plot(t, _col(log, "kappa_true"), "k:", lw=0.8, label="kappa true")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("t [s]")
    ax.legend(loc="lower right", fontsize=7)
    written.append(_save(fig, out / "traction.svg"))

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, _col(log, "z_v"), lw=0.6, alpha=0.6, label="measured")
    ax.plot(t, _col(log, "est_v"), lw=1, label="estimated")
    ax.plot(t, _col(log, "v_cmd"), "k--", lw=0.8, label="commanded")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("speed [m/s]")
    ax.legend(loc="lower right", fontsize=7)
    written.append(_save(fig, out / "speeds.svg"))

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, _col(log, "z_omega"), lw=0.6, alpha=0.6, label="measured")
    ax.plot(t, _col(log, "omega_cmd"), lw=1, label="commanded")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("yaw rate [rad/s]")
    ax.legend(loc="lower right", fontsize=7)
    written.append(_save(fig, out / "yaw_rates.svg"))
    return written


def plot_counting(report: CountingReport, out_dir) -> list:
    """Robot-vs-reference scatter with the fitted line, and the relative-error histogram."""
    out = Path(out_dir)
    pairs = np.asarray(report.pairs, dtype=float).reshape(-1, 2)
    written = []

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(pairs[:, 0], pairs[:, 1], "o", ms=4)
    if len(pairs) and math.isfinite(report.slope):
        xs = np.array([pairs[:, 0].min(), pairs[:, 0].max()])
        ax.plot(xs, report.slope * xs + report.intercept, "r-", lw=1,
                label=f"y = {report.slope:.2f} x {report.intercept:+.2f}, R = {report.r:.2f}")
        ax.legend(loc="upper left", fontsize=7)
    ax.set_xlabel("reference count")
    ax.set_ylabel("tracked count")
    written.append(_save(fig, out / "count_scatter.svg"))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    edges = np.asarray(report.hist_edges, dtype=float)
    counts = np.asarray(report.hist_counts, dtype=float)
    if len(counts):
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="k")
    ax.set_xlabel("relative error [%]")
    ax.set_ylabel("plots")
    written.append(_save(fig, out / "count_histogram.svg"))
    return written
