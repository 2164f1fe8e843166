"""Tracking and counting evaluation metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyInputError, FitUndefinedError


def euclidean_error(log) -> np.ndarray:
    """Per-sample planar distance between true position and its reference."""
    if len(log) == 0:
        raise EmptyInputError("log is empty")
    return np.hypot(log.column("x") - log.column("ref_x"), log.column("y") - log.column("ref_y"))


def on_track_index(errors, threshold: float = 0.10, samples: int = 10) -> Optional[int]:
    """First index starting ``samples`` consecutive errors below ``threshold``."""
    run = 0
    for i, e in enumerate(np.asarray(errors, dtype=float)):
        run = run + 1 if e < threshold else 0
        if run == samples:
            return i - samples + 1
    return None


def count_violations(series, threshold: float = 0.12) -> int:
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return int(np.count_nonzero(np.asarray(series, dtype=float) > threshold))


def linear_fit_and_r(pairs) -> tuple[float, float, float]:
    """Least-squares line ``robot = slope * human + intercept`` and Pearson R."""
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(arr) < 2:
        raise FitUndefinedError("need at least two pairs")
    x, y = arr[:, 0], arr[:, 1]
    dx, dy = x - x.mean(), y - y.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise FitUndefinedError("human counts have zero variance")
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r = sxy / math.sqrt(sxx * syy) if syy > 0 else 0.0
    return slope, intercept, r


def relative_error(robot: float, human: float) -> float:
    return (robot - human) / human * 100.0


def histogram(values, bin_width: float = 2.5):
    """Fixed-width bins with one bin centred on zero; returns ``(edges, counts)``."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return np.array([-bin_width / 2, bin_width / 2]), np.zeros(1, dtype=int)
    lo = math.floor((v.min() + bin_width / 2) / bin_width)
    hi = math.floor((v.max() + bin_width / 2) / bin_width)
    edges = (np.arange(lo, hi + 2) - 0.5) * bin_width
    idx = np.floor((v + bin_width / 2) / bin_width).astype(int) - lo
    counts = np.bincount(idx, minlength=len(edges) - 1)
    return edges, counts


def relative_error_stats(pairs, bin_width: float = 2.5):
    """Per-pair relative errors in percent with mean, sample std and histogram.

    Pairs with a zero human count are skipped with a warning.
    """
    errs = []
    for human, robot in pairs:
        if human == 0:
            warnings.warn(f"skipping pair with zero human count (robot={robot})", RuntimeWarning)
            continue
        errs.append(relative_error(robot, human))
    arr = np.array(errs)
    mean = float(arr.mean()) if len(arr) else math.nan
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    edges, counts = histogram(arr, bin_width)
    return errs, mean, std, (edges, counts)


@dataclass
class TrackingReport:
    errors: list
    on_track_index: Optional[int]
    mean_error_on_track: float
    max_error_on_track: float
    violations: int
    violation_threshold: float
    dropout_samples: int
    mu_range: tuple
    kappa_range: tuple
    omega_max: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CountingReport:
    pairs: list
    slope: float
    intercept: float
    r: float
    relative_errors: list
    mean: float
    std: float
    hist_edges: list = field(default_factory=list)
    hist_counts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def tracking_report(log, on_track_threshold=0.10, on_track_samples=10, violation_threshold=0.12) -> TrackingReport:
    err = euclidean_error(log)
    start = on_track_index(err, on_track_threshold, on_track_samples)
    tail = err[start:] if start is not None else np.array([])
    mu = log.column("est_mu")
    kappa = log.column("est_kappa")
    return TrackingReport(
        errors=[float(e) for e in err],
        on_track_index=start,
        mean_error_on_track=float(tail.mean()) if len(tail) else math.nan,
        max_error_on_track=float(tail.max()) if len(tail) else math.nan,
        violations=count_violations(tail, violation_threshold) if len(tail) else 0,
        violation_threshold=violation_threshold,
        dropout_samples=int(np.count_nonzero(log.column("valid_gnss") == 0)),
        mu_range=(float(np.nanmin(mu)), float(np.nanmax(mu))),
        kappa_range=(float(np.nanmin(kappa)), float(np.nanmax(kappa))),
        omega_max=float(np.max(np.abs(log.column("omega_cmd")))),
    )


def counting_report(pairs, bin_width: float = 2.5) -> CountingReport:
    pairs = [(float(h), float(r)) for h, r in pairs]
    slope, intercept, r = linear_fit_and_r(pairs)
    errs, mean, std, (edges, counts) = relative_error_stats(pairs, bin_width)
    return CountingReport(pairs, slope, intercept, r, errs, mean, std, edges.tolist(), counts.tolist())
