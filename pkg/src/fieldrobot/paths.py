"""Timed reference paths.

A :class:`ReferenceTrajectory` is a densely sampled ``(t, x, y, xdot, ydot)``
table with linear interpolation.  Headings are stored unwrapped so a closed
lap keeps winding instead of jumping at +-pi.  Closed paths repeat
periodically in time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateReferenceError, PathExhaustedError

SAMPLE_DT = 0.02


@dataclass
class ReferenceTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xdot: np.ndarray
    ydot: np.ndarray
    periodic: bool = False
    name: str = "path"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = len(self.t)
        if n < 2 or np.any(np.diff(self.t) <= 0):
            raise ConfigError("path times must be strictly increasing with >= 2 samples")
        for key in ("x", "y", "xdot", "ydot"):
            arr = np.asarray(getattr(self, key), dtype=float)
            if arr.shape != (n,):
                raise ConfigError(f"path column {key} has the wrong length")
            setattr(self, key, arr)
        speed = np.hypot(self.xdot, self.ydot)
        heading = np.where(speed > 0, np.arctan2(self.ydot, self.xdot), np.nan)
        # carry the last valid heading across standstill samples before unwrapping
        valid = np.flatnonzero(np.isfinite(heading))
        if len(valid):
            idx = np.maximum.accumulate(np.where(np.isfinite(heading), np.arange(n), valid[0]))
            heading = heading[idx]
        self.heading = np.unwrap(np.nan_to_num(heading))
        self._degenerate = speed == 0
        self.period = self.t[-1] - self.t[0]
        self.lap_turn = self.heading[-1] - self.heading[0] if self.periodic else 0.0
        if self.periodic:
            # closing sample duplicates the first one; heading winds by a multiple of 2 pi
            self.lap_turn = 2 * math.pi * round(self.lap_turn / (2 * math.pi))

    @property
    def t_end(self) -> float:
        return math.inf if self.periodic else float(self.t[-1])

    def covers(self, t0: float, t1: float) -> bool:
        return self.periodic or (t0 >= self.t[0] - 1e-9 and t1 <= self.t[-1] + 1e-9)

    def _wrap(self, t):
        t = np.asarray(t, dtype=float)
        if not self.periodic:
            return t, np.zeros_like(t)
        laps = np.floor((t - self.t[0]) / self.period)
        return t - laps * self.period, laps

    def sample(self, t):
        """Interpolated ``(x, y, xdot, ydot, heading)`` at time(s) ``t``."""
        tw, laps = self._wrap(t)
        x = np.interp(tw, self.t, self.x)
        y = np.interp(tw, self.t, self.y)
        xd = np.interp(tw, self.t, self.xdot)
        yd = np.interp(tw, self.t, self.ydot)
        th = np.interp(tw, self.t, self.heading) + laps * self.lap_turn
        return x, y, xd, yd, th

    def position(self, t: float) -> tuple[float, float]:
        x, y, *_ = self.sample(t)
        return float(x), float(y)

    def speed(self, t: float) -> float:
        _, _, xd, yd, _ = self.sample(t)
        return float(np.hypot(xd, yd))

    def project(self, point, t_near: float, back: float = 2.0, ahead: float = 6.0) -> float:
        """Path time of the point nearest to ``point`` within a time window."""
        lo = t_near - back
        hi = t_near + ahead
        if not self.periodic:
            lo, hi = max(lo, self.t[0]), min(hi, self.t[-1])
        ts = np.arange(lo, hi + SAMPLE_DT / 2, SAMPLE_DT)
        x, y, *_ = self.sample(ts)
        d2 = (x - point[0]) ** 2 + (y - point[1]) ** 2
        i = int(np.argmin(d2))
        # refine on the neighbouring segments
        best_t, best_d = ts[i], d2[i]
        for j in (i - 1, i):
            if j < 0 or j + 1 >= len(ts):
                continue
            ax, ay, bx, by = x[j], y[j], x[j + 1], y[j + 1]
            sx, sy = bx - ax, by - ay
            seg = sx * sx + sy * sy
            if seg == 0:
                continue
            s = min(max(((point[0] - ax) * sx + (point[1] - ay) * sy) / seg, 0.0), 1.0)
            d = (ax + s * sx - point[0]) ** 2 + (ay + s * sy - point[1]) ** 2
            if d < best_d:
                best_t, best_d = ts[j] + s * (ts[j + 1] - ts[j]), d
        return float(best_t)

    def check_heading(self, t) -> None:
        tw, _ = self._wrap(t)
        idx = np.clip(np.searchsorted(self.t, tw), 0, len(self.t) - 1)
        if np.any(self._degenerate[idx]):
            raise DegenerateReferenceError("reference velocity vanishes inside the horizon")

    def require(self, t0: float, t1: float) -> None:
        if not self.covers(t0, t1):
            raise PathExhaustedError(f"path ends at {self.t[-1]:.3f} s, horizon needs {t1:.3f} s")


def _from_arclength(points_fn, length: float, speed: float, periodic: bool, name: str) -> ReferenceTrajectory:
    if speed <= 0 or length <= 0:
        raise ConfigError("path speed and length must be positive")
    duration = length / speed
    n = max(int(math.ceil(duration / SAMPLE_DT)), 2)
    t = np.linspace(0.0, duration, n + 1)
    x, y, tx, ty = points_fn(t * speed)
    return ReferenceTrajectory(t, x, y, tx * speed, ty * speed, periodic=periodic, name=name)


def straight(speed: float = 0.5, duration: float = 600.0, heading: float = 0.0, origin=(0.0, 0.0)) -> ReferenceTrajectory:
    c, s = math.cos(heading), math.sin(heading)

    def pts(arc):
        return origin[0] + c * arc, origin[1] + s * arc, np.full_like(arc, c), np.full_like(arc, s)

    return _from_arclength(pts, speed * duration, speed, False, "straight")


def circle(radius: float = 10.0, speed: float = 1.0, center=(0.0, 0.0), ccw: bool = True) -> ReferenceTrajectory:
    """Circle starting at angle -pi/2 (south point), heading east when counter-clockwise."""
    sgn = 1.0 if ccw else -1.0

    def pts(arc):
        ang = -math.pi / 2 + sgn * arc / radius
        x = center[0] + radius * np.cos(ang)
        y = center[1] + radius * np.sin(ang)
        return x, y, -sgn * np.sin(ang), sgn * np.cos(ang)

    return _from_arclength(pts, 2 * math.pi * radius, speed, True, "circle")


def _segments_path(segments, speed, periodic, name):
    """Chain of ``("line", length)`` and ``("arc", radius, angle)`` pieces from the origin heading east."""
    pieces = []
    x, y, h = 0.0, 0.0, 0.0
    total = 0.0
    for seg in segments:
        if seg[0] == "line":
            length = seg[1]
            pieces.append(("line", total, length, x, y, h))
            x += length * math.cos(h)
            y += length * math.sin(h)
        else:
            _, r, ang = seg
            length = r * abs(ang)
            pieces.append(("arc", total, length, x, y, h, r, math.copysign(1.0, ang)))
            cx = x - math.copysign(r, ang) * math.sin(h)
            cy = y + math.copysign(r, ang) * math.cos(h)
            h += ang
            x = cx + math.copysign(r, ang) * math.sin(h)
            y = cy - math.copysign(r, ang) * math.cos(h)
        total += length

    def pts(arc):
        arc = np.asarray(arc, dtype=float)
        X, Y, TX, TY = (np.empty_like(arc) for _ in range(4))
        starts = np.array([p[1] for p in pieces])
        which = np.clip(np.searchsorted(starts, arc, side="right") - 1, 0, len(pieces) - 1)
        for i, p in enumerate(pieces):
            m = which == i
            s = arc[m] - p[1]
            if p[0] == "line":
                _, _, _, x0, y0, h0 = p
                X[m] = x0 + s * math.cos(h0)
                Y[m] = y0 + s * math.sin(h0)
                TX[m], TY[m] = math.cos(h0), math.sin(h0)
            else:
                _, _, _, x0, y0, h0, r, sg = p
                cx = x0 - sg * r * math.sin(h0)
                cy = y0 + sg * r * math.cos(h0)
                hh = h0 + sg * s / r
                X[m] = cx + sg * r * np.sin(hh)
                Y[m] = cy - sg * r * np.cos(hh)
                TX[m], TY[m] = np.cos(hh), np.sin(hh)
        return X, Y, TX, TY

    return _from_arclength(pts, total, speed, periodic, name)


def rounded_rectangle(length: float = 36.0, width: float = 12.0, radius: float = 10.0, speed: float = 0.5) -> ReferenceTrajectory:
    """Closed field lap: straights of ``length``/``width`` joined by quarter circles."""
    q = math.pi / 2
    segs = [("line", length), ("arc", radius, q), ("line", width), ("arc", radius, q),
            ("line", length), ("arc", radius, q), ("line", width), ("arc", radius, q)]
    return _segments_path(segs, speed, True, "rounded_rectangle")


def row_headland(row_length: float = 40.0, n_rows: int = 4, turn_radius: float = 6.0, speed: float = 0.5) -> ReferenceTrajectory:
    """Serpentine through parallel rows with semicircular headland turns.

    Adjacent traversed rows are ``2 * turn_radius`` apart; tighter spacing is
    not reachable under the yaw-rate bound.
    """
    segs = []
    for i in range(n_rows):
        segs.append(("line", row_length))
        if i < n_rows - 1:
            segs.append(("arc", turn_radius, math.pi if i % 2 == 0 else -math.pi))
    return _segments_path(segs, speed, False, "row_headland")


def from_waypoints(t, x, y, periodic: bool = False) -> ReferenceTrajectory:
    """Smooth a ``(t, x, y)`` waypoint table with cubic splines."""
    from scipy.interpolate import CubicSpline

    t = np.asarray(t, dtype=float)
    bc = "periodic" if periodic else "not-a-knot"
    sx = CubicSpline(t, x, bc_type=bc)
    sy = CubicSpline(t, y, bc_type=bc)
    n = max(int(math.ceil((t[-1] - t[0]) / SAMPLE_DT)), 2)
    ts = np.linspace(t[0], t[-1], n + 1)
    return ReferenceTrajectory(ts, sx(ts), sy(ts), sx(ts, 1), sy(ts, 1), periodic=periodic, name="waypoints")


def load_waypoints_csv(path, periodic: bool = False) -> ReferenceTrajectory:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["t"]), float(row["x"]), float(row["y"])))
    if len(rows) < 4:
        raise ConfigError(f"{path}: need at least 4 waypoints")
    t, x, y = (np.array(c) for c in zip(*rows))
    return from_waypoints(t, x, y, periodic=periodic)


def make_path(kind: str, speed: float, **kw) -> ReferenceTrajectory:
    builders = {
        "straight": straight,
        "circle": circle,
        "rounded_rectangle": rounded_rectangle,
        "row_headland": row_headland,
    }
    if kind == "csv":
        return load_waypoints_csv(Path(kw["file"]), periodic=bool(kw.get("periodic", False)))
    if kind not in builders:
        raise ConfigError(f"unknown path kind {kind!r}")
    return builders[kind](speed=speed, **kw)
