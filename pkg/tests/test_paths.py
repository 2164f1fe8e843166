import math

import numpy as np
import pytest

from fieldrobot import paths
from fieldrobot.errors import ConfigError, PathExhaustedError


def test_straight_line_samples():
    p = paths.straight(speed=0.5, duration=10.0)
    x, y, xd, yd, th = p.sample(4.0)
    assert (float(x), float(y)) == pytest.approx((2.0, 0.0))
    assert float(th) == pytest.approx(0.0)
    assert p.speed(3.0) == pytest.approx(0.5)


def test_circle_radius_and_speed():
    p = paths.circle(radius=10.0, speed=1.0)
    ts = np.linspace(0, 60, 200)
    x, y, xd, yd, th = p.sample(ts)
    assert np.allclose(np.hypot(x, y), 10.0, atol=1e-6)
    assert np.allclose(np.hypot(xd, yd), 1.0, atol=1e-9)


def test_periodic_heading_keeps_winding():
    p = paths.rounded_rectangle()
    th0 = float(p.sample(0.0)[4])
    th1 = float(p.sample(p.period)[4])
    assert th1 - th0 == pytest.approx(2 * math.pi, abs=1e-9)


def test_rounded_rectangle_closes():
    p = paths.rounded_rectangle(length=36, width=12, radius=10, speed=0.5)
    a = p.position(0.0)
    b = p.position(p.period)
    assert np.allclose(a, b, atol=1e-9)


def test_projection_finds_nearest_point():
    p = paths.straight(speed=1.0, duration=50.0)
    assert p.project((12.3, 0.4), 10.0) == pytest.approx(12.3, abs=1e-6)


def test_finite_path_exhaustion():
    p = paths.straight(duration=5.0)
    with pytest.raises(PathExhaustedError):
        p.require(0.0, 6.0)


def test_waypoint_csv(tmp_path):
    f = tmp_path / "wp.csv"
    t = np.linspace(0, 10, 11)
    f.write_text("t,x,y\n" + "".join(f"{a},{a * 0.5},{0.1 * a}\n" for a in t))
    p = paths.load_waypoints_csv(f)
    assert p.position(4.0) == pytest.approx((2.0, 0.4), abs=1e-9)


def test_unknown_kind():
    with pytest.raises(ConfigError):
        paths.make_path("spiral", 0.5)


def test_row_headland_alternates_direction():
    p = paths.row_headland(row_length=20, n_rows=2, turn_radius=3, speed=0.5)
    h0 = float(p.sample(5.0)[4])
    h_end = float(p.sample(p.t[-1] - 5.0)[4])
    assert abs(abs(h_end - h0) - math.pi) < 1e-6
