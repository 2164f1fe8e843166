import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldrobot import model, mpc, paths
from fieldrobot.errors import ConfigError, DegenerateReferenceError
from fieldrobot.mpc import ModelPredictiveController, MpcConfig, MpcWeights


def circle_refs(t=5.0, n=20):
    path = paths.circle(radius=10.0, speed=0.5)
    return path, mpc.build_reference(path, t, n)


def test_reference_length_and_spacing():
    path, refs = circle_refs(n=20)
    assert len(refs) == 21
    pts = np.array([(r.x_r, r.y_r) for r in refs])
    steps = np.hypot(*np.diff(pts, axis=0).T)
    assert np.allclose(steps, 2 * 10.0 * math.sin(0.5 * 0.2 / 20.0), atol=1e-6)


def test_reverse_flag_flips_heading():
    path = paths.circle(radius=10.0, speed=0.5)
    a = mpc.build_reference(path, 3.0, 5)
    b = mpc.build_reference(path, 3.0, 5, lam=1)
    assert all(math.isclose(q.theta_r - p.theta_r, math.pi) for p, q in zip(a, b))


def test_heading_reference_unwrapped_near_current():
    _, refs = circle_refs()
    path = paths.circle(radius=10.0, speed=0.5)
    near = refs[0].theta_r + 4 * math.pi
    shifted = mpc.build_reference(path, 5.0, 20, theta_near=near)
    assert shifted[0].theta_r - refs[0].theta_r == pytest.approx(4 * math.pi)


def test_degenerate_reference():
    t = np.linspace(0, 10, 11)
    path = paths.from_waypoints(t, np.ones(11), np.ones(11))
    with pytest.raises(DegenerateReferenceError):
        mpc.build_reference(path, 2.0, 5)


def test_wrong_reference_count():
    _, refs = circle_refs(n=10)
    with pytest.raises(ConfigError):
        mpc.solve_nmpc(np.zeros(3), (0.5, 1, 1), refs, cfg=MpcConfig(n_c=20))


def test_config_validation():
    with pytest.raises(ConfigError):
        MpcConfig(n_c=1)
    with pytest.raises(ConfigError):
        MpcConfig(omega_bound=0.0)
    with pytest.raises(ConfigError):
        MpcConfig(input_reference="previous")
    with pytest.raises(ConfigError):
        MpcWeights(r=-1.0)


@settings(max_examples=30, deadline=None)
@given(dx=st.floats(-1, 1), dy=st.floats(-1, 1), dth=st.floats(-0.8, 0.8), u_ref=st.floats(-0.1, 0.1))
def test_yaw_rate_within_bound(dx, dy, dth, u_ref):
    _, refs = circle_refs()
    xi = np.array([refs[0].x_r + dx, refs[0].y_r + dy, refs[0].theta_r + dth])
    res = mpc.solve_nmpc(xi, (0.5, 0.9, 0.9), refs, u_ref=u_ref)
    assert np.all(np.abs(res.controls) <= 0.1)
    assert abs(res.u_apply) <= 0.1


@settings(max_examples=20, deadline=None)
@given(factor=st.floats(0.01, 100), dy=st.floats(-0.5, 0.5))
def test_weight_scaling_invariance(factor, dy):
    _, refs = circle_refs()
    xi = np.array([refs[0].x_r, refs[0].y_r + dy, refs[0].theta_r])
    a = mpc.solve_nmpc(xi, (0.5, 0.9, 0.9), refs, MpcWeights(), u_ref=0.02)
    b = mpc.solve_nmpc(xi, (0.5, 0.9, 0.9), refs, MpcWeights().scaled(factor), u_ref=0.02)
    assert abs(a.u_apply - b.u_apply) < 1e-8


def test_prediction_starts_at_estimate():
    _, refs = circle_refs()
    xi = np.array([refs[0].x_r + 0.2, refs[0].y_r - 0.1, refs[0].theta_r + 0.05])
    res = mpc.solve_nmpc(xi, (0.5, 0.9, 0.9), refs)
    assert np.array_equal(res.predicted[0], xi)
    assert res.predicted.shape == (21, 3)
    assert res.refs.shape == (21, 3)


def test_large_offset_saturates():
    _, refs = circle_refs()
    xi = np.array([refs[0].x_r, refs[0].y_r, refs[0].theta_r + 1.0])
    res = mpc.solve_nmpc(xi, (0.5, 1, 1), refs)
    assert res.saturated
    assert abs(res.u_apply) == 0.1


def test_controller_tracks_circle_with_exact_model():
    path = paths.circle(radius=10.0, speed=0.5)
    p = np.array([0.5, 0.9, 0.8])
    ctrl = ModelPredictiveController(path)
    x0, y0 = path.position(0.0)
    xi = np.array([x0, y0 + 0.3, float(path.sample(0.0)[4])])
    u = 0.0
    for _ in range(150):
        res = ctrl.feedback(xi, p, u)
        u = res.u_apply
        xi = model.integrate_step(xi, u, p, 0.2)
        ctrl.prepare(p, u)
    tau = path.project(xi[:2], ctrl.path_time, back=2.0, ahead=2.0)
    assert np.linalg.norm(xi[:2] - path.position(tau)) < 0.05
