import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldrobot import model
from fieldrobot.errors import ConfigError, EstimatorError, SequencingError
from fieldrobot.mhe import EstimationWindow, MheWeights, MovingHorizonEstimator
from fieldrobot.model import Measurement

NOISELESS = MheWeights((0.03, 0.03, 0.05, 0.0175))


def drive(est, omegas, p_true, xi0=(0.0, 0.0, 0.3), dt=0.2, noise=None, rng=None):
    """Feed an estimator with samples from the exact model; returns the results."""
    xi = np.array(xi0, dtype=float)
    out = []
    u_prev = 0.0
    for k, u in enumerate(omegas):
        z = [xi[0], xi[1], p_true[0], u]
        if noise is not None:
            z = np.array(z) + rng.normal(0, noise)
        out.append(est.feedback(k * dt, Measurement(*z), u_prev))
        est.prepare(u)
        xi = model.integrate_step(xi, u, p_true, dt)
        u_prev = u
    return out


def test_window_rejects_wrong_gap():
    w = EstimationWindow(n_e=5, dt=0.2)
    w.push(0.0, Measurement(0, 0, 1, 0), 0.0)
    with pytest.raises(SequencingError):
        w.push(0.5, Measurement(0, 0, 1, 0), 0.0)
    with pytest.raises(SequencingError):
        w.push(0.0, Measurement(0, 0, 1, 0), 0.0)


def test_window_slides_after_filling():
    w = EstimationWindow(n_e=3, dt=0.2)
    evicted = [w.push(0.2 * k, Measurement(k, 0, 1, 0), 0.0) for k in range(5)]
    assert evicted == [False, False, False, True, True]
    assert len(w) == 3
    assert w.head_index == 2
    assert w.data()[:, 0].tolist() == [2, 3, 4]


def test_window_holds_last_fix_when_gnss_invalid():
    w = EstimationWindow(n_e=4, dt=0.2)
    w.push(0.0, Measurement(1.0, 2.0, 0.5, 0.0), 0.0)
    w.push(0.2, Measurement(9.0, 9.0, 0.6, 0.05, False), 0.0)
    last = w.measurements[-1]
    assert (last.x, last.y, last.v, last.omega) == (1.0, 2.0, 0.6, 0.05)


def test_weights_validation():
    with pytest.raises(ConfigError):
        MheWeights((0.03, 0.03, 0.05))
    with pytest.raises(ConfigError):
        MheWeights((0.03, 0.0, 0.05, 0.01))
    assert np.allclose(np.diag(NOISELESS.output_weight), 1 / np.square(NOISELESS.output_sigmas))


def test_first_sample_without_fix_raises():
    est = MovingHorizonEstimator()
    with pytest.raises(EstimatorError):
        est.feedback(0.0, Measurement(0, 0, 0.5, 0, False))


def test_preliminary_until_baseline():
    # at 0.5 m/s the 0.3 m baseline is covered after four intervals
    est = MovingHorizonEstimator(n_e=10, weights=NOISELESS)
    res = drive(est, [0.0] * 8, (0.5, 1.0, 1.0), xi0=(0, 0, 0))
    ready = [r.ready for r in res]
    assert ready[:3] == [False, False, False]
    assert all(ready[4:])
    assert np.allclose(res[-1].xi_hat[:2], [0.5 * 0.2 * 7, 0.0], atol=0.01)


def test_learns_constant_traction_noiseless():
    est = MovingHorizonEstimator(n_e=30, weights=NOISELESS)
    res = drive(est, [0.1] * 40, (1.0, 0.7, 0.8))
    mu, kappa = res[-1].p_hat[1:]
    assert abs(mu - 0.7) < 0.01
    assert abs(kappa - 0.8) < 0.01
    assert res[-1].p_hat[0] == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000), mu=st.floats(0.6, 1.0), kappa=st.floats(0.6, 1.0))
def test_estimates_stay_in_bounds(seed, mu, kappa):
    rng = np.random.default_rng(seed)
    est = MovingHorizonEstimator(n_e=15)
    omegas = np.clip(0.1 * np.sin(0.1 * np.arange(40)) + rng.normal(0, 0.02, 40), -0.1, 0.1)
    res = drive(est, omegas, (0.5, mu, kappa), noise=np.array([0.03, 0.03, 0.05, 0.0175]), rng=rng)
    for r in res:
        assert r.p_hat[0] >= 0
        assert 0 <= r.p_hat[1] <= 1
        assert 0 <= r.p_hat[2] <= 1


def test_bound_is_hit_exactly_when_truth_is_one():
    rng = np.random.default_rng(2)
    est = MovingHorizonEstimator(n_e=20)
    omegas = 0.1 * np.sin(0.15 * np.arange(60))
    res = drive(est, omegas, (0.5, 1.0, 1.0), noise=np.array([0.03, 0.03, 0.05, 0.0175]), rng=rng)
    mus = [r.p_hat[1] for r in res if r.ready]
    assert max(mus) == 1.0
    assert any(r.mu_at_bound for r in res)


def test_invalid_samples_do_not_move_position_data():
    est = MovingHorizonEstimator(n_e=10, weights=NOISELESS)
    drive(est, [0.05] * 12, (0.5, 0.9, 0.9))
    before = est.window.measurements[-1]
    est.feedback(12 * 0.2, Measurement(50.0, 50.0, 0.5, 0.05, False), 0.05)
    held = est.window.measurements[-1]
    assert (held.x, held.y) == (before.x, before.y)
    assert math.isfinite(est.last.xi_hat[0])
