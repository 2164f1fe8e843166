import numpy as np
import pytest
from scipy.optimize import least_squares

from fieldrobot import model, mpc, paths, rti
from fieldrobot.errors import LinearizationError
from fieldrobot.mhe import MheWeights, build_problem, initial_guess, EstimationWindow
from fieldrobot.model import Measurement


def tracking_problem(n=10, u_ref=0.0):
    path = paths.circle(radius=8.0, speed=0.5)
    refs = mpc.build_reference(path, 3.0, n, dt=0.2)
    return path, refs, mpc.build_problem(refs, mpc.MpcWeights(), mpc.MpcConfig(n_c=n), u_ref)


def test_defects_vanish_on_exact_rollout():
    grid = mpc.rollout_guess([0, 0, 0.1], (0.5, 0.9, 0.8), 8, 0.2, controls=np.linspace(-0.1, 0.1, 8))
    assert np.max(np.abs(grid.defects())) < 1e-15
    _, _, prob = tracking_problem(8)
    qp = rti.prepare(prob, grid)
    assert np.max(np.abs(qp.defects)) < 1e-15


def test_defect_definition():
    rng = np.random.default_rng(0)
    grid = rti.ShootingGrid(rng.normal(size=(5, 3)), rng.uniform(-0.1, 0.1, 4), (0.5, 0.9, 0.8), 0.2)
    d = grid.defects()
    for k in range(4):
        expected = model.integrate_step(grid.states[k], grid.controls[k], grid.params, 0.2) - grid.states[k + 1]
        assert np.allclose(d[k], expected, atol=1e-15)


def test_nonfinite_guess_reports_node():
    _, _, prob = tracking_problem(6)
    grid = mpc.rollout_guess([0, 0, 0], (0.5, 1, 1), 6, 0.2)
    grid.states[3, 2] = np.nan
    with pytest.raises(LinearizationError) as exc:
        rti.prepare(prob, grid)
    assert exc.value.node == 3


def test_grid_dimension_mismatch():
    _, _, prob = tracking_problem(6)
    with pytest.raises(ValueError):
        rti.prepare(prob, mpc.rollout_guess([0, 0, 0], (0.5, 1, 1), 5, 0.2))


def test_converged_tracking_matches_least_squares():
    path, refs, prob = tracking_problem(10, u_ref=0.02)
    xi = np.array([refs[0].x_r + 0.1, refs[0].y_r - 0.05, refs[0].theta_r + 0.05])
    p = np.array([0.5, 0.85, 0.9])
    sol = rti.converge(prob, mpc.rollout_guess(xi, p, 10, 0.2), xi)
    tg = np.array([(r.x_r, r.y_r, r.theta_r) for r in refs])

    def residual(u):
        S = model.simulate(xi, u, p, 0.2)
        return np.concatenate([(S[1:10] - tg[1:10]).ravel(), np.sqrt(10.0) * (S[10] - tg[10]), u - 0.02])

    ref = least_squares(residual, np.zeros(10), bounds=(-0.1, 0.1), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert np.allclose(sol.grid.controls, ref.x, atol=1e-6)
    assert sol.kkt_residual < 1e-10


def test_converged_estimation_matches_least_squares():
    rng = np.random.default_rng(4)
    p_true = np.array([1.0, 0.8, 0.9])
    n = 12
    omegas = 0.1 * np.sin(0.4 * np.arange(n))
    S = model.simulate([0, 0, 0.2], omegas[:-1], p_true, 0.2)
    w = EstimationWindow(n_e=n, dt=0.2)
    for k in range(n):
        z = Measurement(S[k, 0] + rng.normal(0, 0.02), S[k, 1] + rng.normal(0, 0.02), 1.0 + rng.normal(0, 0.03),
                        omegas[k] + rng.normal(0, 0.01))
        w.push(0.2 * k, z, omegas[k])
    w.prior_state = np.array([0.0, 0.0, 0.25])
    w.prior_params = np.array([1.0, 0.75, 0.75])
    weights = MheWeights((0.03, 0.03, 0.05, 0.02))
    prob = build_problem(w, weights)
    fresh = w.measurements[-1].as_array()
    sol = rti.converge(prob, initial_guess(w), fresh)

    Z = w.data()
    ws = weights.output_sqrt
    wp = weights.arrival_sqrt
    prior = np.concatenate([w.prior_state, w.prior_params])

    def residual(q):
        s0, u, par = q[:3], q[3 : 3 + n], q[3 + n :]
        X = model.simulate(s0, u[:-1], par, 0.2)
        out = np.column_stack([X[:, 0], X[:, 1], np.full(n, par[0]), u])
        return np.concatenate([((out - Z) * ws).ravel(), wp * (np.concatenate([s0, par]) - prior)])

    q0 = np.concatenate([sol.grid.states[0], sol.grid.controls, sol.grid.params])
    lo = np.concatenate([np.full(3 + n, -np.inf), [0, 0, 0]])
    hi = np.concatenate([np.full(3 + n, np.inf), [np.inf, 1, 1]])
    ref = least_squares(residual, np.clip(q0 + 0.01, lo, hi), bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert np.allclose(sol.grid.params, ref.x[3 + n :], atol=1e-6)
    assert np.allclose(sol.grid.states[0], ref.x[:3], atol=1e-6)


def test_kkt_residual_decreases_on_frozen_instance():
    _, refs, prob = tracking_problem(10)
    xi = np.array([refs[0].x_r, refs[0].y_r + 0.2, refs[0].theta_r])
    grid = mpc.rollout_guess(xi, (0.5, 0.9, 0.9), 10, 0.2)
    res = []
    for _ in range(10):
        sol = rti.feedback(rti.prepare(prob, grid), xi)
        grid = sol.grid
        res.append(sol.kkt_residual)
    assert res[-1] < 1e-8


def test_initial_state_embedding_exact():
    _, refs, prob = tracking_problem(8)
    xi = np.array([refs[0].x_r + 0.3, refs[0].y_r, refs[0].theta_r - 0.1])
    sol = rti.feedback(rti.prepare(prob, mpc.rollout_guess(xi - 0.05, (0.5, 1, 1), 8, 0.2)), xi)
    assert np.array_equal(sol.grid.states[0], xi)


def test_control_bounds_respected_exactly():
    _, refs, prob = tracking_problem(8)
    xi = np.array([refs[0].x_r, refs[0].y_r + 2.0, refs[0].theta_r + 1.0])
    sol = rti.feedback(rti.prepare(prob, mpc.rollout_guess(xi, (0.5, 1, 1), 8, 0.2)), xi)
    assert np.all(np.abs(sol.grid.controls) <= 0.1)
    assert np.any(np.abs(sol.grid.controls) == 0.1)


def test_prepare_independent_of_fresh_data():
    _, refs, prob = tracking_problem(8)
    grid = mpc.rollout_guess([refs[0].x_r, refs[0].y_r, refs[0].theta_r], (0.5, 1, 1), 8, 0.2)
    qp = rti.prepare(prob, grid)
    a = rti.feedback(qp, grid.states[0] + [0.01, 0, 0])
    b = rti.feedback(rti.prepare(prob, grid), grid.states[0] + [0.01, 0, 0])
    assert np.array_equal(a.grid.controls, b.grid.controls)


def test_shift_warm_start():
    grid = mpc.rollout_guess([0, 0, 0], (0.5, 1, 1), 5, 0.2, controls=[0.01, 0.02, 0.03, 0.04, 0.05])
    s = rti.shift_warm_start(grid)
    assert s.N == 5
    assert np.allclose(s.controls, [0.02, 0.03, 0.04, 0.05, 0.05])
    assert np.allclose(s.states[:-1], grid.states[1:])
    assert np.allclose(s.states[-1], model.integrate_step(grid.states[-1], 0.05, grid.params, 0.2))
    g = rti.shift_warm_start(grid, drop_first=False)
    assert g.N == 6
