"""Path-tracking model predictive control on the yaw rate.

The controller tracks ``[x_r, y_r, theta_r]`` samples of a timed path with
the traction-aware model, using the estimator's latest parameters as if they
were exact.  Only the first input of each solved sequence is applied.

Reference timing: the path clock is re-anchored every sample at the point
nearest to the predicted pose, and the horizon is laid out at the estimated
ground speed.  A wheel-speed command that is fixed while the robot slips
would otherwise leave a growing along-track gap the yaw rate cannot close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rti
from .errors import ConfigError, DegenerateReferenceError, SolverError
from .model import ReferencePoint, simulate
from .paths import ReferenceTrajectory

OUTPUT_MATRIX = np.zeros((4, 7))
OUTPUT_MATRIX[0, 0] = OUTPUT_MATRIX[1, 1] = OUTPUT_MATRIX[2, 2] = 1.0
OUTPUT_MATRIX[3, 3] = 1.0

INPUT_REFERENCE_MODES = ("last_measured", "zero")


@dataclass(frozen=True)
class MpcWeights:
    q: tuple = (1.0, 1.0, 1.0)
    r: float = 1.0
    q_terminal: tuple = (10.0, 10.0, 10.0)

    def __post_init__(self):
        if len(self.q) != 3 or len(self.q_terminal) != 3:
            raise ConfigError("state weights need three diagonal entries")
        if min(*self.q, *self.q_terminal, self.r) < 0:
            raise ConfigError("MPC weights must be non-negative")

    def scaled(self, factor: float) -> "MpcWeights":
        return MpcWeights(tuple(factor * w for w in self.q), factor * self.r, tuple(factor * w for w in self.q_terminal))


@dataclass(frozen=True)
class MpcConfig:
    n_c: int = 20
    omega_bound: float = 0.1
    input_reference: str = "last_measured"
    dt: float = 0.2

    def __post_init__(self):
        if self.n_c < 2:
            raise ConfigError("prediction horizon must be at least 2")
        if not self.omega_bound > 0:
            raise ConfigError("yaw-rate bound must be positive")
        if self.input_reference not in INPUT_REFERENCE_MODES:
            raise ConfigError(f"input reference must be one of {INPUT_REFERENCE_MODES}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")


@dataclass
class ControlResult:
    u_apply: float
    predicted: np.ndarray  # (n_c + 1, 3)
    controls: np.ndarray  # (n_c,)
    objective: float
    saturated: bool
    refs: np.ndarray  # (n_c + 1, 3)
    path_time: float = 0.0
    kkt_residual: float = 0.0
    qp_iterations: int = 0
    prep_time: float = 0.0
    feedback_time: float = 0.0


def build_reference(path: ReferenceTrajectory, t: float, n_c: int, lam: int = 0, dt: float = 0.2,
                    rate: float = 1.0, theta_near: Optional[float] = None) -> list[ReferencePoint]:
    """``n_c + 1`` reference points from path time ``t`` (node 0 included).

    Consecutive points are ``rate * dt`` apart in path time.  Headings follow
    the path's unwrapped heading, flipped by ``pi`` when ``lam == 1``, and are
    shifted by whole turns to sit within ``pi`` of ``theta_near``.
    """
    times = t + rate * dt * np.arange(n_c + 1)
    path.require(float(times[0]), float(times[-1]))
    x, y, xd, yd, th = path.sample(times)
    if np.any((xd == 0.0) & (yd == 0.0)):
        raise DegenerateReferenceError(f"reference velocity vanishes near path time {t:.3f}")
    th = th + lam * math.pi
    if theta_near is not None:
        th = th - 2 * math.pi * round((th[0] - theta_near) / (2 * math.pi))
    return [ReferencePoint(float(a), float(b), float(c), float(d), float(e)) for a, b, c, d, e in zip(x, y, th, xd, yd)]


def build_problem(refs, weights: MpcWeights, cfg: MpcConfig, u_ref: float = 0.0) -> rti.NlpProblem:
    n = len(refs) - 1
    W = np.zeros((n + 1, 4))
    W[1:n, :3] = np.sqrt(weights.q)
    W[n, :3] = np.sqrt(weights.q_terminal)
    W[:n, 3] = math.sqrt(weights.r)
    targets = np.zeros((n + 1, 4))
    targets[:, :3] = [(r.x_r, r.y_r, r.theta_r) for r in refs]
    targets[:n, 3] = u_ref
    return rti.NlpProblem(
        dt=cfg.dt,
        output_matrix=OUTPUT_MATRIX,
        weights=W,
        targets=targets,
        n_controls=n,
        embedding=rti.INITIAL_STATE,
        control_bounds=(-cfg.omega_bound, cfg.omega_bound),
    )


def rollout_guess(xi, p, n_c: int, dt: float, controls=None) -> rti.ShootingGrid:
    controls = np.zeros(n_c) if controls is None else np.asarray(controls, dtype=float)
    return rti.ShootingGrid(simulate(xi, controls, p, dt), controls, np.asarray(p, dtype=float), dt)


def _result(sol: rti.RtiSolution, problem: rti.NlpProblem, path_time: float) -> ControlResult:
    g = sol.grid
    return ControlResult(
        u_apply=float(g.controls[0]),
        predicted=g.states.copy(),
        controls=g.controls.copy(),
        objective=sol.objective,
        saturated=bool(sol.control_active[0] != 0),
        refs=problem.targets[:, :3].copy(),
        path_time=path_time,
        kkt_residual=sol.kkt_residual,
        qp_iterations=sol.qp_iterations,
        prep_time=sol.prep_time,
        feedback_time=sol.feedback_time,
    )


def solve_nmpc(xi_hat, p_hat, refs, weights: MpcWeights = MpcWeights(), cfg: MpcConfig = MpcConfig(),
               guess: Optional[rti.ShootingGrid] = None, u_ref: float = 0.0) -> ControlResult:
    """One RTI step of the tracking problem for fixed references."""
    if len(refs) != cfg.n_c + 1:
        raise ConfigError(f"expected {cfg.n_c + 1} reference points, got {len(refs)}")
    problem = build_problem(refs, weights, cfg, u_ref)
    if guess is None:
        guess = rollout_guess(xi_hat, p_hat, cfg.n_c, cfg.dt)
    else:
        guess = rti.ShootingGrid(guess.states, guess.controls, np.asarray(p_hat, dtype=float), guess.dt)
    sol = rti.feedback(rti.prepare(problem, guess), np.asarray(xi_hat, dtype=float))
    return _result(sol, problem, 0.0)


class ModelPredictiveController:
    """Receding-horizon tracker with a prepare/feedback split."""

    def __init__(self, path: ReferenceTrajectory, cfg: MpcConfig = MpcConfig(), weights: MpcWeights = MpcWeights(),
                 lam: int = 0, search_back: float = 2.0, search_ahead: float = 6.0):
        self.path = path
        self.cfg = cfg
        self.weights = weights
        self.lam = lam
        self.search = (search_back, search_ahead)
        self.path_time: Optional[float] = None
        self.last: Optional[ControlResult] = None
        self._grid: Optional[rti.ShootingGrid] = None
        self._qp: Optional[rti.QpSubproblem] = None
        self._qp_time = 0.0

    def _rate(self, p_hat, t: float) -> float:
        speed = self.path.speed(t)
        if speed <= 0:
            return 1.0
        return float(np.clip(p_hat[0] * p_hat[1] / speed, 0.1, 2.0))

    def _linearize(self, guess: rti.ShootingGrid, p_hat, u_ref: float, first: bool):
        cfg = self.cfg
        anchor = guess.states[0]
        if first or self.path_time is None:
            t0 = 0.0 if self.path_time is None else self.path_time
            ahead = min(self.path.period if self.path.periodic else self.path.t[-1], 60.0)
            tau = self.path.project(anchor[:2], t0, back=0.0, ahead=ahead)
        else:
            tau = self.path.project(anchor[:2], self.path_time + self._rate(p_hat, self.path_time) * cfg.dt,
                                    *self.search)
        rate = self._rate(p_hat, tau)
        refs = build_reference(self.path, tau, cfg.n_c, self.lam, cfg.dt, rate, theta_near=float(anchor[2]))
        problem = build_problem(refs, self.weights, cfg, u_ref)
        return rti.prepare(problem, guess), tau

    def prepare(self, p_hat, u_ref: float = 0.0) -> None:
        """Shift the last solution and linearize for the next sample."""
        if self._grid is None:
            self._qp = None
            return
        if self.cfg.input_reference == "zero":
            u_ref = 0.0
        guess = rti.shift_warm_start(self._grid)
        guess.params = np.asarray(p_hat, dtype=float).copy()
        try:
            self._qp, self._qp_time = self._linearize(guess, p_hat, u_ref, first=False)
        except SolverError:
            self._qp = None

    def discard_prepared(self) -> None:
        self._qp = None

    def feedback(self, xi_hat, p_hat, u_ref: float = 0.0) -> ControlResult:
        """Inject the current estimate and return the input to apply.

        ``p_hat`` and ``u_ref`` are only used when no prepared linearization
        exists (first call or after a failure).
        """
        xi_hat = np.asarray(xi_hat, dtype=float)
        qp, tau = self._qp, self._qp_time
        self._qp = None
        if qp is None:
            if self.cfg.input_reference == "zero":
                u_ref = 0.0
            guess = rollout_guess(xi_hat, p_hat, self.cfg.n_c, self.cfg.dt)
            qp, tau = self._linearize(guess, p_hat, u_ref, first=self._grid is None)
        sol = rti.feedback(qp, xi_hat)
        self._grid = sol.grid
        self.path_time = tau
        self.last = _result(sol, qp.problem, tau)
        return self.last
