"""Moving horizon estimation of pose, wheel speed and traction coefficients.

Decision variables over a window of ``n`` samples are the pose at the
window head, one yaw-rate input per sample (each observed by the gyro) and
the parameters ``[v, mu, kappa]`` held constant across the window.  The
newest measurement is the fresh data of the real-time iteration, so the
linearization for sample ``k+1`` is built before that sample arrives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rti
from .errors import ConfigError, EstimatorError, SequencingError, SolverError
from .model import Measurement, simulate

# outputs [x, y, v, omega] as rows over [x, y, theta, u, v, mu, kappa]
OUTPUT_MATRIX = np.zeros((4, 7))
OUTPUT_MATRIX[0, 0] = OUTPUT_MATRIX[1, 1] = 1.0
OUTPUT_MATRIX[2, 4] = 1.0
OUTPUT_MATRIX[3, 3] = 1.0

PARAM_LOWER = np.array([0.0, 0.0, 0.0])
PARAM_UPPER = np.array([np.inf, 1.0, 1.0])

HOLD, IGNORE = "hold", "ignore"
DROPOUT_MODES = (HOLD, IGNORE)


@dataclass(frozen=True)
class MheWeights:
    """Diagonal weights given as standard deviations (weight = 1 / sigma**2)."""

    output_sigmas: tuple = (0.03, 0.03, 0.5, 0.35)
    arrival_sigmas: tuple = (10.0, 10.0, 0.1, 1.0, 0.25, 0.25)

    def __post_init__(self):
        if len(self.output_sigmas) != 4 or len(self.arrival_sigmas) != 6:
            raise ConfigError("MHE weights need 4 output and 6 arrival entries")
        if any(not (s > 0 and math.isfinite(s)) for s in (*self.output_sigmas, *self.arrival_sigmas)):
            raise ConfigError("MHE standard deviations must be positive and finite")

    @property
    def output_weight(self) -> np.ndarray:
        return np.diag(1.0 / np.square(self.output_sigmas))

    @property
    def arrival_weight(self) -> np.ndarray:
        return np.diag(1.0 / np.square(self.arrival_sigmas))

    @property
    def output_sqrt(self) -> np.ndarray:
        return 1.0 / np.asarray(self.output_sigmas, dtype=float)

    @property
    def arrival_sqrt(self) -> np.ndarray:
        return 1.0 / np.asarray(self.arrival_sigmas, dtype=float)


@dataclass
class EstimationWindow:
    n_e: int = 30
    dt: float = 0.2
    times: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    prior_state: Optional[np.ndarray] = None
    prior_params: Optional[np.ndarray] = None
    head_index: int = 0  # absolute sample index of the oldest entry

    def __post_init__(self):
        if self.n_e < 2:
            raise ConfigError("estimation horizon must hold at least 2 samples")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")

    def __len__(self) -> int:
        return len(self.measurements)

    @property
    def full(self) -> bool:
        return len(self) == self.n_e

    def push(self, t: float, z: Measurement, u: float) -> bool:
        """Append a sample; returns True when the oldest entry was evicted."""
        if self.times:
            gap = t - self.times[-1]
            if gap <= 0 or abs(gap - self.dt) > 1e-6 * max(1.0, self.dt):
                raise SequencingError(f"sample at t={t} does not follow t={self.times[-1]} by dt={self.dt}")
        if not z.valid_gnss and self.measurements:
            prev = self.measurements[-1]
            z = Measurement(prev.x, prev.y, z.v, z.omega, False)
        self.times.append(float(t))
        self.measurements.append(z)
        self.controls.append(float(u))
        if len(self) > self.n_e:
            del self.times[0], self.measurements[0], self.controls[0]
            self.head_index += 1
            return True
        return False

    def data(self) -> np.ndarray:
        return np.array([m.as_array() for m in self.measurements])


def push_measurement(w: EstimationWindow, t: float, z: Measurement, u: float) -> EstimationWindow:
    w.push(t, z, u)
    return w


@dataclass
class EstimateResult:
    xi_hat: np.ndarray
    p_hat: np.ndarray
    trajectory: np.ndarray  # (n, 3) window pose estimates
    controls: np.ndarray
    objective: float
    mu_at_bound: bool
    kappa_at_bound: bool
    kkt_residual: float = 0.0
    qp_iterations: int = 0
    prep_time: float = 0.0
    feedback_time: float = 0.0
    ready: bool = True


def initial_guess(w: EstimationWindow, n_nodes: Optional[int] = None) -> rti.ShootingGrid:
    """Roll the prior forward with the measured yaw rates."""
    n = len(w) if n_nodes is None else n_nodes
    omegas = np.array([m.omega for m in w.measurements[:n]] + [w.measurements[-1].omega] * (n - len(w)))
    states = simulate(w.prior_state, omegas[: n - 1], w.prior_params, w.dt)
    return rti.ShootingGrid(states, omegas, np.array(w.prior_params, dtype=float), w.dt)


def build_problem(w: EstimationWindow, weights: MheWeights, n_nodes: Optional[int] = None,
                  dropout_mode: str = HOLD, newest_valid: bool = True) -> rti.NlpProblem:
    """MHE least-squares problem over ``n_nodes`` samples starting at the window head.

    Targets for nodes already in the window are their measurements; the
    newest node's target is left to the fresh data.  In ``ignore`` mode held
    GNSS fixes carry no position weight.
    """
    n = len(w) if n_nodes is None else n_nodes
    if w.prior_state is None:
        raise EstimatorError("arrival prior not initialized")
    if dropout_mode not in DROPOUT_MODES:
        raise ConfigError(f"dropout mode must be one of {DROPOUT_MODES}")
    targets = np.zeros((n, 4))
    W = np.tile(weights.output_sqrt, (n, 1))
    known = min(len(w), n - 1)
    if known:
        targets[:known] = w.data()[:known]
    if dropout_mode == IGNORE:
        valid = [m.valid_gnss for m in w.measurements[:known]]
        valid += [newest_valid] * (n - known)
        W[~np.array(valid), :2] = 0.0
    return rti.NlpProblem(
        dt=w.dt,
        output_matrix=OUTPUT_MATRIX,
        weights=W,
        targets=targets,
        n_controls=n,
        embedding=rti.LAST_OUTPUT,
        params_free=True,
        prior_weights=weights.arrival_sqrt,
        prior_target=np.concatenate([w.prior_state, w.prior_params]),
        param_bounds=(PARAM_LOWER, PARAM_UPPER),
    )


def _result(sol: rti.RtiSolution, problem: rti.NlpProblem, fresh) -> EstimateResult:
    g = sol.grid
    return EstimateResult(
        xi_hat=g.states[-1].copy(),
        p_hat=g.params.copy(),
        trajectory=g.states.copy(),
        controls=g.controls.copy(),
        objective=problem.objective(g, fresh),
        mu_at_bound=bool(sol.param_active[1] != 0),
        kappa_at_bound=bool(sol.param_active[2] != 0),
        kkt_residual=sol.kkt_residual,
        qp_iterations=sol.qp_iterations,
        prep_time=sol.prep_time,
        feedback_time=sol.feedback_time,
    )


def solve_nmhe(w: EstimationWindow, weights: MheWeights, guess: Optional[rti.ShootingGrid] = None,
               dropout_mode: str = HOLD) -> EstimateResult:
    """One RTI step on the full window, newest measurement as fresh data."""
    if len(w) < 2:
        raise EstimatorError("need at least two samples in the window")
    problem = build_problem(w, weights, dropout_mode=dropout_mode, newest_valid=w.measurements[-1].valid_gnss)
    guess = initial_guess(w) if guess is None else guess
    fresh = w.measurements[-1].as_array()
    try:
        sol = rti.feedback(rti.prepare(problem, guess), fresh)
    except SolverError as exc:
        raise EstimatorError(f"estimator failed: {exc}") from exc
    return _result(sol, problem, fresh)


def update_arrival_prior(w: EstimationWindow, r: EstimateResult) -> EstimationWindow:
    """Move the prior to the node that becomes the new window head."""
    w.prior_state = r.trajectory[1].copy()
    w.prior_params = r.p_hat.copy()
    return w


class MovingHorizonEstimator:
    """Sliding-window estimator with a prepare/feedback split.

    Call :meth:`feedback` when a sample arrives and :meth:`prepare` once the
    control for the next interval is known.  The window grows until it
    holds ``n_e`` samples and slides afterwards.
    """

    def __init__(self, n_e: int = 30, dt: float = 0.2, weights: MheWeights = MheWeights(),
                 initial_traction: tuple = (0.75, 0.75), min_baseline: float = 0.3, dropout_mode: str = IGNORE):
        if dropout_mode not in DROPOUT_MODES:
            raise ConfigError(f"dropout mode must be one of {DROPOUT_MODES}")
        self.dropout_mode = dropout_mode
        self.window = EstimationWindow(n_e, dt)
        self.weights = weights
        self.initial_traction = initial_traction
        # initial heading needs a baseline well above the GNSS noise
        self.min_baseline = min_baseline
        self.last: Optional[EstimateResult] = None
        self._grid: Optional[rti.ShootingGrid] = None  # last solution, node 0 at window head
        self._grid_head = 0
        self._qp: Optional[rti.QpSubproblem] = None
        self._qp_head = 0
        self._next_prior = None

    @property
    def ready(self) -> bool:
        return self.last is not None and self.last.ready

    def _initialize_prior(self):
        w = self.window
        z0, z1 = w.measurements[0], w.measurements[-1]
        dx, dy = z1.x - z0.x, z1.y - z0.y
        heading = math.atan2(dy, dx) if (dx or dy) else 0.0
        w.prior_state = np.array([z0.x, z0.y, heading])
        w.prior_params = np.array([max(z0.v, 0.0), *self.initial_traction])

    def _preliminary(self, z: Measurement) -> EstimateResult:
        heading = 0.0 if self.last is None else float(self.last.xi_hat[2])
        z0 = self.window.measurements[0]
        if (z.x, z.y) != (z0.x, z0.y):
            heading = math.atan2(z.y - z0.y, z.x - z0.x)
        xi = np.array([z.x, z.y, heading])
        return EstimateResult(
            xi_hat=xi,
            p_hat=np.array([max(z.v, 0.0), *self.initial_traction]),
            trajectory=xi[None, :],
            controls=np.array([z.omega]),
            objective=0.0,
            mu_at_bound=False,
            kappa_at_bound=False,
            ready=False,
        )

    def _guess(self, n_nodes: int, head: int, u_hint: float) -> rti.ShootingGrid:
        """Warm start aligned to absolute sample ``head`` with ``n_nodes`` nodes."""
        w = self.window
        if self._grid is None:
            return initial_guess(w, n_nodes)
        g = self._grid
        off = head - self._grid_head
        keep = max(0, min(g.N + 1 - off, n_nodes))
        states = np.empty((n_nodes, 3))
        controls = np.empty(n_nodes)
        states[:keep] = g.states[off : off + keep]
        controls[:keep] = g.controls[off : off + keep]
        last_u = float(g.controls[-1])
        for k in range(keep, n_nodes):
            u = u_hint if k == n_nodes - 1 else last_u
            controls[k] = u
            states[k] = simulate(states[k - 1], [controls[k - 1]], g.params, w.dt)[-1]
        return rti.ShootingGrid(states, controls, g.params.copy(), w.dt)

    def prepare(self, u_hint: float = 0.0) -> None:
        """Linearize for the next sample; ``u_hint`` seeds its yaw-rate guess."""
        w = self.window
        if w.prior_state is None or len(w) < 1:
            self._qp = None
            return
        n_next = min(len(w) + 1, w.n_e)
        head = w.head_index + (1 if w.full else 0)
        if w.full and self.last is not None:
            # the node that becomes the head carries the arrival prior
            self._next_prior = (self.last.trajectory[1].copy(), self.last.p_hat.copy())
        else:
            self._next_prior = None
        prior_state, prior_params = w.prior_state, w.prior_params
        if self._next_prior is not None:
            w.prior_state, w.prior_params = self._next_prior
        try:
            # window data shifted the way the next push will shift it
            shadow = EstimationWindow(w.n_e, w.dt, list(w.times), list(w.measurements), list(w.controls),
                                      w.prior_state, w.prior_params, w.head_index)
            if w.full:
                del shadow.times[0], shadow.measurements[0], shadow.controls[0]
            problem = build_problem(shadow, self.weights, n_next, self.dropout_mode)
            guess = self._guess(n_next, head, u_hint)
            self._qp = rti.prepare(problem, guess)
            self._qp_head = head
        except SolverError:
            self._qp = None
        finally:
            w.prior_state, w.prior_params = prior_state, prior_params

    def feedback(self, t: float, z: Measurement, u_prev: float = 0.0) -> EstimateResult:
        """Ingest the newest sample and return the current estimate.

        Raises :class:`EstimatorError` when the solve fails; the window still
        records the sample and the previous estimate stays available in
        :attr:`last`.
        """
        w = self.window
        if not w.measurements and not z.valid_gnss:
            raise EstimatorError("first sample has no valid position fix")
        evicted = w.push(t, z, u_prev)
        if evicted and self._next_prior is not None:
            w.prior_state, w.prior_params = self._next_prior
        self._next_prior = None
        stored = w.measurements[-1]
        if w.prior_state is None:
            z0 = w.measurements[0]
            baseline = math.hypot(stored.x - z0.x, stored.y - z0.y)
            if len(w) < 2 or (baseline < self.min_baseline and not w.full):
                self.last = self._preliminary(stored)
                return self.last
            self._initialize_prior()
        qp = self._qp
        fresh = stored.as_array()
        try:
            stale = qp is None or self._qp_head != w.head_index or qp.problem.N + 1 != len(w)
            # a held fix arriving in ignore mode changes the newest node's weights
            if not stale and self.dropout_mode == IGNORE and not stored.valid_gnss:
                stale = True
            if stale:
                problem = build_problem(w, self.weights, dropout_mode=self.dropout_mode,
                                        newest_valid=stored.valid_gnss)
                qp = rti.prepare(problem, self._guess(len(w), w.head_index, z.omega))
            sol = rti.feedback(qp, fresh)
        except SolverError as exc:
            self._qp = None
            raise EstimatorError(f"estimator failed at t={t:.3f}: {exc}") from exc
        self._qp = None
        self._grid = sol.grid
        self._grid_head = w.head_index
        self.last = _result(sol, qp.problem, fresh)
        return self.last
