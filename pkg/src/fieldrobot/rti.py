"""Real-time iteration Gauss-Newton over a multiple-shooting grid.

Both estimator and controller are least-squares problems whose residuals are
affine in the decision variables; all nonlinearity sits in the shooting
continuity constraints ``s[k+1] = F(s[k], u[k], p)``.  One iteration is
split into

* :func:`prepare` - integrate the dynamics at the current guess, propagate
  RK4 sensitivities and condense the continuity constraints away.  Nothing
  from the current sample is read here.
* :func:`feedback` - inject the fresh data (initial state for the
  controller, newest measurement for the estimator), solve one dense QP and
  take the full Gauss-Newton step.

The fresh data enters the condensed QP affinely, which is what makes the
split exact: ``feedback`` only forms ``g = g0 + Gd @ d`` before solving.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model
from .errors import LinearizationError
from .qp import AT_LOWER, AT_UPPER, solve_qp

HESSIAN_REGULARIZATION = 1e-9

INITIAL_STATE = "initial_state"
LAST_OUTPUT = "last_output"


@dataclass
class ShootingGrid:
    states: np.ndarray  # (N+1, 3)
    controls: np.ndarray  # (N,) or (N+1,)
    params: np.ndarray  # (3,)
    dt: float

    def __post_init__(self):
        self.states = np.array(self.states, dtype=float).reshape(-1, model.NX)
        self.controls = np.array(self.controls, dtype=float).reshape(-1)
        self.params = np.array(self.params, dtype=float).reshape(model.NP)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.controls) not in (self.N, self.N + 1):
            raise ValueError(f"{len(self.controls)} controls for {self.N} intervals")

    @property
    def N(self) -> int:
        return self.states.shape[0] - 1

    def copy(self) -> "ShootingGrid":
        return ShootingGrid(self.states.copy(), self.controls.copy(), self.params.copy(), self.dt)

    def defects(self) -> np.ndarray:
        nxt, *_ = model.rk4_sensitivities(self.states[:-1], self.controls[: self.N], self.params, self.dt)
        return nxt - self.states[1:]


@dataclass
class NlpProblem:
    """Least-squares NLP on a shooting grid.

    Node ``k`` contributes ``weights[k] * (C @ [s_k, u_k, p] - targets[k])``;
    ``weights`` are square roots of diagonal weighting matrices.  An optional
    prior on ``[s_0, p]`` plays the role of an arrival cost.
    """

    dt: float
    output_matrix: np.ndarray  # (ny, 7) over [x, y, theta, u, v, mu, kappa]
    weights: np.ndarray  # (N+1, ny)
    targets: np.ndarray  # (N+1, ny)
    n_controls: int
    embedding: str = INITIAL_STATE
    params_free: bool = False
    prior_weights: Optional[np.ndarray] = None  # (6,) over [x, y, theta, v, mu, kappa]
    prior_target: Optional[np.ndarray] = None
    control_bounds: tuple[float, float] = (-np.inf, np.inf)
    param_bounds: tuple[np.ndarray, np.ndarray] = field(
        default_factory=lambda: (np.full(3, -np.inf), np.full(3, np.inf))
    )

    @property
    def N(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def ny(self) -> int:
        return self.output_matrix.shape[0]

    def check_grid(self, grid: ShootingGrid) -> None:
        if grid.N != self.N or len(grid.controls) != self.n_controls:
            raise ValueError(
                f"grid has N={grid.N}, {len(grid.controls)} controls; "
                f"problem expects N={self.N}, {self.n_controls} controls"
            )

    def objective(self, grid: ShootingGrid, fresh=None) -> float:
        """Nonlinear least-squares objective ``0.5 * ||r||^2`` at ``grid``."""
        targets = self.targets
        if self.embedding == LAST_OUTPUT and fresh is not None:
            targets = targets.copy()
            targets[-1] = fresh
        r = self.weights * (_outputs(self, grid) - targets)
        val = 0.5 * float(np.sum(r * r))
        if self.prior_weights is not None:
            rp = self.prior_weights * (np.concatenate([grid.states[0], grid.params]) - self.prior_target)
            val += 0.5 * float(rp @ rp)
        return val


def _outputs(problem: NlpProblem, grid: ShootingGrid) -> np.ndarray:
    n1 = grid.N + 1
    u = np.zeros(n1)
    u[: len(grid.controls)] = grid.controls
    C = problem.output_matrix
    return grid.states @ C[:, :3].T + np.outer(u, C[:, 3]) + grid.params @ C[:, 4:].T


@dataclass
class Layout:
    n: int
    s0: Optional[slice]
    u: slice
    p: Optional[slice]


@dataclass
class QpSubproblem:
    """Condensed Gauss-Newton QP in the increments ``dq``.

    The objective is ``0.5 * ||G dq + e0 + D d||^2`` (plus a tiny ridge) for
    fresh data ``d``; ``H``/``g0``/``GtD`` are the corresponding normal
    equation pieces and ``lb``/``ub`` bound ``dq``.
    """

    problem: NlpProblem
    guess: ShootingGrid
    layout: Layout
    H: np.ndarray
    g0: np.ndarray
    GtD: np.ndarray
    G: np.ndarray
    e0: np.ndarray
    D: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    state_sens: np.ndarray  # (N+1, 3, n) d s_k / d dq
    state_offset: np.ndarray  # (N+1, 3) defect propagation
    state_fresh: np.ndarray  # (N+1, 3, nd) d s_k / d d
    defects: np.ndarray
    prep_time: float = 0.0


@dataclass
class RtiSolution:
    grid: ShootingGrid
    objective: float
    kkt_residual: float
    qp_iterations: int
    prep_time: float
    feedback_time: float
    control_active: np.ndarray  # -1/0/+1 per control
    param_active: np.ndarray  # -1/0/+1 per parameter (zeros when fixed)
    step: np.ndarray


def _layout(problem: NlpProblem) -> Layout:
    off = 0
    s0 = None
    if problem.embedding != INITIAL_STATE:
        s0 = slice(0, 3)
        off = 3
    u = slice(off, off + problem.n_controls)
    off += problem.n_controls
    p = None
    if problem.params_free:
        p = slice(off, off + 3)
        off += 3
    return Layout(off, s0, u, p)


def prepare(problem: NlpProblem, guess: ShootingGrid) -> QpSubproblem:
    """Linearize and condense ``problem`` around ``guess``."""
    t0 = time.perf_counter()
    problem.check_grid(guess)
    N, dt = problem.N, problem.dt
    S, U, p = guess.states, guess.controls, guess.params
    lay = _layout(problem)
    nq = lay.n

    node_ok = np.isfinite(S).all(axis=1)
    node_ok[: len(U)] &= np.isfinite(U)
    if not node_ok.all():
        raise LinearizationError(int(np.flatnonzero(~node_ok)[0]), "non-finite guess")
    if not np.isfinite(p).all():
        raise LinearizationError(0, "non-finite parameter guess")
    nxt, A, B, P = model.rk4_sensitivities(S[:N], U[:N], p, dt)
    defects = nxt - S[1:]
    bad = ~np.isfinite(defects).all(axis=1)
    if bad.any():
        raise LinearizationError(int(np.flatnonzero(bad)[0]), "non-finite shooting defect")

    nd = 3 if problem.embedding == INITIAL_STATE else problem.ny
    Sq = np.zeros((N + 1, 3, nq))
    c = np.zeros((N + 1, 3))
    Z = np.zeros((N + 1, 3, 3 if problem.embedding == INITIAL_STATE else 0))
    if lay.s0 is not None:
        Sq[0, :, lay.s0] = np.eye(3)
    else:
        Z[0] = np.eye(3)
    u0, pcols = lay.u.start, lay.p
    for k in range(N):
        Ak = A[k]
        Sq[k + 1] = Ak @ Sq[k]
        Sq[k + 1, :, u0 + k] += B[k]
        if pcols is not None:
            Sq[k + 1, :, pcols] += P[k]
        c[k + 1] = Ak @ c[k] + defects[k]
        if Z.shape[2]:
            Z[k + 1] = Ak @ Z[k]

    C = problem.output_matrix
    W = problem.weights
    Y = _outputs(problem, guess)
    targets = problem.targets.copy()
    if problem.embedding == LAST_OUTPUT:
        targets[-1] = 0.0
    resid = Y - targets
    if not np.isfinite(resid).all():
        raise LinearizationError(int(np.flatnonzero(~np.isfinite(resid).all(axis=1))[0]))

    Gn = np.einsum("ry,kyq->krq", C[:, :3], Sq)
    ks = np.arange(problem.n_controls)
    Gn[ks, :, u0 + ks] += C[:, 3]
    if pcols is not None:
        Gn[:, :, pcols] += C[:, 4:]
    Gn *= W[:, :, None]
    e_n = W * (resid + c @ C[:, :3].T)

    ny = problem.ny
    rows = (N + 1) * ny
    G = Gn.reshape(rows, nq)
    e0 = e_n.reshape(rows)
    if problem.embedding == INITIAL_STATE:
        D = (W[:, :, None] * np.einsum("ry,kyd->krd", C[:, :3], Z)).reshape(rows, nd)
    else:
        D = np.zeros((rows, nd))
        D[rows - ny :, :] = -np.diag(W[-1])

    if problem.prior_weights is not None:
        wp = problem.prior_weights
        Gp = np.zeros((6, nq))
        Gp[:3] = Sq[0]
        if pcols is not None:
            Gp[3:, pcols] = np.eye(3)
        Gp *= wp[:, None]
        ep = wp * (np.concatenate([S[0], p]) - problem.prior_target)
        G = np.vstack([G, Gp])
        e0 = np.concatenate([e0, ep])
        Dp = np.zeros((6, nd))
        if problem.embedding == INITIAL_STATE:
            Dp[:3] = wp[:3, None] * Z[0]
        D = np.vstack([D, Dp])

    Gt = G.T
    H = Gt @ G
    H[np.diag_indices(nq)] += HESSIAN_REGULARIZATION
    lb = np.full(nq, -np.inf)
    ub = np.full(nq, np.inf)
    lo, hi = problem.control_bounds
    lb[lay.u] = lo - U
    ub[lay.u] = hi - U
    if pcols is not None:
        plo, phi = problem.param_bounds
        lb[pcols] = np.asarray(plo) - p
        ub[pcols] = np.asarray(phi) - p
    qp = QpSubproblem(
        problem=problem,
        guess=guess,
        layout=lay,
        H=H,
        g0=Gt @ e0,
        GtD=Gt @ D,
        G=G,
        e0=e0,
        D=D,
        lb=lb,
        ub=ub,
        state_sens=Sq,
        state_offset=c,
        state_fresh=Z,
        defects=defects,
    )
    qp.prep_time = time.perf_counter() - t0
    return qp


def feedback(qp: QpSubproblem, fresh_data) -> RtiSolution:
    """Inject ``fresh_data``, solve the QP once and take the full step."""
    t0 = time.perf_counter()
    problem, guess, lay = qp.problem, qp.guess, qp.layout
    fresh = np.asarray(fresh_data, dtype=float).reshape(-1)
    if problem.embedding == INITIAL_STATE:
        if fresh.shape != (3,):
            raise ValueError("initial-state embedding expects a 3-vector")
        d = fresh - guess.states[0]
    else:
        if fresh.shape != (problem.ny,):
            raise ValueError(f"output embedding expects a {problem.ny}-vector")
        d = fresh
    g = qp.g0 + qp.GtD @ d
    res = solve_qp(qp.H, g, qp.lb, qp.ub)
    dq = res.x

    ds = qp.state_sens @ dq + qp.state_offset
    if qp.state_fresh.shape[2]:
        ds += qp.state_fresh @ d
    grid = guess.copy()
    grid.states += ds
    grid.controls += dq[lay.u]
    if problem.embedding == INITIAL_STATE:
        grid.states[0] = fresh

    u_act = res.active[lay.u]
    lo, hi = problem.control_bounds
    grid.controls[u_act == AT_LOWER] = lo
    grid.controls[u_act == AT_UPPER] = hi
    p_act = np.zeros(3, dtype=int)
    if lay.p is not None:
        grid.params += dq[lay.p]
        p_act = res.active[lay.p]
        plo, phi = problem.param_bounds
        grid.params[p_act == AT_LOWER] = np.asarray(plo)[p_act == AT_LOWER]
        grid.params[p_act == AT_UPPER] = np.asarray(phi)[p_act == AT_UPPER]

    if not (np.isfinite(grid.states).all() and np.isfinite(grid.controls).all() and np.isfinite(grid.params).all()):
        raise LinearizationError(0, "non-finite Gauss-Newton step")

    r = qp.G @ dq + qp.e0 + qp.D @ d
    step_norm = max(float(np.max(np.abs(ds))), float(np.max(np.abs(dq), initial=0.0)))
    kkt = max(step_norm, float(np.max(np.abs(qp.defects), initial=0.0)))
    return RtiSolution(
        grid=grid,
        objective=0.5 * float(r @ r),
        kkt_residual=kkt,
        qp_iterations=res.iterations,
        prep_time=qp.prep_time,
        feedback_time=time.perf_counter() - t0,
        control_active=u_act.copy(),
        param_active=p_act,
        step=dq,
    )


def shift_warm_start(sol: RtiSolution | ShootingGrid, drop_first: bool = True) -> ShootingGrid:
    """Shift a solution one interval forward for the next sample.

    The last control is duplicated and the last state is integrated one step
    with it.  With ``drop_first=False`` the grid grows by one node instead,
    which is how a not-yet-full estimation window is extended.
    """
    grid = sol.grid if isinstance(sol, RtiSolution) else sol
    S, U, p, dt = grid.states, grid.controls, grid.params, grid.dt
    tail = model.integrate_step(S[-1], float(U[-1]), p, dt)
    if drop_first:
        states = np.vstack([S[1:], tail])
        controls = np.append(U[1:], U[-1])
    else:
        states = np.vstack([S, tail])
        controls = np.append(U, U[-1])
    return ShootingGrid(states, controls, p.copy(), dt)


def converge(problem: NlpProblem, guess: ShootingGrid, fresh, tol=1e-12, max_iter=50) -> RtiSolution:
    """Repeat prepare/feedback on a frozen problem until the step vanishes."""
    sol = None
    grid = guess
    for _ in range(max_iter):
        sol = feedback(prepare(problem, grid), fresh)
        grid = sol.grid
        if sol.kkt_residual < tol:
            break
    return sol


__all__ = [
    "ShootingGrid",
    "NlpProblem",
    "QpSubproblem",
    "RtiSolution",
    "prepare",
    "feedback",
    "shift_warm_start",
    "solve_qp",
    "converge",
]
