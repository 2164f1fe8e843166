"""Dense primal active-set solver for box-bounded convex QPs.

Solves::

    min  0.5 x'Hx + g'x
    s.t. A x = b            (optional)
         lb <= x <= ub

Working-set rules are deterministic: the blocking bound with the smallest
step length is added (lowest index on ties) and the bound whose multiplier
has the most wrong sign is released (lowest index on ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, QpInfeasibleError, QpIterationLimitError

AT_LOWER, FREE, AT_UPPER = -1, 0, 1


@dataclass
class QpResult:
    x: np.ndarray
    active: np.ndarray  # -1 at lower bound, +1 at upper bound, 0 free
    bound_multipliers: np.ndarray  # >= 0 at lower, <= 0 at upper
    eq_multipliers: np.ndarray
    iterations: int

    def kkt_residual(self, H, g, lb, ub, A=None, b=None) -> float:
        return kkt_residual(H, g, lb, ub, self.x, self.bound_multipliers, A, b, self.eq_multipliers)


def kkt_residual(H, g, lb, ub, x, lam, A=None, b=None, nu=None) -> float:
    """Infinity norm over stationarity, feasibility, sign and complementarity."""
    H = np.asarray(H, float)
    grad = H @ x + g - lam
    parts = [np.max(np.maximum(lb - x, 0.0), initial=0.0), np.max(np.maximum(x - ub, 0.0), initial=0.0)]
    if A is not None and len(A):
        grad = grad + A.T @ nu
        parts.append(np.max(np.abs(A @ x - b), initial=0.0))
    parts.append(np.max(np.abs(grad), initial=0.0))
    lam_lo = np.maximum(lam, 0.0)
    lam_hi = np.minimum(lam, 0.0)
    with np.errstate(invalid="ignore"):
        comp_lo = np.where(np.isfinite(lb), np.abs(lam_lo * (x - lb)), np.abs(lam_lo))
        comp_hi = np.where(np.isfinite(ub), np.abs(lam_hi * (ub - x)), np.abs(lam_hi))
    parts += [np.max(comp_lo, initial=0.0), np.max(comp_hi, initial=0.0)]
    return float(max(parts))


def _solve_eqp(H, grad, free, A, resid):
    """Newton step on the free variables with bounds in the working set fixed."""
    hf = H[np.ix_(free, free)]
    if A is None:
        return np.linalg.solve(hf, -grad[free]), np.zeros(0)
    m = A.shape[0]
    af = A[:, free]
    nf = len(free)
    kkt = np.zeros((nf + m, nf + m))
    kkt[:nf, :nf] = hf
    kkt[:nf, nf:] = af.T
    kkt[nf:, :nf] = af
    rhs = np.concatenate([-grad[free], resid])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:nf], sol[nf:]


def _active_set(H, g, lb, ub, x, state, A, b, max_iter):
    n = len(x)
    fixed = lb == ub
    nu = np.zeros(0 if A is None else A.shape[0])
    at_min = False
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        if not at_min:
            free = np.flatnonzero(state == FREE)
            resid = None if A is None else b - A @ x
            p = np.zeros(n)
            if len(free):
                p_free, nu_new = _solve_eqp(H, grad, free, A, resid)
                p[free] = p_free
                if A is not None:
                    nu = nu_new
            elif A is not None:
                nu = np.linalg.lstsq(A.T, -grad, rcond=None)[0] if A.size else nu
            alpha, block = 1.0, -1
            with np.errstate(divide="ignore", invalid="ignore"):
                to_lo = np.where((p < 0) & (state == FREE), (lb - x) / p, np.inf)
                to_hi = np.where((p > 0) & (state == FREE), (ub - x) / p, np.inf)
            ratios = np.minimum(to_lo, to_hi)
            if len(ratios) and np.min(ratios) < 1.0:
                block = int(np.argmin(ratios))
                alpha = max(float(ratios[block]), 0.0)
            x = x + alpha * p
            if block >= 0:
                if to_lo[block] <= to_hi[block]:
                    x[block], state[block] = lb[block], AT_LOWER
                else:
                    x[block], state[block] = ub[block], AT_UPPER
                continue
            at_min = True
            continue

        grad = H @ x + g
        lam = grad if A is None else grad + A.T @ nu
        wrong = np.zeros(n)
        wrong[state == AT_LOWER] = -lam[state == AT_LOWER]
        wrong[state == AT_UPPER] = lam[state == AT_UPPER]
        wrong[fixed] = 0.0
        tol = 1e-12 * (1.0 + np.max(np.abs(lam), initial=0.0))
        worst = int(np.argmax(wrong))
        if wrong[worst] <= tol:
            mult = np.where(state != FREE, lam, 0.0)
            return x, state, mult, nu, it
        state[worst] = FREE
        at_min = False
    raise QpIterationLimitError(f"active-set solver exceeded {max_iter} iterations")


def solve_qp(H, g, lb=None, ub=None, A=None, b=None, x0=None, max_iter=None) -> QpResult:
    """Solve a convex QP with box bounds and optional equality constraints.

    ``H`` must be positive definite on the null space of ``A``.  Infinite
    bounds are allowed.  ``x0`` (clipped into the box) seeds the iteration;
    variables sitting exactly on a bound start in the working set.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
    if np.any(lb > ub):
        bad = int(np.flatnonzero(lb > ub)[0])
        raise ConfigError(f"lower bound exceeds upper bound for variable {bad}")
    if A is not None:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] == 0:
            A = b = None
    if max_iter is None:
        max_iter = 10 * n + 50

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = np.clip(x, lb, ub)
    state = np.full(n, FREE, dtype=int)
    state[x == lb] = AT_LOWER
    state[(x == ub) & (state == FREE)] = AT_UPPER

    if A is not None:
        x, state = _phase_one(A, b, lb, ub, x, state, max_iter)

    x, state, lam, nu, iters = _active_set(H, g, lb, ub, x, state, A, b, max_iter)
    return QpResult(x=x, active=state, bound_multipliers=lam, eq_multipliers=nu, iterations=iters)


def _phase_one(A, b, lb, ub, x, state, max_iter):
    """Find a point satisfying ``A x = b`` inside the box."""
    n = len(x)
    eps = 1e-10
    H1 = A.T @ A + eps * np.eye(n)
    g1 = -A.T @ b - eps * x
    x1, state1, _, _, _ = _active_set(H1, g1, lb, ub, x, state, None, None, max_iter)
    scale = 1.0 + np.max(np.abs(b), initial=0.0)
    if np.max(np.abs(A @ x1 - b)) > 1e-7 * scale:
        raise QpInfeasibleError("equality constraints cannot be met inside the bounds")
    return x1, state1
