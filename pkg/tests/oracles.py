"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np


_SIDES = {}


def _sides(k: int) -> np.ndarray:
    if k not in _SIDES:
        _SIDES[k] = np.array(list(itertools.product((0, 1), repeat=k)), dtype=int).reshape(2 ** k, k)
    return _SIDES[k]


def qp_by_enumeration(H, g, lb, ub, tol=1e-9):
    """Box-constrained strictly convex QP solved by trying every bound pattern.

    For each free set the fixed variables take every lower/upper combination;
    the unique pattern satisfying primal feasibility and multiplier signs is
    the optimum.
    """
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    n = len(g)
    idx = np.arange(n)
    # fewest fixed variables first; the first KKT pattern found is the optimum
    for mask in sorted(range(2 ** n), key=lambda m: (-bin(m).count("1"), m)):
        free = np.array([(mask >> i) & 1 == 1 for i in range(n)], dtype=bool)
        F, A = idx[free], idx[~free]
        sides = _sides(len(A))
        XA = np.where(sides == 0, lb[A], ub[A])
        if len(F):
            rhs = g[F][:, None] + H[np.ix_(F, A)] @ XA.T
            XF = -np.linalg.solve(H[np.ix_(F, F)], rhs).T
            ok = np.all((XF >= lb[F] - tol) & (XF <= ub[F] + tol), axis=1)
        else:
            XF = np.zeros((len(XA), 0))
            ok = np.ones(len(XA), dtype=bool)
        if len(A):
            grad = XF @ H[np.ix_(A, F)].T + XA @ H[np.ix_(A, A)].T + g[A]
            ok &= np.all(np.where(sides == 0, grad >= -tol, grad <= tol), axis=1)
        hits = np.flatnonzero(ok)
        if len(hits):
            k = hits[0]
            x = np.empty(n)
            x[F] = XF[k]
            x[A] = XA[k]
            return x
    raise AssertionError("no KKT point found")


def best_assignment_total(S) -> float:
    """Maximum total score over all partial one-to-one assignments."""
    S = np.asarray(S, float)
    n, m = S.shape
    k = max(n, m)
    if k == 0:
        return 0.0
    pad = np.zeros((k, k))
    pad[:n, :m] = S
    perms = np.array(list(itertools.permutations(range(k))))
    return float(pad[np.arange(k), perms].sum(axis=1).max())


def box_iou(a, b) -> float:
    """Jaccard index from corner coordinates, written independently."""
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    inter = max(0.0, min(ax1, bx1) - max(ax0, bx0)) * max(0.0, min(ay1, by1) - max(ay0, by0))
    return inter / (a.w * a.h + b.w * b.h - inter)


def one_pass_stats(values):
    """Welford mean and sample standard deviation."""
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        d = v - mean
        mean += d / n
        m2 += d * (v - mean)
    return mean, math.sqrt(m2 / (n - 1)) if n > 1 else 0.0


def one_pass_fit(pairs):
    """Slope, intercept and Pearson R from running co-moments."""
    n = 0
    mx = my = cxx = cyy = cxy = 0.0
    for x, y in pairs:
        n += 1
        dx = x - mx
        mx += dx / n
        dy = y - my
        my += dy / n
        cxx += dx * (x - mx)
        cyy += dy * (y - my)
        cxy += dx * (y - my)
    slope = cxy / cxx
    r = cxy / math.sqrt(cxx * cyy) if cyy > 0 else 0.0
    return slope, my - slope * mx, r


def random_qp(rng, n=None):
    n = int(rng.integers(1, 13)) if n is None else n
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(scale=3.0, size=n)
    lo = -rng.uniform(0.1, 2.0, n)
    hi = rng.uniform(0.1, 2.0, n)
    return H, g, lo, hi
