"""Adaptive kinematic model of a skid-steer field robot.

State ``xi = [x, y, theta]``, parameters ``p = [v, mu, kappa]``, input
``u = omega``.  The traction coefficients ``mu`` and ``kappa`` scale the
wheel speed and the commanded yaw rate into the motion actually realized::

    xdot     = mu * v * cos(theta)
    ydot     = mu * v * sin(theta)
    thetadot = kappa * omega

Arrays are used throughout; the NamedTuples below are convenience views that
``np.asarray`` accepts directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateReferenceError

NX, NU, NP = 3, 1, 3


class State(NamedTuple):
    x: float
    y: float
    theta: float


class Params(NamedTuple):
    v: float
    mu: float
    kappa: float

    def validate(self) -> "Params":
        if not (math.isfinite(self.v) and self.v >= 0.0):
            raise ConfigError(f"wheel speed must be finite and >= 0, got {self.v}")
        for name in ("mu", "kappa"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        return self


@dataclass(frozen=True)
class Measurement:
    x: float
    y: float
    v: float
    omega: float
    valid_gnss: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.omega])


class ReferencePoint(NamedTuple):
    x_r: float
    y_r: float
    theta_r: float
    xdot_r: float
    ydot_r: float


@dataclass(frozen=True)
class ModelConfig:
    dt: float = 0.2
    lam: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.lam not in (0, 1):
            raise ConfigError(f"direction flag must be 0 or 1, got {self.lam}")


def dynamics(xi, u: float, p) -> np.ndarray:
    _, _, theta = xi
    v, mu, kappa = p
    return np.array([mu * v * math.cos(theta), mu * v * math.sin(theta), kappa * u])


def jacobians(xi, u: float, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic partial derivatives of :func:`dynamics`.

    Returns ``(df/dxi (3x3), df/du (3,), df/dp (3x3))`` with parameter
    columns ordered ``v, mu, kappa``.
    """
    _, _, theta = xi
    v, mu, kappa = p
    c, s = math.cos(theta), math.sin(theta)
    fx = np.zeros((3, 3))
    fx[0, 2] = -mu * v * s
    fx[1, 2] = mu * v * c
    fu = np.array([0.0, 0.0, kappa])
    fp = np.array([[mu * c, v * c, 0.0], [mu * s, v * s, 0.0], [0.0, 0.0, u]])
    return fx, fu, fp


def integrate_step(xi, u: float, p, dt: float) -> np.ndarray:
    """One classical RK4 step with the input held constant over ``dt``."""
    xi = np.asarray(xi, dtype=float)
    k1 = dynamics(xi, u, p)
    k2 = dynamics(xi + 0.5 * dt * k1, u, p)
    k3 = dynamics(xi + 0.5 * dt * k2, u, p)
    k4 = dynamics(xi + dt * k3, u, p)
    return xi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(xi0, controls, p, dt: float) -> np.ndarray:
    """Open-loop RK4 rollout; returns ``len(controls) + 1`` states."""
    out = np.empty((len(controls) + 1, NX))
    out[0] = xi0
    for k, u in enumerate(controls):
        out[k + 1] = integrate_step(out[k], float(u), p, dt)
    return out


def _f_batch(x, u, v, mu, kappa):
    th = x[:, 2]
    c, s = np.cos(th), np.sin(th)
    f = np.empty_like(x)
    f[:, 0] = mu * v * c
    f[:, 1] = mu * v * s
    f[:, 2] = kappa * u
    return f, c, s


def _df_batch(dX, c, s, u, v, mu, kappa):
    """Directional derivative ``f_x dX + [0 | f_u | f_p]`` for stacked seeds.

    ``dX`` has shape ``(N, 3, 7)`` with columns ``[xi0 (3), u (1), p (3)]``.
    """
    out = np.zeros_like(dX)
    dth = dX[:, 2, :]
    out[:, 0, :] = (-mu * v * s)[:, None] * dth
    out[:, 1, :] = (mu * v * c)[:, None] * dth
    out[:, 2, 3] = kappa
    out[:, 0, 4] += mu * c
    out[:, 0, 5] += v * c
    out[:, 1, 4] += mu * s
    out[:, 1, 5] += v * s
    out[:, 2, 6] += u
    return out


def rk4_sensitivities(states, controls, p, dt: float):
    """Batched RK4 step with exact forward sensitivities.

    Parameters
    ----------
    states : (N, 3) array of interval start states.
    controls : (N,) array of yaw-rate inputs held over each interval.
    p : parameter vector ``[v, mu, kappa]`` shared by all intervals.

    Returns
    -------
    next_states : (N, 3)
    A : (N, 3, 3) derivative of the end state w.r.t. the start state
    B : (N, 3) derivative w.r.t. the input
    P : (N, 3, 3) derivative w.r.t. the parameters
    """
    x = np.asarray(states, dtype=float)
    u = np.asarray(controls, dtype=float)
    v, mu, kappa = (float(q) for q in p)
    n = x.shape[0]
    seed = np.zeros((n, 3, 7))
    seed[:, 0, 0] = seed[:, 1, 1] = seed[:, 2, 2] = 1.0

    h2 = 0.5 * dt
    f1, c, s = _f_batch(x, u, v, mu, kappa)
    d1 = _df_batch(seed, c, s, u, v, mu, kappa)
    f2, c, s = _f_batch(x + h2 * f1, u, v, mu, kappa)
    d2 = _df_batch(seed + h2 * d1, c, s, u, v, mu, kappa)
    f3, c, s = _f_batch(x + h2 * f2, u, v, mu, kappa)
    d3 = _df_batch(seed + h2 * d2, c, s, u, v, mu, kappa)
    f4, c, s = _f_batch(x + dt * f3, u, v, mu, kappa)
    d4 = _df_batch(seed + dt * d3, c, s, u, v, mu, kappa)

    w = dt / 6.0
    nxt = x + w * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    sens = seed + w * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return nxt, sens[:, :, 0:3], sens[:, :, 3], sens[:, :, 4:7]


def measurement(xi, u: float, p) -> Measurement:
    """Noiseless output map ``z = [x, y, v, omega]``."""
    return Measurement(float(xi[0]), float(xi[1]), float(p[0]), float(u), True)


def heading_reference(xdot_r: float, ydot_r: float, lam: int = 0) -> float:
    if xdot_r == 0.0 and ydot_r == 0.0:
        raise DegenerateReferenceError("reference velocity is zero")
    return math.atan2(ydot_r, xdot_r) + lam * math.pi


def slip_percentages(p) -> tuple[float, float]:
    """Longitudinal and lateral slip fractions ``(1 - mu, 1 - kappa)``."""
    _, mu, kappa = p
    return 1.0 - mu, 1.0 - kappa
