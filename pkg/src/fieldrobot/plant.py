"""Ground-truth plant, noisy sensors and GNSS dropout injection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .errors import ConfigError, MissingInitialFixError
from .model import Measurement, Params

RK4_SUBSTEPS = 4


@dataclass(frozen=True)
class PlantState:
    xi_true: np.ndarray
    p_true: Params
    omega_actual: float = 0.0
    v_actual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi_true", np.asarray(self.xi_true, dtype=float).reshape(3))
        object.__setattr__(self, "p_true", Params(*map(float, self.p_true)).validate())


@dataclass(frozen=True)
class SensorConfig:
    sigma_x: float = 0.03
    sigma_y: float = 0.03
    sigma_v: float = 0.05
    sigma_omega: float = 0.0175
    rate: float = 5.0

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_v", "sigma_omega"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.rate > 0:
            raise ConfigError("sensor rate must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_x, self.sigma_y, self.sigma_v, self.sigma_omega])

    @property
    def dt(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class DropoutSchedule:
    intervals: tuple = ()

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        for a, b in ivs:
            if not a < b:
                raise ConfigError(f"dropout interval ({a}, {b}) must have start < end")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise ConfigError("dropout intervals overlap")
        object.__setattr__(self, "intervals", ivs)

    def active(self, t: float) -> bool:
        return any(a <= t < b for a, b in self.intervals)

    @classmethod
    def from_samples(cls, indices, dt: float) -> "DropoutSchedule":
        """Merge sample indices into intervals centred on the sample times."""
        idx = sorted(set(int(i) for i in indices))
        runs = []
        for i in idx:
            if runs and i == runs[-1][1] + 1:
                runs[-1][1] = i
            else:
                runs.append([i, i])
        return cls(tuple(((a - 0.5) * dt, (b + 0.5) * dt) for a, b in runs))


def _schedule_value(t: float, breakpoints, smooth: float) -> float:
    """Piecewise-constant schedule ``[(t0, v0), (t1, v1), ...]``, optionally blended linearly over ``smooth`` s."""
    value = breakpoints[0][1]
    for (ta, va), (tb, vb) in zip(breakpoints, breakpoints[1:]):
        if smooth > 0 and tb <= t < tb + smooth:
            return va + (vb - va) * (t - tb) / smooth
        if t >= tb:
            value = vb
    return value


@dataclass(frozen=True)
class TractionProfile:
    mu: tuple = ((0.0, 0.85),)
    kappa: tuple = ((0.0, 0.9),)
    smooth: float = 0.0

    def __post_init__(self):
        for name in ("mu", "kappa"):
            sched = tuple((float(t), float(v)) for t, v in getattr(self, name))
            if not sched:
                raise ConfigError(f"{name} schedule is empty")
            if any(not 0.0 <= v <= 1.0 for _, v in sched):
                raise ConfigError(f"{name} schedule leaves [0, 1]")
            if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
                raise ConfigError(f"{name} schedule times must increase")
            object.__setattr__(self, name, sched)
        if self.smooth < 0:
            raise ConfigError("smoothing time must be >= 0")

    @classmethod
    def constant(cls, mu: float, kappa: float) -> "TractionProfile":
        return cls(((0.0, mu),), ((0.0, kappa),))

    def at(self, t: float) -> tuple[float, float]:
        return _schedule_value(t, self.mu, self.smooth), _schedule_value(t, self.kappa, self.smooth)


def step_plant(s: PlantState, cmd_omega: float, cmd_v: float, dt: float, tau_act: float = 0.3) -> PlantState:
    """Advance the true robot by ``dt`` under first-order actuator lags.

    The wheel-speed and yaw-rate lags are integrated exactly; pose uses RK4
    substeps on the lagged inputs.  With ``tau_act == 0`` the inputs switch
    instantly and the pose update is exactly :func:`model.integrate_step`.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    _, mu, kappa = s.p_true
    if tau_act <= 0:
        p = (cmd_v, mu, kappa)
        xi = model.integrate_step(s.xi_true, cmd_omega, p, dt)
        return PlantState(xi, Params(cmd_v, mu, kappa), cmd_omega, cmd_v)

    w0, v0 = s.omega_actual, s.v_actual

    def lagged(t):
        a = math.exp(-t / tau_act)
        return cmd_omega + (w0 - cmd_omega) * a, cmd_v + (v0 - cmd_v) * a

    def f(xi, t):
        w, v = lagged(t)
        return np.array([mu * v * math.cos(xi[2]), mu * v * math.sin(xi[2]), kappa * w])

    h = dt / RK4_SUBSTEPS
    xi = s.xi_true.copy()
    for i in range(RK4_SUBSTEPS):
        t = i * h
        k1 = f(xi, t)
        k2 = f(xi + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(xi + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(xi + h * k3, t + h)
        xi = xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    w1, v1 = lagged(dt)
    return PlantState(xi, Params(v1, mu, kappa), w1, v1)


def with_traction(s: PlantState, mu: float, kappa: float) -> PlantState:
    return replace(s, p_true=Params(s.p_true.v, mu, kappa))


@dataclass
class SensorNoise:
    """Independent Gaussian streams per channel, all spawned from one seed."""

    seed: int
    rngs: list = field(init=False)

    def __post_init__(self):
        root = np.random.SeedSequence(self.seed)
        self.rngs = [np.random.default_rng(child) for child in root.spawn(4)]

    def draw(self) -> np.ndarray:
        return np.array([rng.standard_normal() for rng in self.rngs])


def sample_sensors(s: PlantState, cfg: SensorConfig, noise: SensorNoise | int) -> Measurement:
    """Noisy ``[x, y, v, omega]``; the gyro reads the realized (lagged) yaw rate."""
    if not isinstance(noise, SensorNoise):
        noise = SensorNoise(int(noise))
    exact = np.array([s.xi_true[0], s.xi_true[1], s.v_actual, s.omega_actual])
    z = exact + cfg.sigmas * noise.draw()
    return Measurement(*map(float, z), True)


def apply_dropout(m: Measurement, t: float, sched: DropoutSchedule, last_valid: Measurement | None) -> Measurement:
    if not sched.active(t):
        return m
    if last_valid is None:
        raise MissingInitialFixError(f"GNSS dropout at t={t:.3f} s before any valid fix")
    return Measurement(last_valid.x, last_valid.y, m.v, m.omega, False)
