"""Constant-velocity Kalman filter over image-plane box centers.

State ``[ox, oy, vx, vy]`` in pixels and pixels per frame.  The measurement
stacks the flow-projected center and the mean feature flow, so the
observation matrix is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

DEFAULT_Q = np.diag([1.0, 1.0, 4.0, 4.0])
DEFAULT_R = np.diag([4.0, 4.0, 9.0, 9.0])
H = np.eye(4)


def transition(dt_frames: float = 1.0) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt_frames
    return F


def _check_psd(M: np.ndarray, name: str) -> None:
    if M.shape != (4, 4) or not np.allclose(M, M.T, atol=1e-9 * (1 + np.abs(M).max())):
        raise ConfigError(f"{name} must be a symmetric 4x4 matrix")
    if np.linalg.eigvalsh(M).min() < -1e-9 * (1 + np.abs(M).max()):
        raise ConfigError(f"{name} is not positive semi-definite")


@dataclass
class TrackKalman:
    x: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    innovation: np.ndarray | None = None
    innovation_cov: np.ndarray | None = None

    def __setattr__(self, name, value):
        # covariances are validated when assigned; the filter steps write
        # through object.__setattr__ since they preserve PSD by construction
        if name in ("P", "Q", "R"):
            value = np.array(value, dtype=float)
            _check_psd(value, name)
        object.__setattr__(self, name, value)

    @classmethod
    def start(cls, center, velocity=(0.0, 0.0), pos_var: float = 25.0, vel_var: float = 25.0,
              Q=DEFAULT_Q, R=DEFAULT_R) -> "TrackKalman":
        x = np.array([center[0], center[1], velocity[0], velocity[1]], dtype=float)
        P = np.diag([pos_var, pos_var, vel_var, vel_var])
        return cls(x, P, np.array(Q, dtype=float), np.array(R, dtype=float))

    @property
    def center(self) -> np.ndarray:
        return self.x[:2].copy()


def kalman_predict(k: TrackKalman, dt_frames: float = 1.0) -> TrackKalman:
    F = transition(dt_frames)
    k.x = F @ k.x
    object.__setattr__(k, "P", F @ k.P @ F.T + k.Q)
    return k


def kalman_update(k: TrackKalman, z) -> TrackKalman:
    """Joseph-form update; keeps ``P`` symmetric PSD under round-off."""
    z = np.asarray(z, dtype=float)
    y = z - H @ k.x
    S = H @ k.P @ H.T + k.R
    try:
        K = np.linalg.solve(S, H @ k.P).T
    except np.linalg.LinAlgError:
        # singular S only arises with zero covariances
        K = k.P @ H.T @ np.linalg.pinv(S)
    k.x = k.x + K @ y
    I_KH = np.eye(4) - K @ H
    P = I_KH @ k.P @ I_KH.T + K @ k.R @ K.T
    object.__setattr__(k, "P", 0.5 * (P + P.T))
    k.innovation = y
    k.innovation_cov = S
    return k
