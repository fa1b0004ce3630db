"""Constant-velocity Kalman filter used to propagate tracks through occlusion.

State x = (x, y, vx, vy) in normalized scene units and units/frame; the
transition matrix moves position by one frame of velocity, the measurement
matrix observes position only.
"""

from __future__ import annotations

import numpy as np

from .model import KalmanState

A_CV = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)

H_POS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ]
)


def init_state(pos, pos_var: float, vel_var: float) -> KalmanState:
    """New-track state: measured position, zero velocity, inflated velocity variance."""
    x = np.array([pos[0], pos[1], 0.0, 0.0])
    P = np.diag([pos_var, pos_var, vel_var, vel_var])
    return KalmanState(x=x, P=P)


def predict(state: KalmanState, q: float) -> KalmanState:
    x = A_CV @ state.x
    P = A_CV @ state.P @ A_CV.T + q * np.eye(4)
    return KalmanState(x=x, P=P)


def correct(state: KalmanState, z, r: float) -> KalmanState:
    z = np.asarray(z, dtype=float).reshape(2)
    S = H_POS @ state.P @ H_POS.T + r * np.eye(2)
    K = state.P @ H_POS.T @ np.linalg.inv(S)
    x = state.x + K @ (z - H_POS @ state.x)
    P = (np.eye(4) - K @ H_POS) @ state.P
    P = 0.5 * (P + P.T)  # keep symmetry against roundoff
    return KalmanState(x=x, P=P)
