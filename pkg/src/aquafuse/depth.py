"""Pressure-sensor depth model and the relative-depth residual.

World convention: the z axis points down along gravity, so depth is the +z
component of the pressure sensor's world position. Only depth differences
enter the residual; any common tare or atmospheric offset cancels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import hat
from .state import NavState

S3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PressureSample:
    t: float
    depth: float


@dataclass(frozen=True)
class DepthExtrinsics:
    """Lever arm from the body origin to the pressure sensor."""

    p_IP: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_IP", np.asarray(self.p_IP, dtype=float))


def pressure_position_estimate(state: NavState, ext: DepthExtrinsics) -> np.ndarray:
    """World position of the pressure sensor for a given body state."""
    return state.R @ ext.p_IP + state.p


def pressure_residual(state_i: NavState, state_n: NavState,
                      meas_i: PressureSample, meas_n: PressureSample,
                      ext: DepthExtrinsics) -> float:
    lever = state_n.R @ ext.p_IP - state_i.R @ ext.p_IP
    dz = S3 @ (lever + (state_n.p - state_i.p))
    return float(dz - (meas_n.depth - meas_i.depth))


def pressure_residual_jacobians(state_i: NavState, state_n: NavState,
                                meas_i: PressureSample, meas_n: PressureSample,
                                ext: DepthExtrinsics):
    res = pressure_residual(state_i, state_n, meas_i, meas_n, ext)
    j = {
        "phi_i": (S3 @ state_i.R @ hat(ext.p_IP)).reshape(1, 3),
        "p_i": -S3.reshape(1, 3),
        "phi_n": (-S3 @ state_n.R @ hat(ext.p_IP)).reshape(1, 3),
        "p_n": S3.reshape(1, 3),
    }
    return np.array([res]), j
