"""DVL velocity model with a slowly varying bias: dead reckoning, decoupled
translation preintegration, first-order bias updates and the DVL residuals.

The preintegrated translation is the body-frame sum of rotated, bias-corrected
velocity samples. Rotation checkpoints come from the IMU preintegration
(:class:`aquafuse.imu.RotationCheckpoints`), which also supplies the
gyro-bias Jacobians and rotation-noise covariances needed for the incremental
bias Jacobians and the measurement covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imu import RotationCheckpoints, hold_intervals, _infer_t_end
from .manifold import hat
from .state import NavState


@dataclass(frozen=True)
class DvlSample:
    t: float
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float))


@dataclass(frozen=True)
class DvlBias:
    bv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bv", np.asarray(self.bv, dtype=float))

    @staticmethod
    def zero() -> "DvlBias":
        return DvlBias(np.zeros(3))


@dataclass(frozen=True)
class DvlExtrinsics:
    """Fixed transform from the DVL frame to the body frame."""

    R_ID: np.ndarray
    p_ID: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R_ID", np.asarray(self.R_ID, dtype=float))
        object.__setattr__(self, "p_ID", np.asarray(self.p_ID, dtype=float))


@dataclass
class DvlPreintegrated:
    dp: np.ndarray
    dt_total: float
    lin_bg: np.ndarray
    lin_bv: np.ndarray
    J_dp_dbv: np.ndarray
    J_dp_dbg: np.ndarray
    cov: np.ndarray
    t_start: float
    t_end: float


def dead_reckon_dvl(p0, rotations_at_samples, samples, bias: DvlBias,
                    t_end: float | None = None) -> np.ndarray:
    """World-frame position reached by summing rotated, bias-corrected DVL
    velocities over their zero-order-hold intervals."""
    samples = list(samples)
    rotations = list(rotations_at_samples)
    if len(rotations) != len(samples):
        raise ValueError(f"{len(rotations)} rotations for {len(samples)} samples")
    if not samples:
        raise ValueError("empty DVL sample buffer")
    times = np.array([s.t for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("DVL timestamps must be strictly increasing")
    if t_end is None:
        t_end = _infer_t_end(times)
    p = np.asarray(p0, dtype=float).copy()
    idx, _, dts = hold_intervals(times, float(times[0]), t_end)
    for k, dt in zip(idx, dts):
        p = p + rotations[k] @ (samples[k].vel - bias.bv) * dt
    return p


def preintegrate_dvl(samples, imu_rot_checkpoints: RotationCheckpoints,
                     ext: DvlExtrinsics, lin_bg, lin_bv,
                     t_end: float | None = None,
                     sigma_v: float = 0.0) -> DvlPreintegrated:
    """Translation preintegration of a DVL buffer at fixed bias linearization.

    ``imu_rot_checkpoints`` must be aligned to the DVL sample times (one
    entry per sample). The covariance accumulates the rotation-noise term
    (through the checkpoint phi covariances) and the white velocity noise
    ``sigma_v`` (per-sample standard deviation).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty DVL sample buffer")
    times = np.array([s.t for s in samples], dtype=float)
    if len(imu_rot_checkpoints.times) != len(samples):
        raise ValueError("rotation checkpoints misaligned with DVL samples: "
                         f"{len(imu_rot_checkpoints.times)} for {len(samples)}")
    if np.max(np.abs(np.asarray(imu_rot_checkpoints.times) - times)) > 1e-9:
        raise ValueError("rotation checkpoint times do not match DVL sample times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("DVL timestamps must be strictly increasing")
    if t_end is None:
        t_end = _infer_t_end(times)

    lin_bg = np.asarray(lin_bg, dtype=float)
    lin_bv = np.asarray(lin_bv, dtype=float)
    dp = np.zeros(3)
    j_bv = np.zeros((3, 3))
    j_bg = np.zeros((3, 3))
    cov = np.zeros((3, 3))
    sv2 = sigma_v**2

    idx, _, dts = hold_intervals(times, float(times[0]), float(t_end))
    for k, dt in zip(idx, dts):
        d_r = imu_rot_checkpoints.rotations[k]
        j_rot = imu_rot_checkpoints.bias_jacobians[k]
        cov_phi = imu_rot_checkpoints.phi_covs[k]
        w = ext.R_ID @ (samples[k].vel - lin_bv)
        dp = dp + d_r @ w * dt
        j_bv += -(d_r @ ext.R_ID) * dt
        j_bg += -(d_r @ hat(w) @ j_rot) * dt
        rw = d_r @ hat(w)
        cov += (rw @ cov_phi @ rw.T) * dt * dt
        cov += (d_r @ ext.R_ID) @ (sv2 * np.eye(3)) @ (d_r @ ext.R_ID).T * dt * dt

    return DvlPreintegrated(
        dp=dp, dt_total=float(t_end - times[0]),
        lin_bg=lin_bg.copy(), lin_bv=lin_bv.copy(),
        J_dp_dbv=j_bv, J_dp_dbg=j_bg, cov=cov,
        t_start=float(times[0]), t_end=float(t_end),
    )


def correct_dvl_bias(preint: DvlPreintegrated, new_bg, new_bv) -> np.ndarray:
    """First-order update of the preintegrated translation for new biases;
    never re-integrates."""
    dbg = np.asarray(new_bg, dtype=float) - preint.lin_bg
    dbv = np.asarray(new_bv, dtype=float) - preint.lin_bv
    return preint.dp + preint.J_dp_dbv @ dbv + preint.J_dp_dbg @ dbg


def dvl_velocity_estimate(state: NavState, gyro, ext: DvlExtrinsics) -> np.ndarray:
    """Velocity the DVL should measure given the state, the raw gyro reading
    and the lever arm."""
    gyro = np.asarray(gyro, dtype=float)
    return ext.R_ID.T @ (state.R.T @ state.v + hat(gyro) @ ext.p_ID)


def dvl_velocity_residual(state_i: NavState, state_m: NavState,
                          gyro_i, gyro_m, meas_i: DvlSample,
                          meas_m: DvlSample, ext: DvlExtrinsics) -> np.ndarray:
    """Relative-velocity residual; a bias common to both measurements cancels."""
    v_hat_i = dvl_velocity_estimate(state_i, gyro_i, ext)
    v_hat_m = dvl_velocity_estimate(state_m, gyro_m, ext)
    return (v_hat_m - v_hat_i) - (meas_m.vel - meas_i.vel)


def dvl_velocity_residual_jacobians(state_i: NavState, state_m: NavState,
                                    gyro_i, gyro_m, meas_i: DvlSample,
                                    meas_m: DvlSample, ext: DvlExtrinsics):
    res = dvl_velocity_residual(state_i, state_m, gyro_i, gyro_m,
                                meas_i, meas_m, ext)
    rdt = ext.R_ID.T
    j = {
        "phi_i": -rdt @ hat(state_i.R.T @ state_i.v),
        "v_i": -rdt @ state_i.R.T,
        "phi_m": rdt @ hat(state_m.R.T @ state_m.v),
        "v_m": rdt @ state_m.R.T,
    }
    return res, j


def dvl_position_residual(state_i: NavState, state_m: NavState,
                          preint: DvlPreintegrated,
                          ext: DvlExtrinsics) -> np.ndarray:
    """Relative-translation residual against the bias-corrected DVL
    preintegration, expressed in the frame of state_i."""
    lever = state_m.R @ ext.p_ID - state_i.R @ ext.p_ID
    rel = state_i.R.T @ (lever + (state_m.p - state_i.p))
    return rel - correct_dvl_bias(preint, state_i.bg, state_i.bv)


def dvl_position_residual_jacobians(state_i: NavState, state_m: NavState,
                                    preint: DvlPreintegrated,
                                    ext: DvlExtrinsics):
    res = dvl_position_residual(state_i, state_m, preint, ext)
    lever = state_m.R @ ext.p_ID - state_i.R @ ext.p_ID
    u = lever + (state_m.p - state_i.p)
    j = {
        "phi_i": hat(state_i.R.T @ u) + hat(ext.p_ID),
        "p_i": -state_i.R.T,
        "phi_m": -state_i.R.T @ state_m.R @ hat(ext.p_ID),
        "p_m": state_i.R.T,
        "bg_i": -preint.J_dp_dbg,
        "bv_i": -preint.J_dp_dbv,
    }
    return res, j
