"""IMU sample buffering, preintegration, bias correction and the inertial
residual.

Integration uses a zero-order hold: sample k is applied over the interval
between its timestamp and the next (or the requested end time), so the
preintegrated quantities are plain left-Riemann sums and products. Per-step
rotation checkpoints (rotation, gyro-bias Jacobian, rotation-noise covariance)
are recorded so the DVL preintegration can reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold import exp_so3, hat, log_so3, right_jacobian_inv_so3, right_jacobian_so3
from .state import NavState


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float))


@dataclass(frozen=True)
class ImuBias:
    bg: np.ndarray
    ba: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bg", np.asarray(self.bg, dtype=float))
        object.__setattr__(self, "ba", np.asarray(self.ba, dtype=float))

    @staticmethod
    def zero() -> "ImuBias":
        return ImuBias(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class ImuNoiseSpec:
    """White-noise densities (per sqrt(Hz)) and bias random-walk densities."""

    sigma_g: float = 0.0
    sigma_a: float = 0.0
    sigma_bg_walk: float = 0.0
    sigma_ba_walk: float = 0.0

    def __post_init__(self):
        if min(self.sigma_g, self.sigma_a, self.sigma_bg_walk, self.sigma_ba_walk) < 0:
            raise ValueError("noise densities must be nonnegative")


@dataclass
class RotationCheckpoints:
    """Preintegrated-rotation state sampled at a set of times: the relative
    rotation since the buffer start, its gyro-bias Jacobian and the covariance
    of the rotation-vector noise."""

    times: np.ndarray
    rotations: np.ndarray        # (n, 3, 3)
    bias_jacobians: np.ndarray   # (n, 3, 3)
    phi_covs: np.ndarray         # (n, 3, 3)


@dataclass
class ImuPreintegrated:
    dR: np.ndarray
    dv: np.ndarray
    dp: np.ndarray
    dt_total: float
    lin_bias: ImuBias
    cov: np.ndarray              # 9x9 ordered (phi, v, p)
    J_dR_dbg: np.ndarray
    J_dv_dbg: np.ndarray
    J_dv_dba: np.ndarray
    J_dp_dbg: np.ndarray
    J_dp_dba: np.ndarray
    noise: ImuNoiseSpec
    t_start: float
    t_end: float
    # per-step bookkeeping at each integration step start (before the step)
    step_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_omega: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    step_dR: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))
    step_J: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))
    step_phi_cov: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))

    def checkpoint_at(self, s: float):
        """Rotation checkpoint (dR, J_dR_dbg, cov_phi) at time ``s``.

        Between recorded steps the most recent gyro reading is held constant.
        """
        tol = 1e-9
        if s < self.t_start - tol or s > self.t_end + tol:
            raise ValueError(f"time {s} outside preintegration span "
                             f"[{self.t_start}, {self.t_end}]")
        k = int(np.searchsorted(self.step_t, s + tol) - 1)
        k = max(k, 0)
        delta = max(s - self.step_t[k], 0.0)
        d_r = self.step_dR[k]
        jac = self.step_J[k]
        cov = self.step_phi_cov[k]
        if delta <= tol:
            return d_r.copy(), jac.copy(), cov.copy()
        omega = self.step_omega[k]
        e = exp_so3(omega * delta)
        jr = right_jacobian_so3(omega * delta)
        d_r = d_r @ e
        jac = e.T @ jac - jr * delta
        cov = e.T @ cov @ e + (self.noise.sigma_g**2) * delta * (jr @ jr.T)
        return d_r, jac, cov

    def checkpoints_at(self, times) -> RotationCheckpoints:
        times = np.asarray(times, dtype=float)
        rots = np.empty((len(times), 3, 3))
        jacs = np.empty((len(times), 3, 3))
        covs = np.empty((len(times), 3, 3))
        for i, s in enumerate(times):
            rots[i], jacs[i], covs[i] = self.checkpoint_at(float(s))
        return RotationCheckpoints(times, rots, jacs, covs)


def hold_intervals(times: np.ndarray, t_start: float, t_end: float):
    """Zero-order-hold coverage of [t_start, t_end] by samples at ``times``.

    Returns (indices, effective start times, durations). The hold of the
    first overlapping sample is extended backwards to t_start if needed, so
    the durations always sum to t_end - t_start.
    """
    if t_end < t_start:
        raise ValueError("t_end precedes t_start")
    idx = []
    starts = []
    dts = []
    n = len(times)
    for k in range(n):
        hold_end = times[k + 1] if k + 1 < n else t_end
        a = max(times[k], t_start)
        if k == 0:
            a = t_start
        b = min(hold_end, t_end)
        if b <= a:
            continue
        idx.append(k)
        starts.append(a)
        dts.append(b - a)
    return np.array(idx, dtype=int), np.array(starts), np.array(dts)


def _infer_t_end(times: np.ndarray) -> float:
    if len(times) < 2:
        raise ValueError("cannot infer the buffer end time from a single sample; "
                         "pass t_end explicitly")
    return float(times[-1] + np.median(np.diff(times)))


def integrate_imu(samples, lin_bias: ImuBias, noise: ImuNoiseSpec,
                  t_start: float | None = None,
                  t_end: float | None = None) -> ImuPreintegrated:
    """Preintegrate a buffer of IMU samples about a fixed bias linearization.

    Produces the relative rotation/velocity/translation sums, the bias
    Jacobians for first-order bias updates, and the (phi, v, p) covariance
    propagated with per-step noise sigma^2 / dt.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty IMU sample buffer")
    times = np.array([s.t for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("IMU timestamps must be strictly increasing")
    if t_start is None:
        t_start = float(times[0])
    if t_end is None:
        t_end = _infer_t_end(times)

    idx, starts, dts = hold_intervals(times, t_start, t_end)
    if len(idx) == 0:
        raise ValueError("no IMU samples overlap the requested interval")

    d_r = np.eye(3)
    dv = np.zeros(3)
    dp = np.zeros(3)
    j_r_bg = np.zeros((3, 3))
    j_v_bg = np.zeros((3, 3))
    j_v_ba = np.zeros((3, 3))
    j_p_bg = np.zeros((3, 3))
    j_p_ba = np.zeros((3, 3))
    cov = np.zeros((9, 9))

    n_steps = len(idx)
    step_t = np.empty(n_steps)
    step_omega = np.empty((n_steps, 3))
    step_dR = np.empty((n_steps, 3, 3))
    step_J = np.empty((n_steps, 3, 3))
    step_phi_cov = np.empty((n_steps, 3, 3))

    sg2 = noise.sigma_g**2
    sa2 = noise.sigma_a**2

    for i, (k, ts, dt) in enumerate(zip(idx, starts, dts)):
        omega = samples[k].gyro - lin_bias.bg
        acc = samples[k].accel - lin_bias.ba

        step_t[i] = ts
        step_omega[i] = omega
        step_dR[i] = d_r
        step_J[i] = j_r_bg
        step_phi_cov[i] = cov[0:3, 0:3]

        e = exp_so3(omega * dt)
        jr = right_jacobian_so3(omega * dt)
        racc = d_r @ acc
        acc_hat = hat(acc)

        # translation/velocity bias Jacobians use pre-step dR and J terms
        j_p_ba += j_v_ba * dt - 0.5 * d_r * dt * dt
        j_p_bg += j_v_bg * dt - 0.5 * (d_r @ acc_hat @ j_r_bg) * dt * dt
        j_v_ba += -d_r * dt
        j_v_bg += -(d_r @ acc_hat @ j_r_bg) * dt

        # covariance propagation in (phi, v, p) with per-step noise sigma^2/dt
        a_mat = np.eye(9)
        a_mat[0:3, 0:3] = e.T
        a_mat[3:6, 0:3] = -(d_r @ acc_hat) * dt
        a_mat[6:9, 0:3] = -0.5 * (d_r @ acc_hat) * dt * dt
        a_mat[6:9, 3:6] = np.eye(3) * dt
        b_mat = np.zeros((9, 6))
        b_mat[0:3, 0:3] = jr * dt
        b_mat[3:6, 3:6] = d_r * dt
        b_mat[6:9, 3:6] = 0.5 * d_r * dt * dt
        q = np.diag([sg2 / dt] * 3 + [sa2 / dt] * 3)
        cov = a_mat @ cov @ a_mat.T + b_mat @ q @ b_mat.T

        dp = dp + dv * dt + 0.5 * racc * dt * dt
        dv = dv + racc * dt
        j_r_bg = e.T @ j_r_bg - jr * dt
        d_r = d_r @ e

    return ImuPreintegrated(
        dR=d_r, dv=dv, dp=dp, dt_total=float(t_end - t_start),
        lin_bias=lin_bias, cov=cov,
        J_dR_dbg=j_r_bg, J_dv_dbg=j_v_bg, J_dv_dba=j_v_ba,
        J_dp_dbg=j_p_bg, J_dp_dba=j_p_ba,
        noise=noise, t_start=float(t_start), t_end=float(t_end),
        step_t=step_t, step_omega=step_omega, step_dR=step_dR,
        step_J=step_J, step_phi_cov=step_phi_cov,
    )


def correct_imu_bias(preint: ImuPreintegrated, new_bias: ImuBias):
    """First-order update of (dR, dv, dp) for a bias change, without
    re-integration. Intended for small changes (|delta| < 0.1 per component).
    """
    dbg = new_bias.bg - preint.lin_bias.bg
    dba = new_bias.ba - preint.lin_bias.ba
    d_r = preint.dR @ exp_so3(preint.J_dR_dbg @ dbg)
    dv = preint.dv + preint.J_dv_dbg @ dbg + preint.J_dv_dba @ dba
    dp = preint.dp + preint.J_dp_dbg @ dbg + preint.J_dp_dba @ dba
    return d_r, dv, dp


def predict_state_imu(state_i: NavState, preint: ImuPreintegrated,
                      gravity) -> NavState:
    """Propagate a state across a preintegrated interval under known gravity."""
    g = np.asarray(gravity, dtype=float)
    dt = preint.dt_total
    d_r, dv, dp = correct_imu_bias(preint, ImuBias(state_i.bg, state_i.ba))
    r_j = state_i.R @ d_r
    v_j = state_i.v + g * dt + state_i.R @ dv
    p_j = state_i.p + state_i.v * dt + 0.5 * g * dt * dt + state_i.R @ dp
    return NavState(r_j, p_j, v_j, state_i.bg.copy(), state_i.ba.copy(),
                    state_i.bv.copy())


def imu_residual(state_i: NavState, state_j: NavState,
                 preint: ImuPreintegrated, gravity) -> np.ndarray:
    """9-vector (rotation, velocity, translation) inertial residual between
    two states, with the preintegration corrected to state_i's biases."""
    g = np.asarray(gravity, dtype=float)
    dt = preint.dt_total
    d_r, dv, dp = correct_imu_bias(preint, ImuBias(state_i.bg, state_i.ba))
    e_r = log_so3(d_r.T @ state_i.R.T @ state_j.R)
    e_v = state_i.R.T @ ((state_j.v - state_i.v) - g * dt) - dv
    e_p = state_i.R.T @ ((state_j.p - state_i.p) - state_i.v * dt
                         - 0.5 * g * dt * dt) - dp
    return np.concatenate([e_r, e_v, e_p])


def imu_residual_jacobians(state_i: NavState, state_j: NavState,
                           preint: ImuPreintegrated, gravity):
    """Residual and its Jacobians w.r.t. the local perturbations of both
    states (rotation right-multiplied, everything else additive)."""
    g = np.asarray(gravity, dtype=float)
    dt = preint.dt_total
    dbg = state_i.bg - preint.lin_bias.bg
    d_r, dv, dp = correct_imu_bias(preint, ImuBias(state_i.bg, state_i.ba))

    e_r = log_so3(d_r.T @ state_i.R.T @ state_j.R)
    u_v = (state_j.v - state_i.v) - g * dt
    u_p = (state_j.p - state_i.p) - state_i.v * dt - 0.5 * g * dt * dt
    e_v = state_i.R.T @ u_v - dv
    e_p = state_i.R.T @ u_p - dp
    res = np.concatenate([e_r, e_v, e_p])

    jr_inv = right_jacobian_inv_so3(e_r)
    j = {
        "phi_i": np.zeros((9, 3)), "p_i": np.zeros((9, 3)), "v_i": np.zeros((9, 3)),
        "bg_i": np.zeros((9, 3)), "ba_i": np.zeros((9, 3)),
        "phi_j": np.zeros((9, 3)), "p_j": np.zeros((9, 3)), "v_j": np.zeros((9, 3)),
    }
    j["phi_i"][0:3] = -jr_inv @ state_j.R.T @ state_i.R
    j["phi_j"][0:3] = jr_inv
    j["bg_i"][0:3] = (-jr_inv @ exp_so3(-e_r)
                      @ right_jacobian_so3(preint.J_dR_dbg @ dbg)
                      @ preint.J_dR_dbg)

    j["phi_i"][3:6] = hat(state_i.R.T @ u_v)
    j["v_i"][3:6] = -state_i.R.T
    j["v_j"][3:6] = state_i.R.T
    j["bg_i"][3:6] = -preint.J_dv_dbg
    j["ba_i"][3:6] = -preint.J_dv_dba

    j["phi_i"][6:9] = hat(state_i.R.T @ u_p)
    j["p_i"][6:9] = -state_i.R.T
    j["p_j"][6:9] = state_i.R.T
    j["v_i"][6:9] = -state_i.R.T * dt
    j["bg_i"][6:9] = -preint.J_dp_dbg
    j["ba_i"][6:9] = -preint.J_dp_dba
    return res, j
