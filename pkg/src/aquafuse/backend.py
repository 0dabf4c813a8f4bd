"""Factor-graph assembly for the local optimization window and a damped
Gauss-Newton (Levenberg-Marquardt) solver on the state manifold.

Variables are keyframe states (18 local dof: rotation vector, position,
velocity, gyro/accel/DVL biases) and landmark positions. Rotation updates are
applied on the right (R <- R exp(phi)); translations, velocities and biases
are additive. Robust (Huber) reweighting applies to visual factors only.

Per-keyframe biases are coupled by random-walk terms folded into the inertial
factor (gyro/accel biases) and the DVL translation factor (velocity bias), so
the factor kinds stay exactly the six sensor kinds plus the fixed prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Any

import numpy as np

from .depth import (DepthExtrinsics, PressureSample, pressure_residual,
                    pressure_residual_jacobians)
from .dvl import (DvlExtrinsics, DvlPreintegrated, DvlSample,
                  dvl_position_residual, dvl_position_residual_jacobians,
                  dvl_velocity_residual, dvl_velocity_residual_jacobians)
from .imu import ImuPreintegrated, imu_residual, imu_residual_jacobians
from .manifold import Pose, hat, log_so3, right_jacobian_inv_so3
from .state import BA, BG, BV, PHI, POS, STATE_DOF, VEL, NavState
from .visual import (BehindCameraError, CameraModel, IntensityField,
                     LandmarkObservation, OutOfDomainError, PatchPattern)


class GaugeError(ValueError):
    """The window has no anchored variable; the system is rank deficient."""


class DivergedError(RuntimeError):
    """The solver encountered a non-finite cost."""


class PreintCoverageError(ValueError):
    """A consecutive keyframe pair lacks covering preintegrated measurements."""


class FactorKind(Enum):
    REPROJECTION = "reprojection"
    PHOTOMETRIC = "photometric"
    IMU = "imu"
    DVL_VELOCITY = "dvl_velocity"
    DVL_POSITION = "dvl_position"
    PRESSURE = "pressure"
    FIXED_PRIOR = "fixed_prior"

VISUAL_KINDS = (FactorKind.REPROJECTION, FactorKind.PHOTOMETRIC)


@dataclass(frozen=True)
class SensorRig:
    """Camera model, sensor extrinsics and the world gravity vector."""

    cam: CameraModel
    T_IC: Pose
    dvl: DvlExtrinsics
    depth: DepthExtrinsics
    gravity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))

    def camera_pose(self, state: NavState) -> Pose:
        return state.pose().compose(self.T_IC)


# ----------------------------- factor payloads ----------------------------- #

@dataclass(frozen=True)
class ImuFactorData:
    preint: ImuPreintegrated


@dataclass(frozen=True)
class DvlVelocityData:
    meas_i: DvlSample
    meas_m: DvlSample
    gyro_i: np.ndarray
    gyro_m: np.ndarray


@dataclass(frozen=True)
class DvlPositionData:
    preint: DvlPreintegrated


@dataclass(frozen=True)
class PressureData:
    meas_i: PressureSample
    meas_n: PressureSample


@dataclass(frozen=True)
class ReprojectionData:
    obs: LandmarkObservation


@dataclass(frozen=True)
class PhotometricData:
    field_host: IntensityField
    field_obs: IntensityField
    pixel: np.ndarray
    depth: float
    pattern: PatchPattern
    # host-side quantities are fixed per factor; cached at construction
    host_pix: np.ndarray = None
    host_vals: np.ndarray = None
    weights: np.ndarray = None

    def __post_init__(self):
        pix = np.asarray(self.pixel, dtype=float) + self.pattern.offsets
        object.__setattr__(self, "host_pix", pix)
        object.__setattr__(self, "host_vals",
                           np.atleast_1d(self.field_host.sample(pix)))
        object.__setattr__(self, "weights",
                           self.pattern.weights(self.field_host, pix))


@dataclass(frozen=True)
class PriorData:
    ref: NavState


@dataclass
class Factor:
    """One residual block: kind, connected variables, measurement payload,
    information matrix and the robust-loss flag (visual kinds only)."""

    kind: FactorKind
    state_ids: tuple[int, ...]
    payload: Any
    info: np.ndarray
    landmark_id: int | None = None
    robust: bool = False
    robust_delta: float = 1.345
    rig: SensorRig | None = None

    def __post_init__(self):
        self.info = np.atleast_2d(np.asarray(self.info, dtype=float))
        if np.max(np.abs(self.info - self.info.T)) > 1e-9:
            raise ValueError("information matrix must be symmetric")
        if self.robust and self.kind not in VISUAL_KINDS:
            raise ValueError("robust loss is restricted to visual factors")

    # ------------------------------------------------------------------ #
    def evaluate(self, states: dict[int, NavState],
                 landmarks: dict[int, np.ndarray], with_jacobians: bool = True):
        """Residual plus Jacobian blocks keyed by state id / landmark id.

        With ``with_jacobians=False`` the Jacobian dicts are empty; used for
        cost-only evaluations of candidate steps.
        """
        if self.kind == FactorKind.IMU:
            return self._eval_imu(states, with_jacobians)
        if self.kind == FactorKind.DVL_VELOCITY:
            return self._eval_dvl_velocity(states, with_jacobians)
        if self.kind == FactorKind.DVL_POSITION:
            return self._eval_dvl_position(states, with_jacobians)
        if self.kind == FactorKind.PRESSURE:
            return self._eval_pressure(states, with_jacobians)
        if self.kind == FactorKind.REPROJECTION:
            return self._eval_reprojection(states, landmarks, with_jacobians)
        if self.kind == FactorKind.PHOTOMETRIC:
            return self._eval_photometric(states, with_jacobians)
        if self.kind == FactorKind.FIXED_PRIOR:
            return self._eval_prior(states, with_jacobians)
        raise ValueError(f"unknown factor kind {self.kind}")

    def _eval_imu(self, states, with_jacobians=True):
        i, j = self.state_ids
        si, sj = states[i], states[j]
        if not with_jacobians:
            r9 = imu_residual(si, sj, self.payload.preint, self.rig.gravity)
            return (np.concatenate([r9, sj.bg - si.bg, sj.ba - si.ba]), {}, {})
        r9, jac = imu_residual_jacobians(si, sj, self.payload.preint,
                                         self.rig.gravity)
        res = np.zeros(15)
        res[0:9] = r9
        res[9:12] = sj.bg - si.bg
        res[12:15] = sj.ba - si.ba
        ji = np.zeros((15, STATE_DOF))
        jj = np.zeros((15, STATE_DOF))
        ji[0:9, PHI] = jac["phi_i"]
        ji[0:9, POS] = jac["p_i"]
        ji[0:9, VEL] = jac["v_i"]
        ji[0:9, BG] = jac["bg_i"]
        ji[0:9, BA] = jac["ba_i"]
        jj[0:9, PHI] = jac["phi_j"]
        jj[0:9, POS] = jac["p_j"]
        jj[0:9, VEL] = jac["v_j"]
        ji[9:12, BG] = -np.eye(3)
        jj[9:12, BG] = np.eye(3)
        ji[12:15, BA] = -np.eye(3)
        jj[12:15, BA] = np.eye(3)
        return res, {i: ji, j: jj}, {}

    def _eval_dvl_velocity(self, states, with_jacobians=True):
        i, m = self.state_ids
        d = self.payload
        if not with_jacobians:
            return (dvl_velocity_residual(states[i], states[m], d.gyro_i,
                                          d.gyro_m, d.meas_i, d.meas_m,
                                          self.rig.dvl), {}, {})
        res, jac = dvl_velocity_residual_jacobians(
            states[i], states[m], d.gyro_i, d.gyro_m, d.meas_i, d.meas_m,
            self.rig.dvl)
        ji = np.zeros((3, STATE_DOF))
        jm = np.zeros((3, STATE_DOF))
        ji[:, PHI] = jac["phi_i"]
        ji[:, VEL] = jac["v_i"]
        jm[:, PHI] = jac["phi_m"]
        jm[:, VEL] = jac["v_m"]
        return res, {i: ji, m: jm}, {}

    def _eval_dvl_position(self, states, with_jacobians=True):
        i, m = self.state_ids
        si, sm = states[i], states[m]
        if not with_jacobians:
            r3 = dvl_position_residual(si, sm, self.payload.preint, self.rig.dvl)
            return np.concatenate([r3, sm.bv - si.bv]), {}, {}
        r3, jac = dvl_position_residual_jacobians(si, sm, self.payload.preint,
                                                  self.rig.dvl)
        res = np.zeros(6)
        res[0:3] = r3
        res[3:6] = sm.bv - si.bv
        ji = np.zeros((6, STATE_DOF))
        jm = np.zeros((6, STATE_DOF))
        ji[0:3, PHI] = jac["phi_i"]
        ji[0:3, POS] = jac["p_i"]
        ji[0:3, BG] = jac["bg_i"]
        ji[0:3, BV] = jac["bv_i"]
        jm[0:3, PHI] = jac["phi_m"]
        jm[0:3, POS] = jac["p_m"]
        ji[3:6, BV] = -np.eye(3)
        jm[3:6, BV] = np.eye(3)
        return res, {i: ji, m: jm}, {}

    def _eval_pressure(self, states, with_jacobians=True):
        i, n = self.state_ids
        if not with_jacobians:
            r = pressure_residual(states[i], states[n], self.payload.meas_i,
                                  self.payload.meas_n, self.rig.depth)
            return np.array([r]), {}, {}
        res, jac = pressure_residual_jacobians(
            states[i], states[n], self.payload.meas_i, self.payload.meas_n,
            self.rig.depth)
        ji = np.zeros((1, STATE_DOF))
        jn = np.zeros((1, STATE_DOF))
        ji[:, PHI] = jac["phi_i"]
        ji[:, POS] = jac["p_i"]
        jn[:, PHI] = jac["phi_n"]
        jn[:, POS] = jac["p_n"]
        return res, {i: ji, n: jn}, {}

    def _eval_reprojection(self, states, landmarks, with_jacobians=True):
        (sid,) = self.state_ids
        state = states[sid]
        lm = landmarks[self.landmark_id]
        cam = self.rig.cam
        r_ic = self.rig.T_IC.R
        p_ic = self.rig.T_IC.t
        r_wc = state.R @ r_ic
        # difference before the lever arm keeps a common world translation
        # of state and landmark exactly cancelled
        x_c = r_wc.T @ ((lm - state.p) - state.R @ p_ic)
        z = x_c[2]
        if z <= 1e-6:
            raise BehindCameraError(f"landmark depth {z} is not positive")
        pred = np.array([cam.fx * x_c[0] / z + cam.cx,
                         cam.fy * x_c[1] / z + cam.cy])
        res = self.payload.obs.pixel - pred
        if not with_jacobians:
            return res, {}, {}
        dpi = np.array([[cam.fx / z, 0.0, -cam.fx * x_c[0] / (z * z)],
                        [0.0, cam.fy / z, -cam.fy * x_c[1] / (z * z)]])
        js = np.zeros((2, STATE_DOF))
        js[:, PHI] = -dpi @ (hat(x_c) @ r_ic.T + r_ic.T @ hat(p_ic))
        js[:, POS] = dpi @ r_wc.T
        j_lm = -dpi @ r_wc.T
        return res, {sid: js}, {self.landmark_id: j_lm}

    def _eval_photometric(self, states, with_jacobians=True):
        host_id, obs_id = self.state_ids
        d = self.payload
        cam = self.rig.cam
        si, sj = states[host_id], states[obs_id]
        r_ic = self.rig.T_IC.R
        p_ic = self.rig.T_IC.t
        r_wci = si.R @ r_ic
        r_wcj = sj.R @ r_ic

        pix_i = d.host_pix
        pts_ci = np.empty((len(pix_i), 3))
        pts_ci[:, 0] = (pix_i[:, 0] - cam.cx) / cam.fx * d.depth
        pts_ci[:, 1] = (pix_i[:, 1] - cam.cy) / cam.fy * d.depth
        pts_ci[:, 2] = d.depth
        # host-to-observer points with the translation difference taken
        # first, so a common world shift cancels exactly
        rel = (si.p - sj.p) + (si.R @ p_ic - sj.R @ p_ic)
        pts_cj = (pts_ci @ r_wci.T + rel) @ r_wcj
        z = pts_cj[:, 2]
        if np.any(z <= 1e-6):
            raise BehindCameraError("patch point behind the current camera")
        warped = np.empty_like(pix_i)
        warped[:, 0] = cam.fx * pts_cj[:, 0] / z + cam.cx
        warped[:, 1] = cam.fy * pts_cj[:, 1] / z + cam.cy
        if (np.any(warped[:, 0] < 0.0) or np.any(warped[:, 0] >= cam.width)
                or np.any(warped[:, 1] < 0.0) or np.any(warped[:, 1] >= cam.height)):
            raise OutOfDomainError("warped patch left the image domain")
        w = d.weights
        res = float(np.sum(w * (d.field_obs.sample(warped) - d.host_vals)))
        if not with_jacobians:
            return np.array([res]), {}, {}

        grads = np.atleast_2d(d.field_obs.gradient(warped))
        dpi = np.zeros((len(pix_i), 2, 3))
        dpi[:, 0, 0] = cam.fx / z
        dpi[:, 0, 2] = -cam.fx * pts_cj[:, 0] / (z * z)
        dpi[:, 1, 1] = cam.fy / z
        dpi[:, 1, 2] = -cam.fy * pts_cj[:, 1] / (z * z)
        rows = np.einsum("m,mk,mkl->ml", w, grads, dpi)
        rows_sum = rows.sum(axis=0)
        # row @ hat(x) == cross(row, x), batched over the pattern
        j_obs = np.zeros((1, STATE_DOF))
        j_obs[0, PHI] = (np.cross(rows, pts_cj).sum(axis=0) @ r_ic.T
                         + rows_sum @ (r_ic.T @ hat(p_ic)))
        j_obs[0, POS] = -rows_sum @ r_wcj.T
        srows = rows @ r_wcj.T
        a = srows @ r_wci
        j_host = np.zeros((1, STATE_DOF))
        j_host[0, PHI] = (-np.cross(a, pts_ci).sum(axis=0) @ r_ic.T
                          - srows.sum(axis=0) @ (si.R @ hat(p_ic)))
        j_host[0, POS] = srows.sum(axis=0)
        return np.array([res]), {host_id: j_host, obs_id: j_obs}, {}

    def _eval_prior(self, states, with_jacobians=True):
        (sid,) = self.state_ids
        s = states[sid]
        ref = self.payload.ref
        e_phi = log_so3(ref.R.T @ s.R)
        res = np.concatenate([e_phi, s.p - ref.p, s.v - ref.v,
                              s.bg - ref.bg, s.ba - ref.ba, s.bv - ref.bv])
        if not with_jacobians:
            return res, {}, {}
        js = np.eye(STATE_DOF)
        js[0:3, 0:3] = right_jacobian_inv_so3(e_phi)
        return res, {sid: js}, {}


# ------------------------------ robust kernel ------------------------------ #

def robust_weight(r2: float, delta: float) -> float:
    """Huber reweighting on the Mahalanobis norm: 1 inside the knee,
    delta/sqrt(r2) outside."""
    if r2 < 0:
        raise ValueError("squared residual must be nonnegative")
    s = math.sqrt(r2)
    return 1.0 if s <= delta else delta / s


def huber_cost(r2: float, delta: float) -> float:
    s = math.sqrt(r2)
    return r2 if s <= delta else 2.0 * delta * s - delta * delta


# ------------------------------ local window ------------------------------- #

FULL_MASK = np.ones(STATE_DOF, dtype=bool)
POSE_MASK = np.array([True] * 6 + [False] * 12)
POSE_VEL_MASK = np.array([True] * 9 + [False] * 9)


@dataclass
class LocalWindow:
    """Ordered keyframe states plus landmarks; fixed entries are never
    touched by the solver."""

    kf_ids: list[int]
    states: dict[int, NavState]
    landmarks: dict[int, np.ndarray] = dc_field(default_factory=dict)
    fixed_states: set[int] = dc_field(default_factory=set)
    fixed_landmarks: set[int] = dc_field(default_factory=set)
    state_masks: dict[int, np.ndarray] = dc_field(default_factory=dict)

    def mask_of(self, sid: int) -> np.ndarray:
        return self.state_masks.get(sid, FULL_MASK)


@dataclass
class SolverConfig:
    max_iterations: int = 50
    rel_cost_tol: float = 1e-8
    step_tol: float = 1e-10
    lambda_init: float = 1e-4
    lambda_max: float = 1e10


@dataclass
class SolveReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    cost_trace: list[float]


def _factor_cost(factor: Factor, r: np.ndarray) -> float:
    r2 = float(r @ factor.info @ r)
    if factor.robust:
        return huber_cost(r2, factor.robust_delta)
    return r2


def _batched_hat(v: np.ndarray) -> np.ndarray:
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


class _ReprojectionBatch:
    """Vectorized evaluation of all reprojection factors hosted by one state.

    Exploits the fact that the rotation/translation perturbations occupy the
    first six local dimensions of every state mask in use.
    """

    def __init__(self, factors: list[Factor]):
        self.sid = factors[0].state_ids[0]
        self.rig = factors[0].rig
        self.lm_ids = [f.landmark_id for f in factors]
        self.pixels = np.stack([f.payload.obs.pixel for f in factors])
        self.infos = np.stack([f.info for f in factors])
        self.robust = np.array([f.robust for f in factors])
        self.deltas = np.array([f.robust_delta for f in factors])

    def _project(self, states, landmarks):
        state = states[self.sid]
        rig = self.rig
        r_wc = state.R @ rig.T_IC.R
        arm = state.R @ rig.T_IC.t
        lms = np.stack([landmarks[lid] for lid in self.lm_ids])
        x_c = ((lms - state.p) - arm) @ r_wc
        return r_wc, x_c

    def _weights_cost(self, res):
        r2 = np.einsum("ni,nij,nj->n", res, self.infos, res)
        s = np.sqrt(r2)
        w = np.ones(len(r2))
        out = np.where(self.robust & (s > self.deltas),
                       2.0 * self.deltas * s - self.deltas**2, r2)
        np.divide(self.deltas, s, out=w, where=self.robust & (s > self.deltas))
        return r2, w, float(out.sum())

    def cost(self, states, landmarks) -> float:
        _, x_c = self._project(states, landmarks)
        z = x_c[:, 2]
        if np.any(z <= 1e-6):
            return float("inf")
        cam = self.rig.cam
        pred = np.stack([cam.fx * x_c[:, 0] / z + cam.cx,
                         cam.fy * x_c[:, 1] / z + cam.cy], axis=1)
        _, _, total = self._weights_cost(self.pixels - pred)
        return total

    def accumulate(self, h, g, states, landmarks, state_cols, lm_cols):
        r_wc, x_c = self._project(states, landmarks)
        z = x_c[:, 2]
        cam = self.rig.cam
        pred = np.stack([cam.fx * x_c[:, 0] / z + cam.cx,
                         cam.fy * x_c[:, 1] / z + cam.cy], axis=1)
        res = self.pixels - pred
        _, w, _ = self._weights_cost(res)
        a_mats = w[:, None, None] * self.infos

        dpi = np.zeros((len(z), 2, 3))
        dpi[:, 0, 0] = cam.fx / z
        dpi[:, 0, 2] = -cam.fx * x_c[:, 0] / (z * z)
        dpi[:, 1, 1] = cam.fy / z
        dpi[:, 1, 2] = -cam.fy * x_c[:, 1] / (z * z)
        r_ic = self.rig.T_IC.R
        c_p = r_ic.T @ hat(self.rig.T_IC.t)
        j_phi = -(np.einsum("nij,njk->nik", dpi, _batched_hat(x_c)) @ r_ic.T
                  + dpi @ c_p)
        j_pos = dpi @ r_wc.T
        j_state = np.concatenate([j_phi, j_pos], axis=2)  # (n, 2, 6)
        j_lm = -j_pos

        sc = state_cols.get(self.sid)
        if sc is not None:
            cols = sc[0]
            s6 = slice(cols.start, cols.start + 6)
            h[s6, s6] += np.einsum("nai,nab,nbj->ij", j_state, a_mats, j_state)
            g[s6] += np.einsum("nai,nab,nb->i", j_state, a_mats, res)
        for k, lid in enumerate(self.lm_ids):
            lc = lm_cols.get(lid)
            if lc is None:
                continue
            al = a_mats[k] @ j_lm[k]
            h[lc, lc] += j_lm[k].T @ al
            g[lc] += al.T @ res[k]
            if sc is not None:
                cross = j_state[k].T @ al
                h[s6, lc] += cross
                h[lc, s6] += cross.T


def _total_cost(factors, states, landmarks) -> float:
    total = 0.0
    for f in factors:
        try:
            r, _, _ = f.evaluate(states, landmarks, with_jacobians=False)
        except (BehindCameraError, OutOfDomainError):
            return float("inf")
        total += _factor_cost(f, r)
    return total


def solve(window: LocalWindow, factors: list[Factor],
          cfg: SolverConfig | None = None):
    """Damped Gauss-Newton over the window. Accepted steps strictly decrease
    the robustified cost; a violation raises, so a finished solve certifies
    a monotone cost trace. Returns the updated window and a report."""
    cfg = cfg or SolverConfig()
    if not factors:
        raise ValueError("cannot solve an empty factor list")

    anchored = (bool(window.fixed_states) or bool(window.fixed_landmarks)
                or any(f.kind == FactorKind.FIXED_PRIOR for f in factors))
    if not anchored:
        raise GaugeError("no fixed state, fixed landmark or prior factor; "
                         "add a gauge fix before solving")

    # global column layout over active dims; all masks in use are contiguous
    # prefixes, so Jacobian columns and hessian blocks index through slices
    state_cols: dict[int, tuple[slice, np.ndarray]] = {}
    lm_cols: dict[int, slice] = {}
    offset = 0
    for sid in window.kf_ids:
        if sid in window.fixed_states:
            continue
        mask = window.mask_of(sid)
        local = np.flatnonzero(mask)
        n = len(local)
        if n == 0:
            continue
        state_cols[sid] = (slice(offset, offset + n), local)
        offset += n
    for lid in sorted(window.landmarks):
        if lid in window.fixed_landmarks:
            continue
        lm_cols[lid] = slice(offset, offset + 3)
        offset += 3
    ndim = offset

    states = window.states
    landmarks = window.landmarks

    # group reprojection factors per host state for vectorized evaluation;
    # valid whenever the pose occupies the first six active dims (all masks
    # in use are prefixes of the full layout)
    def _batchable(f: Factor) -> bool:
        if f.kind != FactorKind.REPROJECTION or f.landmark_id not in landmarks:
            return False
        sid = f.state_ids[0]
        if sid in state_cols:
            local = state_cols[sid][1]
            return len(local) >= 6 and local[5] == 5
        return sid in window.fixed_states or sid not in window.states

    by_state: dict[int, list[Factor]] = {}
    scalar_factors = []
    for f in factors:
        if _batchable(f):
            by_state.setdefault(f.state_ids[0], []).append(f)
        else:
            scalar_factors.append(f)
    batches = [_ReprojectionBatch(fs) for fs in by_state.values()]

    def total_cost(st, lm):
        total = 0.0
        for b in batches:
            total += b.cost(st, lm)
            if not np.isfinite(total):
                return float("inf")
        return total + _total_cost(scalar_factors, st, lm)

    cost = total_cost(states, landmarks)
    if not np.isfinite(cost):
        raise DivergedError(f"initial cost is not finite ({cost})")
    initial_cost = cost
    trace = [cost]
    if ndim == 0:
        return window, SolveReport(0, initial_cost, cost, True, trace)

    def assemble():
        h = np.zeros((ndim, ndim))
        g = np.zeros(ndim)
        for b in batches:
            b.accumulate(h, g, states, landmarks, state_cols, lm_cols)
        for f in scalar_factors:
            r, js, jl = f.evaluate(states, landmarks)
            info = f.info
            w = 1.0
            if f.robust:
                w = robust_weight(float(r @ info @ r), f.robust_delta)
            blocks = []
            for sid, jac in js.items():
                if sid in state_cols:
                    cols, local = state_cols[sid]
                    n = len(local)
                    sub = jac[:, :n] if local[-1] == n - 1 else jac[:, local]
                    blocks.append((cols, sub))
            for lid, jac in jl.items():
                if lid in lm_cols:
                    blocks.append((lm_cols[lid], jac))
            for cols_a, jac_a in blocks:
                jt_info = w * jac_a.T @ info
                g[cols_a] += jt_info @ r
                for cols_b, jac_b in blocks:
                    h[cols_a, cols_b] += jt_info @ jac_b
        return h, g

    def retract(delta):
        new_states = dict(states)
        for sid, (cols, local) in state_cols.items():
            full = np.zeros(STATE_DOF)
            full[local] = delta[cols]
            new_states[sid] = states[sid].retract(full)
        new_landmarks = dict(landmarks)
        for lid, cols in lm_cols.items():
            new_landmarks[lid] = landmarks[lid] + delta[cols]
        return new_states, new_landmarks

    lam = cfg.lambda_init
    accepted = 0
    converged = False
    for _ in range(cfg.max_iterations):
        h, g = assemble()
        if np.linalg.norm(g) < 1e-15:
            converged = True
            break
        step = None
        new_cost = None
        while lam <= cfg.lambda_max:
            damped = h + lam * np.diag(np.diag(h)) + 1e-15 * np.eye(ndim)
            try:
                candidate = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand_states, cand_landmarks = retract(candidate)
            cand_cost = total_cost(cand_states, cand_landmarks)
            if math.isnan(cand_cost):
                raise DivergedError("candidate cost is NaN")
            if cand_cost < cost:
                step = candidate
                new_cost = cand_cost
                states, landmarks = cand_states, cand_landmarks
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10.0
        if step is None:
            # no descent direction at any damping: stationary for our purposes
            converged = True
            break
        if not new_cost < cost:
            raise AssertionError("accepted step failed to decrease the cost")
        accepted += 1
        rel_drop = (cost - new_cost) / max(cost, 1e-300)
        cost = new_cost
        trace.append(cost)
        if rel_drop < cfg.rel_cost_tol or np.linalg.norm(step) < cfg.step_tol:
            converged = True
            break

    window.states = states
    window.landmarks = landmarks
    return window, SolveReport(accepted, initial_cost, cost, converged, trace)


# --------------------------- window construction --------------------------- #

@dataclass
class KeyframeNode:
    """Everything the window builder needs to know about one keyframe."""

    kf_id: int
    t: float
    state: NavState
    observations: list[LandmarkObservation] = dc_field(default_factory=list)
    field: IntensityField | None = None
    gyro: np.ndarray | None = None
    dvl_meas: DvlSample | None = None
    pressure_meas: PressureSample | None = None


@dataclass
class IntervalData:
    """Preintegrated measurements covering one consecutive keyframe pair."""

    imu_preint: ImuPreintegrated
    dvl_preint: DvlPreintegrated | None = None


@dataclass
class BackendConfig:
    window_size: int = 10
    huber_delta: float = 1.345
    sigma_pixel: float = 0.5
    # measured luminance-constancy violation of the synthetic fields grows
    # with baseline: a few units frame-to-frame, tens between keyframes
    sigma_intensity: float = 30.0
    sigma_intensity_track: float = 10.0
    sigma_dvl: float = 0.01
    sigma_pressure: float = 0.01
    sigma_bg_walk: float = 1e-5
    sigma_ba_walk: float = 1e-4
    sigma_bv_walk: float = 5e-3
    use_vision: bool = True
    use_dvl: bool = True
    use_pressure: bool = True
    photometric_enabled: bool = True
    photometric_max_points: int = 8
    # patches whose Mahalanobis residual exceeds these at the initial guess
    # are rejected: they violate luminance constancy (clutter, parallax)
    photometric_gate: float = 0.05
    photometric_track_gate: float = 1.0
    pattern: PatchPattern = dc_field(default_factory=PatchPattern)
    # window solves sit inside a per-keyframe loop; a tighter iteration cap
    # and looser relative tolerance than the solver's standalone defaults
    # keep the pipeline fast without changing the termination rules
    solver: SolverConfig = dc_field(
        default_factory=lambda: SolverConfig(max_iterations=12,
                                             rel_cost_tol=1e-6))


def _safe_inverse(cov: np.ndarray) -> np.ndarray:
    dim = cov.shape[0]
    jitter = max(np.trace(cov) / dim, 1e-14) * 1e-9
    info = np.linalg.inv(cov + jitter * np.eye(dim))
    return 0.5 * (info + info.T)


def make_prior_factor(sid: int, ref: NavState,
                      sigma: float = 1e-4) -> Factor:
    info = np.eye(STATE_DOF) / sigma**2
    return Factor(FactorKind.FIXED_PRIOR, (sid,), PriorData(ref.copy()), info)


def assemble_window(keyframes: list[KeyframeNode],
                    landmarks: dict[int, np.ndarray],
                    intervals: dict[tuple[int, int], IntervalData],
                    rig: SensorRig, cfg: BackendConfig,
                    fixed_ids: set[int] | None = None,
                    fixed_landmarks: set[int] | None = None):
    """Build the local window and its factor list.

    One inertial factor per consecutive pair (coverage required), DVL
    translation and relative-velocity factors plus a relative-depth factor
    per pair when measurements are available, a reprojection factor per
    (keyframe, landmark) observation, and photometric factors between
    consecutive textured keyframes for up to ``photometric_max_points``
    host points with known stereo depth.
    """
    fixed_ids = set(fixed_ids or set())
    fixed_landmarks = set(fixed_landmarks or set())

    window_lms: dict[int, np.ndarray] = {}
    for kf in keyframes:
        if kf.kf_id in fixed_ids:
            continue
        for obs in kf.observations:
            if obs.landmark_id in landmarks:
                window_lms[obs.landmark_id] = landmarks[obs.landmark_id]

    window = LocalWindow(
        kf_ids=[kf.kf_id for kf in keyframes],
        states={kf.kf_id: kf.state for kf in keyframes},
        landmarks=window_lms,
        fixed_states=fixed_ids,
        fixed_landmarks={lid for lid in fixed_landmarks if lid in window_lms},
    )

    factors: list[Factor] = []
    if not fixed_ids and not window.fixed_landmarks and keyframes:
        factors.append(make_prior_factor(keyframes[0].kf_id, keyframes[0].state))

    for a, b in zip(keyframes[:-1], keyframes[1:]):
        if b.kf_id != a.kf_id + 1:
            continue  # co-visible prior with a gap: visual factors only
        key = (a.kf_id, b.kf_id)
        if key not in intervals or intervals[key].imu_preint is None:
            raise PreintCoverageError(
                f"no inertial preintegration covering [{a.t}, {b.t}]")
        data = intervals[key]
        dt = max(b.t - a.t, 1e-9)
        walk = np.concatenate([
            np.full(3, 1.0 / (cfg.sigma_bg_walk**2 * dt)),
            np.full(3, 1.0 / (cfg.sigma_ba_walk**2 * dt)),
        ])
        info = np.zeros((15, 15))
        info[0:9, 0:9] = _safe_inverse(data.imu_preint.cov)
        info[9:15, 9:15] = np.diag(walk)
        factors.append(Factor(FactorKind.IMU, key, ImuFactorData(data.imu_preint),
                              info, rig=rig))

        if cfg.use_dvl and data.dvl_preint is not None:
            info = np.zeros((6, 6))
            info[0:3, 0:3] = _safe_inverse(data.dvl_preint.cov)
            info[3:6, 3:6] = np.eye(3) / (cfg.sigma_bv_walk**2 * dt)
            factors.append(Factor(FactorKind.DVL_POSITION, key,
                                  DvlPositionData(data.dvl_preint), info, rig=rig))
        if cfg.use_dvl and a.dvl_meas is not None and b.dvl_meas is not None \
                and a.gyro is not None and b.gyro is not None:
            info = np.eye(3) / (2.0 * cfg.sigma_dvl**2)
            factors.append(Factor(
                FactorKind.DVL_VELOCITY, key,
                DvlVelocityData(a.dvl_meas, b.dvl_meas, a.gyro, b.gyro),
                info, rig=rig))
        if cfg.use_pressure and a.pressure_meas is not None \
                and b.pressure_meas is not None:
            info = np.array([[1.0 / (2.0 * cfg.sigma_pressure**2)]])
            factors.append(Factor(FactorKind.PRESSURE, key,
                                  PressureData(a.pressure_meas, b.pressure_meas),
                                  info, rig=rig))

    if cfg.use_vision:
        pix_info = np.eye(2) / cfg.sigma_pixel**2
        for kf in keyframes:
            t_cw = rig.camera_pose(kf.state).inverse()
            for obs in kf.observations:
                if obs.landmark_id not in window_lms:
                    continue
                if t_cw.transform(window_lms[obs.landmark_id])[2] <= 1e-3:
                    continue  # behind or grazing the camera at the initial guess
                factors.append(Factor(
                    FactorKind.REPROJECTION, (kf.kf_id,), ReprojectionData(obs),
                    pix_info, landmark_id=obs.landmark_id, robust=True,
                    robust_delta=cfg.huber_delta, rig=rig))

        if cfg.photometric_enabled:
            n_pat = len(cfg.pattern.offsets)
            photo_info = np.array([[1.0 / (n_pat * cfg.sigma_intensity**2)]])
            for a, b in zip(keyframes[:-1], keyframes[1:]):
                if b.kf_id != a.kf_id + 1:
                    continue
                if a.field is None or b.field is None:
                    continue
                if len(a.field.amplitudes) == 0 or len(b.field.amplitudes) == 0:
                    continue
                # luminance constancy needs the patch visible in both frames
                ids_b = {o.landmark_id for o in b.observations}
                hosts = sorted(
                    (o for o in a.observations
                     if o.disparity is not None and o.disparity > 0
                     and o.landmark_id in ids_b),
                    key=lambda o: o.landmark_id)
                for obs in hosts[:cfg.photometric_max_points]:
                    depth = rig.cam.fx * rig.cam.baseline / obs.disparity
                    f = Factor(
                        FactorKind.PHOTOMETRIC, (a.kf_id, b.kf_id),
                        PhotometricData(a.field, b.field, obs.pixel.copy(),
                                        depth, cfg.pattern),
                        photo_info, robust=True, robust_delta=cfg.huber_delta,
                        rig=rig)
                    try:
                        r, _, _ = f.evaluate(window.states, window.landmarks,
                                             with_jacobians=False)
                    except (OutOfDomainError, BehindCameraError):
                        continue  # point warps outside the image at the guess
                    if math.sqrt(float(r @ photo_info @ r)) > cfg.photometric_gate:
                        continue
                    factors.append(f)

    return window, factors


def dump_factor_graph(window: LocalWindow, factors: list[Factor], stream):
    """Write one line per factor: kind, variable ids, residual norm."""
    for f in factors:
        r, _, _ = f.evaluate(window.states, window.landmarks,
                             with_jacobians=False)
        ids = ",".join(str(s) for s in f.state_ids)
        if f.landmark_id is not None:
            ids += f";l{f.landmark_id}"
        stream.write(f"{f.kind.value} {ids} {np.linalg.norm(r):.9e}\n")
