"""Per-frame tracking pipeline.

Feature-rich frames run coarse feature-based tracking, direct photometric
refinement and a joint per-frame optimization against the reference keyframe.
When tracked features fall below the threshold the pipeline switches to the
degraded branch: gyro-driven rotation plus DVL translation prediction,
refined by acoustic-inertial-depth optimization. Keyframes trigger local
window bundle adjustment in the backend.

The pipeline is strictly sequential per dataset and fully deterministic:
the same dataset and configuration reproduce the same frame states bit for
bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import backend as bk
from .depth import DepthExtrinsics, PressureSample
from .dvl import (DvlExtrinsics, DvlPreintegrated, DvlSample,
                  correct_dvl_bias, preintegrate_dvl)
from .imu import (ImuBias, ImuNoiseSpec, ImuPreintegrated, ImuSample,
                  correct_imu_bias, hold_intervals, integrate_imu,
                  predict_state_imu)
from .manifold import Pose, hat, rotation_angle
from .state import NavState
from .visual import CameraModel, IntensityField, PatchPattern, stereo_depth


class InsufficientObservationsError(ValueError):
    """Too few associated observations for a coarse pose solve."""


def _tracking_solver(max_iterations: int) -> bk.SolverConfig:
    # per-frame solves need millimeter precision, not machine precision
    return bk.SolverConfig(max_iterations=max_iterations,
                           rel_cost_tol=1e-6, step_tol=1e-8)


class TrackingStatus(Enum):
    VISUAL_OK = "VisualOk"
    DEGRADED = "Degraded"


class EstimatorMode(Enum):
    FULL = "full"
    VISUAL_INERTIAL = "visual-inertial-only"
    ACOUSTIC_INERTIAL_DEPTH = "acoustic-inertial-depth-only"
    DVL_DEADRECKON = "dvl-deadreckon-only"

    @property
    def uses_vision(self) -> bool:
        return self in (EstimatorMode.FULL, EstimatorMode.VISUAL_INERTIAL)

    @property
    def uses_dvl(self) -> bool:
        return self in (EstimatorMode.FULL, EstimatorMode.ACOUSTIC_INERTIAL_DEPTH,
                        EstimatorMode.DVL_DEADRECKON)

    @property
    def uses_pressure(self) -> bool:
        return self in (EstimatorMode.FULL, EstimatorMode.ACOUSTIC_INERTIAL_DEPTH)


@dataclass(frozen=True)
class FrameState:
    frame_id: int
    t: float
    T_WI: Pose
    status: TrackingStatus
    tracked_features: int


@dataclass
class TrackerConfig:
    min_tracked_features: int = 8
    min_coarse_observations: int = 4
    reentry_frames: int = 3
    tau_p: float = 0.3        # keyframe translation threshold, meters
    tau_r: float = 0.2        # keyframe rotation threshold, radians
    tau_t: float = 1.0        # keyframe time threshold, seconds
    coarse_max_iterations: int = 10
    refine_max_iterations: int = 4


@dataclass
class NoiseFloors:
    """Lower bounds on the noise the estimator assumes. They keep the
    information matrices finite on noiseless synthetic datasets and absorb
    the zero-order-hold discretization error of the preintegrated factors
    (first order in the sample period), which would otherwise bias the
    solution away from the visual optimum."""

    sigma_pixel: float = 0.2
    sigma_dvl: float = 0.02
    sigma_pressure: float = 0.02
    sigma_g: float = 1e-3
    sigma_a: float = 5e-3
    sigma_bg_walk: float = 1e-6
    sigma_ba_walk: float = 1e-5
    sigma_bv_walk: float = 5e-3


@dataclass
class RunConfig:
    mode: EstimatorMode = EstimatorMode.FULL
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    backend: bk.BackendConfig = field(default_factory=bk.BackendConfig)
    floors: NoiseFloors = field(default_factory=NoiseFloors)


# ------------------------------- frame ops --------------------------------- #

def track_coarse(prev_nav: NavState, observations, map_points: dict,
                 cam: CameraModel, rig: bk.SensorRig,
                 imu_preint: ImuPreintegrated | None,
                 cfg: TrackerConfig, dt: float = 0.0) -> Pose:
    """Pose minimizing the robustified reprojection cost over the associated
    observations, initialized from the inertial motion model (constant
    velocity when no preintegration is supplied)."""
    tracked = [o for o in observations if o.landmark_id in map_points]
    if len(tracked) < cfg.min_coarse_observations:
        raise InsufficientObservationsError(
            f"{len(tracked)} observations (< {cfg.min_coarse_observations})")
    if imu_preint is not None:
        init = predict_state_imu(prev_nav, imu_preint, rig.gravity)
    else:
        init = NavState(prev_nav.R.copy(), prev_nav.p + prev_nav.v * dt,
                        prev_nav.v.copy(), prev_nav.bg, prev_nav.ba, prev_nav.bv)
    node = bk.KeyframeNode(kf_id=0, t=0.0, state=init, observations=tracked)
    cfg_b = bk.BackendConfig(use_dvl=False, use_pressure=False,
                             photometric_enabled=False)
    window, factors = bk.assemble_window(
        [node], map_points, {}, rig, cfg_b,
        fixed_landmarks=set(map_points.keys()))
    window.state_masks[0] = bk.POSE_MASK
    window, _ = bk.solve(window, factors, _tracking_solver(cfg.coarse_max_iterations))
    s = window.states[0]
    return Pose(s.R, s.p)


@dataclass(frozen=True)
class RefineResult:
    pose: Pose
    refined: bool
    initial_cost: float
    final_cost: float


def refine_photometric(coarse: Pose, ref_pose: Pose,
                       ref_field: IntensityField, cur_field: IntensityField,
                       points, cam: CameraModel, rig: bk.SensorRig,
                       pattern: PatchPattern, cfg: TrackerConfig,
                       sigma_intensity: float = 5.0,
                       gate: float = float("inf")) -> RefineResult:
    """Direct sparse refinement of a coarse pose against the reference
    frame's intensity field. ``points`` is a sequence of (pixel, depth)
    anchored in the reference frame. Never increases the photometric cost;
    points whose warp leaves the current image (or fails the Mahalanobis
    ``gate`` at the coarse pose) are dropped, and if none survive the coarse
    pose is returned with the no-op flag."""
    ref_state = NavState(ref_pose.R, ref_pose.t, np.zeros(3))
    cur_state = NavState(coarse.R, coarse.t, np.zeros(3))
    states = {0: ref_state, 1: cur_state}
    info = np.array([[1.0 / (len(pattern.offsets) * sigma_intensity**2)]])
    factors = []
    for pixel, depth in points:
        f = bk.Factor(bk.FactorKind.PHOTOMETRIC, (0, 1),
                      bk.PhotometricData(ref_field, cur_field,
                                         np.asarray(pixel, dtype=float),
                                         float(depth), pattern),
                      info, robust=True, rig=rig)
        try:
            r, _, _ = f.evaluate(states, {}, with_jacobians=False)
        except (bk.OutOfDomainError, bk.BehindCameraError):
            continue
        if np.sqrt(float(r @ info @ r)) > gate:
            continue
        factors.append(f)
    if not factors:
        return RefineResult(coarse, False, 0.0, 0.0)
    window = bk.LocalWindow(kf_ids=[0, 1], states=states,
                            fixed_states={0},
                            state_masks={1: bk.POSE_MASK})
    window, report = bk.solve(window, factors,
                              _tracking_solver(cfg.refine_max_iterations))
    s = window.states[1]
    return RefineResult(Pose(s.R, s.p), report.iterations > 0,
                        report.initial_cost, report.final_cost)


def predict_state_degraded(state_i: NavState, imu_preint: ImuPreintegrated,
                           dvl_preint: DvlPreintegrated,
                           ext: DvlExtrinsics) -> Pose:
    """Rotation from the gyro preintegration, translation from the DVL
    translation preintegration (both corrected to the state's biases)."""
    d_r, _, _ = correct_imu_bias(imu_preint, ImuBias(state_i.bg, state_i.ba))
    r_j = state_i.R @ d_r
    dp_d = correct_dvl_bias(dvl_preint, state_i.bg, state_i.bv)
    p_j = state_i.R @ dp_d + state_i.p - (r_j - state_i.R) @ ext.p_ID
    return Pose(r_j, p_j)


def keyframe_decision(cur: FrameState, last_kf: FrameState,
                      cfg: TrackerConfig) -> bool:
    """Deterministic keyframe policy: motion or time thresholds exceeded, or
    the tracking status just changed."""
    if cur.frame_id == last_kf.frame_id:
        return False
    if cur.status != last_kf.status:
        return True
    if np.linalg.norm(cur.T_WI.t - last_kf.T_WI.t) > cfg.tau_p:
        return True
    if rotation_angle(last_kf.T_WI.R.T @ cur.T_WI.R) > cfg.tau_r:
        return True
    return (cur.t - last_kf.t) > cfg.tau_t


# ------------------------------ orchestration ------------------------------ #

@dataclass
class KeyframeEstimate:
    kf_id: int
    frame_id: int
    t: float
    state: NavState


@dataclass
class EstimationResult:
    frames: list[FrameState]
    navs: list[NavState]
    status_rows: list[tuple]
    keyframes: list[KeyframeEstimate]
    solver_reports: list[bk.SolveReport]


def _nearest_index(times: np.ndarray, t: float) -> int | None:
    if len(times) == 0:
        return None
    i = int(np.searchsorted(times, t))
    best = None
    for k in (i - 1, i):
        if 0 <= k < len(times):
            if best is None or abs(times[k] - t) < abs(times[best] - t):
                best = k
    return best


class Tracker:
    """Sequential frame-by-frame estimator over one dataset."""

    def __init__(self, dataset, cfg: RunConfig):
        from .sim import sensor_rig_from_config  # local import to avoid a cycle

        self.ds = dataset
        self.cfg = cfg
        scen = dataset.config
        self.rig = sensor_rig_from_config(scen)
        self.cam = self.rig.cam

        floors = cfg.floors
        self.imu_noise = ImuNoiseSpec(
            sigma_g=max(scen.sigma_g_rad_s_sqrt_hz, floors.sigma_g),
            sigma_a=max(scen.sigma_a_m_s2_sqrt_hz, floors.sigma_a),
            sigma_bg_walk=max(scen.sigma_bg_walk_rad_s_sqrt_s, floors.sigma_bg_walk),
            sigma_ba_walk=max(scen.sigma_ba_walk_m_s2_sqrt_s, floors.sigma_ba_walk),
        )
        self.sigma_dvl = max(scen.sigma_dvl_m_s, floors.sigma_dvl)
        mode = cfg.mode
        self.backend_cfg = replace(
            cfg.backend,
            sigma_pixel=max(scen.sigma_pixel_px, floors.sigma_pixel),
            sigma_dvl=self.sigma_dvl,
            sigma_pressure=max(scen.sigma_pressure_m, floors.sigma_pressure),
            sigma_bg_walk=self.imu_noise.sigma_bg_walk,
            sigma_ba_walk=self.imu_noise.sigma_ba_walk,
            sigma_bv_walk=max(scen.sigma_bv_walk_m_s_sqrt_s, floors.sigma_bv_walk),
            use_vision=mode.uses_vision,
            use_dvl=mode.uses_dvl,
            use_pressure=mode.uses_pressure,
        )

        self.imu_times = np.array([s.t for s in dataset.imu])
        self.dvl_times = np.array([s.t for s in dataset.dvl])
        self.press_times = np.array([s.t for s in dataset.pressure])
        self.dvl_period = 1.0 / scen.rate_dvl_hz
        self.press_period = 1.0 / scen.rate_pressure_hz

        self.map: dict[int, np.ndarray] = {}
        self.keyframes: list[bk.KeyframeNode] = []
        self.kf_frame_ids: list[int] = []
        self.intervals: dict[tuple[int, int], bk.IntervalData] = {}
        self.reports: list[bk.SolveReport] = []
        self.status = TrackingStatus.VISUAL_OK
        self.reentry_count = 0

    # ------------------------------------------------------------------ #
    def _imu_slice(self, t0: float, t1: float) -> list[ImuSample]:
        i0 = max(int(np.searchsorted(self.imu_times, t0, side="right")) - 1, 0)
        i1 = int(np.searchsorted(self.imu_times, t1, side="left"))
        return self.ds.imu[i0:max(i1, i0 + 1)]

    def _integrate(self, t0: float, t1: float, bias: ImuBias) -> ImuPreintegrated:
        return integrate_imu(self._imu_slice(t0, t1), bias, self.imu_noise,
                             t_start=t0, t_end=t1)

    def _dvl_slice(self, t0: float, t1: float) -> list[DvlSample]:
        """DVL samples covering [t0, t1); the sample holding at t0 is clamped
        to start the buffer exactly at t0."""
        i0 = int(np.searchsorted(self.dvl_times, t0, side="right")) - 1
        i1 = int(np.searchsorted(self.dvl_times, t1, side="left"))
        if i1 <= max(i0, 0):
            return []
        if i0 < 0:
            return list(self.ds.dvl[0:i1])
        first = self.ds.dvl[i0]
        if first.t < t0:
            first = DvlSample(t0, first.vel)
        return [first] + list(self.ds.dvl[i0 + 1:i1])

    def _dvl_preintegrate(self, t0: float, t1: float,
                          imu_pre: ImuPreintegrated,
                          lin_bg, lin_bv) -> DvlPreintegrated | None:
        samples = self._dvl_slice(t0, t1)
        if not samples:
            return None
        checkpoints = imu_pre.checkpoints_at([s.t for s in samples])
        return preintegrate_dvl(samples, checkpoints, self.rig.dvl,
                                lin_bg, lin_bv, t_end=t1,
                                sigma_v=self.sigma_dvl)

    def _nearest_dvl(self, t: float) -> DvlSample | None:
        k = _nearest_index(self.dvl_times, t)
        if k is None or abs(self.dvl_times[k] - t) > self.dvl_period:
            return None
        return self.ds.dvl[k]

    def _nearest_pressure(self, t: float) -> PressureSample | None:
        k = _nearest_index(self.press_times, t)
        if k is None or abs(self.press_times[k] - t) > self.press_period:
            return None
        return self.ds.pressure[k]

    def _nearest_gyro(self, t: float) -> np.ndarray | None:
        k = _nearest_index(self.imu_times, t)
        return None if k is None else self.ds.imu[k].gyro

    def _initial_state(self, t: float) -> NavState:
        gt_times = np.array([g.t for g in self.ds.groundtruth])
        k = _nearest_index(gt_times, t)
        g = self.ds.groundtruth[k]
        return NavState(g.R.copy(), g.p.copy(), g.v.copy(),
                        g.bg.copy(), g.ba.copy(), g.bv.copy())

    # ------------------------------------------------------------------ #
    def _mini_solve(self, kf: bk.KeyframeNode, t: float, init: NavState,
                    tracked_obs, imu_pre, dvl_pre) -> tuple[NavState, float]:
        """Joint per-frame optimization of the current state against the
        (fixed) reference keyframe."""
        temp_id = kf.kf_id + 1
        node = bk.KeyframeNode(
            kf_id=temp_id, t=t, state=init.copy(),
            observations=list(tracked_obs),
            gyro=self._nearest_gyro(t),
            dvl_meas=self._nearest_dvl(t),
            pressure_meas=self._nearest_pressure(t))
        cfg = replace(self.backend_cfg, photometric_enabled=False)
        window, factors = bk.assemble_window(
            [kf, node], self.map,
            {(kf.kf_id, temp_id): bk.IntervalData(imu_pre, dvl_pre)},
            self.rig, cfg, fixed_ids={kf.kf_id},
            fixed_landmarks=set(self.map.keys()))
        window.state_masks[temp_id] = bk.POSE_VEL_MASK
        window, report = bk.solve(
            window, factors,
            _tracking_solver(self.cfg.tracker.coarse_max_iterations))
        return window.states[temp_id], report.final_cost

    def _init_landmarks(self, frame, pose: Pose):
        t_wc = pose.compose(self.rig.T_IC)
        for obs in frame.observations:
            if obs.landmark_id in self.map:
                continue
            if obs.disparity is None or obs.disparity <= 0.05:
                continue
            depth = stereo_depth(self.cam, obs.disparity)
            x_c = np.array([(obs.pixel[0] - self.cam.cx) / self.cam.fx * depth,
                            (obs.pixel[1] - self.cam.cy) / self.cam.fy * depth,
                            depth])
            self.map[obs.landmark_id] = t_wc.transform(x_c)

    def _make_keyframe(self, frame, nav: NavState,
                       imu_pre, dvl_pre) -> bk.KeyframeNode:
        kf_id = len(self.keyframes)
        if self.keyframes:
            prev = self.keyframes[-1]
            self.intervals[(prev.kf_id, kf_id)] = bk.IntervalData(imu_pre, dvl_pre)
        self._init_landmarks(frame, nav.pose())
        node = bk.KeyframeNode(
            kf_id=kf_id, t=frame.t, state=nav.copy(),
            observations=list(frame.observations),
            field=frame.field,
            gyro=self._nearest_gyro(frame.t),
            dvl_meas=self._nearest_dvl(frame.t),
            pressure_meas=self._nearest_pressure(frame.t))
        self.keyframes.append(node)
        self.kf_frame_ids.append(frame.frame_id)
        return node

    def _window_ba(self):
        if len(self.keyframes) < 2:
            return
        size = self.backend_cfg.window_size
        window_nodes = self.keyframes[-size:]
        window_ids = {n.kf_id for n in window_nodes}
        window_lm_ids = set()
        for n in window_nodes:
            window_lm_ids.update(o.landmark_id for o in n.observations
                                 if o.landmark_id in self.map)
        fixed_nodes = []
        older = self.keyframes[:-size]
        if older:
            fixed_nodes.append(older[-1])  # predecessor anchors the boundary
            for n in older[-6:-1]:
                if any(o.landmark_id in window_lm_ids for o in n.observations):
                    fixed_nodes.append(n)
        nodes = sorted(fixed_nodes + window_nodes, key=lambda n: n.kf_id)
        fixed_ids = {n.kf_id for n in fixed_nodes}
        if not fixed_ids:
            fixed_ids = {nodes[0].kf_id}
        window, factors = bk.assemble_window(
            nodes, self.map, self.intervals, self.rig, self.backend_cfg,
            fixed_ids=fixed_ids)
        window, report = bk.solve(window, factors, self.backend_cfg.solver)
        self.reports.append(report)
        for node in nodes:
            if node.kf_id not in fixed_ids:
                node.state = window.states[node.kf_id]
        for lid, pos in window.landmarks.items():
            self.map[lid] = pos

    # ------------------------------------------------------------------ #
    def run(self) -> EstimationResult:
        frames_out: list[FrameState] = []
        navs: list[NavState] = []
        status_rows: list[tuple] = []
        tracker_cfg = self.cfg.tracker
        mode = self.cfg.mode

        prev_nav: NavState | None = None
        prev_frame = None
        prev_t = 0.0
        for frame in self.ds.frames:
            t = frame.t
            tracked_obs = [o for o in frame.observations
                           if o.landmark_id in self.map]
            n_tracked = len(tracked_obs)
            cost = float("nan")

            if not self.keyframes:
                nav = self._initial_state(t)
                rich = mode.uses_vision and \
                    len(frame.observations) >= tracker_cfg.min_tracked_features
                self.status = (TrackingStatus.VISUAL_OK if rich
                               else TrackingStatus.DEGRADED)
                self._make_keyframe(frame, nav, None, None)
            else:
                kf = self.keyframes[-1]
                imu_pre = self._integrate(kf.t, t,
                                          ImuBias(kf.state.bg, kf.state.ba))
                dvl_pre = None
                if mode.uses_dvl:
                    dvl_pre = self._dvl_preintegrate(
                        kf.t, t, imu_pre, kf.state.bg, kf.state.bv)
                frame_pre = self._integrate(prev_t, t,
                                            ImuBias(prev_nav.bg, prev_nav.ba))

                visual_ok = (mode.uses_vision
                             and n_tracked >= tracker_cfg.min_tracked_features)
                if visual_ok:
                    pose = track_coarse(prev_nav, tracked_obs, self.map,
                                        self.cam, self.rig, frame_pre,
                                        tracker_cfg)
                    # direct refinement against the previous frame: the short
                    # baseline keeps the luminance-constancy assumption tight
                    if (self.backend_cfg.photometric_enabled
                            and prev_frame is not None
                            and frame.field is not None
                            and len(prev_frame.field.amplitudes) > 0
                            and len(frame.field.amplitudes) > 0):
                        cur_ids = {o.landmark_id for o in frame.observations}
                        pts = [(o.pixel, stereo_depth(self.cam, o.disparity))
                               for o in prev_frame.observations
                               if o.disparity is not None and o.disparity > 0.05
                               and o.landmark_id in cur_ids]
                        pts = pts[:self.backend_cfg.photometric_max_points]
                        if pts:
                            res = refine_photometric(
                                pose, prev_nav.pose(), prev_frame.field,
                                frame.field, pts, self.cam, self.rig,
                                self.backend_cfg.pattern, tracker_cfg,
                                self.backend_cfg.sigma_intensity_track,
                                gate=self.backend_cfg.photometric_track_gate)
                            pose = res.pose
                    pred = predict_state_imu(kf.state, imu_pre, self.rig.gravity)
                    init = NavState(pose.R, pose.t, pred.v,
                                    kf.state.bg, kf.state.ba, kf.state.bv)
                    nav, cost = self._mini_solve(kf, t, init, tracked_obs,
                                                 imu_pre, dvl_pre)
                elif mode.uses_dvl and dvl_pre is not None:
                    pose = predict_state_degraded(kf.state, imu_pre, dvl_pre,
                                                  self.rig.dvl)
                    v = self._degraded_velocity(pose, t, kf.state)
                    init = NavState(pose.R, pose.t, v,
                                    kf.state.bg, kf.state.ba, kf.state.bv)
                    nav, cost = self._mini_solve(kf, t, init, [],
                                                 imu_pre, dvl_pre)
                else:
                    nav = predict_state_imu(kf.state, imu_pre, self.rig.gravity)

                candidate_ok = (mode.uses_vision
                                and n_tracked >= tracker_cfg.min_tracked_features)
                if self.status == TrackingStatus.DEGRADED and candidate_ok:
                    self.reentry_count += 1
                    if self.reentry_count >= tracker_cfg.reentry_frames:
                        self.status = TrackingStatus.VISUAL_OK
                        self.reentry_count = 0
                elif candidate_ok:
                    self.status = TrackingStatus.VISUAL_OK
                    self.reentry_count = 0
                else:
                    self.status = TrackingStatus.DEGRADED
                    self.reentry_count = 0

                cur_fs = FrameState(frame.frame_id, t, nav.pose(),
                                    self.status, n_tracked)
                last_kf_fs = frames_out[self.kf_frame_ids[-1]] \
                    if self.kf_frame_ids else None
                if last_kf_fs is not None and \
                        keyframe_decision(cur_fs, last_kf_fs, tracker_cfg):
                    self._make_keyframe(frame, nav, imu_pre, dvl_pre)
                    self._window_ba()
                    nav = self.keyframes[-1].state.copy()

            frames_out.append(FrameState(frame.frame_id, t, nav.pose(),
                                         self.status, n_tracked))
            status_rows.append((frame.frame_id, t, self.status.value,
                                n_tracked, cost))
            navs.append(nav)
            prev_nav = nav
            prev_frame = frame
            prev_t = t

        keyframes = [KeyframeEstimate(n.kf_id, fid, n.t, n.state)
                     for n, fid in zip(self.keyframes, self.kf_frame_ids)]
        return EstimationResult(frames_out, navs, status_rows, keyframes,
                                self.reports)

    def _degraded_velocity(self, pose: Pose, t: float,
                           ref: NavState) -> np.ndarray:
        """Body velocity inferred from the nearest bias-corrected DVL sample."""
        meas = self._nearest_dvl(t)
        gyro = self._nearest_gyro(t)
        if meas is None or gyro is None:
            return ref.v.copy()
        v_d = meas.vel - ref.bv
        return pose.R @ (self.rig.dvl.R_ID @ v_d - hat(gyro) @ self.rig.dvl.p_ID)


def run_estimator(dataset, cfg: RunConfig) -> EstimationResult:
    """Run the configured estimator over a dataset and return per-frame
    states, per-keyframe estimates and solver reports."""
    if cfg.mode == EstimatorMode.DVL_DEADRECKON:
        return run_dead_reckoning(dataset, cfg)
    return Tracker(dataset, cfg).run()


def run_dead_reckoning(dataset, cfg: RunConfig) -> EstimationResult:
    """Pure dead reckoning: gyro-chained attitude plus summed DVL velocities,
    both at the initial bias estimates. No optimization."""
    from .sim import sensor_rig_from_config

    rig = sensor_rig_from_config(dataset.config)
    gt0 = dataset.groundtruth[0]
    frames = dataset.frames
    t0 = frames[0].t
    t_last = max(frames[-1].t, t0 + 1e-9)
    pre = integrate_imu(dataset.imu, ImuBias(gt0.bg.copy(), gt0.ba.copy()),
                        ImuNoiseSpec(), t_start=t0, t_end=t_last)

    bv0 = gt0.bv.copy()
    dvl_times = np.array([s.t for s in dataset.dvl])
    idx, starts, dts = hold_intervals(dvl_times, t0, t_last)
    hold_pos = [gt0.p.copy()]
    hold_rwd = []
    for k, ts, dt in zip(idx, starts, dts):
        d_r, _, _ = pre.checkpoint_at(ts)
        r_wd = gt0.R @ d_r @ rig.dvl.R_ID
        hold_rwd.append(r_wd)
        hold_pos.append(hold_pos[-1] + r_wd @ (dataset.dvl[k].vel - bv0) * dt)

    def pos_at(t: float) -> np.ndarray:
        k = int(np.searchsorted(starts, t, side="right")) - 1
        if k < 0:
            return hold_pos[0].copy()
        frac = min(t - starts[k], dts[k])
        return hold_pos[k] + hold_rwd[k] @ (dataset.dvl[idx[k]].vel - bv0) * frac

    frames_out = []
    navs = []
    rows = []
    for frame in frames:
        d_r, _, _ = pre.checkpoint_at(min(frame.t, pre.t_end))
        r = gt0.R @ d_r
        pos = pos_at(frame.t)
        frames_out.append(FrameState(frame.frame_id, frame.t, Pose(r, pos),
                                     TrackingStatus.DEGRADED, 0))
        navs.append(NavState(r, pos, np.zeros(3), gt0.bg, gt0.ba, gt0.bv))
        rows.append((frame.frame_id, frame.t, "DeadReckon", 0, float("nan")))
    return EstimationResult(frames_out, navs, rows, [], [])
