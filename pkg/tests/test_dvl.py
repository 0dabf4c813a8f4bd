import numpy as np
import pytest
from numpy.testing import assert_allclose

from aquafuse.dvl import (DvlBias, DvlExtrinsics, DvlSample, correct_dvl_bias,
                          dead_reckon_dvl, dvl_position_residual,
                          dvl_position_residual_jacobians,
                          dvl_velocity_estimate, dvl_velocity_residual,
                          dvl_velocity_residual_jacobians, preintegrate_dvl)
from aquafuse.imu import ImuBias, ImuNoiseSpec, integrate_imu
from aquafuse.manifold import exp_so3, random_rotation
from aquafuse.state import NavState

from helpers import discrete_imu_world, dvl_samples_from_world, random_nav_state

IDENTITY_EXT = DvlExtrinsics(np.eye(3), np.zeros(3))
QUIET = ImuNoiseSpec()


def _uniform_dvl(n, dt, vel):
    return [DvlSample(k * dt, vel) for k in range(n)]


def _world_with_dvl(rng, n_imu=100, dvl_every=10, ext=IDENTITY_EXT,
                    bv=np.zeros(3)):
    """Discrete world, its IMU preintegration checkpoints at the DVL times
    and DVL samples exactly consistent with the world displacements."""
    samples, states, g = discrete_imu_world(rng, n=n_imu)
    t_end = n_imu * 0.01
    pre = integrate_imu(samples, ImuBias.zero(), QUIET, t_end=t_end)
    dvl_idx = list(range(0, n_imu, dvl_every))
    dvl_times = [k * 0.01 for k in dvl_idx]
    dvl_states = [states[k] for k in dvl_idx] + [states[-1]]
    dvl = dvl_samples_from_world(dvl_states, dvl_times, dvl_every * 0.01,
                                 ext, bias=bv)
    checkpoints = pre.checkpoints_at(dvl_times)
    return samples, states, pre, dvl, checkpoints, t_end


class TestDeadReckon:
    def test_straight_line(self):
        samples = _uniform_dvl(10, 0.1, np.array([1.0, 0, 0]))
        rotations = [np.eye(3)] * 10
        p = dead_reckon_dvl(np.zeros(3), rotations, samples, DvlBias.zero(),
                            t_end=1.0)
        assert_allclose(p, [1.0, 0, 0], atol=1e-14)

    def test_bias_cancels_measurement(self):
        vel = np.array([0.3, -0.2, 0.1])
        samples = _uniform_dvl(10, 0.1, vel)
        rotations = [random_rotation(np.random.default_rng(k)) for k in range(10)]
        p0 = np.array([5.0, -2.0, 1.0])
        p = dead_reckon_dvl(p0, rotations, samples, DvlBias(vel), t_end=1.0)
        assert_allclose(p, p0, atol=1e-15)

    def test_quarter_circle_arc(self):
        # left-endpoint sum vs the analytic arc integral: first-order in dt
        n = 1000
        dt = 1e-3
        rotations = [exp_so3([0, 0, np.pi / 2 * k * dt]) for k in range(n)]
        samples = _uniform_dvl(n, dt, np.array([1.0, 0, 0]))
        p = dead_reckon_dvl(np.zeros(3), rotations, samples, DvlBias.zero(),
                            t_end=1.0)
        analytic = np.array([2 / np.pi, 2 / np.pi, 0.0])
        assert np.linalg.norm(p - analytic) < 2e-3

    def test_length_mismatch_rejected(self):
        samples = _uniform_dvl(5, 0.1, np.zeros(3))
        with pytest.raises(ValueError):
            dead_reckon_dvl(np.zeros(3), [np.eye(3)] * 4, samples,
                            DvlBias.zero())


class TestPreintegrate:
    def test_identity_checkpoints_straight_line(self, rng):
        samples, _, pre, _, _, _ = _world_with_dvl(rng)
        dvl = _uniform_dvl(10, 0.1, np.array([1.0, 0, 0]))
        cps = pre.checkpoints_at([s.t for s in dvl])
        cps.rotations[:] = np.eye(3)
        out = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3), np.zeros(3),
                               t_end=1.0)
        assert_allclose(out.dp, [1.0, 0, 0], atol=1e-14)

    def test_linearization_bias_cancels(self, rng):
        samples, _, pre, _, _, _ = _world_with_dvl(rng)
        vel = np.array([1.0, 0, 0])
        dvl = _uniform_dvl(10, 0.1, vel)
        cps = pre.checkpoints_at([s.t for s in dvl])
        cps.rotations[:] = np.eye(3)
        out = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3), vel,
                               t_end=1.0)
        assert_allclose(out.dp, np.zeros(3), atol=1e-15)

    def test_matches_dead_reckoning_oracle(self, rng):
        # the decoupled preintegration and the world-frame dead-reckoned
        # relative translation are the same sum expressed in frame i
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.3)
        for _ in range(20):
            samples, states, pre, dvl, cps, t_end = _world_with_dvl(
                rng, ext=ext)
            out = preintegrate_dvl(dvl, cps, ext, np.zeros(3), np.zeros(3),
                                   t_end=t_end)
            r_wi = states[0].R
            rotations = [r_wi @ cps.rotations[k] @ ext.R_ID
                         for k in range(len(dvl))]
            p0 = rng.normal(size=3)
            p_m = dead_reckon_dvl(p0, rotations, dvl, DvlBias.zero(),
                                  t_end=t_end)
            assert np.linalg.norm(out.dp - r_wi.T @ (p_m - p0)) < 1e-12

    def test_misaligned_checkpoints_rejected(self, rng):
        samples, _, pre, dvl, cps, t_end = _world_with_dvl(rng)
        with pytest.raises(ValueError):
            preintegrate_dvl(dvl[:-1], cps, IDENTITY_EXT, np.zeros(3),
                             np.zeros(3), t_end=t_end)

    def test_empty_samples_rejected(self, rng):
        samples, _, pre, dvl, cps, _ = _world_with_dvl(rng)
        with pytest.raises(ValueError):
            preintegrate_dvl([], cps, IDENTITY_EXT, np.zeros(3), np.zeros(3))


class TestCorrectBias:
    def test_zero_delta_unchanged(self, rng):
        _, _, _, dvl, cps, t_end = _world_with_dvl(rng)
        out = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3),
                               np.zeros(3), t_end=t_end)
        assert_allclose(correct_dvl_bias(out, np.zeros(3), np.zeros(3)),
                        out.dp)

    def test_velocity_bias_exact_when_rotations_fixed(self):
        # straight line: identity checkpoints make the bv dependence linear
        dvl = _uniform_dvl(10, 0.1, np.array([0.4, 0.1, 0.0]))
        from aquafuse.imu import RotationCheckpoints
        n = len(dvl)
        cps = RotationCheckpoints(np.array([s.t for s in dvl]),
                                  np.stack([np.eye(3)] * n),
                                  np.zeros((n, 3, 3)), np.zeros((n, 3, 3)))
        pre = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3),
                               np.zeros(3), t_end=1.0)
        dbv = np.array([0.05, 0, 0])
        corrected = correct_dvl_bias(pre, np.zeros(3), dbv)
        re_pre = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3), dbv,
                                  t_end=1.0)
        assert_allclose(corrected, re_pre.dp, atol=1e-15)
        assert_allclose(corrected - pre.dp, [-0.05, 0, 0], atol=1e-15)

    def test_gyro_bias_quadratic_remainder(self, rng):
        samples, _, _, dvl, _, t_end = _world_with_dvl(rng)

        def gap(dbg):
            pre_imu = integrate_imu(samples, ImuBias.zero(), QUIET,
                                    t_end=t_end)
            cps = pre_imu.checkpoints_at([s.t for s in dvl])
            pre = preintegrate_dvl(dvl, cps, IDENTITY_EXT, np.zeros(3),
                                   np.zeros(3), t_end=t_end)
            first_order = correct_dvl_bias(pre, dbg, np.zeros(3))
            re_imu = integrate_imu(samples, ImuBias(dbg, np.zeros(3)), QUIET,
                                   t_end=t_end)
            re_cps = re_imu.checkpoints_at([s.t for s in dvl])
            re_pre = preintegrate_dvl(dvl, re_cps, IDENTITY_EXT, dbg,
                                      np.zeros(3), t_end=t_end)
            return np.linalg.norm(first_order - re_pre.dp)

        dbg = np.array([0.0, 0.0, 0.02])
        ratio = gap(dbg) / gap(dbg / 2)
        assert 3.5 <= ratio <= 4.5

    def test_velocity_jacobian_closed_form(self, rng):
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.2)
        _, _, _, dvl, cps, t_end = _world_with_dvl(rng, ext=ext)
        pre = preintegrate_dvl(dvl, cps, ext, np.zeros(3), np.zeros(3),
                               t_end=t_end)
        dts = np.diff([s.t for s in dvl] + [t_end])
        closed = -sum(cps.rotations[k] @ ext.R_ID * dts[k]
                      for k in range(len(dvl)))
        assert_allclose(pre.J_dp_dbv, closed, atol=1e-15)


class TestVelocityEstimate:
    def test_pure_translation(self):
        state = NavState(np.eye(3), np.zeros(3), np.array([1.0, 0, 0]))
        out = dvl_velocity_estimate(state, np.zeros(3), IDENTITY_EXT)
        assert_allclose(out, [1.0, 0, 0])

    def test_lever_arm(self):
        state = NavState(np.eye(3), np.zeros(3), np.zeros(3))
        ext = DvlExtrinsics(np.eye(3), np.array([0, 1.0, 0]))
        out = dvl_velocity_estimate(state, np.array([0, 0, 1.0]), ext)
        assert_allclose(out, [-1.0, 0, 0], atol=1e-15)

    def test_lever_arm_rotated_frame(self):
        state = NavState(np.eye(3), np.zeros(3), np.zeros(3))
        ext = DvlExtrinsics(exp_so3([0, 0, np.pi / 2]), np.array([0, 1.0, 0]))
        out = dvl_velocity_estimate(state, np.array([0, 0, 1.0]), ext)
        assert_allclose(out, [0, 1.0, 0], atol=1e-15)


class TestVelocityResidual:
    def test_identical_states_and_measurements(self, rng):
        state = random_nav_state(rng)
        gyro = rng.normal(size=3)
        meas = DvlSample(0.0, rng.normal(size=3))
        res = dvl_velocity_residual(state, state, gyro, gyro, meas, meas,
                                    IDENTITY_EXT)
        assert_allclose(res, np.zeros(3))

    def test_common_offset_invariance_exact(self, rng):
        # dyadic values keep the cancellation bit-exact
        si, sm = random_nav_state(rng), random_nav_state(rng)
        gi, gm = rng.normal(size=3), rng.normal(size=3)
        vi = np.array([0.5, -0.25, 0.125])
        vm = np.array([1.5, 0.75, -0.5])
        offset = np.array([2.0, -4.0, 8.0])
        base = dvl_velocity_residual(si, sm, gi, gm, DvlSample(0, vi),
                                     DvlSample(1, vm), IDENTITY_EXT)
        shifted = dvl_velocity_residual(si, sm, gi, gm,
                                        DvlSample(0, vi + offset),
                                        DvlSample(1, vm + offset),
                                        IDENTITY_EXT)
        assert (base == shifted).all()

    def test_simulated_consistency(self, rng):
        # measurements generated from the states themselves
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.2)
        si, sm = random_nav_state(rng), random_nav_state(rng)
        gi, gm = rng.normal(size=3), rng.normal(size=3)
        meas_i = DvlSample(0.0, dvl_velocity_estimate(si, gi, ext))
        meas_m = DvlSample(1.0, dvl_velocity_estimate(sm, gm, ext))
        res = dvl_velocity_residual(si, sm, gi, gm, meas_i, meas_m, ext)
        assert np.abs(res).max() < 1e-10

    def test_jacobians_match_finite_differences(self, rng):
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.2)
        for _ in range(20):
            si, sm = random_nav_state(rng), random_nav_state(rng)
            gi, gm = rng.normal(size=3), rng.normal(size=3)
            meas_i = DvlSample(0.0, rng.normal(size=3))
            meas_m = DvlSample(1.0, rng.normal(size=3))
            _, jac = dvl_velocity_residual_jacobians(si, sm, gi, gm, meas_i,
                                                     meas_m, ext)
            h = 1e-6
            for key, state, which, slot in (("phi_i", si, "i", 0),
                                            ("v_i", si, "i", 6),
                                            ("phi_m", sm, "m", 0),
                                            ("v_m", sm, "m", 6)):
                fd = np.zeros((3, 3))
                for d in range(3):
                    dv = np.zeros(18)
                    dv[slot + d] = h
                    sp, smn = state.retract(dv), state.retract(-dv)
                    if which == "i":
                        rp = dvl_velocity_residual(sp, sm, gi, gm, meas_i,
                                                   meas_m, ext)
                        rm = dvl_velocity_residual(smn, sm, gi, gm, meas_i,
                                                   meas_m, ext)
                    else:
                        rp = dvl_velocity_residual(si, sp, gi, gm, meas_i,
                                                   meas_m, ext)
                        rm = dvl_velocity_residual(si, smn, gi, gm, meas_i,
                                                   meas_m, ext)
                    fd[:, d] = (rp - rm) / (2 * h)
                scale = max(np.abs(fd).max(), 1.0)
                assert np.abs(jac[key] - fd).max() < 1e-5 * scale, key


class TestPositionResidual:
    def _consistent_pair(self, rng, ext):
        samples, states, pre, dvl, cps, t_end = _world_with_dvl(rng, ext=ext)
        out = preintegrate_dvl(dvl, cps, ext, np.zeros(3), np.zeros(3),
                               t_end=t_end)
        return states[0], states[-1], out

    def test_noiseless_consistency(self, rng):
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.3)
        si, sm, pre = self._consistent_pair(rng, ext)
        res = dvl_position_residual(si, sm, pre, ext)
        assert np.abs(res).max() < 1e-9

    def test_translation_perturbation(self, rng):
        ext = DvlExtrinsics(np.eye(3), np.zeros(3))
        si, sm, pre = self._consistent_pair(rng, ext)
        si.R = np.eye(3)
        base = dvl_position_residual(si, sm, pre, ext)
        sm2 = sm.copy()
        sm2.p = sm.p + np.array([0.1, 0, 0])
        shifted = dvl_position_residual(si, sm2, pre, ext)
        assert_allclose(shifted - base, [0.1, 0, 0], atol=1e-12)

    def test_pure_rotation_isolates_lever_arm(self, rng):
        # equal positions, different attitudes: only the lever-arm term stays
        ext = DvlExtrinsics(np.eye(3), np.array([0.2, -0.1, 0.3]))
        si = random_nav_state(rng)
        si.bg = np.zeros(3)
        si.bv = np.zeros(3)
        sm = si.copy()
        sm.R = si.R @ exp_so3([0.0, 0.0, 0.4])
        zero_pre = preintegrate_dvl(
            [DvlSample(0.0, np.zeros(3))],
            _identity_checkpoints([0.0]), ext, np.zeros(3), np.zeros(3),
            t_end=1.0)
        res = dvl_position_residual(si, sm, zero_pre, ext)
        expected = si.R.T @ (sm.R @ ext.p_ID - si.R @ ext.p_ID)
        assert_allclose(res, expected, atol=1e-14)

    def test_bias_correction_enters_residual(self, rng):
        ext = DvlExtrinsics(np.eye(3), np.zeros(3))
        si, sm, pre = self._consistent_pair(rng, ext)
        si2 = si.copy()
        si2.bv = si.bv + np.array([0.01, 0, 0])
        base = dvl_position_residual(si, sm, pre, ext)
        shifted = dvl_position_residual(si2, sm, pre, ext)
        assert_allclose(shifted - base, -pre.J_dp_dbv @ [0.01, 0, 0],
                        atol=1e-14)

    def test_jacobians_match_finite_differences(self, rng):
        ext = DvlExtrinsics(random_rotation(rng), rng.normal(size=3) * 0.2)
        for _ in range(15):
            si, sm, pre = self._consistent_pair(rng, ext)
            sm.p += rng.normal(size=3) * 0.05
            _, jac = dvl_position_residual_jacobians(si, sm, pre, ext)
            h = 1e-6
            for key, state, which, slot in (("phi_i", si, "i", 0),
                                            ("p_i", si, "i", 3),
                                            ("bg_i", si, "i", 9),
                                            ("bv_i", si, "i", 15),
                                            ("phi_m", sm, "m", 0),
                                            ("p_m", sm, "m", 3)):
                fd = np.zeros((3, 3))
                for d in range(3):
                    dv = np.zeros(18)
                    dv[slot + d] = h
                    sp, smn = state.retract(dv), state.retract(-dv)
                    if which == "i":
                        rp = dvl_position_residual(sp, sm, pre, ext)
                        rm = dvl_position_residual(smn, sm, pre, ext)
                    else:
                        rp = dvl_position_residual(si, sp, pre, ext)
                        rm = dvl_position_residual(si, smn, pre, ext)
                    fd[:, d] = (rp - rm) / (2 * h)
                scale = max(np.abs(fd).max(), 1.0)
                assert np.abs(jac[key] - fd).max() < 1e-5 * scale, key


def _identity_checkpoints(times):
    from aquafuse.imu import RotationCheckpoints
    n = len(times)
    return RotationCheckpoints(np.asarray(times, dtype=float),
                               np.stack([np.eye(3)] * n),
                               np.zeros((n, 3, 3)), np.zeros((n, 3, 3)))
