"""Pinhole camera model, stereo depth, reprojection residual and the patch
photometric residual over an analytic intensity field.

Intensity fields are smooth sums of Gaussian bumps (plus a constant offset),
so photometric values and gradients have closed forms and can be checked
against finite differences exactly where needed. Real images and descriptor
matching are out of scope; data association is supplied by the scenario
simulator as landmark ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold import Pose, hat

MIN_DEPTH = 1e-6


class BehindCameraError(ValueError):
    """Point at non-positive depth cannot be projected."""


class DegenerateTriangulationError(ValueError):
    """Non-positive disparity carries no depth information."""


class OutOfDomainError(ValueError):
    """A warped patch point left the image domain."""


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    baseline: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.baseline <= 0:
            raise ValueError("stereo baseline must be positive")

    def contains(self, uv) -> bool:
        u, v = float(uv[0]), float(uv[1])
        return 0.0 <= u < self.width and 0.0 <= v < self.height


@dataclass(frozen=True)
class LandmarkObservation:
    frame_id: int
    landmark_id: int
    pixel: np.ndarray
    disparity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float))


def project(cam: CameraModel, point_c) -> np.ndarray:
    """Pinhole projection of a camera-frame point to pixel coordinates."""
    x, y, z = np.asarray(point_c, dtype=float)
    if z <= MIN_DEPTH:
        raise BehindCameraError(f"point depth {z} is not positive")
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])


def backproject(cam: CameraModel, uv, depth: float) -> np.ndarray:
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    u, v = np.asarray(uv, dtype=float)
    return np.array([(u - cam.cx) / cam.fx * depth,
                     (v - cam.cy) / cam.fy * depth, depth])


def stereo_depth(cam: CameraModel, disparity: float) -> float:
    if disparity <= 0:
        raise DegenerateTriangulationError(
            f"disparity must be positive, got {disparity}")
    return cam.fx * cam.baseline / disparity


def projection_jacobian(cam: CameraModel, point_c) -> np.ndarray:
    """2x3 derivative of the pinhole projection w.r.t. the camera-frame point."""
    x, y, z = np.asarray(point_c, dtype=float)
    if z <= MIN_DEPTH:
        raise BehindCameraError(f"point depth {z} is not positive")
    return np.array([[cam.fx / z, 0.0, -cam.fx * x / (z * z)],
                     [0.0, cam.fy / z, -cam.fy * y / (z * z)]])


def reprojection_residual(cam: CameraModel, T_WC: Pose, landmark_w,
                          obs: LandmarkObservation) -> np.ndarray:
    """Observed pixel minus the predicted projection of the world landmark."""
    x_c = T_WC.inverse().transform(np.asarray(landmark_w, dtype=float))
    return obs.pixel - project(cam, x_c)


def reprojection_residual_jacobians(cam: CameraModel, T_WC: Pose, landmark_w,
                                    obs: LandmarkObservation):
    """Residual plus Jacobians w.r.t. the camera pose perturbation
    (R <- R exp(phi), t <- t + dt in the world frame) and the landmark."""
    landmark_w = np.asarray(landmark_w, dtype=float)
    x_c = T_WC.inverse().transform(landmark_w)
    res = obs.pixel - project(cam, x_c)
    dpi = projection_jacobian(cam, x_c)
    j_phi = -dpi @ hat(x_c)
    j_t = dpi @ T_WC.R.T
    j_lm = -dpi @ T_WC.R.T
    return res, j_phi, j_t, j_lm


@dataclass(frozen=True)
class IntensityField:
    """Smooth scalar image: constant offset plus isotropic Gaussian bumps.

    ``sigma_px`` may be a scalar or one width per bump (the simulator scales
    widths inversely with landmark depth so bumps act like fixed-size blobs
    in the scene and patch warps stay photometrically consistent).
    """

    amplitudes: np.ndarray
    centers: np.ndarray
    sigma_px: float | np.ndarray
    width: int
    height: int
    offset: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        ctrs = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        if len(amps) != len(ctrs):
            raise ValueError("one amplitude per bump center required")
        sig = self.sigma_px
        if np.ndim(sig) > 0:
            sig = np.asarray(sig, dtype=float).reshape(-1)
            if len(sig) != len(amps):
                raise ValueError("one width per bump required")
            if np.any(sig <= 0):
                raise ValueError("bump widths must be positive")
            object.__setattr__(self, "sigma_px", sig)
        elif sig <= 0:
            raise ValueError("bump width must be positive")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "centers", ctrs)

    def _sigma2(self):
        return np.asarray(self.sigma_px, dtype=float) ** 2

    def contains(self, uv) -> bool:
        u, v = float(uv[0]), float(uv[1])
        return 0.0 <= u < self.width and 0.0 <= v < self.height

    def _near(self, pts: np.ndarray):
        """Bumps within reach of the query cluster. Beyond 9 sigma a bump's
        contribution is below double precision for values of order the
        amplitudes, so the cutoff does not perturb samples or gradients."""
        if len(self.amplitudes) == 0:
            return None
        cut = 9.0 * np.max(self.sigma_px)
        lo = pts.min(axis=0) - cut
        hi = pts.max(axis=0) + cut
        mask = np.all((self.centers >= lo) & (self.centers <= hi), axis=1)
        return mask if mask.sum() < len(mask) else None

    def sample(self, uv) -> float | np.ndarray:
        pts = np.atleast_2d(np.asarray(uv, dtype=float))
        if len(self.amplitudes) == 0:
            vals = np.full(len(pts), self.offset)
        else:
            mask = self._near(pts)
            ctr = self.centers if mask is None else self.centers[mask]
            amp = self.amplitudes if mask is None else self.amplitudes[mask]
            s2 = self._sigma2()
            if mask is not None and np.ndim(s2) > 0:
                s2 = s2[mask]
            d = pts[:, None, :] - ctr[None, :, :]
            e = np.exp(-0.5 * np.sum(d * d, axis=2) / s2)
            vals = self.offset + e @ amp
        return float(vals[0]) if np.asarray(uv).ndim == 1 else vals

    def gradient(self, uv) -> np.ndarray:
        """Analytic image gradient (dI/du, dI/dv)."""
        pts = np.atleast_2d(np.asarray(uv, dtype=float))
        if len(self.amplitudes) == 0:
            g = np.zeros((len(pts), 2))
        else:
            mask = self._near(pts)
            ctr = self.centers if mask is None else self.centers[mask]
            amp = self.amplitudes if mask is None else self.amplitudes[mask]
            s2 = self._sigma2()
            if mask is not None and np.ndim(s2) > 0:
                s2 = s2[mask]
            d = pts[:, None, :] - ctr[None, :, :]
            e = np.exp(-0.5 * np.sum(d * d, axis=2) / s2)
            w = e * amp[None, :] / s2
            g = -np.sum(w[:, :, None] * d, axis=1)
        return g[0] if np.asarray(uv).ndim == 1 else g


@dataclass(frozen=True)
class PatchPattern:
    """Pixel offsets of the residual patch plus the gradient down-weighting
    scale. Weights are w = c^2 / (c^2 + |grad I|^2): one at zero gradient and
    non-increasing in gradient magnitude."""

    offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0, 0], [-2, 0], [2, 0], [0, -2], [0, 2], [-1, -1], [1, -1], [-1, 1]],
            dtype=float))
    weight_scale: float = 50.0

    def __post_init__(self):
        offs = np.asarray(self.offsets, dtype=float).reshape(-1, 2)
        if not np.any(np.all(offs == 0.0, axis=1)):
            raise ValueError("pattern must contain the origin offset")
        object.__setattr__(self, "offsets", offs)

    def weights(self, field_ref: IntensityField, pixels) -> np.ndarray:
        g = np.atleast_2d(field_ref.gradient(pixels))
        g2 = np.sum(g * g, axis=1)
        c2 = self.weight_scale**2
        return c2 / (c2 + g2)


def _warp_patch(field_j: IntensityField, cam: CameraModel, T_CjCi: Pose,
                p, depth_p: float, pattern: PatchPattern):
    """Warp the patch around p from frame i into frame j at a shared depth.

    Returns (reference pixels, warped pixels, warped camera-frame points).
    """
    pix_i = np.asarray(p, dtype=float) + pattern.offsets
    pts_i = np.stack([backproject(cam, q, depth_p) for q in pix_i])
    pts_j = T_CjCi.transform(pts_i)
    warped = []
    for x in pts_j:
        q = project(cam, x)
        if not field_j.contains(q):
            raise OutOfDomainError(f"warped point {q} left the image domain")
        warped.append(q)
    return pix_i, np.stack(warped), pts_j


def photometric_residual(field_i: IntensityField, field_j: IntensityField,
                         cam: CameraModel, T_CjCi: Pose, p, depth_p: float,
                         pattern: PatchPattern) -> float:
    """Weighted patch intensity difference under the constant-depth warp."""
    pix_i, pix_j, _ = _warp_patch(field_j, cam, T_CjCi, p, depth_p, pattern)
    w = pattern.weights(field_i, pix_i)
    return float(np.sum(w * (field_j.sample(pix_j) - field_i.sample(pix_i))))


def photometric_residual_jacobian_rel(field_i: IntensityField,
                                      field_j: IntensityField,
                                      cam: CameraModel, T_CjCi: Pose, p,
                                      depth_p: float, pattern: PatchPattern):
    """Residual and its 1x6 Jacobian w.r.t. the relative pose perturbation
    (R <- R exp(phi), t additive)."""
    pix_i, pix_j, pts_j = _warp_patch(field_j, cam, T_CjCi, p, depth_p, pattern)
    w = pattern.weights(field_i, pix_i)
    res = float(np.sum(w * (field_j.sample(pix_j) - field_i.sample(pix_i))))
    pts_i = np.stack([backproject(cam, q, depth_p) for q in pix_i])
    j_phi = np.zeros(3)
    j_t = np.zeros(3)
    grads = np.atleast_2d(field_j.gradient(pix_j))
    for k in range(len(pix_i)):
        row = w[k] * grads[k] @ projection_jacobian(cam, pts_j[k])
        j_phi += row @ (-T_CjCi.R @ hat(pts_i[k]))
        j_t += row
    return res, j_phi.reshape(1, 3), j_t.reshape(1, 3)
