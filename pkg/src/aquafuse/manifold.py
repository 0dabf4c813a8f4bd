"""Rotation-group and rigid-transform primitives.

Rotations are plain 3x3 numpy arrays (direction-cosine matrices). Exp and Log
switch to truncated series below ``SMALL_ANGLE`` to avoid cancellation in the
Rodrigues coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8


class BranchAmbiguityError(ValueError):
    """Rotation angle at or near pi; the principal log branch is ill defined."""


def hat(v) -> np.ndarray:
    """Skew-symmetric matrix such that hat(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp_so3(phi) -> np.ndarray:
    """Rodrigues map from a rotation vector (radians) to a rotation matrix."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("rotation vector must be finite")
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < SMALL_ANGLE:
        # second-order series in the full (unnormalized) skew matrix
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def log_so3(r) -> np.ndarray:
    """Principal rotation vector of a rotation matrix.

    Only the principal branch is supported; angles within 1e-6 of pi raise
    :class:`BranchAmbiguityError`.
    """
    r = np.asarray(r, dtype=float)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta >= np.pi - 1e-6:
        raise BranchAmbiguityError(f"rotation angle {theta:.9f} too close to pi")
    w = vee(r - r.T) / 2.0  # equals sin(theta) * axis
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    return w * (theta / np.sin(theta))


def right_jacobian_so3(phi) -> np.ndarray:
    """Right Jacobian Jr with exp(phi + d) ~= exp(phi) @ exp(Jr(phi) @ d)."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 6.0
    a = (1.0 - np.cos(theta)) / (theta * theta)
    b = (theta - np.sin(theta)) / (theta**3)
    return np.eye(3) - a * k + b * (k @ k)


def right_jacobian_inv_so3(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 12.0
    c = 1.0 / (theta * theta) - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * k + c * (k @ k)


def check_rotation(r, tol: float = 1e-9) -> np.ndarray:
    """Validate orthonormality and unit determinant; returns the array."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise ValueError("matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1")
    return r


def rotation_angle(r) -> float:
    """Geodesic angle of a rotation matrix in radians (0..pi, branch safe)."""
    cos_theta = np.clip((np.trace(np.asarray(r)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_theta))


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi - 0.1) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))


@dataclass(frozen=True)
class Pose:
    """Rigid transform (R, t): maps local coordinates x to R @ x + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "Pose":
        rt = self.R.T
        return Pose(rt, -rt @ self.t)

    def transform(self, points) -> np.ndarray:
        """Apply to one point (3,) or a batch (n, 3)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self.R @ pts + self.t
        return pts @ self.R.T + self.t
