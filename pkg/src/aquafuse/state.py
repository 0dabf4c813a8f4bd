"""Per-keyframe navigation state shared by the sensor models and the solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold import Pose, exp_so3


@dataclass
class NavState:
    """Rotation, position and velocity of the body in the world frame plus
    the accelerometer, gyroscope and DVL-velocity biases."""

    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bv: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.bg = np.asarray(self.bg, dtype=float)
        self.ba = np.asarray(self.ba, dtype=float)
        self.bv = np.asarray(self.bv, dtype=float)

    def copy(self) -> "NavState":
        return NavState(self.R.copy(), self.p.copy(), self.v.copy(),
                        self.bg.copy(), self.ba.copy(), self.bv.copy())

    def pose(self) -> Pose:
        return Pose(self.R, self.p)

    def retract(self, delta: np.ndarray) -> "NavState":
        """Apply an 18-dof local update [phi, dp, dv, dbg, dba, dbv].

        The rotation update is applied on the right: R <- R @ exp(phi).
        """
        d = np.asarray(delta, dtype=float)
        return NavState(
            self.R @ exp_so3(d[0:3]),
            self.p + d[3:6],
            self.v + d[6:9],
            self.bg + d[9:12],
            self.ba + d[12:15],
            self.bv + d[15:18],
        )


# slice layout of the 18-dof local parametrization
PHI = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
BV = slice(15, 18)
STATE_DOF = 18
