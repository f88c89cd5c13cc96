"""Error coordinates of a robot state relative to a reference pose.

Tracking is defined for the control point P at offset l ahead of the robot:
map-frame errors are the control-point offset from the reference position,
rotated into the reference frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import WorldState, wrap_angle


@dataclass(frozen=True)
class FrenetError:
    x_err: float    # longitudinal [m]
    y_err: float    # lateral [m]
    psi_err: float  # heading [rad], wrapped to (-pi, pi]
    v: float        # [m/s]
    omega: float    # [rad/s]

    def as_array(self) -> np.ndarray:
        return np.array([self.x_err, self.y_err, self.psi_err, self.v, self.omega])

    @staticmethod
    def from_array(e: np.ndarray) -> "FrenetError":
        return FrenetError(float(e[0]), float(e[1]), wrap_angle(float(e[2])), float(e[3]), float(e[4]))

    def mirrored(self) -> "FrenetError":
        """Reflection across the reference path (the system symmetry)."""
        return FrenetError(self.x_err, -self.y_err, wrap_angle(-self.psi_err), self.v, -self.omega)


def to_frenet(s: WorldState, ref_pose, l: float = 0.0) -> FrenetError:
    """Transform a world state into error coordinates at the given reference pose."""
    x_ref, y_ref, psi_ref = ref_pose
    ex = s.x + l * math.cos(s.psi) - x_ref
    ey = s.y + l * math.sin(s.psi) - y_ref
    c, sn = math.cos(psi_ref), math.sin(psi_ref)
    return FrenetError(
        x_err=c * ex + sn * ey,
        y_err=-sn * ex + c * ey,
        psi_err=wrap_angle(s.psi - psi_ref),
        v=s.v,
        omega=s.omega,
    )


def from_frenet(e: FrenetError, ref_pose, l: float = 0.0) -> WorldState:
    """Algebraic inverse of to_frenet (recovers the map-frame state)."""
    x_ref, y_ref, psi_ref = ref_pose
    c, sn = math.cos(psi_ref), math.sin(psi_ref)
    ex = c * e.x_err - sn * e.y_err
    ey = sn * e.x_err + c * e.y_err
    psi = wrap_angle(e.psi_err + psi_ref)
    return WorldState(
        x=ex + x_ref - l * math.cos(psi),
        y=ey + y_ref - l * math.sin(psi),
        psi=psi,
        v=e.v,
        omega=e.omega,
    )


def frenet_jacobian(s: WorldState, ref_pose, l: float = 0.0) -> np.ndarray:
    """5x5 Jacobian of the error vector with respect to the world state."""
    _, _, psi_ref = ref_pose
    c, sn = math.cos(psi_ref), math.sin(psi_ref)
    dpx = -l * math.sin(s.psi)  # d(ex)/d(psi)
    dpy = l * math.cos(s.psi)   # d(ey)/d(psi)
    J = np.zeros((5, 5))
    J[0, 0] = c
    J[0, 1] = sn
    J[0, 2] = c * dpx + sn * dpy
    J[1, 0] = -sn
    J[1, 1] = c
    J[1, 2] = -sn * dpx + c * dpy
    J[2, 2] = 1.0
    J[3, 3] = 1.0
    J[4, 4] = 1.0
    return J
