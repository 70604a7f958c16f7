"""4-DOF human-arm kinematics for the ergonomic cost.

Joint convention (fixed here; only J^T f magnitudes enter the cost):
q = 0 points the extended arm along world -z. q1 rotates about world y,
q2 about world x, q3 about the upper-arm axis, q4 is elbow flexion in the
arm's sagittal (local x-z) plane, q4 in [0, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnreachableTarget(ValueError):
    """Hand target outside the arm workspace."""


@dataclass(frozen=True)
class ArmGeometry:
    l1: float  # upper arm [m]
    l2: float  # forearm [m]
    shoulder: np.ndarray  # (3,) [m]

    def __post_init__(self):
        object.__setattr__(self, "shoulder", np.asarray(self.shoulder, dtype=float).reshape(3))
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("arm segment lengths must be positive")


def _ry(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rx(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rz(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _dry(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[-s, 0, c], [0, 0, 0], [-c, 0, -s]])


def _drx(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[0, 0, 0], [0, -s, -c], [0, c, -s]])


def _drz(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[-s, -c, 0], [c, -s, 0], [0, 0, 0]])


def _segments(geom: ArmGeometry, q, q4):
    upper = np.array([0.0, 0.0, -geom.l1])
    fore = np.array([geom.l2 * math.sin(q4), 0.0, -geom.l2 * math.cos(q4)])
    return upper, fore


def fk(q, geom: ArmGeometry) -> np.ndarray:
    """Hand position for joint angles q = (q1, q2, q3, q4)."""
    q1, q2, q3, q4 = np.asarray(q, dtype=float).reshape(4)
    R = _ry(q1) @ _rx(q2) @ _rz(q3)
    upper, fore = _segments(geom, q, q4)
    return geom.shoulder + R @ (upper + fore)


def jacobian(q, geom: ArmGeometry) -> np.ndarray:
    """Analytic 3x4 Jacobian d(hand)/dq."""
    q1, q2, q3, q4 = np.asarray(q, dtype=float).reshape(4)
    R1, R2, R3 = _ry(q1), _rx(q2), _rz(q3)
    upper, fore = _segments(geom, q, q4)
    v = upper + fore
    J = np.empty((3, 4))
    J[:, 0] = _dry(q1) @ R2 @ R3 @ v
    J[:, 1] = R1 @ _drx(q2) @ R3 @ v
    J[:, 2] = R1 @ R2 @ _drz(q3) @ v
    dfore = np.array([geom.l2 * math.cos(q4), 0.0, geom.l2 * math.sin(q4)])
    J[:, 3] = R1 @ R2 @ R3 @ dfore
    return J


def ik_simplified(hand, geom: ArmGeometry, clamp: bool = False) -> np.ndarray:
    """Closed-form IK on the q3 = 0 slice, elbow-down branch (q4 >= 0).

    Raises UnreachableTarget outside the annulus [|l1-l2|, l1+l2] unless
    clamp=True, which projects onto the nearest reachable radius.
    """
    p = np.asarray(hand, dtype=float).reshape(3) - geom.shoulder
    r = float(np.linalg.norm(p))
    r_min, r_max = abs(geom.l1 - geom.l2), geom.l1 + geom.l2
    if r < r_min - 1e-12 or r > r_max + 1e-12:
        if not clamp:
            raise UnreachableTarget(f"target at radius {r:.4f} outside [{r_min:.4f}, {r_max:.4f}]")
        if r < 1e-12:
            p = np.array([0.0, 0.0, -r_min if r_min > 0 else -r_max])
            r = float(np.linalg.norm(p))
        else:
            r_new = min(max(r, r_min), r_max)
            p = p * (r_new / r)
            r = r_new
    r = min(max(r, r_min), r_max)

    cos_int = (geom.l1**2 + geom.l2**2 - r**2) / (2.0 * geom.l1 * geom.l2)
    cos_int = min(max(cos_int, -1.0), 1.0)
    q4 = math.pi - math.acos(cos_int)

    # Local arm vector on the q3 = 0 slice; solve Ry(q1) Rx(q2) v = p.
    vx = geom.l2 * math.sin(q4)
    vz = -geom.l1 - geom.l2 * math.cos(q4)
    if abs(vz) > 1e-12:
        s2 = -p[1] / vz
        s2 = min(max(s2, -1.0), 1.0)
        q2 = math.asin(s2)
    else:
        q2 = 0.0
    w = math.cos(q2) * vz
    q1 = math.atan2(p[0] * w - p[2] * vx, p[0] * vx + p[2] * w)
    return np.array([q1, q2, 0.0, q4])


def joint_torque(q, f_hand, geom: ArmGeometry) -> np.ndarray:
    """tau = J^T f for a linear force at the hand."""
    return jacobian(q, geom).T @ np.asarray(f_hand, dtype=float).reshape(3)
