"""Hand-eye calibration: recover the end-effector -> camera transform.

Two poses of the arm looking at the same fixed marker give
``T_BE1 X T_CT1 = T_BE2 X T_CT2``, i.e. ``A X = X B`` with
``A = T_BE1^-1 T_BE2`` and ``B = T_CT1 T_CT2^-1``. The rotation is taken from
the null space of the stacked Kronecker system and the translation from a
linear least-squares fit over all pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateMotion, LengthMismatch, TooFewPoses
from .geometry import (
    RigidTransform,
    compose,
    invert,
    nearest_rotation,
    rotation_between,
    rotation_to_rotvec,
)

PARALLEL_AXIS_TOL = 1e-6


@dataclass(frozen=True)
class MotionPair:
    a: RigidTransform
    b: RigidTransform


def build_motion_pairs(
    robot_poses: Sequence[RigidTransform],
    marker_poses: Sequence[RigidTransform],
    all_pairs: bool = False,
) -> list[MotionPair]:
    """Relative motions between poses ``i`` and ``j``.

    Consecutive pairs ``(i, i+1)`` by default; ``all_pairs`` uses every
    ``i < j`` combination instead.
    """
    if len(robot_poses) != len(marker_poses):
        raise LengthMismatch(f"{len(robot_poses)} robot poses vs {len(marker_poses)} marker poses")
    n = len(robot_poses)
    if n < 3:
        raise TooFewPoses(f"need at least 3 poses, got {n}")
    if all_pairs:
        index_pairs = itertools.combinations(range(n), 2)
    else:
        index_pairs = zip(range(n - 1), range(1, n))
    pairs = []
    for i, j in index_pairs:
        a = compose(invert(robot_poses[i]), robot_poses[j])
        b = compose(marker_poses[i], invert(marker_poses[j]))
        pairs.append(MotionPair(a, b))
    return pairs


def _check_axes(pairs: Sequence[MotionPair]) -> None:
    axes = []
    for p in pairs:
        rv = rotation_to_rotvec(p.a.rotation)
        angle = np.linalg.norm(rv)
        if angle > 1e-9:
            axes.append(rv / angle)
    if len(axes) < 2:
        raise DegenerateMotion("fewer than two pairs with non-trivial rotation")
    s = np.linalg.svd(np.array(axes), compute_uv=False)
    # rank-one axis matrix means every axis is (anti)parallel to the same line
    if s[1] / s[0] < PARALLEL_AXIS_TOL:
        raise DegenerateMotion("all rotation axes are parallel; translation along the axis is unobservable")


def solve_ax_xb(pairs: Sequence[MotionPair]) -> RigidTransform:
    """Kronecker-product solution of ``A X = X B``."""
    if len(pairs) < 2:
        raise TooFewPoses(f"need at least 2 motion pairs, got {len(pairs)}")
    _check_axes(pairs)

    eye = np.eye(3)
    # column-major vec: vec(R_A R_X) = (I kron R_A) vec(R_X), vec(R_X R_B) = (R_B^T kron I) vec(R_X)
    m = np.vstack([np.kron(eye, p.a.rotation) - np.kron(p.b.rotation.T, eye) for p in pairs])
    _, _, vt = np.linalg.svd(m)
    rx = vt[-1].reshape(3, 3, order="F")
    det = np.linalg.det(rx)
    if det < 0:
        rx = -rx
    rx = nearest_rotation(rx)

    c = np.vstack([p.a.rotation - eye for p in pairs])
    d = np.concatenate([rx @ p.b.translation - p.a.translation for p in pairs])
    tx, *_ = np.linalg.lstsq(c, d, rcond=None)
    return RigidTransform(rx, tx)


def handeye_residual(pairs: Sequence[MotionPair], x: RigidTransform) -> dict:
    """RMS rotation (rad) and translation (mm) mismatch of ``A X`` vs ``X B``."""
    if len(pairs) == 0:
        raise ValueError("no motion pairs")
    rot = []
    trans = []
    for p in pairs:
        ax = compose(p.a, x)
        xb = compose(x, p.b)
        rot.append(rotation_between(ax.rotation, xb.rotation))
        trans.append(np.linalg.norm(ax.translation - xb.translation))
    return {
        "rms_rotation": float(np.sqrt(np.mean(np.square(rot)))),
        "rms_translation": float(np.sqrt(np.mean(np.square(trans)))),
    }
