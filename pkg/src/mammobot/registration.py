"""Mammogram to robot registration through four dual-modality markers.

The plate frame is built from the marker poses seen by the camera, a
homography from mammogram pixels to plate millimetres is estimated with the
DLT, and lesion pixels are lifted back onto the plate surface in the robot
base frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateMarkers,
    PointAtInfinity,
    RankAmbiguity,
)
from .geometry import RigidTransform, transform_point

MAX_MARKER_TILT = np.radians(45.0)
COLLINEAR_AREA = 1e-6
RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PlatePose:
    t_bp: RigidTransform
    marker_centers_plate: np.ndarray  # (4, 2) mm
    coplanarity_residual: float  # max |z| of the markers in the plate frame, mm


@dataclass(frozen=True, eq=False)
class Homography:
    """Maps mammogram pixels (u, v, 1) to plate millimetres (x, y, 1)."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float).reshape(3, 3)
        h = h / np.linalg.norm(h)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def apply(self, pts) -> np.ndarray:
        """Dehomogenised image of (N, 2) points or a single 2-vector."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        ph = np.column_stack([p, np.ones(len(p))]) @ self.h.T
        out = ph[:, :2] / ph[:, 2:3]
        return out if np.ndim(pts) > 1 else out[0]


@dataclass(frozen=True)
class Correspondence:
    plate: tuple  # (x, y) mm
    mammogram: tuple  # (u, v) px


def estimate_plate_pose(
    marker_poses_base: Sequence[RigidTransform],
    coplanarity_tol: float | None = None,
) -> PlatePose:
    """Plate frame from four marker poses in the base frame.

    z is the normalised mean of the marker z-axes, y follows the
    ``(p4 - p1) + (p3 - p2)`` edge direction made orthogonal to z, x = y cross z,
    and the origin is the marker centroid.
    """
    if len(marker_poses_base) != 4:
        raise DegenerateMarkers(f"need exactly four markers, got {len(marker_poses_base)}")
    p = np.array([m.translation for m in marker_poses_base])
    zs = np.array([m.rotation[:, 2] for m in marker_poses_base])
    zsum = zs.sum(axis=0)
    nz = zsum / np.linalg.norm(zsum)
    tilt = np.arccos(np.clip(zs @ nz, -1.0, 1.0))
    if np.any(tilt > MAX_MARKER_TILT):
        raise DegenerateMarkers("marker z-axes disagree by more than 45 degrees")

    edge = (p[3] - p[0]) + (p[2] - p[1])
    en = np.linalg.norm(edge)
    if en < 1e-9:
        raise DegenerateMarkers("marker edge vector vanishes")
    ny_prime = edge / en
    ortho = ny_prime - (ny_prime @ nz) * nz
    on = np.linalg.norm(ortho)
    if on < 1e-9:
        raise DegenerateMarkers("marker edge is parallel to the plate normal")
    ny = ortho / on
    nx = np.cross(ny, nz)
    t_bp = RigidTransform(np.column_stack([nx, ny, nz]), p.mean(axis=0))

    local = transform_point(t_bp.inverse(), p)
    resid = float(np.max(np.abs(local[:, 2])))
    if coplanarity_tol is not None and resid > coplanarity_tol:
        raise DegenerateMarkers(f"markers not coplanar: |z| up to {resid:.3g} mm")
    return PlatePose(t_bp, local[:, :2].copy(), resid)


def project_to_plate(pp: PlatePose, p_base) -> tuple[np.ndarray, float]:
    """Homogeneous plate coordinates (x, y, 1) and the discarded z in mm."""
    q = transform_point(pp.t_bp.inverse(), p_base)
    return np.array([q[0], q[1], 1.0]), float(q[2])


def _hartley(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.mean(np.linalg.norm(pts - c, axis=1))
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_matrix(plate_xy: np.ndarray, mammo_uv: np.ndarray) -> np.ndarray:
    """Stacked two-row constraints per correspondence.

    For ``x_i ~ H p_i`` with ``p_i = (u, v, 1)``:
    ``[0, p^T, -y p^T]`` and ``[-p^T, 0, x p^T]``.
    """
    rows = []
    for (x, y), (u, v) in zip(plate_xy, mammo_uv):
        pm = np.array([u, v, 1.0])
        z = np.zeros(3)
        rows.append(np.concatenate([z, pm, -y * pm]))
        rows.append(np.concatenate([-pm, z, x * pm]))
    return np.array(rows)


def _fix_sign(h: np.ndarray) -> np.ndarray:
    h = h / np.linalg.norm(h)
    if abs(h[2, 2]) > 1e-12:
        return h if h[2, 2] > 0 else -h
    k = int(np.argmax(np.abs(h.ravel())))
    return h if h.ravel()[k] > 0 else -h


def _collinear(pts: np.ndarray) -> bool:
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            for k in range(j + 1, len(pts)):
                a, b, c = pts[i], pts[j], pts[k]
                area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                if area < COLLINEAR_AREA:
                    return True
    return False


def estimate_homography_dlt(
    corrs: Sequence[Correspondence],
    normalize: bool = True,
) -> Homography:
    """DLT homography from mammogram pixels to plate mm.

    The solution is the right singular vector of ``A`` for its smallest
    singular value (the eigenvector of ``A^T A`` with smallest eigenvalue).
    Hartley normalisation is applied to both point sets unless disabled.
    """
    if len(corrs) < 4:
        raise DegenerateConfiguration(f"need four correspondences, got {len(corrs)}")
    plate = np.array([c.plate for c in corrs], dtype=float)
    mammo = np.array([c.mammogram for c in corrs], dtype=float)
    if _collinear(mammo):
        raise DegenerateConfiguration("three mammogram points are collinear")

    if normalize:
        tp, tm = _hartley(plate), _hartley(mammo)
        plate_n = (np.column_stack([plate, np.ones(len(plate))]) @ tp.T)[:, :2]
        mammo_n = (np.column_stack([mammo, np.ones(len(mammo))]) @ tm.T)[:, :2]
    else:
        plate_n, mammo_n = plate, mammo

    a = dlt_matrix(plate_n, mammo_n)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    s = np.concatenate([s, np.zeros(9 - len(s))])
    if s[-2] <= RANK_TOL * s[0]:
        raise RankAmbiguity("null space of the DLT system is more than one-dimensional")
    h = vt[-1].reshape(3, 3)
    if normalize:
        h = np.linalg.inv(tp) @ h @ tm
    return Homography(_fix_sign(h))


def map_lesion(pp: PlatePose, h: Homography, lesion_px) -> np.ndarray:
    """Lesion pixel to a base-frame point on the plate surface (mm)."""
    p = np.asarray(lesion_px, dtype=float)
    if p.shape == (2,):
        p = np.array([p[0], p[1], 1.0])
    q = h.h @ p
    if abs(q[2]) <= 1e-12:
        raise PointAtInfinity("lesion maps to a point at infinity")
    xy = q[:2] / q[2]
    return transform_point(pp.t_bp, np.array([xy[0], xy[1], 0.0]))


def correspondences_from_markers(pp: PlatePose, markers_px) -> list[Correspondence]:
    return [
        Correspondence(tuple(pp.marker_centers_plate[i]), tuple(np.asarray(markers_px[i], dtype=float)))
        for i in range(4)
    ]
