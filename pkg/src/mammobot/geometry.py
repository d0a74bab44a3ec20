"""Rigid-body and projective primitives.

Conventions: a transform ``T_AB`` maps coordinates in frame B into frame A,
``p_A = R @ p_B + t``. Lengths are millimetres, angles radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EYE3 = np.eye(3)


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): 3x3 rotation plus translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(_EYE3, np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(_EYE3, t)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(rotvec_to_rotation(rotvec), translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return bool(
            np.all(np.isfinite(r))
            and np.all(np.isfinite(self.translation))
            and np.linalg.norm(r.T @ r - _EYE3) < tol
            and abs(np.linalg.det(r) - 1.0) < tol
        )

    def __matmul__(self, other):
        if isinstance(other, RigidTransform):
            return compose(self, other)
        return NotImplemented

    def inverse(self) -> RigidTransform:
        return invert(self)

    def apply(self, p) -> np.ndarray:
        return transform_point(self, p)

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> RigidTransform:
        return cls(np.reshape(d["rotation"], (3, 3)), d["translation"])

    def __repr__(self):
        rv = rotation_to_rotvec(self.rotation)
        return f"RigidTransform(rotvec={np.round(rv, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class AxisAngle:
    axis: np.ndarray
    angle: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("axis must be a non-zero finite vector")
        angle = float(self.angle)
        if angle < 0.0:
            axis, angle = -axis, -angle
        if angle > np.pi + 1e-12:
            raise ValueError("angle must lie in [0, pi]")
        object.__setattr__(self, "axis", _frozen(axis / n, (3,)))
        object.__setattr__(self, "angle", angle)

    def rotvec(self) -> np.ndarray:
        return self.axis * self.angle


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def transform_point(t: RigidTransform, p) -> np.ndarray:
    """Map a point (or an (N, 3) array of points) through ``t``."""
    p = np.asarray(p, dtype=float)
    return p @ t.rotation.T + t.translation


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_between(a, b) -> float:
    """Geodesic angle of ``a.T @ b`` in radians."""
    r = np.asarray(a).T @ np.asarray(b)
    c = (np.trace(r) - 1.0) / 2.0
    # sin from the skew part: arccos(c) alone cannot resolve angles below ~1e-8
    s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return float(np.arctan2(s, c))


def rotvec_to_rotation(rotvec) -> np.ndarray:
    """Rodrigues formula with a series fallback near zero."""
    w = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-8:
        return _EYE3 + k + 0.5 * (k @ k)
    return _EYE3 + (np.sin(theta) / theta) * k + ((1.0 - np.cos(theta)) / theta**2) * (k @ k)


def rotation_to_rotvec(r) -> np.ndarray:
    """Inverse of :func:`rotvec_to_rotation`; angle in [0, pi].

    At exactly pi the sign of the axis is ambiguous; either sign is returned.
    """
    r = np.asarray(r, dtype=float)
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = 0.5 * np.linalg.norm(w)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < 1e-8:
        return 0.5 * w
    if theta < np.pi / 2:
        return w * (theta / (2.0 * s))
    # near pi the skew part vanishes; read the axis off the symmetric part
    # symmetric part is c I + (1 - c) a a^T
    b = (0.5 * (r + r.T) - c * _EYE3) / (1.0 - c)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(b[i, i])
    if axis @ w < 0.0:
        axis = -axis
    return axis * theta


def axis_angle_to_rotation(aa: AxisAngle) -> np.ndarray:
    return rotvec_to_rotation(aa.axis * aa.angle)


def rotation_to_axis_angle(r) -> AxisAngle:
    rv = rotation_to_rotvec(r)
    angle = float(np.linalg.norm(rv))
    if angle == 0.0:
        return AxisAngle(np.array([0.0, 0.0, 1.0]), 0.0)
    return AxisAngle(rv / angle, angle)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def nearest_rotation(m) -> np.ndarray:
    """Polar projection of a 3x3 matrix onto SO(3), with det sign correction."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def left_jacobian(rotvec) -> np.ndarray:
    """Left Jacobian of SO(3): d(exp(w) q) = -[exp(w) q]x J_l(w) dw."""
    w = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-5:
        return _EYE3 + 0.5 * k + (k @ k) / 6.0
    a = (1.0 - np.cos(theta)) / theta**2
    b = (theta - np.sin(theta)) / theta**3
    return _EYE3 + a * k + b * (k @ k)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (Haar measure)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def perturb(t: RigidTransform, rng: np.random.Generator, sigma_rot: float, sigma_t: float) -> RigidTransform:
    """Right-multiply ``t`` by a random small motion.

    The rotation axis is uniform on the sphere and the angle is N(0, sigma_rot);
    the translation offset is N(0, sigma_t**2 I) in the parent frame.
    """
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    # draws are unconditional so zero-noise runs consume the same stream
    angle = rng.normal() * sigma_rot
    dt = rng.normal(size=3) * sigma_t
    return RigidTransform(t.rotation @ rotvec_to_rotation(axis * angle), t.translation + dt)
