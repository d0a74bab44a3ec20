"""Pose-dependent bias model for a six-axis force/torque sensor.

Unloaded readings are regressed on the tool pose with a tensor-product
Bernstein polynomial; at run time the predicted bias is subtracted from the
loaded reading.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .errors import RankDeficient
from .geometry import RigidTransform, nearest_rotation, rotation_to_rotvec

SMALL_SAMPLE_COUNT = 4096
ROTATION_DIMS = (0, 1, 2)
ALL_DIMS = (0, 1, 2, 3, 4, 5)


class ExtrapolationWarning(UserWarning):
    """A pose fell outside the training box and was clamped."""


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force (N) and torque (N mm) in the sensor frame."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        f = np.array(self.force, dtype=float).reshape(3)
        t = np.array(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("wrench components must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", t)

    @classmethod
    def zero(cls) -> Wrench:
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v) -> Wrench:
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def __add__(self, other: Wrench) -> Wrench:
        return Wrench(self.force + other.force, self.torque + other.torque)

    def __sub__(self, other: Wrench) -> Wrench:
        return Wrench(self.force - other.force, self.torque - other.torque)


def bernstein_basis(u, degree: int) -> np.ndarray:
    """Bernstein polynomials ``C(n,k) u^k (1-u)^(n-k)`` for k = 0..n.

    ``u`` may be a scalar or an array; the basis index is the last axis.
    Values outside [0, 1] are clamped and an :class:`ExtrapolationWarning`
    is issued.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)):
        warnings.warn("input outside [0, 1] clamped", ExtrapolationWarning, stacklevel=2)
        u = np.clip(u, 0.0, 1.0)
    k = np.arange(degree + 1)
    coef = np.array([comb(degree, int(i)) for i in k], dtype=float)
    uu = u[..., None]
    return coef * uu**k * (1.0 - uu) ** (degree - k)


def pose_vector(t: RigidTransform, reference: np.ndarray | None = None) -> np.ndarray:
    """6-vector (rotation vector, translation) of a tool pose.

    With ``reference`` the rotation vector is taken relative to it,
    ``log(reference^T R)``, which keeps the chart away from the angle-pi seam
    when the workspace is centred on a tool-down orientation.
    """
    r = t.rotation if reference is None else np.asarray(reference).T @ t.rotation
    return np.concatenate([rotation_to_rotvec(r), t.translation])


@dataclass(frozen=True, eq=False)
class BiasModel:
    degree: int
    dims: tuple
    lower: np.ndarray
    upper: np.ndarray
    coefficients: np.ndarray  # (6, basis size)
    reference_rotation: np.ndarray
    train_rms: float = float("nan")

    @property
    def basis_size(self) -> int:
        return (self.degree + 1) ** len(self.dims)

    def design(self, poses) -> np.ndarray:
        """Tensor-product design matrix for an (N, 6) array of pose vectors."""
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        span = self.upper - self.lower
        u = (poses[:, self.dims] - self.lower) / span
        per_dim = bernstein_basis(u, self.degree)  # (N, d, n+1)
        out = np.ones((poses.shape[0], 1))
        for j in range(len(self.dims)):
            out = (out[:, :, None] * per_dim[:, j, None, :]).reshape(poses.shape[0], -1)
        return out

    def predict(self, pose) -> np.ndarray:
        """Predicted unloaded reading(s) as 6-vectors."""
        single = np.ndim(pose) == 1
        out = self.design(pose) @ self.coefficients.T
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "dims": list(self.dims),
            "normalization": {"min": self.lower.tolist(), "max": self.upper.tolist()},
            "reference_rotation": self.reference_rotation.ravel().tolist(),
            "coefficients": self.coefficients.tolist(),
            "train_rms": self.train_rms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> BiasModel:
        return cls(
            degree=int(d["degree"]),
            dims=tuple(d["dims"]),
            lower=np.asarray(d["normalization"]["min"], dtype=float),
            upper=np.asarray(d["normalization"]["max"], dtype=float),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            reference_rotation=np.reshape(d["reference_rotation"], (3, 3)),
            train_rms=float(d.get("train_rms", float("nan"))),
        )


def _as_pose_vector(pose, reference) -> np.ndarray:
    if isinstance(pose, RigidTransform):
        return pose_vector(pose, reference)
    return np.asarray(pose, dtype=float).reshape(6)


def fit_bias_model(
    samples: Sequence[tuple[RigidTransform | np.ndarray, Wrench]],
    degree: int = 3,
    dims: Sequence[int] | None = None,
    reference_rotation=None,
) -> BiasModel:
    """Per-channel least squares on a tensor-product Bernstein basis.

    Poses are either :class:`RigidTransform` objects or ready-made 6-vectors
    (rotation vector, translation). Transforms are charted relative to
    ``reference_rotation``, defaulting to the chordal mean of the training
    orientations; 6-vectors are used as given.

    ``dims`` selects which pose coordinates enter the basis. By default all
    six are used once there are at least 4096 samples; below that only the
    three rotation coordinates are used, since a full 6-D cubic basis has
    4096 terms.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if reference_rotation is None:
        rots = [p.rotation for p, _ in samples if isinstance(p, RigidTransform)]
        reference_rotation = nearest_rotation(np.sum(rots, axis=0)) if rots else np.eye(3)
    ref = np.asarray(reference_rotation, dtype=float)
    poses = np.array([_as_pose_vector(p, ref) for p, _ in samples])
    readings = np.array([w.vector() for _, w in samples])
    if dims is None:
        dims = ALL_DIMS if len(samples) >= SMALL_SAMPLE_COUNT else ROTATION_DIMS
    dims = tuple(int(d) for d in dims)

    lower = poses[:, dims].min(axis=0)
    upper = poses[:, dims].max(axis=0)
    # a constant input column carries no information; give it a unit box
    flat = upper - lower <= 1e-12
    upper = np.where(flat, lower + 1.0, upper)

    model = BiasModel(degree, dims, lower, upper, np.zeros((6, 0)), ref)
    if len(samples) < model.basis_size:
        raise RankDeficient(f"{len(samples)} samples for a basis of size {model.basis_size}")
    a = model.design(poses)
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise RankDeficient(f"design matrix is singular (condition {s[0] / max(s[-1], 1e-300):.3e})")
    coef, *_ = np.linalg.lstsq(a, readings, rcond=None)
    resid = readings - a @ coef
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    return BiasModel(degree, dims, lower, upper, coef.T.copy(), ref, rms)


def compensate(model: BiasModel, pose, reading: Wrench) -> Wrench:
    """Subtract the predicted unloaded reading at ``pose``."""
    pred = model.predict(_as_pose_vector(pose, model.reference_rotation))
    return reading - Wrench.from_vector(pred)
