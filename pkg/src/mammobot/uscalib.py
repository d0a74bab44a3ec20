"""Ultrasound probe calibration from a point fiducial (the BXp problem).

A fixed point imaged from many arm poses must map to the same place in the
base frame: ``B_i X p_i = B_j X p_j``. The objective is the spread of the
mapped points about their mean, minimised over the image-to-flange transform
``X`` (rotation vector + translation) and the two pixel scales.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import Diverged, TooFewSamples
from .geometry import (
    RigidTransform,
    left_jacobian,
    rotation_to_rotvec,
    rotvec_to_rotation,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BxpSample:
    b: RigidTransform
    p_img: np.ndarray

    def __post_init__(self):
        p = np.array(self.p_img, dtype=float).reshape(2)
        if not np.all(np.isfinite(p)):
            raise ValueError("image point must be finite")
        object.__setattr__(self, "p_img", p)

    def to_dict(self) -> dict:
        return {"b": self.b.to_dict(), "p_img": [float(v) for v in self.p_img]}

    @classmethod
    def from_dict(cls, d: dict) -> BxpSample:
        return cls(RigidTransform.from_dict(d["b"]), d["p_img"])


@dataclass(frozen=True, eq=False)
class UsCalibration:
    x: RigidTransform
    scale: np.ndarray

    def __post_init__(self):
        s = np.array(self.scale, dtype=float).reshape(2)
        if np.any(s <= 0):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "scale", s)

    def params(self) -> np.ndarray:
        return np.concatenate([rotation_to_rotvec(self.x.rotation), self.x.translation, self.scale])

    @classmethod
    def from_params(cls, theta) -> UsCalibration:
        theta = np.asarray(theta, dtype=float)
        return cls(RigidTransform(rotvec_to_rotation(theta[:3]), theta[3:6]), theta[6:8])

    def image_to_mm(self, p_img) -> np.ndarray:
        """Image-plane point(s) in the probe image frame, z = 0."""
        p = np.atleast_2d(np.asarray(p_img, dtype=float))
        out = np.zeros((p.shape[0], 3))
        out[:, :2] = p * self.scale
        return out if np.ndim(p_img) > 1 else out[0]

    def to_dict(self) -> dict:
        return {"x": self.x.to_dict(), "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d: dict) -> UsCalibration:
        return cls(RigidTransform.from_dict(d["x"]), d["scale"])


@dataclass
class SolveOptions:
    # step cap in preconditioned coordinates
    learning_rate: float = 1.0
    max_iters: int = 5000
    grad_tol: float = 1e-10
    fix_scale: bool = False
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    # per-parameter step scaling; None uses the inverse Gauss-Newton diagonal at init
    preconditioner: tuple | None = None
    # stop once this many consecutive accepted steps leave the cost unchanged
    stall_iters: int = 20


@dataclass
class SolveReport:
    converged: bool
    reason: str
    iterations: int
    cost: float
    grad_norm: float
    trace: list = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "cost", "grad_norm", "step"])
            for row in self.trace:
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def _stack(samples: Sequence[BxpSample]):
    rb = np.array([s.b.rotation for s in samples])
    tb = np.array([s.b.translation for s in samples])
    p = np.array([s.p_img for s in samples])
    return rb, tb, p


def _mapped(rb, tb, p, theta):
    r = rotvec_to_rotation(theta[:3])
    q = np.zeros((len(p), 3))
    q[:, :2] = p * theta[6:8]
    xq = q @ r.T + theta[3:6]
    return np.einsum("nij,nj->ni", rb, xq) + tb, q, r


def _gn_diagonal(rb, tb, p, theta) -> np.ndarray:
    """Diagonal of J^T J for the centred residuals d_i = m_i - mean(m)."""
    _, q, r = _mapped(rb, tb, p, theta)
    rq = q @ r.T
    jl = left_jacobian(theta[:3])
    n = len(p)
    cols = np.empty((n, 3, 8))
    # d(B X q)/d(rotvec) = -B [R q]x J_l
    sk = np.zeros((n, 3, 3))
    sk[:, 0, 1], sk[:, 0, 2] = -rq[:, 2], rq[:, 1]
    sk[:, 1, 0], sk[:, 1, 2] = rq[:, 2], -rq[:, 0]
    sk[:, 2, 0], sk[:, 2, 1] = -rq[:, 1], rq[:, 0]
    cols[:, :, :3] = -np.einsum("nij,njk,kl->nil", rb, sk, jl)
    cols[:, :, 3:6] = rb
    cols[:, :, 6] = np.einsum("nij,j->ni", rb, r[:, 0]) * p[:, :1]
    cols[:, :, 7] = np.einsum("nij,j->ni", rb, r[:, 1]) * p[:, 1:2]
    cols -= cols.mean(axis=0)
    return np.einsum("nik,nik->k", cols, cols)


def bxp_point(sample: BxpSample, calib: UsCalibration) -> np.ndarray:
    """Fiducial mapped into the base frame: ``B X (sx u, sy v, 0)``."""
    q = calib.image_to_mm(sample.p_img)
    return sample.b.apply(calib.x.apply(q))


def _cost_theta(rb, tb, p, theta) -> float:
    m, _, _ = _mapped(rb, tb, p, theta)
    d = m - m.mean(axis=0)
    return float(np.sum(d * d))


def _grad_theta(rb, tb, p, theta):
    m, q, r = _mapped(rb, tb, p, theta)
    d = m - m.mean(axis=0)
    cost = float(np.sum(d * d))
    # sum_i d_i = 0, so the mean term drops out of the derivative
    w = np.einsum("nji,nj->ni", rb, d)  # B_i^T d_i
    g = np.empty(8)
    rq = q @ r.T
    g[:3] = 2.0 * left_jacobian(theta[:3]).T @ np.sum(np.cross(rq, w), axis=0)
    g[3:6] = 2.0 * w.sum(axis=0)
    wr = w @ r  # rows are (R^T w_i)
    g[6] = 2.0 * np.sum(wr[:, 0] * p[:, 0])
    g[7] = 2.0 * np.sum(wr[:, 1] * p[:, 1])
    return cost, g


def bxp_cost(samples: Sequence[BxpSample], calib: UsCalibration) -> float:
    """Sum of squared distances of the mapped fiducials from their mean (mm^2)."""
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    return _cost_theta(*_stack(samples), calib.params())


def bxp_gradient(samples: Sequence[BxpSample], calib: UsCalibration) -> np.ndarray:
    """Analytic gradient w.r.t. [rotation vector, translation, scale]."""
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    return _grad_theta(*_stack(samples), calib.params())[1]


def solve_bxp(
    samples: Sequence[BxpSample],
    init: UsCalibration,
    opts: SolveOptions | None = None,
) -> tuple[UsCalibration, SolveReport]:
    """Diagonally preconditioned gradient descent with Armijo backtracking.

    The descent direction is ``-D g`` with ``D`` the inverse Gauss-Newton
    diagonal evaluated at ``init`` (fixed for the whole run). Each iteration
    starts from twice the last accepted step, capped at ``learning_rate``, and
    halves until the sufficient-decrease test holds, so the cost never
    increases. Stops on ``grad_tol``, ``max_iters``, a failed line search,
    or ``stall_iters`` accepted steps in a row that leave the cost unchanged
    (reason ``stalled``: the cost has reached round-off level).
    """
    opts = opts or SolveOptions()
    if len(samples) < 6:
        raise TooFewSamples(f"need at least 6 samples, got {len(samples)}")
    rb, tb, p = _stack(samples)
    theta = init.params()
    if opts.preconditioner is None:
        diag = _gn_diagonal(rb, tb, p, theta)
        scaling = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
    else:
        scaling = np.array(opts.preconditioner, dtype=float)
    if opts.fix_scale:
        scaling[6:] = 0.0

    cost, g = _grad_theta(rb, tb, p, theta)
    step = opts.learning_rate
    trace = []
    reason = "max_iters"
    it = 0
    flat = 0
    for it in range(1, opts.max_iters + 1):
        gn = float(np.linalg.norm(g * (scaling > 0)))
        if not np.isfinite(cost) or not np.isfinite(gn):
            raise Diverged(f"non-finite cost at iteration {it}")
        if gn < opts.grad_tol:
            reason = "grad_tol"
            it -= 1
            break
        direction = -scaling * g
        slope = float(g @ direction)
        step = min(2.0 * step, opts.learning_rate)
        while True:
            trial = theta + step * direction
            if np.all(trial[6:8] > 0):
                c_new = _cost_theta(rb, tb, p, trial)
                if not np.isfinite(c_new):
                    raise Diverged(f"non-finite cost at iteration {it}")
                if c_new <= cost + opts.armijo_c * step * slope:
                    break
            step *= opts.backtrack
            if step < 1e-300:
                break
        if step < 1e-300:
            reason = "line_search_stalled"
            trace.append((it, cost, gn, 0.0))
            break
        theta = trial
        prev = cost
        cost, g = _grad_theta(rb, tb, p, theta)
        trace.append((it, cost, gn, step))
        # with noisy data the cost bottoms out at round-off before grad_tol is met
        flat = flat + 1 if cost >= prev else 0
        if flat >= opts.stall_iters:
            reason = "stalled"
            break

    gn = float(np.linalg.norm(g * (scaling > 0)))
    report = SolveReport(
        converged=reason == "grad_tol",
        reason=reason,
        iterations=it,
        cost=cost,
        grad_norm=gn,
        trace=trace,
    )
    log.debug("solve_bxp: %s after %d iterations, cost %.3e", reason, it, cost)
    return UsCalibration.from_params(theta), report
