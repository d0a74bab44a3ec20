import numpy as np
import pytest

from mammobot.errors import DegenerateMotion, LengthMismatch, TooFewPoses
from mammobot.geometry import RigidTransform, perturb, rot_z, rotation_between, rotation_to_rotvec
from mammobot.handeye import MotionPair, build_motion_pairs, handeye_residual, solve_ax_xb

from conftest import random_transform


def synthetic(rng, x, n=8):
    t_bm = random_transform(rng)
    robot = [random_transform(rng, 300) for _ in range(n)]
    marker = [x.inverse() @ r.inverse() @ t_bm for r in robot]
    return robot, marker


def park_martin(pairs):
    """Log-map oracle: R_X from the axis correspondences alpha = R_X beta, then lstsq for t."""
    alpha = np.array([rotation_to_rotvec(p.a.rotation) for p in pairs])
    beta = np.array([rotation_to_rotvec(p.b.rotation) for p in pairs])
    m = beta.T @ alpha
    w, v = np.linalg.eigh(m.T @ m)
    rx = v @ np.diag(w**-0.5) @ v.T @ m.T
    c = np.vstack([p.a.rotation - np.eye(3) for p in pairs])
    d = np.concatenate([rx @ p.b.translation - p.a.translation for p in pairs])
    return rx, np.linalg.lstsq(c, d, rcond=None)[0]


def test_pairs_satisfy_ax_xb(rng):
    x = random_transform(rng)
    robot, marker = synthetic(rng, x)
    for p in build_motion_pairs(robot, marker, all_pairs=True):
        assert np.allclose((p.a @ x).matrix(), (x @ p.b).matrix(), atol=1e-10)


def test_zero_noise_recovery(rng):
    x = random_transform(rng)
    robot, marker = synthetic(rng, x, 3)
    est = solve_ax_xb(build_motion_pairs(robot, marker))
    assert rotation_between(est.rotation, x.rotation) < 1e-9
    assert np.linalg.norm(est.translation - x.translation) < 1e-9


def test_matches_log_map_oracle_on_noisy_data():
    rng = np.random.default_rng(4)
    x = random_transform(rng)
    robot, marker = synthetic(rng, x, 12)
    marker = [perturb(m, rng, np.radians(0.1), 0.5) for m in marker]
    pairs = build_motion_pairs(robot, marker)
    est = solve_ax_xb(pairs)
    rx, tx = park_martin(pairs)
    # different estimators on the same noisy data: close, not identical
    assert rotation_between(est.rotation, rx) < np.radians(0.2)
    assert np.linalg.norm(est.translation - tx) < 2.0


def test_residual_zero_at_truth_and_monotone(rng):
    x = random_transform(rng)
    # pure z rotations plus a tilted one to keep the problem well-posed
    robot = [RigidTransform(rot_z(a), rng.normal(size=3) * 50) for a in (0.0, 0.5, 1.1, 1.9)]
    t_bm = random_transform(rng)
    marker = [x.inverse() @ r.inverse() @ t_bm for r in robot]
    pairs = build_motion_pairs(robot, marker)
    res = handeye_residual(pairs, x)
    assert res["rms_rotation"] < 1e-7 and res["rms_translation"] < 1e-9
    prev = -1.0
    for deg in (0.5, 1.0, 2.0, 4.0):
        # about the camera z axis; a left perturbation about base z would commute with the pairs
        xp = RigidTransform(x.rotation @ rot_z(np.radians(deg)), x.translation)
        r = handeye_residual(pairs, xp)["rms_rotation"]
        assert r > prev
        prev = r


def test_errors(rng):
    x = random_transform(rng)
    robot, marker = synthetic(rng, x, 4)
    with pytest.raises(LengthMismatch):
        build_motion_pairs(robot, marker[:3])
    with pytest.raises(TooFewPoses):
        build_motion_pairs(robot[:2], marker[:2])
    with pytest.raises(TooFewPoses):
        solve_ax_xb(build_motion_pairs(robot[:3], marker[:3])[:1])
    with pytest.raises(ValueError):
        handeye_residual([], x)


def test_parallel_axes_rejected(rng):
    x = random_transform(rng)
    robot = [RigidTransform(rot_z(a), rng.normal(size=3) * 50) for a in (0.0, 0.4, 1.0, 1.7)]
    t_bm = random_transform(rng)
    marker = [x.inverse() @ r.inverse() @ t_bm for r in robot]
    with pytest.raises(DegenerateMotion):
        solve_ax_xb(build_motion_pairs(robot, marker))


def test_pure_translations_rejected(rng):
    ident = RigidTransform.identity()
    pairs = [MotionPair(RigidTransform(np.eye(3), rng.normal(size=3)), ident) for _ in range(4)]
    with pytest.raises(DegenerateMotion):
        solve_ax_xb(pairs)
