import dataclasses

import numpy as np
import pytest

from mammobot.errors import JointLimit, MarkerBehindCamera
from mammobot.geometry import RigidTransform, rotation_between
from mammobot.handeye import build_motion_pairs, solve_ax_xb
from mammobot.imaging import bmode_volume, locate_peak
from mammobot.scenario import ArmModel, rng_for
from mammobot.simworld import (
    crosswire,
    detector_frame,
    forward_kinematics,
    handeye_dataset,
    jacobian,
    lesion_targets,
    observe_markers,
    probe_face,
    synth_rf_frame,
    true_us_calibration,
    us_observe_crosswire,
    xray_project,
)

HOME = np.array([0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0])


def one_link_arm():
    return ArmModel(dh=((100.0, 0.0, 0.0, 0.0),) + ((0.0, 0.0, 0.0, 0.0),) * 5, tool_length=0.0)


def test_zero_dh_is_identity():
    arm = ArmModel(dh=((0.0, 0.0, 0.0, 0.0),) * 6)
    assert np.allclose(forward_kinematics(arm, np.zeros(6)).matrix(), np.eye(4))


@pytest.mark.parametrize("theta", np.linspace(-3, 3, 13))
def test_one_link_circle(theta):
    q = np.zeros(6)
    q[0] = theta
    t = forward_kinematics(one_link_arm(), q).translation
    assert np.allclose(t, [100 * np.cos(theta), 100 * np.sin(theta), 0.0], atol=1e-12)


def test_fk_lipschitz_and_jacobian():
    arm = ArmModel()
    rng = np.random.default_rng(0)
    bound = float(np.sum(np.abs(arm.dh_array[:, [0, 2]])))
    for _ in range(10):
        q = HOME + rng.uniform(-1, 1, 6)
        p = forward_kinematics(arm, q).translation
        for h in (1e-3, 1e-5, 1e-7):
            d = rng.normal(size=6)
            d *= h / np.linalg.norm(d)
            assert np.linalg.norm(forward_kinematics(arm, q + d).translation - p) <= bound * h
        j = jacobian(arm, q)
        num = np.empty((3, 6))
        for i in range(6):
            e = np.zeros(6)
            e[i] = 1e-6
            num[:, i] = (forward_kinematics(arm, q + e).translation - forward_kinematics(arm, q - e).translation) / 2e-6
        assert np.allclose(j[:3], num, atol=1e-5)


def test_joint_limits():
    with pytest.raises(JointLimit):
        forward_kinematics(ArmModel(), HOME + 7.0)


def test_marker_observation_closes_loop(clean_scenario):
    sc = clean_scenario
    obs = observe_markers(sc, sc.survey, np.random.default_rng(0))
    for o, t_bt in zip(obs, sc.marker_poses()):
        loop = sc.survey @ sc.camera_mount @ o.t_ct
        assert np.allclose(loop.matrix(), t_bt.matrix(), atol=1e-9)


def test_marker_noise_level(scenario):
    sc = dataclasses.replace(scenario, noise=dataclasses.replace(scenario.noise, marker_rot_deg=0.0))
    rng = np.random.default_rng(1)
    truth = (sc.survey @ sc.camera_mount).inverse() @ sc.marker_poses()[0]
    d = [observe_markers(sc, sc.survey, rng)[0].t_ct.translation - truth.translation for _ in range(1000)]
    rms = np.sqrt(np.mean(np.sum(np.square(d), axis=1)))
    assert rms == pytest.approx(0.5 * np.sqrt(3), rel=0.1)


def test_marker_behind_camera(clean_scenario):
    flipped = clean_scenario.survey @ RigidTransform.from_rotvec((np.pi, 0, 0))
    with pytest.raises(MarkerBehindCamera):
        observe_markers(clean_scenario, flipped, np.random.default_rng(0))


def test_handeye_dataset_recovers_mount(clean_scenario):
    robot, marker = handeye_dataset(clean_scenario, rng_for(0, 1, 0))
    x = solve_ax_xb(build_motion_pairs(robot, marker))
    assert rotation_between(x.rotation, clean_scenario.camera_mount.rotation) < 1e-9
    assert np.linalg.norm(x.translation - clean_scenario.camera_mount.translation) < 1e-9


def test_xray_geometry(scenario):
    t_bd = detector_frame(scenario)
    # rays run into the plate
    assert t_bd.rotation[:, 2] @ scenario.plate.rotation[:, 2] == pytest.approx(-1.0)
    m = xray_project(scenario, np.random.default_rng(0))
    assert m.image.shape == (scenario.xray.rows, scenario.xray.cols)
    assert np.all((m.markers_px > 0) & (m.markers_px < 1000))
    tgt = lesion_targets(scenario)
    z = scenario.plate.inverse().apply(tgt)[:, 2]
    assert np.allclose(z, 0, atol=1e-9)
    bad = dataclasses.replace(scenario, xray=dataclasses.replace(scenario.xray, tilt_deg=45.0))
    with pytest.raises(ValueError):
        detector_frame(bad)
    with pytest.raises(ValueError):
        xray_project(scenario)


def test_crosswire_visibility(clean_scenario):
    sc = clean_scenario
    fid = crosswire(sc)
    cal = true_us_calibration(sc)
    t_bu = RigidTransform(np.eye(3), fid.point - np.array([3.0, 5.0, 0.0]))
    p = us_observe_crosswire(t_bu, fid, cal.scale, 0.0, np.random.default_rng(0))
    assert np.allclose(p, [3.0 / cal.scale[0], 5.0 / cal.scale[1]])
    off = RigidTransform(np.eye(3), fid.point - np.array([3.0, 5.0, 2.0]))
    assert us_observe_crosswire(off, fid, cal.scale, 0.0, np.random.default_rng(0)) is None


def test_rf_peak_tracks_lesion(clean_scenario):
    """Sweeping the image plane across a lesion: the brightest frame is the nearest one."""
    sc = clean_scenario
    cal = true_us_calibration(sc)
    lesion = sc.lesion_points()[0]
    face = probe_face(sc)
    r = np.column_stack([[1, 0, 0], [0, 0, -1], [0, 1, 0]]).astype(float)
    offset = 0.013  # lesion sits between frames
    frames = []
    for k in range(41):
        z = (k - 20) * 0.05
        origin = lesion + r @ np.array([-face[0], -20.0, 0.0]) - r[:, 2] * (z + offset)
        frames.append(synth_rf_frame(sc, RigidTransform(r, origin), np.random.default_rng(k), lesion[None]))
    vol = bmode_volume(frames, 0.05)
    f, row, col, _ = locate_peak(vol)
    assert abs(f - 20) <= 1
    assert abs(row * cal.scale[1] - 20.0) < 0.5
    assert abs(col * cal.scale[0] - face[0]) < cal.scale[0]
