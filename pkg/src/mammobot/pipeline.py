"""End-to-end runs on the synthetic world.

Each run draws its data from RNG streams keyed by (seed, stream, trial), so
results depend only on the scenario, the seed and the trial index.
Metrics are ``{name: {"value": v, "unit": u}}`` maps.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import simworld as sw
from .errors import MammobotError
from .forcecalib import BiasModel, ExtrapolationWarning, compensate, fit_bias_model
from .geometry import RigidTransform, rotation_between, rotvec_to_rotation
from .handeye import build_motion_pairs, handeye_residual, solve_ax_xb
from .imaging import UsVolume, bmode_volume, locate_peak
from .motion import (
    ContactPlant,
    PidGains,
    PlantState,
    RrtOptions,
    ScanCommand,
    ScanLog,
    clearance,
    descend_until_contact,
    ik_solve,
    path_length,
    rrt_plan,
    run_scan,
    standoff_target,
)
from .registration import correspondences_from_markers, estimate_homography_dlt, estimate_plate_pose, map_lesion
from .scenario import STREAM_FORCE, STREAM_HANDEYE, STREAM_TRIAL, STREAM_US, TOOL_DOWN, ScenarioConfig, rng_for
from .uscalib import SolveOptions, SolveReport, UsCalibration, solve_bxp

log = logging.getLogger(__name__)


def metric(value, unit: str) -> dict:
    return {"value": float(value) if not isinstance(value, (int, np.integer)) else int(value), "unit": unit}


# calibrations


def calibrate_handeye(sc: ScenarioConfig, trial: int = 0) -> tuple[RigidTransform, dict]:
    robot, marker = sw.handeye_dataset(sc, rng_for(sc.seed, STREAM_HANDEYE, trial))
    pairs = build_motion_pairs(robot, marker)
    x = solve_ax_xb(pairs)
    res = handeye_residual(pairs, x)
    truth = sc.camera_mount
    rot = rotation_between(x.rotation, truth.rotation)
    m = {
        "pairs": metric(len(pairs), "count"),
        "rotation_error": metric(rot, "rad"),
        "rotation_error_deg": metric(np.degrees(rot), "deg"),
        "translation_error": metric(np.linalg.norm(x.translation - truth.translation), "mm"),
        "rms_rotation_residual": metric(res["rms_rotation"], "rad"),
        "rms_translation_residual": metric(res["rms_translation"], "mm"),
    }
    return x, m


def calibrate_us(
    sc: ScenarioConfig,
    trial: int = 0,
    init: UsCalibration | None = None,
    opts: SolveOptions | None = None,
) -> tuple[UsCalibration, SolveReport, dict]:
    rng = rng_for(sc.seed, STREAM_US, trial)
    samples = sw.us_dataset(sc, rng)
    if init is None:
        init = sw.perturbed_us_init(sc, rng)
    cal, rep = solve_bxp(samples, init, opts)
    truth = sw.true_us_calibration(sc)
    rot = rotation_between(cal.x.rotation, truth.x.rotation)
    m = {
        "samples": metric(len(samples), "count"),
        "iterations": metric(rep.iterations, "count"),
        "converged": metric(int(rep.converged), "bool"),
        "final_cost": metric(rep.cost, "mm^2"),
        "grad_norm": metric(rep.grad_norm, "mixed"),
        "rotation_error_deg": metric(np.degrees(rot), "deg"),
        "translation_error": metric(np.linalg.norm(cal.x.translation - truth.x.translation), "mm"),
        "scale_error_pct": metric(100.0 * np.max(np.abs(cal.scale / truth.scale - 1.0)), "%"),
    }
    return cal, rep, m


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum(a * a, axis=1))))


def unloaded_sweep(sc: ScenarioConfig, rng: np.random.Generator, steps: int = 200) -> list[RigidTransform]:
    """A smooth orientation sweep inside the training workspace."""
    s = np.linspace(0.0, 1.0, steps)
    tilt = 0.8 * sc.force_tilt_rad
    out = []
    phase = rng.uniform(0, 2 * np.pi)
    for u in s:
        rv = tilt * np.array([np.sin(2 * np.pi * u + phase), np.sin(4 * np.pi * u), 0.5 * np.cos(2 * np.pi * u)])
        rv *= min(1.0, tilt / np.linalg.norm(rv))
        out.append(RigidTransform(TOOL_DOWN @ rotvec_to_rotation(rv), sc.plate.translation + [0.0, 0.0, 150.0]))
    return out


def calibrate_force(sc: ScenarioConfig, trial: int = 0, degree: int = 3) -> tuple[BiasModel, dict]:
    """Fit on 80% of the unloaded samples, score on the rest and on a sweep."""
    rng = rng_for(sc.seed, STREAM_FORCE, trial)
    data = sw.force_dataset(sc, rng)
    n_train = int(round(0.8 * len(data)))
    model = fit_bias_model(data[:n_train], degree=degree)
    test = data[n_train:]
    raw = np.array([w.vector() for _, w in test])
    with warnings.catch_warnings():
        # test poses can sit just outside the training box
        warnings.simplefilter("ignore", ExtrapolationWarning)
        comp = np.array([compensate(model, p, w).vector() for p, w in test])
    f_ratio = _rms(comp[:, :3]) / _rms(raw[:, :3])
    t_ratio = _rms(comp[:, 3:]) / _rms(raw[:, 3:])

    sweep = unloaded_sweep(sc, rng)
    sw_raw, sw_comp = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        for p in sweep:
            w = sw.force_reading(sc, p, rng)
            sw_raw.append(np.linalg.norm(w.force))
            sw_comp.append(np.linalg.norm(compensate(model, p, w).force))

    # outside the training orientations the model extrapolates
    wide = [sw.force_pose(sc, rng, tilt=2.0 * sc.force_tilt_rad) for _ in range(100)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        ext = np.array([compensate(model, p, sw.force_reading(sc, p, rng)).force for p in wide])
    m = {
        "train_samples": metric(n_train, "count"),
        "test_samples": metric(len(test), "count"),
        "basis_size": metric(model.basis_size, "count"),
        "train_rms": metric(model.train_rms, "mixed"),
        "heldout_force_rms_raw": metric(_rms(raw[:, :3]), "N"),
        "heldout_force_rms_compensated": metric(_rms(comp[:, :3]), "N"),
        "heldout_torque_rms_raw": metric(_rms(raw[:, 3:]), "N mm"),
        "heldout_torque_rms_compensated": metric(_rms(comp[:, 3:]), "N mm"),
        "heldout_force_ratio": metric(f_ratio, "ratio"),
        "heldout_torque_ratio": metric(t_ratio, "ratio"),
        "heldout_ratio": metric(max(f_ratio, t_ratio), "ratio"),
        "sweep_mean_force_raw": metric(np.mean(sw_raw), "N"),
        "sweep_mean_force_compensated": metric(np.mean(sw_comp), "N"),
        "sweep_ratio": metric(np.mean(sw_comp) / np.mean(sw_raw), "ratio"),
        "extrapolated_force_rms": metric(_rms(ext), "N"),
    }
    return model, m


# navigated scan


@dataclass
class TrialResult:
    metrics: dict
    scan_log: ScanLog
    volume: UsVolume
    mammogram: sw.Mammogram
    path: list
    peak: tuple
    error: np.ndarray  # navigated minus expected, plate frame (x, y, depth) mm
    frame_poses: list = field(default_factory=list)


def gains_of(sc: ScenarioConfig) -> PidGains:
    g = sc.control.gains
    return PidGains(g.kp, g.ti, g.td, g.output_limit)


def _start_joints(sc: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    boxes = sc.obstacle_array()
    for _ in range(1000):
        q = sw.sample_start_joints(sc, rng)
        if clearance(sc.arm, q, boxes) >= 0:
            return q
    raise MammobotError("could not sample a collision-free start configuration")


def run_trial(sc: ScenarioConfig, trial: int = 0, lesion: int = 0, render_xray: bool = False) -> TrialResult:
    """Calibrate, register, plan, descend, scan and score one navigation attempt."""
    if not 0 <= lesion < len(sc.lesions):
        raise IndexError(f"lesion index {lesion} out of range (scenario has {len(sc.lesions)})")
    sub = lambda k: rng_for(sc.seed, STREAM_TRIAL, trial, k)  # noqa: E731
    t_ec, he_m = calibrate_handeye(sc, trial)
    us_cal, _, us_m = calibrate_us(sc, trial)
    force_model, f_m = calibrate_force(sc, trial)
    ctl = sc.control

    # registration
    obs = sw.observe_markers(sc, sc.survey, sub(0))
    pp = estimate_plate_pose([sc.survey @ t_ec @ o.t_ct for o in obs])
    mammo = sw.xray_project(sc, sub(1), render=render_xray)
    picked = sw.annotate(sc, mammo, sub(7))
    h = estimate_homography_dlt(correspondences_from_markers(pp, picked.markers_px))
    p_l = map_lesion(pp, h, picked.lesions_px[lesion])
    target_err = np.linalg.norm(p_l - sw.lesion_targets(sc)[lesion])

    # goal pose: image depth along -n, elevation along the scan direction
    n = pp.t_bp.rotation[:, 2]
    tau = pp.t_bp.rotation[:, 0]
    p_g = standoff_target(p_l, n, ctl.k0)
    half = 0.5 * ctl.v_t * ctl.scan_duration
    p_start = p_g - half * tau
    r_bu = np.column_stack([np.cross(-n, tau), -n, tau])
    t_bu_goal = RigidTransform(r_bu, p_start - r_bu @ sw.probe_face(sc, us_cal))
    t_be_goal = t_bu_goal @ us_cal.x.inverse()

    # approach
    boxes = sc.obstacle_array()
    q0 = _start_joints(sc, sub(2))
    q_goal = ik_solve(sc.arm, t_be_goal, np.asarray(sc.home_joints, dtype=float))
    r = sc.rrt
    path = rrt_plan(sc.arm, q0, q_goal, boxes, RrtOptions(r.step, r.goal_bias, r.max_iters, r.collision_step), sub(3))

    # contact phases run on the true geometry
    t_be = sw.forward_kinematics(sc.arm, q_goal)
    t_bu = t_be @ sc.probe_mount
    face = sw.probe_face(sc)
    tip = t_bu.apply(face)
    plate = sc.plate
    plant = ContactPlant(plate.translation, plate.rotation[:, 2], sc.plant.stiffness, sc.plant.damping, sc.noise.force_n)
    # what is left of the gravity and sensor bias after compensation, in the base frame
    gw = sw.gravity_wrench(sc.tool_mass_kg, sc.tool_com_mm, t_be.rotation, sc.bias_wrench)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        residual = compensate(force_model, t_be, gw)
    bias = t_be.rotation @ residual.force
    state, ev = descend_until_contact(
        PlantState(plant, tip), n, ctl.v_descend, ctl.f_contact, ctl.dt, ctl.descend_timeout, sub(4), bias
    )
    cmd = ScanCommand(tau, n, ctl.v_t, ctl.f_target, ctl.scan_duration, ctl.dt)
    _, slog, srep = run_scan(state, cmd, gains_of(sc), sub(5), sensor_bias=bias)

    # volume around the navigated point
    centre = slog.position[cmd.steps // 2]
    nf = ctl.n_frames
    mid = (nf - 1) // 2
    rng_rf = sub(6)
    poses, frames = [], []
    for k in range(nf):
        off = (k - mid) * ctl.frame_step * tau
        pose = RigidTransform(t_bu.rotation, t_bu.translation + (centre + off - tip))
        poses.append(pose)
        frames.append(sw.synth_rf_frame(sc, pose, rng_rf))
    vol = bmode_volume(frames, ctl.frame_step, sc.us.dynamic_range_db)
    f, row, col, val = locate_peak(vol)
    sx, sy = sc.us_scale
    p_exp = poses[f].apply(np.array([col * sx, row * sy, 0.0]))
    p_nav = poses[mid].apply(face)
    err = plate.rotation.T @ (p_nav - p_exp)

    m = {
        "nav_error_x": metric(err[0], "mm"),
        "nav_error_y": metric(err[1], "mm"),
        "nav_error_depth": metric(err[2], "mm"),
        "nav_error_inplane": metric(np.hypot(err[0], err[1]), "mm"),
        "target_error": metric(target_err, "mm"),
        "plate_normal_error_deg": metric(np.degrees(np.arccos(np.clip(n @ plate.rotation[:, 2], -1, 1))), "deg"),
        "ik_residual": metric(np.linalg.norm(t_be.translation - t_be_goal.translation), "mm"),
        "rrt_waypoints": metric(len(path), "count"),
        "rrt_path_length": metric(path_length(path), "rad"),
        "contact_time": metric(ev.time, "s"),
        "contact_force": metric(ev.force, "N"),
        "contact_penetration": metric(ev.penetration, "mm"),
        "force_mean": metric(srep.mean_force, "N"),
        "force_std": metric(srep.std_force, "N"),
        "force_overshoot": metric(srep.overshoot, "N"),
        "contact_lost_intervals": metric(len(srep.contact_lost), "count"),
        "residual_sensor_bias": metric(np.linalg.norm(bias), "N"),
        "peak_frame": metric(f, "index"),
        "peak_row": metric(row, "index"),
        "peak_col": metric(col, "index"),
        "peak_value": metric(val, "normalized"),
        "handeye_translation_error": he_m["translation_error"],
        "us_translation_error": us_m["translation_error"],
        "force_heldout_ratio": f_m["heldout_ratio"],
    }
    return TrialResult(m, slog, vol, mammo, path, (f, row, col, val), err, poses)


def repeatability(sc: ScenarioConfig, trials: int, lesion: int = 0) -> tuple[dict, list, list]:
    """Independent navigation trials with fresh start joints and noise.

    Returns aggregate metrics, one (trial, e_x, e_y, e_depth) row per
    successful trial, and an error record per failed trial.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    rows, errs, failures = [], [], []
    for i in range(trials):
        try:
            res = run_trial(sc, i, lesion)
        except MammobotError as exc:
            log.error("trial %d failed: %s", i, exc)
            failures.append({"trial": i, "code": exc.code, "message": str(exc)})
            continue
        errs.append(res.error)
        rows.append((i, *res.error.tolist()))
    m = {"trials": metric(trials, "count"), "failed_trials": metric(len(failures), "count")}
    if errs:
        e = np.array(errs)
        for k, name in enumerate(("x", "y", "depth")):
            m[f"mean_error_{name}"] = metric(np.mean(e[:, k]), "mm")
            m[f"std_error_{name}"] = metric(np.std(e[:, k]), "mm")
            m[f"mean_abs_error_{name}"] = metric(np.mean(np.abs(e[:, k])), "mm")
            m[f"max_abs_error_{name}"] = metric(np.max(np.abs(e[:, k])), "mm")
    return m, rows, failures
