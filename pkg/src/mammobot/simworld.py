"""Ground-truth synthetic world standing in for the arm, camera, X-ray,
force sensor and ultrasound scanner.

Frames: B robot base, E flange (also the force sensor frame), C camera,
U ultrasound image, P compression plate, T_i plate markers, D X-ray
detector. Units are mm, N and radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JointLimit, MarkerBehindCamera
from .forcecalib import Wrench
from .geometry import RigidTransform, perturb, rot_x, rot_z, rotvec_to_rotation
from .imaging import RfFrame
from .scenario import TOOL_DOWN, ArmModel, ScenarioConfig
from .uscalib import BxpSample, UsCalibration

GRAVITY = 9.81  # m/s^2
MAX_XRAY_TILT = np.radians(30.0)

__all__ = [
    "ArmModel",
    "CrossWireFiducial",
    "Mammogram",
    "MarkerObservation",
    "forward_kinematics",
    "joint_frames",
    "jacobian",
    "observe_markers",
    "detector_frame",
    "xray_project",
    "annotate",
    "lesion_targets",
    "us_observe_crosswire",
    "gravity_wrench",
    "synth_rf_frame",
]


# kinematics


def link_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def check_limits(arm: ArmModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(6)
    lim = arm.limits_array
    bad = np.nonzero((q < lim[:, 0]) | (q > lim[:, 1]))[0]
    if bad.size:
        j = int(bad[0])
        raise JointLimit(f"joint {j} at {q[j]:.4f} rad outside [{lim[j, 0]:.4f}, {lim[j, 1]:.4f}]")
    return q


def joint_frames(arm: ArmModel, q) -> np.ndarray:
    """Homogeneous frames T_0 (base) .. T_6 (flange), shape (7, 4, 4)."""
    q = check_limits(arm, q)
    dh = arm.dh_array
    out = np.empty((7, 4, 4))
    out[0] = np.eye(4)
    for i in range(6):
        out[i + 1] = out[i] @ link_transform(dh[i, 0], dh[i, 1], dh[i, 2], q[i] + dh[i, 3])
    return out


def forward_kinematics(arm: ArmModel, q) -> RigidTransform:
    return RigidTransform.from_matrix(joint_frames(arm, q)[6])


def jacobian(arm: ArmModel, q) -> np.ndarray:
    """Geometric Jacobian of the flange: rows (linear mm/rad, angular)."""
    f = joint_frames(arm, q)
    pe = f[6, :3, 3]
    j = np.empty((6, 6))
    for i in range(6):
        z = f[i, :3, 2]
        j[:3, i] = np.cross(z, pe - f[i, :3, 3])
        j[3:, i] = z
    return j


def sample_start_joints(sc: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Home configuration plus a uniform jitter on every joint."""
    home = np.asarray(sc.home_joints, dtype=float)
    return home + rng.uniform(-sc.start_jitter_rad, sc.start_jitter_rad, size=6)


# camera


@dataclass(frozen=True, eq=False)
class MarkerObservation:
    marker_id: int
    t_ct: RigidTransform


def observe_markers(
    sc: ScenarioConfig,
    t_be: RigidTransform,
    rng: np.random.Generator,
    t_ec: RigidTransform | None = None,
) -> list[MarkerObservation]:
    """Noisy camera-frame poses of the four plate markers."""
    t_bc = t_be @ (sc.camera_mount if t_ec is None else t_ec)
    inv = t_bc.inverse()
    sig_r = np.radians(sc.noise.marker_rot_deg)
    out = []
    for i, t_bt in enumerate(sc.marker_poses()):
        t_ct = inv @ t_bt
        if t_ct.translation[2] <= 0.0:
            raise MarkerBehindCamera(f"marker {i} at camera z = {t_ct.translation[2]:.1f} mm")
        out.append(MarkerObservation(i, perturb(t_ct, rng, sig_r, sc.noise.marker_trans_mm)))
    return out


# X-ray


@dataclass(frozen=True, eq=False)
class Mammogram:
    pixel_size: float
    markers_px: np.ndarray  # (4, 2) (u, v)
    lesions_px: np.ndarray  # (L, 2)
    t_bd: RigidTransform
    image: np.ndarray | None = None


def detector_frame(sc: ScenarioConfig) -> RigidTransform:
    """Detector frame: x is the pixel column axis, y the row axis (pointing down), z the ray direction."""
    xc = sc.xray
    r_pd = rot_z(np.radians(xc.in_plane_deg)) @ rot_x(np.pi + np.radians(xc.tilt_deg))
    t_bd = sc.plate @ RigidTransform(r_pd, xc.origin_plate)
    n = sc.plate.rotation[:, 2]
    ang = np.arccos(min(1.0, abs(float(n @ t_bd.rotation[:, 2]))))
    if ang > MAX_XRAY_TILT + 1e-12:
        raise ValueError(f"projection axis is {np.degrees(ang):.1f} deg from the plate normal (limit 30)")
    return t_bd


def _to_pixels(t_bd: RigidTransform, pixel_size: float, p) -> np.ndarray:
    d = t_bd.inverse().apply(np.atleast_2d(p))
    return d[:, :2] / pixel_size


def lesion_targets(sc: ScenarioConfig) -> np.ndarray:
    """Where each lesion's projection ray meets the plate plane (base frame, mm)."""
    t_bd = detector_frame(sc)
    ray = t_bd.rotation[:, 2]
    n = sc.plate.rotation[:, 2]
    o = sc.plate.translation
    p = sc.lesion_points()
    s = -((p - o) @ n) / (ray @ n)
    return p + s[:, None] * ray


def xray_project(sc: ScenarioConfig, rng: np.random.Generator | None = None, render: bool = True) -> Mammogram:
    """Orthographic projection along the detector normal.

    Markers render as bright squares and lesions as disks whose contrast is
    ``lesion_cnr`` times the background noise level.
    """
    xc = sc.xray
    t_bd = detector_frame(sc)
    markers = _to_pixels(t_bd, xc.pixel_size, np.array([m.translation for m in sc.marker_poses()]))
    lesions = _to_pixels(t_bd, xc.pixel_size, sc.lesion_points())
    image = None
    if render:
        if rng is None:
            raise ValueError("rendering needs an RNG")
        sigma = sc.noise.xray_sigma
        image = xc.background_level + sigma * rng.standard_normal((xc.rows, xc.cols))
        rows = np.arange(xc.rows)[:, None]
        cols = np.arange(xc.cols)[None, :]
        half = 0.5 * xc.marker_size_mm / xc.pixel_size
        for u, v in markers:
            sq = (np.abs(cols - u) <= half) & (np.abs(rows - v) <= half)
            image = np.where(sq, image + (xc.marker_level - xc.background_level), image)
        rad = xc.lesion_radius_mm / xc.pixel_size
        for u, v in lesions:
            disk = (cols - u) ** 2 + (rows - v) ** 2 <= rad * rad
            image = image + disk * (xc.lesion_cnr * sigma)
    return Mammogram(xc.pixel_size, markers, lesions, t_bd, image)


def annotate(sc: ScenarioConfig, mammo: Mammogram, rng: np.random.Generator) -> Mammogram:
    """Marker and lesion centres as picked by an operator, with isotropic pixel noise."""
    s = sc.noise.xray_annotation_px
    mk = mammo.markers_px + rng.normal(size=mammo.markers_px.shape) * s
    le = mammo.lesions_px + rng.normal(size=mammo.lesions_px.shape) * s
    return Mammogram(mammo.pixel_size, mk, le, mammo.t_bd, mammo.image)


# ultrasound


@dataclass(frozen=True, eq=False)
class CrossWireFiducial:
    point: np.ndarray
    visibility_halfwidth: float


def crosswire(sc: ScenarioConfig) -> CrossWireFiducial:
    return CrossWireFiducial(np.asarray(sc.crosswire_point, dtype=float), sc.noise.visibility_halfwidth_mm)


def us_observe_crosswire(
    t_bu: RigidTransform,
    fid: CrossWireFiducial,
    scales,
    sigma_px: float,
    rng: np.random.Generator,
) -> np.ndarray | None:
    """Image point of the wire crossing, or None when it is off the image plane."""
    q = t_bu.inverse().apply(fid.point)
    noise = rng.normal(size=2) * sigma_px
    if abs(q[2]) > fid.visibility_halfwidth:
        return None
    return q[:2] / np.asarray(scales, dtype=float) + noise


def true_us_calibration(sc: ScenarioConfig) -> UsCalibration:
    return UsCalibration(sc.probe_mount, sc.us_scale)


def probe_face(sc: ScenarioConfig, cal: UsCalibration | None = None) -> np.ndarray:
    """Centre of the transducer face in the image frame (mm): top row, centre line."""
    cal = true_us_calibration(sc) if cal is None else cal
    uc = (sc.us.n_lines - 1) / 2.0
    return np.array([cal.scale[0] * uc, 0.0, 0.0])


def synth_rf_frame(
    sc: ScenarioConfig,
    t_bu: RigidTransform,
    rng: np.random.Generator,
    reflectors: np.ndarray | None = None,
) -> RfFrame:
    """White noise plus one Gaussian-windowed carrier burst per lesion.

    Each burst is weighted by a Gaussian of the lesion's out-of-plane
    distance with sigma equal to the visibility half-width.
    """
    uc = sc.us
    sx, sy = sc.us_scale
    pts = sc.lesion_points() if reflectors is None else np.atleast_2d(reflectors)
    x = np.arange(uc.n_lines)[None, :] * sx
    y = np.arange(uc.n_samples)[:, None] * sy
    rf = uc.noise_sigma * rng.standard_normal((uc.n_samples, uc.n_lines))
    sv = sc.noise.visibility_halfwidth_mm
    for q in t_bu.inverse().apply(pts):
        w = uc.reflector_amplitude * np.exp(-0.5 * (q[2] / sv) ** 2)
        if w < 1e-12 * uc.reflector_amplitude:
            continue
        lat = np.exp(-0.5 * ((x - q[0]) / uc.beam_sigma_mm) ** 2)
        dy = y - q[1]
        ax = np.exp(-0.5 * (dy / uc.pulse_sigma_mm) ** 2) * np.cos(2 * np.pi * dy / uc.carrier_wavelength_mm)
        rf = rf + w * ax * lat
    return RfFrame(rf, sy, sx)


# force sensor


def gravity_wrench(mass: float, com, r, bias=None) -> Wrench:
    """Unloaded sensor reading for a tool of ``mass`` kg at ``com`` mm.

    ``r`` is the sensor orientation in the base frame; force in N, torque in N mm.
    """
    if mass < 0:
        raise ValueError("mass must be non-negative")
    f = np.asarray(r, dtype=float).T @ np.array([0.0, 0.0, -GRAVITY * mass])
    w = Wrench(f, np.cross(np.asarray(com, dtype=float), f))
    if bias is None:
        return w
    return w + (bias if isinstance(bias, Wrench) else Wrench.from_vector(bias))


def _ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / 3.0)


# calibration datasets


def handeye_dataset(sc: ScenarioConfig, rng: np.random.Generator, n: int | None = None):
    """Robot poses around the survey pose and noisy views of marker 0."""
    n = sc.handeye_poses if n is None else n
    base = sc.survey
    robot, marker = [], []
    while len(robot) < n:
        t_be = RigidTransform(base.rotation @ rotvec_to_rotation(_ball(rng, 0.3)), base.translation + rng.uniform(-40, 40, 3))
        try:
            obs = observe_markers(sc, t_be, rng)
        except MarkerBehindCamera:
            continue
        robot.append(t_be)
        marker.append(obs[0].t_ct)
    return robot, marker


def us_dataset(sc: ScenarioConfig, rng: np.random.Generator, n: int | None = None) -> list[BxpSample]:
    """Probe poses that put the wire crossing on the image plane, with noisy image points."""
    n = sc.us_samples if n is None else n
    cal = true_us_calibration(sc)
    fid = crosswire(sc)
    r0 = TOOL_DOWN @ cal.x.rotation
    x_inv = cal.x.inverse()
    off = min(sc.noise.crosswire_offset_mm, fid.visibility_halfwidth)
    out = []
    while len(out) < n:
        r = r0 @ rotvec_to_rotation(_ball(rng, 0.4))
        u = rng.uniform(5.0, sc.us.n_lines - 6.0)
        v = rng.uniform(100.0, sc.us.n_samples - 100.0)
        q = np.array([cal.scale[0] * u, cal.scale[1] * v, rng.uniform(-off, off)])
        t_bu = RigidTransform(r, fid.point - r @ q)
        p = us_observe_crosswire(t_bu, fid, cal.scale, sc.noise.us_px, rng)
        if p is None:
            continue
        out.append(BxpSample(t_bu @ x_inv, p))
    return out


def perturbed_us_init(sc: ScenarioConfig, rng: np.random.Generator) -> UsCalibration:
    """Nominal calibration: truth off by a fixed angle, distance and relative scale in random directions."""
    deg, mm, rel = sc.us_init_error
    cal = true_us_calibration(sc)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    signs = np.where(rng.uniform(size=2) < 0.5, -1.0, 1.0)
    x = RigidTransform(cal.x.rotation @ rotvec_to_rotation(axis * np.radians(deg)), cal.x.translation + mm * d)
    return UsCalibration(x, cal.scale * (1.0 + rel * signs))


def force_pose(sc: ScenarioConfig, rng: np.random.Generator, tilt: float | None = None) -> RigidTransform:
    tilt = sc.force_tilt_rad if tilt is None else tilt
    r = TOOL_DOWN @ rotvec_to_rotation(_ball(rng, tilt))
    t = sc.plate.translation + np.array([0.0, 0.0, 150.0]) + rng.uniform(-100.0, 100.0, 3)
    return RigidTransform(r, t)


def force_reading(sc: ScenarioConfig, t_be: RigidTransform, rng: np.random.Generator, load: Wrench | None = None) -> Wrench:
    """Sensor output: gravity and bias, an optional external load, and noise.

    Torque noise is the force noise times a 10 mm lever.
    """
    w = gravity_wrench(sc.tool_mass_kg, sc.tool_com_mm, t_be.rotation, sc.bias_wrench)
    if load is not None:
        w = w + load
    sf = sc.noise.force_n
    return w + Wrench(rng.normal(size=3) * sf, rng.normal(size=3) * sf * 10.0)


def force_dataset(sc: ScenarioConfig, rng: np.random.Generator, n: int | None = None):
    n = sc.force_samples if n is None else n
    out = []
    for _ in range(n):
        t = force_pose(sc, rng)
        out.append((t, force_reading(sc, t, rng)))
    return out
