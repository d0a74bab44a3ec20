"""Synthetic-world description, loaded from and saved to JSON.

Every ground truth the solvers must recover lives here, along with noise
levels, the contact plant and the controller settings. A scenario is
immutable once built; per-run randomness comes from :func:`rng_for`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import RigidTransform, rot_x, rot_z, rotvec_to_rotation

# independent RNG streams derived from (seed, stream, index)
STREAM_HANDEYE = 1
STREAM_US = 2
STREAM_FORCE = 3
STREAM_XRAY = 4
STREAM_TRIAL = 5


def rng_for(seed: int, stream: int, *index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), *(int(i) for i in index)])


TOOL_DOWN = rot_x(np.pi)


@dataclass(frozen=True)
class ArmModel:
    """Six-joint serial arm in standard Denavit-Hartenberg form.

    Rows of ``dh`` are (a mm, alpha rad, d mm, theta_offset rad). Collision
    geometry is a chain of spheres along the segments joining consecutive
    joint origins, plus the tool segment.
    """

    dh: tuple = (
        (0.0, np.pi / 2, 89.159, 0.0),
        (-425.0, 0.0, 0.0, 0.0),
        (-392.25, 0.0, 0.0, 0.0),
        (0.0, np.pi / 2, 109.15, 0.0),
        (0.0, -np.pi / 2, 94.65, 0.0),
        (0.0, 0.0, 82.3, 0.0),
    )
    limits: tuple = ((-2 * np.pi, 2 * np.pi),) * 6
    link_radius: float = 40.0
    tool_length: float = 150.0
    samples_per_link: int = 4

    def __post_init__(self):
        lim = np.asarray(self.limits, dtype=float)
        if lim.shape != (6, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint limits must be (low, high) with low < high")
        if np.asarray(self.dh).shape != (6, 4):
            raise ValueError("DH table must be 6x4")

    @property
    def dh_array(self) -> np.ndarray:
        return np.asarray(self.dh, dtype=float)

    @property
    def limits_array(self) -> np.ndarray:
        return np.asarray(self.limits, dtype=float)

    @property
    def reach(self) -> float:
        """Upper bound on the distance of any collision point from any joint axis."""
        d = self.dh_array
        return float(np.sum(np.abs(d[:, 0])) + np.sum(np.abs(d[:, 2])) + self.tool_length)


@dataclass(frozen=True)
class NoiseConfig:
    marker_rot_deg: float = 0.2
    marker_trans_mm: float = 0.5
    us_px: float = 0.5
    # out-of-plane position of accepted cross-wire captures, uniform in +-this
    crosswire_offset_mm: float = 0.5
    force_n: float = 0.05
    visibility_halfwidth_mm: float = 0.5
    xray_sigma: float = 1.0
    # operator error when picking marker and lesion centres on the mammogram
    xray_annotation_px: float = 5.0


@dataclass(frozen=True)
class PlantConfig:
    stiffness: float = 1.0  # N/mm
    damping: float = 0.05  # N s/mm


@dataclass(frozen=True)
class GainsConfig:
    kp: float = 3.0  # mm/s per N
    ti: float = 4.0 / 3.0  # s
    td: float = 0.0  # s
    output_limit: float = 10.0  # mm/s


@dataclass(frozen=True)
class ControlConfig:
    gains: GainsConfig = field(default_factory=GainsConfig)
    f_target: float = 5.0
    f_contact: float = 2.0
    v_t: float = 7.27
    v_descend: float = 5.0
    k0: float = 50.0
    dt: float = 0.01
    scan_duration: float = 10.0
    descend_timeout: float = 30.0
    frame_step: float = 0.05
    n_frames: int = 171


@dataclass(frozen=True)
class XrayConfig:
    pixel_size: float = 0.2  # mm/px
    rows: int = 1000
    cols: int = 1000
    # detector frame relative to the plate: in-plane rotation, tilt about u, origin (plate mm)
    in_plane_deg: float = 12.0
    tilt_deg: float = 0.0
    origin_plate: tuple = (-100.0, 100.0, 0.0)
    marker_size_mm: float = 20.0
    marker_level: float = 20.0
    background_level: float = 10.0
    lesion_radius_mm: float = 6.0
    lesion_cnr: float = 0.46


@dataclass(frozen=True)
class UsImageConfig:
    n_lines: int = 65
    n_samples: int = 600
    carrier_wavelength_mm: float = 0.4  # round-trip spatial period of the RF carrier
    pulse_sigma_mm: float = 0.3
    beam_sigma_mm: float = 0.4
    reflector_amplitude: float = 100.0
    noise_sigma: float = 1.0
    dynamic_range_db: float = 60.0


@dataclass(frozen=True)
class RrtConfig:
    step: float = 0.1
    goal_bias: float = 0.1
    max_iters: int = 50000
    collision_step: float = 0.005


def _t(rotvec, t) -> dict:
    return RigidTransform(rotvec_to_rotation(rotvec), t).to_dict()


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 7
    arm: ArmModel = field(default_factory=ArmModel)
    home_joints: tuple = (0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0)
    start_jitter_rad: float = 0.25
    t_bp: dict = field(
        default_factory=lambda: RigidTransform(rot_z(0.3) @ rot_x(0.04), (-470.0, -150.0, 120.0)).to_dict()
    )
    # p1..p4 ordered so that (p4 - p1) + (p3 - p2) runs along plate +y
    marker_layout: tuple = ((-60.0, -45.0), (60.0, -45.0), (60.0, 45.0), (-60.0, 45.0))
    marker_spin_rad: tuple = (0.1, -0.2, 0.05, 0.3)
    # lesion centres in the plate frame (mm); z < 0 is inside the compressed tissue
    lesions: tuple = ((12.0, -8.0, -15.0), (-25.0, 18.0, -22.0))
    t_ec: dict = field(default_factory=lambda: _t((0.25, 0.05, 0.1), (5.0, 90.0, 40.0)))
    # image x along flange x, image y (depth) along the tool axis
    t_eu: dict = field(
        default_factory=lambda: RigidTransform(
            rot_x(np.pi / 2) @ rotvec_to_rotation((0.02, -0.03, 0.05)), (-9.0, 3.0, 152.0)
        ).to_dict()
    )
    us_scale: tuple = (0.3, 0.05)
    us_init_error: tuple = (5.0, 5.0, 0.05)  # deg, mm, relative scale: CAD-nominal offset
    survey_pose: dict = field(
        default_factory=lambda: RigidTransform(TOOL_DOWN @ rot_z(0.2), (-470.0, -240.0, 480.0)).to_dict()
    )
    crosswire_point: tuple = (-330.0, -330.0, 90.0)
    tool_mass_kg: float = 0.6
    tool_com_mm: tuple = (2.0, -3.0, 60.0)
    bias_wrench: tuple = (1.5, -0.8, 2.2, 30.0, -12.0, 8.0)
    handeye_poses: int = 21
    us_samples: int = 30
    force_samples: int = 500
    force_tilt_rad: float = 0.6
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    xray: XrayConfig = field(default_factory=XrayConfig)
    us: UsImageConfig = field(default_factory=UsImageConfig)
    rrt: RrtConfig = field(default_factory=RrtConfig)
    # axis-aligned boxes (xmin, ymin, zmin, xmax, ymax, zmax) in the base frame
    obstacles: tuple = ((-700.0, -420.0, -50.0, -250.0, 150.0, 60.0),)

    # derived views

    @property
    def plate(self) -> RigidTransform:
        return RigidTransform.from_dict(self.t_bp)

    @property
    def camera_mount(self) -> RigidTransform:
        return RigidTransform.from_dict(self.t_ec)

    @property
    def probe_mount(self) -> RigidTransform:
        return RigidTransform.from_dict(self.t_eu)

    @property
    def survey(self) -> RigidTransform:
        return RigidTransform.from_dict(self.survey_pose)

    def marker_poses(self) -> list[RigidTransform]:
        """Ground-truth T_BT for the four plate markers."""
        tp = self.plate
        out = []
        for (x, y), spin in zip(self.marker_layout, self.marker_spin_rad):
            local = RigidTransform(rot_z(spin), (x, y, 0.0))
            out.append(tp @ local)
        return out

    def lesion_points(self) -> np.ndarray:
        return self.plate.apply(np.asarray(self.lesions, dtype=float))

    def obstacle_array(self) -> np.ndarray:
        return np.asarray(self.obstacles, dtype=float).reshape(-1, 6)

    def noiseless(self) -> ScenarioConfig:
        """Same world with every noise source switched off."""
        n = dataclasses.replace(
            self.noise,
            marker_rot_deg=0.0,
            marker_trans_mm=0.0,
            us_px=0.0,
            crosswire_offset_mm=0.0,
            force_n=0.0,
            xray_annotation_px=0.0,
        )
        return dataclasses.replace(self, noise=n, us=dataclasses.replace(self.us, noise_sigma=0.0))

    def with_seed(self, seed: int) -> ScenarioConfig:
        return dataclasses.replace(self, seed=int(seed))

    # serialisation

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        return _from_dict(cls, d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _to_jsonable(v):
    if isinstance(v, dict):
        return {k: _to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _from_dict(cls, d: dict):
    kwargs = {}
    hints = {f.name: f for f in dataclasses.fields(cls)}
    for name, value in d.items():
        if name not in hints:
            raise ValueError(f"unknown scenario field {cls.__name__}.{name}")
        default = hints[name].default
        if default is dataclasses.MISSING and hints[name].default_factory is not dataclasses.MISSING:
            default = hints[name].default_factory()
        if dataclasses.is_dataclass(default) and isinstance(value, dict):
            kwargs[name] = _from_dict(type(default), value)
        elif isinstance(default, dict):
            kwargs[name] = value
        else:
            kwargs[name] = _tupleize(value)
    return cls(**kwargs)
