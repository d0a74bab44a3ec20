"""Scan motion: joint-space approach, force-thresholded descent and a
PID force-regulated lateral sweep against a spring-damper plate.

The arm is an ideal Cartesian velocity executor during descent and scan;
joints only matter for IK and planning.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContactTimeout, JointLimit, NotConverged, PlanningTimeout
from .forcecalib import Wrench
from .geometry import RigidTransform, rotation_to_rotvec
from .scenario import ArmModel
from .simworld import check_limits, forward_kinematics, jacobian

log = logging.getLogger(__name__)

CONTACT_LOST_AFTER = 0.5  # s


# PID


@dataclass(frozen=True)
class PidGains:
    kp: float  # mm/s per N
    ti: float  # s
    td: float = 0.0  # s
    output_limit: float = 10.0  # mm/s

    def __post_init__(self):
        if not (self.kp > 0 and self.ti > 0 and self.td >= 0 and self.output_limit > 0):
            raise ValueError("need kp > 0, ti > 0, td >= 0, output_limit > 0")


class PidController:
    """Velocity command from force error.

    ``u = kp (e + I / ti + td de/dt)``: trapezoidal integral, backward
    difference on the error. On the first call the integral is unchanged and
    the derivative is zero. While the output saturates the integral is
    frozen.
    """

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.reset()

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = 0.0
        self.has_prev = False

    def step(self, e: float, dt: float) -> float:
        if dt <= 0:
            raise ValueError("dt must be positive")
        g = self.gains
        if self.has_prev:
            cand = self.integral + 0.5 * (e + self.prev_error) * dt
            deriv = (e - self.prev_error) / dt
        else:
            cand = self.integral
            deriv = 0.0
        u = g.kp * (e + cand / g.ti + g.td * deriv)
        if u > g.output_limit:
            u = g.output_limit
        elif u < -g.output_limit:
            u = -g.output_limit
        else:
            self.integral = cand
        self.prev_error = e
        self.has_prev = True
        return u

    def state(self) -> np.ndarray:
        return np.array([self.integral, self.prev_error, 1.0 if self.has_prev else 0.0])

    def load_state(self, s) -> None:
        self.integral, self.prev_error, self.has_prev = float(s[0]), float(s[1]), bool(s[2])


def pid_step(ctrl: PidController, e: float, dt: float) -> float:
    return ctrl.step(e, dt)


def contact_force_magnitude(w: Wrench) -> float:
    return float(np.linalg.norm(w.force))


# plant


@dataclass(frozen=True, eq=False)
class ContactPlant:
    """Rigid plate as a plane with a spring-damper contact law.

    ``normal`` points out of the plate towards the probe. Normal force is
    ``k pen + c max(0, pen_rate)`` while ``pen > 0``; the sensor reports the
    magnitude of that force vector plus isotropic Gaussian noise.
    """

    plate_point: np.ndarray
    normal: np.ndarray
    stiffness: float = 1.0
    damping: float = 0.05
    noise_sigma: float = 0.05

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "plate_point", np.asarray(self.plate_point, dtype=float))

    def penetration(self, p) -> float:
        return float((self.plate_point - np.asarray(p)) @ self.normal)

    def force(self, p, v) -> float:
        pen = self.penetration(p)
        if pen <= 0.0:
            return 0.0
        vn = float(np.asarray(v) @ self.normal)
        return self.stiffness * pen - (self.damping * vn if vn < 0.0 else 0.0)


@dataclass(frozen=True, eq=False)
class PlantState:
    plant: ContactPlant
    position: np.ndarray  # probe contact point, base frame mm
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0


@dataclass(frozen=True)
class ContactEvent:
    time: float  # s since descent start
    index: int
    force: float  # N, measured at the stop sample
    penetration: float  # mm
    overshoot: float  # N above the threshold


def _sensor_noise(rng: np.random.Generator, steps: int, sigma: float, bias) -> np.ndarray:
    noise = rng.normal(size=(steps, 3)) * sigma
    if bias is not None:
        noise += np.asarray(bias, dtype=float)
    return noise


def standoff_target(lesion, n, k0: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("normal must be a unit vector")
    if k0 < 0:
        raise ValueError("k0 must be non-negative")
    return np.asarray(lesion, dtype=float) + k0 * n


def descend_until_contact(
    state: PlantState,
    n,
    v_descend: float,
    f_threshold: float,
    dt: float,
    timeout: float,
    rng: np.random.Generator,
    sensor_bias=None,
) -> tuple[PlantState, ContactEvent]:
    """Move along ``-n`` at constant speed until the measured force reaches the threshold.

    The probe stops at the first sample with F >= threshold and is left at
    rest there. ``sensor_bias`` is a constant base-frame force offset left
    over after bias compensation.
    """
    if f_threshold <= 0 or v_descend <= 0 or dt <= 0:
        raise ValueError("threshold, speed and dt must be positive")
    n = np.asarray(n, dtype=float)
    pl = state.plant
    steps = int(np.floor(timeout / dt + 1e-9)) + 1
    noise = _sensor_noise(rng, steps, pl.noise_sigma, sensor_bias)
    pos = np.empty((steps, 3))
    force = np.empty(steps)
    hit = kernels.descend_loop(
        np.ascontiguousarray(state.position, dtype=float), -n, float(v_descend), pl.plate_point, pl.normal,
        pl.stiffness, pl.damping, float(f_threshold), float(dt), steps, noise, pos, force,
    )
    if hit < 0:
        raise ContactTimeout(f"no contact within {timeout} s")
    p = pos[hit].copy()
    ev = ContactEvent(hit * dt, int(hit), float(force[hit]), pl.penetration(p), float(force[hit] - f_threshold))
    return PlantState(pl, p, np.zeros(3), state.time + hit * dt), ev


# scan


@dataclass(frozen=True, eq=False)
class ScanCommand:
    tangential_dir: np.ndarray
    plate_normal: np.ndarray  # outward; the probe presses along its negative
    v_t: float
    f_target: float
    duration: float
    dt: float

    def __post_init__(self):
        tau = np.asarray(self.tangential_dir, dtype=float)
        n = np.asarray(self.plate_normal, dtype=float)
        if abs(np.linalg.norm(tau) - 1.0) > 1e-12 or abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("directions must be unit vectors")
        if abs(tau @ n) > 1e-9:
            raise ValueError("scan direction must lie in the plate plane")
        if self.v_t <= 0 or self.dt <= 0 or self.duration <= 0:
            raise ValueError("v_t, duration and dt must be positive")
        object.__setattr__(self, "tangential_dir", tau)
        object.__setattr__(self, "plate_normal", n)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True, eq=False)
class ScanLog:
    t: np.ndarray
    position: np.ndarray  # (N, 3)
    v_n: np.ndarray
    force: np.ndarray  # measured
    force_true: np.ndarray

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "px", "py", "pz", "v_n", "F"])
            for i in range(len(self.t)):
                p = self.position[i]
                w.writerow([f"{self.t[i]:.6f}", f"{p[0]:.9g}", f"{p[1]:.9g}", f"{p[2]:.9g}", f"{self.v_n[i]:.9g}", f"{self.force[i]:.9g}"])


@dataclass(frozen=True)
class ScanReport:
    mean_force: float  # N, after the transient
    std_force: float
    overshoot: float  # N, peak measured force above target before it first settles
    contact_lost: tuple = ()  # (start s, end s) intervals with zero contact force


def _force_stats(log_: ScanLog, f_target: float, transient: float) -> tuple[float, float, float]:
    rel = log_.t - log_.t[0]
    steady = log_.force[rel >= transient]
    mean = float(np.mean(steady)) if steady.size else float("nan")
    std = float(np.std(steady)) if steady.size else float("nan")
    # the initial rise: peak before the response first comes back down through the target
    above = np.nonzero(log_.force_true >= f_target)[0]
    if above.size == 0:
        return mean, std, 0.0
    back = np.nonzero(log_.force_true[above[0]:] < f_target)[0]
    end = above[0] + (back[0] if back.size else len(log_.t) - above[0])
    return mean, std, float(np.max(log_.force[: end + 1]) - f_target)


def _contact_gaps(log_: ScanLog, dt: float) -> tuple:
    zero = log_.force_true <= 0.0
    out = []
    i = 0
    n = len(zero)
    while i < n:
        if zero[i]:
            j = i
            while j < n and zero[j]:
                j += 1
            if (j - i) * dt > CONTACT_LOST_AFTER:
                out.append((float(log_.t[i]), float(log_.t[j - 1])))
            i = j
        else:
            i += 1
    return tuple(out)


def run_scan(
    state: PlantState,
    cmd: ScanCommand,
    gains: PidGains,
    rng: np.random.Generator,
    transient: float = 1.0,
    controller: PidController | None = None,
    sensor_bias=None,
) -> tuple[PlantState, ScanLog, ScanReport]:
    """Sweep along the plate at constant ``v_t`` while a PID loop holds ``f_target``.

    Each control period measures F, updates the controller with
    ``e = F* - F`` and applies ``v = v_t tau - v_n n`` for one ``dt``.
    Contact loss (zero force for over 0.5 s) is reported, not raised.
    """
    ctrl = controller or PidController(gains)
    pl = state.plant
    steps = cmd.steps
    noise = _sensor_noise(rng, steps, pl.noise_sigma, sensor_bias)
    p = np.array(state.position, dtype=float)
    v = np.array(state.velocity, dtype=float)
    pid = ctrl.state()
    pos = np.empty((steps, 3))
    vn = np.empty(steps)
    f = np.empty(steps)
    ft = np.empty(steps)
    kernels.scan_loop(
        p, v, cmd.tangential_dir, -cmd.plate_normal, float(cmd.v_t), float(cmd.f_target), pl.plate_point,
        pl.normal, pl.stiffness, pl.damping, gains.kp, gains.ti, gains.td, gains.output_limit, float(cmd.dt),
        steps, noise, pid, pos, vn, f, ft,
    )
    ctrl.load_state(pid)
    t = state.time + np.arange(steps) * cmd.dt
    slog = ScanLog(t, pos, vn, f, ft)
    mean, std, over = _force_stats(slog, cmd.f_target, transient)
    gaps = _contact_gaps(slog, cmd.dt)
    for a, b in gaps:
        log.warning("contact lost from %.2f s to %.2f s", a, b)
    end = PlantState(pl, p, v, state.time + steps * cmd.dt)
    return end, slog, ScanReport(mean, std, over, gaps)


# inverse kinematics


def pose_error(target: RigidTransform, current: RigidTransform) -> np.ndarray:
    """6-vector (position error mm, rotation error rotvec) in the base frame."""
    dp = target.translation - current.translation
    dr = rotation_to_rotvec(target.rotation @ current.rotation.T)
    return np.concatenate([dp, dr])


def ik_solve(
    arm: ArmModel,
    target: RigidTransform,
    seed,
    max_iters: int = 500,
    tol: float = 1e-6,
    damping: float = 1e-2,
    max_step: float = 0.3,
) -> np.ndarray:
    """Damped least squares on the geometric Jacobian, starting from ``seed``."""
    q = check_limits(arm, seed).copy()
    lim = arm.limits_array
    for _ in range(max_iters + 1):
        err = pose_error(target, forward_kinematics(arm, q))
        if np.all(np.abs(err[:3]) < tol) and np.all(np.abs(err[3:]) < tol):
            return q
        j = jacobian(arm, q)
        dq = j.T @ np.linalg.solve(j @ j.T + damping**2 * np.eye(6), err)
        nrm = np.linalg.norm(dq)
        if nrm > max_step:
            dq *= max_step / nrm
        q = q + dq
        if np.any(q < lim[:, 0]) or np.any(q > lim[:, 1]):
            raise JointLimit("IK iterate left the joint limits")
    raise NotConverged(f"IK residual {np.linalg.norm(err):.3g} after {max_iters} iterations")


# planning


@dataclass(frozen=True)
class RrtOptions:
    step: float = 0.1  # rad, Euclidean in joint space
    goal_bias: float = 0.1
    max_iters: int = 50000
    collision_step: float = 0.005  # rad, L1 spacing of edge checks
    sample_pad: float = 1.0  # rad; sampling box is the start/goal hull padded by this, clipped to limits


def _geometry(arm: ArmModel, obstacles) -> tuple:
    boxes = np.ascontiguousarray(np.asarray(obstacles, dtype=float).reshape(-1, 6))
    return arm.dh_array, boxes


def clearance(arm: ArmModel, q, obstacles) -> float:
    dh, boxes = _geometry(arm, obstacles)
    return kernels.config_clearance(
        dh, np.ascontiguousarray(q, dtype=float), arm.tool_length, arm.link_radius, boxes, arm.samples_per_link
    )


def edge_free(arm: ArmModel, q0, q1, obstacles, step: float) -> bool:
    dh, boxes = _geometry(arm, obstacles)
    return bool(
        kernels.edge_clear(
            dh, np.ascontiguousarray(q0, dtype=float), np.ascontiguousarray(q1, dtype=float), arm.tool_length,
            arm.link_radius, boxes, arm.samples_per_link, float(step), arm.reach,
        )
    )


def rrt_plan(
    arm: ArmModel,
    start,
    goal,
    obstacles,
    opts: RrtOptions | None = None,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """Joint-space RRT with goal bias; tries the straight segment first.

    Every accepted edge passes a conservative swept check (see
    ``kernels.edge_clear``), so any interpolation of the returned path is
    collision-free.
    """
    opts = opts or RrtOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    start = check_limits(arm, start).copy()
    goal = check_limits(arm, goal).copy()
    for name, q in (("start", start), ("goal", goal)):
        if clearance(arm, q, obstacles) < 0:
            raise ValueError(f"{name} configuration is in collision")
    if np.array_equal(start, goal):
        return [start]
    if edge_free(arm, start, goal, obstacles, opts.collision_step):
        return [start, goal]

    lim = arm.limits_array
    lo = np.maximum(lim[:, 0], np.minimum(start, goal) - opts.sample_pad)
    hi = np.minimum(lim[:, 1], np.maximum(start, goal) + opts.sample_pad)
    nodes = np.empty((min(opts.max_iters, 100000) + 2, 6))
    parent = np.empty(len(nodes), dtype=int)
    nodes[0] = start
    parent[0] = -1
    count = 1
    for it in range(opts.max_iters):
        target = goal if rng.uniform() < opts.goal_bias else rng.uniform(lo, hi)
        d = np.linalg.norm(nodes[:count] - target, axis=1)
        near = int(np.argmin(d))
        if d[near] < 1e-12:
            continue
        new = nodes[near] + (target - nodes[near]) * min(1.0, opts.step / d[near])
        if not edge_free(arm, nodes[near], new, obstacles, opts.collision_step):
            continue
        nodes[count] = new
        parent[count] = near
        count += 1
        if np.linalg.norm(goal - new) <= opts.step and edge_free(arm, new, goal, obstacles, opts.collision_step):
            path = [goal]
            k = count - 1
            while k >= 0:
                path.append(nodes[k].copy())
                k = parent[k]
            log.debug("rrt: %d nodes, %d iterations", count, it + 1)
            return path[::-1]
        if count == len(nodes):
            break
    raise PlanningTimeout(f"no path after {opts.max_iters} iterations ({count} nodes)")


def validate_path(arm: ArmModel, path: Sequence, obstacles, spacing: float) -> bool:
    """Dense re-check: every configuration at ``spacing`` (L1) along the path clears all boxes."""
    for q0, q1 in zip(path[:-1], path[1:]):
        q0 = np.asarray(q0, dtype=float)
        q1 = np.asarray(q1, dtype=float)
        n = max(1, int(np.ceil(np.sum(np.abs(q1 - q0)) / spacing)))
        for i in range(n + 1):
            if clearance(arm, q0 + (i / n) * (q1 - q0), obstacles) < 0:
                return False
    if len(path) == 1 and clearance(arm, path[0], obstacles) < 0:
        return False
    return True


def path_length(path: Sequence) -> float:
    return float(sum(np.linalg.norm(np.asarray(b) - np.asarray(a)) for a, b in zip(path[:-1], path[1:])))


