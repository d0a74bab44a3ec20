"""Pure-Python kernels. Arithmetic order mirrors ``_kernels.pyx`` exactly."""

from math import ceil, cos, sin, sqrt

import numpy as np


def dh_origins(dh, q, tool_length, out):
    """Joint-frame origins o_0..o_6 plus the tool tip into ``out`` (8, 3)."""
    # running homogeneous transform, row-major 3x4
    r00, r01, r02, px = 1.0, 0.0, 0.0, 0.0
    r10, r11, r12, py = 0.0, 1.0, 0.0, 0.0
    r20, r21, r22, pz = 0.0, 0.0, 1.0, 0.0
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[0, 2] = 0.0
    for i in range(6):
        a = dh[i, 0]
        al = dh[i, 1]
        d = dh[i, 2]
        th = q[i] + dh[i, 3]
        ct = cos(th)
        st = sin(th)
        ca = cos(al)
        sa = sin(al)
        # link matrix: Rz(th) Tz(d) Tx(a) Rx(al)
        l00, l01, l02, l03 = ct, -st * ca, st * sa, a * ct
        l10, l11, l12, l13 = st, ct * ca, -ct * sa, a * st
        l20, l21, l22, l23 = 0.0, sa, ca, d
        n00 = r00 * l00 + r01 * l10 + r02 * l20
        n01 = r00 * l01 + r01 * l11 + r02 * l21
        n02 = r00 * l02 + r01 * l12 + r02 * l22
        n03 = r00 * l03 + r01 * l13 + r02 * l23 + px
        n10 = r10 * l00 + r11 * l10 + r12 * l20
        n11 = r10 * l01 + r11 * l11 + r12 * l21
        n12 = r10 * l02 + r11 * l12 + r12 * l22
        n13 = r10 * l03 + r11 * l13 + r12 * l23 + py
        n20 = r20 * l00 + r21 * l10 + r22 * l20
        n21 = r20 * l01 + r21 * l11 + r22 * l21
        n22 = r20 * l02 + r21 * l12 + r22 * l22
        n23 = r20 * l03 + r21 * l13 + r22 * l23 + pz
        r00, r01, r02, px = n00, n01, n02, n03
        r10, r11, r12, py = n10, n11, n12, n13
        r20, r21, r22, pz = n20, n21, n22, n23
        out[i + 1, 0] = px
        out[i + 1, 1] = py
        out[i + 1, 2] = pz
    out[7, 0] = px + r02 * tool_length
    out[7, 1] = py + r12 * tool_length
    out[7, 2] = pz + r22 * tool_length


def _box_distance(x, y, z, boxes, k):
    dx = 0.0
    dy = 0.0
    dz = 0.0
    if x < boxes[k, 0]:
        dx = boxes[k, 0] - x
    elif x > boxes[k, 3]:
        dx = x - boxes[k, 3]
    if y < boxes[k, 1]:
        dy = boxes[k, 1] - y
    elif y > boxes[k, 4]:
        dy = y - boxes[k, 4]
    if z < boxes[k, 2]:
        dz = boxes[k, 2] - z
    elif z > boxes[k, 5]:
        dz = z - boxes[k, 5]
    return sqrt(dx * dx + dy * dy + dz * dz)


def config_clearance(dh, q, tool_length, radius, boxes, samples_per_link):
    """Smallest distance between a link sphere surface and any box (mm).

    Negative values mean penetration is possible (sphere centre inside a box
    reports ``-radius``). Returns +inf with no boxes.
    """
    pts = np.empty((8, 3))
    dh_origins(dh, q, tool_length, pts)
    best = float("inf")
    nb = boxes.shape[0]
    for seg in range(7):
        if seg == 6 and tool_length <= 0.0:
            break
        for s in range(samples_per_link + 1):
            f = s / samples_per_link
            x = pts[seg, 0] + f * (pts[seg + 1, 0] - pts[seg, 0])
            y = pts[seg, 1] + f * (pts[seg + 1, 1] - pts[seg, 1])
            z = pts[seg, 2] + f * (pts[seg + 1, 2] - pts[seg, 2])
            for k in range(nb):
                dist = _box_distance(x, y, z, boxes, k) - radius
                if dist < best:
                    best = dist
    return best


def edge_clear(dh, q0, q1, tool_length, radius, boxes, samples_per_link, step, reach):
    """True if the straight joint segment q0 -> q1 cannot touch any box.

    Configurations are checked every ``step`` (L1 joint distance) with the
    spheres inflated by ``reach * spacing / 2``, a bound on how far any link
    point moves between consecutive checks.
    """
    l1 = 0.0
    for j in range(6):
        l1 += abs(q1[j] - q0[j])
    n = int(ceil(l1 / step))
    if n < 1:
        n = 1
    margin = reach * (l1 / n) * 0.5
    q = np.empty(6)
    for i in range(n + 1):
        f = i / n
        for j in range(6):
            q[j] = q0[j] + f * (q1[j] - q0[j])
        if config_clearance(dh, q, tool_length, radius, boxes, samples_per_link) < margin:
            return False
    return True


def _contact_force(px, py, pz, vx, vy, vz, plate, normal, stiffness, damping):
    pen = (plate[0] - px) * normal[0] + (plate[1] - py) * normal[1] + (plate[2] - pz) * normal[2]
    if pen <= 0.0:
        return 0.0
    vn = vx * normal[0] + vy * normal[1] + vz * normal[2]
    f = stiffness * pen
    if vn < 0.0:
        f = f - damping * vn
    return f


def descend_loop(p0, direction, speed, plate, normal, stiffness, damping, threshold, dt, max_steps, noise, pos_out, force_out):
    """Constant-velocity approach; returns the index of the first sample with F >= threshold, or -1."""
    px, py, pz = p0[0], p0[1], p0[2]
    vx = direction[0] * speed
    vy = direction[1] * speed
    vz = direction[2] * speed
    for k in range(max_steps):
        f = _contact_force(px, py, pz, vx, vy, vz, plate, normal, stiffness, damping)
        fx = f * normal[0] + noise[k, 0]
        fy = f * normal[1] + noise[k, 1]
        fz = f * normal[2] + noise[k, 2]
        fm = sqrt(fx * fx + fy * fy + fz * fz)
        pos_out[k, 0] = px
        pos_out[k, 1] = py
        pos_out[k, 2] = pz
        force_out[k] = fm
        if fm >= threshold:
            return k
        px = px + vx * dt
        py = py + vy * dt
        pz = pz + vz * dt
    return -1


def scan_loop(
    p0, v_prev, tau, n_press, v_t, f_target, plate, normal, stiffness, damping,
    kp, ti, td, limit, dt, steps, noise, pid_state, pos_out, vn_out, force_out, ftrue_out,
):
    """PID force-regulated scan. ``pid_state`` = [integral, prev_error, has_prev]."""
    px, py, pz = p0[0], p0[1], p0[2]
    vx, vy, vz = v_prev[0], v_prev[1], v_prev[2]
    integral = pid_state[0]
    prev_e = pid_state[1]
    has_prev = pid_state[2]
    for k in range(steps):
        f = _contact_force(px, py, pz, vx, vy, vz, plate, normal, stiffness, damping)
        fx = f * normal[0] + noise[k, 0]
        fy = f * normal[1] + noise[k, 1]
        fz = f * normal[2] + noise[k, 2]
        fm = sqrt(fx * fx + fy * fy + fz * fz)
        e = f_target - fm
        if has_prev != 0.0:
            cand = integral + 0.5 * (e + prev_e) * dt
            deriv = (e - prev_e) / dt
        else:
            cand = integral
            deriv = 0.0
        u = kp * (e + cand / ti + td * deriv)
        if u > limit:
            u = limit
        elif u < -limit:
            u = -limit
        else:
            integral = cand
        prev_e = e
        has_prev = 1.0
        pos_out[k, 0] = px
        pos_out[k, 1] = py
        pos_out[k, 2] = pz
        vn_out[k] = u
        force_out[k] = fm
        ftrue_out[k] = f
        vx = v_t * tau[0] + u * n_press[0]
        vy = v_t * tau[1] + u * n_press[1]
        vz = v_t * tau[2] + u * n_press[2]
        px = px + vx * dt
        py = py + vy * dt
        pz = pz + vz * dt
    pid_state[0] = integral
    pid_state[1] = prev_e
    pid_state[2] = has_prev
    v_prev[0] = vx
    v_prev[1] = vy
    v_prev[2] = vz
    p0[0] = px
    p0[1] = py
    p0[2] = pz
