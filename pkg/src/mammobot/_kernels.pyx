# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Arithmetic order mirrors ``_kernels_py.py`` exactly."""

from libc.math cimport ceil, cos, sin, sqrt, fabs, INFINITY

import numpy as np


cdef void _origins(const double[:, :] dh, const double[:] q, double tool_length, double[:, :] out) noexcept nogil:
    cdef double r00 = 1.0, r01 = 0.0, r02 = 0.0, px = 0.0
    cdef double r10 = 0.0, r11 = 1.0, r12 = 0.0, py = 0.0
    cdef double r20 = 0.0, r21 = 0.0, r22 = 1.0, pz = 0.0
    cdef double a, al, d, th, ct, st, ca, sa
    cdef double l00, l01, l02, l03, l10, l11, l12, l13, l20, l21, l22, l23
    cdef double n00, n01, n02, n03, n10, n11, n12, n13, n20, n21, n22, n23
    cdef int i
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
        l00 = ct; l01 = -st * ca; l02 = st * sa; l03 = a * ct
        l10 = st; l11 = ct * ca; l12 = -ct * sa; l13 = a * st
        l20 = 0.0; l21 = sa; l22 = ca; l23 = d
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
        r00 = n00; r01 = n01; r02 = n02; px = n03
        r10 = n10; r11 = n11; r12 = n12; py = n13
        r20 = n20; r21 = n21; r22 = n22; pz = n23
        out[i + 1, 0] = px
        out[i + 1, 1] = py
        out[i + 1, 2] = pz
    out[7, 0] = px + r02 * tool_length
    out[7, 1] = py + r12 * tool_length
    out[7, 2] = pz + r22 * tool_length


def dh_origins(const double[:, :] dh, const double[:] q, double tool_length, double[:, :] out):
    _origins(dh, q, tool_length, out)


cdef inline double _box_distance(double x, double y, double z, const double[:, :] boxes, Py_ssize_t k) noexcept nogil:
    cdef double dx = 0.0, dy = 0.0, dz = 0.0
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


cdef double _clearance(const double[:, :] dh, const double[:] q, double tool_length, double radius,
                       const double[:, :] boxes, int samples_per_link, double[:, :] pts) noexcept nogil:
    cdef double best = INFINITY
    cdef double f, x, y, z, dist
    cdef int seg, s
    cdef Py_ssize_t k, nb = boxes.shape[0]
    _origins(dh, q, tool_length, pts)
    for seg in range(7):
        if seg == 6 and tool_length <= 0.0:
            break
        for s in range(samples_per_link + 1):
            f = <double>s / <double>samples_per_link
            x = pts[seg, 0] + f * (pts[seg + 1, 0] - pts[seg, 0])
            y = pts[seg, 1] + f * (pts[seg + 1, 1] - pts[seg, 1])
            z = pts[seg, 2] + f * (pts[seg + 1, 2] - pts[seg, 2])
            for k in range(nb):
                dist = _box_distance(x, y, z, boxes, k) - radius
                if dist < best:
                    best = dist
    return best


def config_clearance(const double[:, :] dh, const double[:] q, double tool_length, double radius,
                     const double[:, :] boxes, int samples_per_link):
    cdef double[:, :] pts = np.empty((8, 3))
    return _clearance(dh, q, tool_length, radius, boxes, samples_per_link, pts)


def edge_clear(const double[:, :] dh, const double[:] q0, const double[:] q1, double tool_length,
               double radius, const double[:, :] boxes, int samples_per_link, double step, double reach):
    cdef double l1 = 0.0, f, margin
    cdef int i, j, n
    cdef bint clear = True
    cdef double[:, :] pts = np.empty((8, 3))
    cdef double[:] q = np.empty(6)
    for j in range(6):
        l1 += fabs(q1[j] - q0[j])
    n = <int>ceil(l1 / step)
    if n < 1:
        n = 1
    margin = reach * (l1 / n) * 0.5
    with nogil:
        for i in range(n + 1):
            f = <double>i / <double>n
            for j in range(6):
                q[j] = q0[j] + f * (q1[j] - q0[j])
            if _clearance(dh, q, tool_length, radius, boxes, samples_per_link, pts) < margin:
                clear = False
                break
    return clear


cdef inline double _contact_force(double px, double py, double pz, double vx, double vy, double vz,
                                  const double[:] plate, const double[:] normal,
                                  double stiffness, double damping) noexcept nogil:
    cdef double pen = (plate[0] - px) * normal[0] + (plate[1] - py) * normal[1] + (plate[2] - pz) * normal[2]
    cdef double vn, f
    if pen <= 0.0:
        return 0.0
    vn = vx * normal[0] + vy * normal[1] + vz * normal[2]
    f = stiffness * pen
    if vn < 0.0:
        f = f - damping * vn
    return f


def descend_loop(const double[:] p0, const double[:] direction, double speed, const double[:] plate,
                 const double[:] normal, double stiffness, double damping, double threshold, double dt,
                 int max_steps, const double[:, :] noise, double[:, :] pos_out, double[:] force_out):
    cdef double px = p0[0], py = p0[1], pz = p0[2]
    cdef double vx = direction[0] * speed
    cdef double vy = direction[1] * speed
    cdef double vz = direction[2] * speed
    cdef double f, fx, fy, fz, fm
    cdef int k, hit = -1
    with nogil:
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
                hit = k
                break
            px = px + vx * dt
            py = py + vy * dt
            pz = pz + vz * dt
    return hit


def scan_loop(double[:] p0, double[:] v_prev, const double[:] tau, const double[:] n_press, double v_t,
              double f_target, const double[:] plate, const double[:] normal, double stiffness,
              double damping, double kp, double ti, double td, double limit, double dt, int steps,
              const double[:, :] noise, double[:] pid_state, double[:, :] pos_out, double[:] vn_out,
              double[:] force_out, double[:] ftrue_out):
    cdef double px = p0[0], py = p0[1], pz = p0[2]
    cdef double vx = v_prev[0], vy = v_prev[1], vz = v_prev[2]
    cdef double integral = pid_state[0]
    cdef double prev_e = pid_state[1]
    cdef double has_prev = pid_state[2]
    cdef double f, fx, fy, fz, fm, e, cand, deriv, u
    cdef int k
    with nogil:
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
