# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled collision-proposal scan.

Mirrors enskog._scan_numpy exactly: same splitmix64 per-pair stream, same
acceptance rule, same sampled angles.  Only proposal *scanning* lives here;
event application stays in shared Python code.
"""

from libc.math cimport exp, expm1, pow
from libc.stdint cimport int64_t, uint64_t

import numpy as np

DEF TWO_PI = 6.283185307179586
DEF PI = 3.141592653589793
DEF INV53 = 1.1102230246251565e-16  # 2^-53


cdef inline uint64_t _mix(uint64_t x) nogil:
    x = x + <uint64_t> 0x9E3779B97F4A7C15
    x = (x ^ (x >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <uint64_t> 0x94D049BB133111EB
    return x ^ (x >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t step, uint64_t i,
                            uint64_t j, uint64_t slot) nogil:
    cdef uint64_t h = _mix(seed)
    h = _mix(h ^ step)
    h = _mix(h ^ i)
    h = _mix(h ^ j)
    h = _mix(h ^ slot)
    return <double> (h >> 11) * INV53


cdef struct ScanParams:
    double t0
    double dt
    double r_beta2
    double amplitude
    double half_gamma
    double c_sigma
    double rate_pref      # Lambda_Q * 2pi / N
    double a_pow          # theta_min^(-nu)
    double span           # nu * Lambda_Q / b_coeff
    double inv_nu
    double theta_min
    uint64_t seed
    uint64_t step


cdef inline int64_t _try_pair(ScanParams *p, double[:, ::1] R, double[:, ::1] V,
                              int64_t i, int64_t j, int64_t n_found, int64_t cap,
                              double *max_rate_dt,
                              double[::1] out_time, int64_t[::1] out_i,
                              int64_t[::1] out_j, double[::1] out_theta,
                              double[::1] out_phi, double[::1] out_z) nogil:
    cdef double dx, dy, dz, d2, s2, beta, gx, gy, gz, g2, sig, lam_dt
    cdef double u, theta, phi, z, toff
    dx = R[i, 0] - R[j, 0]
    dy = R[i, 1] - R[j, 1]
    dz = R[i, 2] - R[j, 2]
    d2 = dx * dx + dy * dy + dz * dz
    if d2 >= p.r_beta2:
        return n_found
    s2 = d2 / p.r_beta2
    beta = p.amplitude * exp(1.0 - 1.0 / (1.0 - s2))
    gx = V[i, 0] - V[j, 0]
    gy = V[i, 1] - V[j, 1]
    gz = V[i, 2] - V[j, 2]
    g2 = gx * gx + gy * gy + gz * gz
    sig = p.c_sigma * pow(1.0 + g2, p.half_gamma)
    lam_dt = p.rate_pref * beta * sig * p.dt
    if lam_dt > max_rate_dt[0]:
        max_rate_dt[0] = lam_dt
    u = _uniform(p.seed, p.step, <uint64_t> i, <uint64_t> j, 0)
    if u >= -expm1(-lam_dt):
        return n_found
    u = _uniform(p.seed, p.step, <uint64_t> i, <uint64_t> j, 1)
    theta = pow(p.a_pow - u * p.span, -p.inv_nu)
    if theta < p.theta_min:
        theta = p.theta_min
    if theta > PI:
        theta = PI
    phi = TWO_PI * _uniform(p.seed, p.step, <uint64_t> i, <uint64_t> j, 2)
    z = _uniform(p.seed, p.step, <uint64_t> i, <uint64_t> j, 3)
    toff = _uniform(p.seed, p.step, <uint64_t> i, <uint64_t> j, 4)
    if n_found < cap:
        out_time[n_found] = p.t0 + toff * p.dt
        out_i[n_found] = i
        out_j[n_found] = j
        out_theta[n_found] = theta
        out_phi[n_found] = phi
        out_z[n_found] = z
    return n_found + 1


def scan_dense(double[:, ::1] R, double[:, ::1] V,
               uint64_t seed, uint64_t step, double t0, double dt,
               bint one_sided,
               double r_beta2, double amplitude, double half_gamma,
               double c_sigma, double rate_pref, double a_pow, double span,
               double inv_nu, double theta_min,
               int64_t row_lo, int64_t row_hi,
               double[::1] out_time, int64_t[::1] out_i, int64_t[::1] out_j,
               double[::1] out_theta, double[::1] out_phi, double[::1] out_z):
    """Scan rows [row_lo, row_hi) against all partners; returns (count, max λ·dt).

    If count exceeds the output capacity only the first `cap` events are
    written; the caller re-runs with a larger buffer (the stream is pure).
    """
    cdef ScanParams p
    p.t0 = t0; p.dt = dt; p.r_beta2 = r_beta2; p.amplitude = amplitude
    p.half_gamma = half_gamma; p.c_sigma = c_sigma; p.rate_pref = rate_pref
    p.a_pow = a_pow; p.span = span; p.inv_nu = inv_nu; p.theta_min = theta_min
    p.seed = seed; p.step = step
    cdef int64_t n = <int64_t> R.shape[0]
    cdef int64_t cap = <int64_t> out_time.shape[0]
    cdef int64_t n_found = 0
    cdef int64_t i, j
    cdef double max_rate_dt = 0.0
    with nogil:
        for i in range(row_lo, row_hi):
            if one_sided:
                for j in range(n):
                    if j != i:
                        n_found = _try_pair(&p, R, V, i, j, n_found, cap,
                                            &max_rate_dt, out_time, out_i,
                                            out_j, out_theta, out_phi, out_z)
            else:
                for j in range(i + 1, n):
                    n_found = _try_pair(&p, R, V, i, j, n_found, cap,
                                        &max_rate_dt, out_time, out_i,
                                        out_j, out_theta, out_phi, out_z)
    return n_found, max_rate_dt


def scan_binned(double[:, ::1] R, double[:, ::1] V,
                uint64_t seed, uint64_t step, double t0, double dt,
                bint one_sided,
                double r_beta2, double amplitude, double half_gamma,
                double c_sigma, double rate_pref, double a_pow, double span,
                double inv_nu, double theta_min,
                int64_t[::1] cell_of, int64_t[::1] members,
                int64_t[::1] cell_start, int64_t nx, int64_t ny, int64_t nz,
                int64_t row_lo, int64_t row_hi,
                double[::1] out_time, int64_t[::1] out_i, int64_t[::1] out_j,
                double[::1] out_theta, double[::1] out_phi, double[::1] out_z):
    """Neighbor-cell scan over rows [row_lo, row_hi); same contract as scan_dense.

    `cell_of[i]` is the flat cell id of particle i, `members` lists particles
    sorted by cell, `cell_start` delimits cells in `members`.
    """
    cdef ScanParams p
    p.t0 = t0; p.dt = dt; p.r_beta2 = r_beta2; p.amplitude = amplitude
    p.half_gamma = half_gamma; p.c_sigma = c_sigma; p.rate_pref = rate_pref
    p.a_pow = a_pow; p.span = span; p.inv_nu = inv_nu; p.theta_min = theta_min
    p.seed = seed; p.step = step
    cdef int64_t cap = <int64_t> out_time.shape[0]
    cdef int64_t n_found = 0
    cdef int64_t i, j, cid, cx, cy, cz, dx, dy, dz, ncid, idx
    cdef int64_t wx, wy, wz
    cdef double max_rate_dt = 0.0
    with nogil:
        for i in range(row_lo, row_hi):
            cid = cell_of[i]
            cz = cid % nz
            cy = (cid // nz) % ny
            cx = cid // (nz * ny)
            for dx in range(-1, 2):
                wx = cx + dx
                if wx < 0 or wx >= nx:
                    continue
                for dy in range(-1, 2):
                    wy = cy + dy
                    if wy < 0 or wy >= ny:
                        continue
                    for dz in range(-1, 2):
                        wz = cz + dz
                        if wz < 0 or wz >= nz:
                            continue
                        ncid = (wx * ny + wy) * nz + wz
                        for idx in range(cell_start[ncid], cell_start[ncid + 1]):
                            j = members[idx]
                            if one_sided:
                                if j == i:
                                    continue
                            elif j <= i:
                                continue
                            n_found = _try_pair(&p, R, V, i, j, n_found, cap,
                                                &max_rate_dt, out_time, out_i,
                                                out_j, out_theta, out_phi,
                                                out_z)
    return n_found, max_rate_dt
