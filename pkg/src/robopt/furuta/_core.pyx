# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rollout kernel.

Hot inner loop of the simulator: RK4 integration of the rotary-pendulum
rigid-body dynamics under zero-order-hold voltage control with encoder
quantization,低 low-pass velocity estimation, observation delay, and optional
noise injection. The arithmetic mirrors ``_python_core`` statement for
statement so both backends produce bit-identical trajectories.
"""

import numpy as np

from libc.math cimport cos, floor, isfinite, sin

COMPILED = True


cdef inline void _deriv(double alpha, double beta, double om, double ph,
                        double u,
                        double c0, double c1, double c2, double c3, double c4,
                        double c5, double c6, double c7, double c8,
                        double* out) noexcept nogil:
    cdef double s = sin(beta)
    cdef double c = cos(beta)
    cdef double tau = c6 * u - c7 * om
    cdef double m11 = c0 + c2 * s * s
    cdef double m12 = c3 * c
    cdef double r1 = tau - c4 * om - 2.0 * c2 * s * c * om * ph + c3 * s * ph * ph
    cdef double r2 = -c5 * ph + c2 * s * c * om * om + c8 * s
    cdef double det = m11 * c2 - m12 * m12
    out[0] = om
    out[1] = ph
    out[2] = (c2 * r1 - m12 * r2) / det
    out[3] = (m11 * r2 - m12 * r1) / det


cdef inline void _rk4(double* x, double u, double dt,
                      double c0, double c1, double c2, double c3, double c4,
                      double c5, double c6, double c7, double c8) noexcept nogil:
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    _deriv(x[0], x[1], x[2], x[3], u, c0, c1, c2, c3, c4, c5, c6, c7, c8, k1)
    _deriv(x[0] + h2 * k1[0], x[1] + h2 * k1[1], x[2] + h2 * k1[2],
           x[3] + h2 * k1[3], u, c0, c1, c2, c3, c4, c5, c6, c7, c8, k2)
    _deriv(x[0] + h2 * k2[0], x[1] + h2 * k2[1], x[2] + h2 * k2[2],
           x[3] + h2 * k2[3], u, c0, c1, c2, c3, c4, c5, c6, c7, c8, k3)
    _deriv(x[0] + dt * k3[0], x[1] + dt * k3[1], x[2] + dt * k3[2],
           x[3] + dt * k3[3], u, c0, c1, c2, c3, c4, c5, c6, c7, c8, k4)
    x[0] = x[0] + h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    x[1] = x[1] + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    x[2] = x[2] + h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    x[3] = x[3] + h6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])


def rollout_kernel(double[:] theta, double[:] consts, double delta,
                   double filter_a, double dt_ctrl, int n_substeps,
                   int n_steps, double kappa, int delay_steps, double[:] init,
                   double[:, :] enc_noise, double[:] act_noise,
                   double[:, :] states, double[:, :] observations,
                   double[:] voltages):
    """Compiled counterpart of ``_python_core.rollout_kernel``."""
    cdef double c0 = consts[0], c1 = consts[1], c2 = consts[2], c3 = consts[3]
    cdef double c4 = consts[4], c5 = consts[5], c6 = consts[6], c7 = consts[7]
    cdef double c8 = consts[8], vlim = consts[9]
    cdef double t0 = theta[0], t1 = theta[1], t2 = theta[2], t3 = theta[3]

    cdef double x[4]
    x[0] = init[0]; x[1] = init[1]; x[2] = init[2]; x[3] = init[3]

    cdef bint has_enc = enc_noise.shape[0] > 0
    cdef bint has_act = act_noise.shape[0] > 0
    cdef double coeff = (1.0 - filter_a) / dt_ctrl
    cdef double dt_sub = dt_ctrl / n_substeps

    cdef int buf_len = delay_steps + 1
    buf_arr = np.zeros(4 * buf_len, dtype=np.float64)
    cdef double[:] buf = buf_arr

    cdef double om_hat = 0.0, ph_hat = 0.0, prev_pa = 0.0, prev_pb = 0.0
    cdef double counts_a, counts_b, pa, pb, u
    cdef bint diverged = False
    cdef int n_rec = 0
    cdef int t, k, base, lag, sub

    for t in range(n_steps):
        counts_a = floor(x[0] / delta)
        counts_b = floor(x[1] / delta)
        if has_enc:
            counts_a = counts_a + enc_noise[t, 0]
            counts_b = counts_b + enc_noise[t, 1]
        pa = counts_a * delta
        pb = counts_b * delta
        if t == 0:
            om_hat = 0.0
            ph_hat = 0.0
            for k in range(buf_len):
                base = 4 * k
                buf[base] = pa
                buf[base + 1] = pb
                buf[base + 2] = 0.0
                buf[base + 3] = 0.0
        else:
            om_hat = filter_a * om_hat + coeff * (pa - prev_pa)
            ph_hat = filter_a * ph_hat + coeff * (pb - prev_pb)
            base = 4 * (t % buf_len)
            buf[base] = pa
            buf[base + 1] = pb
            buf[base + 2] = om_hat
            buf[base + 3] = ph_hat
        prev_pa = pa
        prev_pb = pb

        lag = t - delay_steps
        if lag < 0:
            lag = 0
        base = 4 * (lag % buf_len)
        u = kappa * (t0 * buf[base] + t1 * buf[base + 1]
                     + t2 * buf[base + 2] + t3 * buf[base + 3])
        if has_act:
            u = u + act_noise[t]
        if u > vlim:
            u = vlim
        elif u < -vlim:
            u = -vlim

        states[t, 0] = x[0]
        states[t, 1] = x[1]
        states[t, 2] = x[2]
        states[t, 3] = x[3]
        observations[t, 0] = pa
        observations[t, 1] = pb
        observations[t, 2] = om_hat
        observations[t, 3] = ph_hat
        voltages[t] = u
        n_rec = t + 1

        for sub in range(n_substeps):
            _rk4(x, u, dt_sub, c0, c1, c2, c3, c4, c5, c6, c7, c8)
        if not (isfinite(x[0]) and isfinite(x[1])
                and isfinite(x[2]) and isfinite(x[3])):
            diverged = True
            break

    return n_rec, diverged
