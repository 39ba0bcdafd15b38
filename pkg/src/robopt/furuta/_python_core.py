"""Pure-Python rollout kernel.

Fallback for environments without the compiled extension. The arithmetic here
is written scalar-for-scalar in the same order as ``_core.pyx`` (both call the
platform libm), so the two backends produce bit-identical trajectories; the
equivalence is asserted in the test suite and the benchmark.
"""

from math import cos, floor, isfinite, sin

COMPILED = False


def _deriv(alpha, beta, om, ph, u, c0, c1, c2, c3, c4, c5, c6, c7, c8):
    """Rigid-body state derivative under a held motor voltage.

    Solves the 2x2 mass-matrix system of the rotary pendulum (generalized
    coordinates: arm angle, pendulum angle) with DC-motor torque, viscous
    damping on both joints, and gravity acting on the pendulum.
    """
    s = sin(beta)
    c = cos(beta)
    tau = c6 * u - c7 * om
    m11 = c0 + c2 * s * s
    m12 = c3 * c
    r1 = tau - c4 * om - 2.0 * c2 * s * c * om * ph + c3 * s * ph * ph
    r2 = -c5 * ph + c2 * s * c * om * om + c8 * s
    det = m11 * c2 - m12 * m12
    dom = (c2 * r1 - m12 * r2) / det
    dph = (m11 * r2 - m12 * r1) / det
    return om, ph, dom, dph


def _rk4(alpha, beta, om, ph, u, dt, c0, c1, c2, c3, c4, c5, c6, c7, c8):
    k1a, k1b, k1o, k1p = _deriv(alpha, beta, om, ph, u,
                                c0, c1, c2, c3, c4, c5, c6, c7, c8)
    h2 = 0.5 * dt
    k2a, k2b, k2o, k2p = _deriv(alpha + h2 * k1a, beta + h2 * k1b,
                                om + h2 * k1o, ph + h2 * k1p, u,
                                c0, c1, c2, c3, c4, c5, c6, c7, c8)
    k3a, k3b, k3o, k3p = _deriv(alpha + h2 * k2a, beta + h2 * k2b,
                                om + h2 * k2o, ph + h2 * k2p, u,
                                c0, c1, c2, c3, c4, c5, c6, c7, c8)
    k4a, k4b, k4o, k4p = _deriv(alpha + dt * k3a, beta + dt * k3b,
                                om + dt * k3o, ph + dt * k3p, u,
                                c0, c1, c2, c3, c4, c5, c6, c7, c8)
    h6 = dt / 6.0
    return (alpha + h6 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            beta + h6 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
            om + h6 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o),
            ph + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p))


def rollout_kernel(theta, consts, delta, filter_a, dt_ctrl, n_substeps, n_steps,
                   kappa, delay_steps, init, enc_noise, act_noise,
                   states, observations, voltages):
    """Simulate ``n_steps`` control periods of the closed loop.

    Writes into the preallocated ``states``/``observations``/``voltages``
    arrays and returns ``(n_recorded, diverged)``. ``enc_noise`` (n, 2) holds
    encoder-count offsets and ``act_noise`` (n,) voltage offsets; pass
    zero-length arrays to disable either.
    """
    c0 = consts[0]; c1 = consts[1]; c2 = consts[2]; c3 = consts[3]
    c4 = consts[4]; c5 = consts[5]; c6 = consts[6]; c7 = consts[7]
    c8 = consts[8]; vlim = consts[9]

    t0 = theta[0]; t1 = theta[1]; t2 = theta[2]; t3 = theta[3]
    alpha = init[0]; beta = init[1]; om = init[2]; ph = init[3]

    has_enc = len(enc_noise) > 0
    has_act = len(act_noise) > 0
    coeff = (1.0 - filter_a) / dt_ctrl
    dt_sub = dt_ctrl / n_substeps

    buf_len = delay_steps + 1
    # ring buffer of past observations, pre-filled with the first one
    buf = [0.0] * (4 * buf_len)

    om_hat = 0.0
    ph_hat = 0.0
    prev_pa = 0.0
    prev_pb = 0.0
    diverged = False
    n_rec = 0

    for t in range(n_steps):
        counts_a = floor(alpha / delta)
        counts_b = floor(beta / delta)
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

        states[t, 0] = alpha
        states[t, 1] = beta
        states[t, 2] = om
        states[t, 3] = ph
        observations[t, 0] = pa
        observations[t, 1] = pb
        observations[t, 2] = om_hat
        observations[t, 3] = ph_hat
        voltages[t] = u
        n_rec = t + 1

        for _ in range(n_substeps):
            alpha, beta, om, ph = _rk4(alpha, beta, om, ph, u, dt_sub,
                                       c0, c1, c2, c3, c4, c5, c6, c7, c8)
        if not (isfinite(alpha) and isfinite(beta)
                and isfinite(om) and isfinite(ph)):
            diverged = True
            break

    return n_rec, diverged
