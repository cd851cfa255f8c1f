"""Pure-Python kernels: Gaussian-sum field evaluation and trajectory stepping.

Reference implementation of the hot numerical core. `mzbohm._kernels` is the
compiled twin with identical semantics; `mzbohm._backend` picks one at import.
Scalar routines deliberately mirror the C code operation by operation so the
two backends agree to rounding.

Packet arrays (one row per term):
    centers[P, 2]  initial packet centers
    kvecs[P, 2]    wavevectors
    sigmas[P]      initial isotropic widths
    births[P]      birth times
    amps[P]        complex weights (optical phases folded in)
    labels[P]      which-way label codes (0 none, 1 r, 2 t)

Each term at time t >= birth is

    amp * N(t) * exp(-gamma*|x - c(t)|^2 + i*(k.(x - x0) - hbar*|k|^2*tau/(2m)))

with tau = t - birth, theta = hbar*tau/(2*m*sigma0^2),
c(t) = x0 + (hbar/m)*k*tau, gamma = (1 - i*theta)/(4*sigma0^2*(1+theta^2)),
N(t) = (2*pi*sigma0^2)^(-1/2) * sigma0 * inv_sigma_c,
inv_sigma_c = (1 - i*theta)/(sigma0*(1+theta^2)).
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi

# integrate_leg status codes
STATUS_OK = 0
STATUS_NODE_TRAP = 1
STATUS_STEP_LIMIT = 2

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0


def _cexp(re, im):
    m = math.exp(re)
    return complex(m * math.cos(im), m * math.sin(im))


def eval_point(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, x, y, t):
    """Field value, gradient and Laplacian of the label-w slice at one point.

    Returns (psi, gx, gy, lap) as complex scalars, where (gx, gy) is the
    gradient of psi and lap its Laplacian. Terms whose label differs from w
    contribute exactly zero.
    """
    psi = 0.0 + 0.0j
    gx = 0.0 + 0.0j
    gy = 0.0 + 0.0j
    lap = 0.0 + 0.0j
    n = len(sigmas)
    for p in range(n):
        if labels[p] != w:
            continue
        s0 = sigmas[p]
        tau = t - births[p]
        theta = hbar * tau / (2.0 * mass * s0 * s0)
        den = 1.0 + theta * theta
        inv_re = 1.0 / (s0 * den)
        g_re = 1.0 / (4.0 * s0 * s0 * den)
        gamma = complex(g_re, -theta * g_re)
        nrm = (1.0 / math.sqrt(TWO_PI * s0 * s0)) * s0 * complex(inv_re, -theta * inv_re)
        kx = kvecs[p, 0]
        ky = kvecs[p, 1]
        x0 = centers[p, 0]
        y0 = centers[p, 1]
        vfac = hbar * tau / mass
        dx = x - (x0 + vfac * kx)
        dy = y - (y0 + vfac * ky)
        r2 = dx * dx + dy * dy
        phase = kx * (x - x0) + ky * (y - y0) - hbar * (kx * kx + ky * ky) * tau / (2.0 * mass)
        val = amps[p] * nrm * _cexp(-gamma.real * r2, -gamma.imag * r2 + phase)
        gpx = complex(-2.0 * gamma.real * dx, -2.0 * gamma.imag * dx + kx)
        gpy = complex(-2.0 * gamma.real * dy, -2.0 * gamma.imag * dy + ky)
        psi = psi + val
        gx = gx + val * gpx
        gy = gy + val * gpy
        lap = lap + val * (gpx * gpx + gpy * gpy - 4.0 * gamma)
    return psi, gx, gy, lap


def eval_many(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, xs, ys, t):
    """Vectorised eval_point over point arrays xs, ys (term-sequential sums)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    psi = np.zeros(xs.shape, dtype=np.complex128)
    gx = np.zeros(xs.shape, dtype=np.complex128)
    gy = np.zeros(xs.shape, dtype=np.complex128)
    lap = np.zeros(xs.shape, dtype=np.complex128)
    n = len(sigmas)
    for p in range(n):
        if labels[p] != w:
            continue
        s0 = sigmas[p]
        tau = t - births[p]
        theta = hbar * tau / (2.0 * mass * s0 * s0)
        den = 1.0 + theta * theta
        inv_re = 1.0 / (s0 * den)
        g_re = 1.0 / (4.0 * s0 * s0 * den)
        gamma = complex(g_re, -theta * g_re)
        nrm = (1.0 / math.sqrt(TWO_PI * s0 * s0)) * s0 * complex(inv_re, -theta * inv_re)
        kx = kvecs[p, 0]
        ky = kvecs[p, 1]
        x0 = centers[p, 0]
        y0 = centers[p, 1]
        vfac = hbar * tau / mass
        dx = xs - (x0 + vfac * kx)
        dy = ys - (y0 + vfac * ky)
        r2 = dx * dx + dy * dy
        phase = kx * (xs - x0) + ky * (ys - y0) - hbar * (kx * kx + ky * ky) * tau / (2.0 * mass)
        val = (amps[p] * nrm) * np.exp(-gamma.real * r2 + 1j * (-gamma.imag * r2 + phase))
        gpx = -2.0 * gamma.real * dx + 1j * (-2.0 * gamma.imag * dx + kx)
        gpy = -2.0 * gamma.real * dy + 1j * (-2.0 * gamma.imag * dy + ky)
        psi += val
        gx += val * gpx
        gy += val * gpy
        lap += val * (gpx * gpx + gpy * gpy - 4.0 * gamma)
    return psi, gx, gy, lap


def peak_density_bound(sigmas, births, amps, labels, w, hbar, mass, t):
    """Upper bound on |psi_w|^2 at time t: (sum of per-term peak amplitudes)^2."""
    acc = 0.0
    n = len(sigmas)
    for p in range(n):
        if labels[p] != w:
            continue
        s0 = sigmas[p]
        tau = t - births[p]
        theta = hbar * tau / (2.0 * mass * s0 * s0)
        sig_t = s0 * math.sqrt(1.0 + theta * theta)
        acc += abs(amps[p]) / (math.sqrt(TWO_PI * s0 * s0) * sig_t / s0)
    return acc * acc


def _velocity(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel, x, y, t):
    """(ok, vx, vy): guidance velocity, ok=False when inside the node zone."""
    psi, gx, gy, _lap = eval_point(
        centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, x, y, t
    )
    den = psi.real * psi.real + psi.imag * psi.imag
    peak = peak_density_bound(sigmas, births, amps, labels, w, hbar, mass, t)
    if den < node_rel * peak or peak == 0.0:
        return False, 0.0, 0.0
    c = hbar / (mass * den)
    vx = c * (psi.real * gx.imag - psi.imag * gx.real)
    vy = c * (psi.real * gy.imag - psi.imag * gy.real)
    return True, vx, vy


def integrate_leg(
    centers,
    kvecs,
    sigmas,
    births,
    amps,
    labels,
    w,
    hbar,
    mass,
    node_rel,
    x0,
    y0,
    t0,
    t1,
    rtol,
    atol,
    h_min,
    max_points,
):
    """Integrate dx/dt = v(w, x, t) from t0 to t1 with adaptive Dormand-Prince 5(4).

    Records every accepted step. Near-node stage evaluations reject the step
    and halve h; once h < h_min the trajectory is abandoned (node trap).

    Returns (status, ts, xys, vs, flags): arrays of times, positions (n, 2),
    velocities (n, 2) and per-step near-node flags. The first row is the
    initial state; on NODE_TRAP/STEP_LIMIT the arrays hold the partial path.
    """
    ts = [t0]
    xs = [(x0, y0)]
    flagged = [False]

    ok, k1x, k1y = _velocity(
        centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel, x0, y0, t0
    )
    vs = [(k1x, k1y)]
    if not ok:
        return (STATUS_NODE_TRAP,) + _pack(ts, xs, vs, flagged)
    if t1 <= t0:
        return (STATUS_OK,) + _pack(ts, xs, vs, flagged)

    t = t0
    x = x0
    y = y0
    h = (t1 - t0) * 1e-3
    near_node = False

    while t < t1:
        if h > t1 - t:
            h = t1 - t
        node_hit = False

        ok, k2x, k2y = _velocity(
            centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
            x + h * (_A21 * k1x), y + h * (_A21 * k1y), t + _C2 * h,
        )
        if ok:
            ok, k3x, k3y = _velocity(
                centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                x + h * (_A31 * k1x + _A32 * k2x), y + h * (_A31 * k1y + _A32 * k2y), t + _C3 * h,
            )
        if ok:
            ok, k4x, k4y = _velocity(
                centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x),
                y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y),
                t + _C4 * h,
            )
        if ok:
            ok, k5x, k5y = _velocity(
                centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x),
                y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y),
                t + _C5 * h,
            )
        if ok:
            ok, k6x, k6y = _velocity(
                centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x),
                y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y),
                t + h,
            )
        if ok:
            x5 = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
            y5 = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
            t_new = t + h
            if t_new >= t1:
                t_new = t1
            ok, k7x, k7y = _velocity(
                centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                x5, y5, t_new,
            )
        if not ok:
            node_hit = True
            near_node = True

        if not node_hit:
            ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
            ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
            scx = atol + rtol * max(abs(x), abs(x5))
            scy = atol + rtol * max(abs(y), abs(y5))
            err = math.sqrt(0.5 * ((ex / scx) ** 2 + (ey / scy) ** 2))
            if err <= 1.0:
                t = t_new
                x = x5
                y = y5
                k1x = k7x
                k1y = k7y
                ts.append(t)
                xs.append((x, y))
                vs.append((k7x, k7y))
                flagged.append(near_node)
                near_node = False
                if len(ts) >= max_points:
                    return (STATUS_STEP_LIMIT,) + _pack(ts, xs, vs, flagged)
                fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
            else:
                fac = max(0.9 * err ** -0.2, 0.2)
            h = h * min(max(fac, 0.2), 5.0)
        else:
            h = 0.5 * h
        if h < h_min:
            return (STATUS_NODE_TRAP,) + _pack(ts, xs, vs, flagged)
    return (STATUS_OK,) + _pack(ts, xs, vs, flagged)


def _pack(ts, xs, vs, flagged):
    return (
        np.asarray(ts, dtype=np.float64),
        np.asarray(xs, dtype=np.float64).reshape(len(ts), 2),
        np.asarray(vs, dtype=np.float64).reshape(len(ts), 2),
        np.asarray(flagged, dtype=np.bool_),
    )
