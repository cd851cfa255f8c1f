# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: Gaussian-sum field evaluation and trajectory stepping.

Twin of ``mzbohm._kernels_py`` (see there for the closed form and the array
layout). Kept operation-for-operation identical so both backends agree to
rounding.
"""

from libc.math cimport exp, cos, sin, sqrt, fabs

import numpy as np

TWO_PI = 6.283185307179586476925287

STATUS_OK = 0
STATUS_NODE_TRAP = 1
STATUS_STEP_LIMIT = 2

cdef double _TWO_PI = 6.283185307179586476925287

# Dormand-Prince 5(4) tableau
cdef double _A21 = 1.0 / 5.0
cdef double _A31 = 3.0 / 40.0, _A32 = 9.0 / 40.0
cdef double _A41 = 44.0 / 45.0, _A42 = -56.0 / 15.0, _A43 = 32.0 / 9.0
cdef double _A51 = 19372.0 / 6561.0, _A52 = -25360.0 / 2187.0
cdef double _A53 = 64448.0 / 6561.0, _A54 = -212.0 / 729.0
cdef double _A61 = 9017.0 / 3168.0, _A62 = -355.0 / 33.0, _A63 = 46732.0 / 5247.0
cdef double _A64 = 49.0 / 176.0, _A65 = -5103.0 / 18656.0
cdef double _B1 = 35.0 / 384.0, _B3 = 500.0 / 1113.0, _B4 = 125.0 / 192.0
cdef double _B5 = -2187.0 / 6784.0, _B6 = 11.0 / 84.0
cdef double _E1 = 71.0 / 57600.0, _E3 = -71.0 / 16695.0, _E4 = 71.0 / 1920.0
cdef double _E5 = -17253.0 / 339200.0, _E6 = 22.0 / 525.0, _E7 = -1.0 / 40.0
cdef double _C2 = 1.0 / 5.0, _C3 = 3.0 / 10.0, _C4 = 4.0 / 5.0, _C5 = 8.0 / 9.0


cdef inline double complex _cexp(double re, double im) nogil:
    cdef double m = exp(re)
    return m * cos(im) + 1j * (m * sin(im))


cdef inline void _eval_core(
    const double[:, ::1] centers, const double[:, ::1] kvecs,
    const double[::1] sigmas, const double[::1] births,
    const double complex[::1] amps, const signed char[::1] labels,
    int w, double hbar, double mass, double x, double y, double t,
    double complex* out,
) nogil:
    cdef double complex psi = 0, gx = 0, gy = 0, lap = 0
    cdef double complex gamma, nrm, val, gpx, gpy
    cdef double s0, tau, theta, den, inv_re, g_re, kx, ky, x0, y0
    cdef double vfac, dx, dy, r2, phase
    cdef Py_ssize_t p, n = sigmas.shape[0]
    for p in range(n):
        if labels[p] != w:
            continue
        s0 = sigmas[p]
        tau = t - births[p]
        theta = hbar * tau / (2.0 * mass * s0 * s0)
        den = 1.0 + theta * theta
        inv_re = 1.0 / (s0 * den)
        g_re = 1.0 / (4.0 * s0 * s0 * den)
        gamma = g_re - 1j * (theta * g_re)
        nrm = (1.0 / sqrt(_TWO_PI * s0 * s0)) * s0 * (inv_re - 1j * (theta * inv_re))
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
        gpx = (-2.0 * gamma.real * dx) + 1j * (-2.0 * gamma.imag * dx + kx)
        gpy = (-2.0 * gamma.real * dy) + 1j * (-2.0 * gamma.imag * dy + ky)
        psi = psi + val
        gx = gx + val * gpx
        gy = gy + val * gpy
        lap = lap + val * (gpx * gpx + gpy * gpy - 4.0 * gamma)
    out[0] = psi
    out[1] = gx
    out[2] = gy
    out[3] = lap


def eval_point(const double[:, ::1] centers, const double[:, ::1] kvecs,
               const double[::1] sigmas, const double[::1] births,
               const double complex[::1] amps, const signed char[::1] labels,
               int w, double hbar, double mass, double x, double y, double t):
    """Field value, gradient and Laplacian of the label-w slice at one point."""
    cdef double complex out[4]
    _eval_core(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, x, y, t, out)
    return out[0], out[1], out[2], out[3]


def eval_many(const double[:, ::1] centers, const double[:, ::1] kvecs,
              const double[::1] sigmas, const double[::1] births,
              const double complex[::1] amps, const signed char[::1] labels,
              int w, double hbar, double mass, xs, ys, double t):
    """Vectorised eval_point over point arrays xs, ys."""
    xs_a = np.ascontiguousarray(xs, dtype=np.float64)
    ys_a = np.ascontiguousarray(ys, dtype=np.float64)
    shape = xs_a.shape
    cdef double[::1] xv = xs_a.reshape(-1)
    cdef double[::1] yv = ys_a.reshape(-1)
    cdef Py_ssize_t npts = xv.shape[0]
    psi_a = np.empty(npts, dtype=np.complex128)
    gx_a = np.empty(npts, dtype=np.complex128)
    gy_a = np.empty(npts, dtype=np.complex128)
    lap_a = np.empty(npts, dtype=np.complex128)
    cdef double complex[::1] psi_v = psi_a
    cdef double complex[::1] gx_v = gx_a
    cdef double complex[::1] gy_v = gy_a
    cdef double complex[::1] lap_v = lap_a
    cdef double complex out[4]
    cdef Py_ssize_t i
    with nogil:
        for i in range(npts):
            _eval_core(centers, kvecs, sigmas, births, amps, labels,
                       w, hbar, mass, xv[i], yv[i], t, out)
            psi_v[i] = out[0]
            gx_v[i] = out[1]
            gy_v[i] = out[2]
            lap_v[i] = out[3]
    return (psi_a.reshape(shape), gx_a.reshape(shape),
            gy_a.reshape(shape), lap_a.reshape(shape))


cdef inline double _peak_bound(
    const double[::1] sigmas, const double[::1] births,
    const double complex[::1] amps, const signed char[::1] labels,
    int w, double hbar, double mass, double t,
) nogil:
    cdef double acc = 0.0
    cdef double s0, tau, theta, sig_t
    cdef Py_ssize_t p, n = sigmas.shape[0]
    for p in range(n):
        if labels[p] != w:
            continue
        s0 = sigmas[p]
        tau = t - births[p]
        theta = hbar * tau / (2.0 * mass * s0 * s0)
        sig_t = s0 * sqrt(1.0 + theta * theta)
        acc += sqrt(amps[p].real * amps[p].real + amps[p].imag * amps[p].imag) / (
            sqrt(_TWO_PI * s0 * s0) * sig_t / s0)
    return acc * acc


def peak_density_bound(const double[::1] sigmas, const double[::1] births,
                       const double complex[::1] amps, const signed char[::1] labels,
                       int w, double hbar, double mass, double t):
    """Upper bound on |psi_w|^2 at time t."""
    return _peak_bound(sigmas, births, amps, labels, w, hbar, mass, t)


cdef inline bint _vel(
    const double[:, ::1] centers, const double[:, ::1] kvecs,
    const double[::1] sigmas, const double[::1] births,
    const double complex[::1] amps, const signed char[::1] labels,
    int w, double hbar, double mass, double node_rel,
    double x, double y, double t, double* vx, double* vy,
) nogil:
    cdef double complex out[4]
    cdef double den, peak, c
    _eval_core(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, x, y, t, out)
    den = out[0].real * out[0].real + out[0].imag * out[0].imag
    peak = _peak_bound(sigmas, births, amps, labels, w, hbar, mass, t)
    if den < node_rel * peak or peak == 0.0:
        vx[0] = 0.0
        vy[0] = 0.0
        return 0
    c = hbar / (mass * den)
    vx[0] = c * (out[0].real * out[1].imag - out[0].imag * out[1].real)
    vy[0] = c * (out[0].real * out[2].imag - out[0].imag * out[2].real)
    return 1


def integrate_leg(const double[:, ::1] centers, const double[:, ::1] kvecs,
                  const double[::1] sigmas, const double[::1] births,
                  const double complex[::1] amps, const signed char[::1] labels,
                  int w, double hbar, double mass, double node_rel,
                  double x0, double y0, double t0, double t1,
                  double rtol, double atol, double h_min, int max_points):
    """Adaptive Dormand-Prince 5(4) guidance-equation integration of one leg.

    Same contract as the pure-Python twin: returns
    (status, ts, xys, vs, near_node_flags) with the first row at (t0, x0).
    """
    cdef int cap = 4096
    if cap > max_points:
        cap = max_points
    ts_a = np.empty(cap, dtype=np.float64)
    xy_a = np.empty((cap, 2), dtype=np.float64)
    v_a = np.empty((cap, 2), dtype=np.float64)
    fl_a = np.empty(cap, dtype=np.bool_)
    cdef double[::1] ts = ts_a
    cdef double[:, ::1] xy = xy_a
    cdef double[:, ::1] vv = v_a
    cdef signed char[::1] fl = fl_a.view(np.int8)

    cdef Py_ssize_t n = 0
    cdef double t = t0, x = x0, y = y0, h, t_new, x5, y5
    cdef double k1x = 0, k1y = 0, k2x = 0, k2y = 0, k3x = 0, k3y = 0
    cdef double k4x = 0, k4y = 0, k5x = 0, k5y = 0, k6x = 0, k6y = 0
    cdef double k7x = 0, k7y = 0
    cdef double ex, ey, scx, scy, err, fac
    cdef bint ok, node_hit, near_node = 0
    cdef int status = STATUS_OK

    ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass,
              node_rel, x, y, t, &k1x, &k1y)
    ts[0] = t
    xy[0, 0] = x
    xy[0, 1] = y
    vv[0, 0] = k1x
    vv[0, 1] = k1y
    fl[0] = 0
    n = 1
    if not ok:
        return STATUS_NODE_TRAP, ts_a[:n].copy(), xy_a[:n].copy(), v_a[:n].copy(), fl_a[:n].copy()
    if t1 <= t0:
        return STATUS_OK, ts_a[:n].copy(), xy_a[:n].copy(), v_a[:n].copy(), fl_a[:n].copy()

    h = (t1 - t0) * 1e-3

    while t < t1:
        if h > t1 - t:
            h = t1 - t
        node_hit = 0

        ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                  x + h * (_A21 * k1x), y + h * (_A21 * k1y), t + _C2 * h, &k2x, &k2y)
        if ok:
            ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                      x + h * (_A31 * k1x + _A32 * k2x),
                      y + h * (_A31 * k1y + _A32 * k2y), t + _C3 * h, &k3x, &k3y)
        if ok:
            ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                      x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x),
                      y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y), t + _C4 * h, &k4x, &k4y)
        if ok:
            ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                      x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x),
                      y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y),
                      t + _C5 * h, &k5x, &k5y)
        if ok:
            ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                      x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x),
                      y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y),
                      t + h, &k6x, &k6y)
        if ok:
            x5 = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
            y5 = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
            t_new = t + h
            if t_new >= t1:
                t_new = t1
            ok = _vel(centers, kvecs, sigmas, births, amps, labels, w, hbar, mass, node_rel,
                      x5, y5, t_new, &k7x, &k7y)
        if not ok:
            node_hit = 1
            near_node = 1

        if not node_hit:
            ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
            ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
            scx = atol + rtol * (fabs(x) if fabs(x) > fabs(x5) else fabs(x5))
            scy = atol + rtol * (fabs(y) if fabs(y) > fabs(y5) else fabs(y5))
            err = sqrt(0.5 * ((ex / scx) * (ex / scx) + (ey / scy) * (ey / scy)))
            if err <= 1.0:
                t = t_new
                x = x5
                y = y5
                k1x = k7x
                k1y = k7y
                if n >= cap:
                    cap = cap * 2
                    if cap > max_points:
                        cap = max_points
                    ts_a = _grow(ts_a, cap)
                    xy_a = _grow(xy_a, cap)
                    v_a = _grow(v_a, cap)
                    fl_a = _grow(fl_a, cap)
                    ts = ts_a
                    xy = xy_a
                    vv = v_a
                    fl = fl_a.view(np.int8)
                ts[n] = t
                xy[n, 0] = x
                xy[n, 1] = y
                vv[n, 0] = k7x
                vv[n, 1] = k7y
                fl[n] = 1 if near_node else 0
                n += 1
                near_node = 0
                if n >= max_points:
                    status = STATUS_STEP_LIMIT
                    break
                fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
            else:
                fac = 0.9 * err ** -0.2
                if fac < 0.2:
                    fac = 0.2
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
            h = h * fac
        else:
            h = 0.5 * h
        if h < h_min:
            status = STATUS_NODE_TRAP
            break
    return status, ts_a[:n].copy(), xy_a[:n].copy(), v_a[:n].copy(), fl_a[:n].copy()


def _grow(arr, cap):
    shape = (cap,) + arr.shape[1:]
    out = np.empty(shape, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out
