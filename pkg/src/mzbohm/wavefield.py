"""Analytic wave field on the plane x the one-bit which-way coordinate.

The field is a superposition of freely propagating Gaussian packets, each
carrying a which-way label. Between optical elements propagation is exactly
free, so amplitude, velocity field and quantum potential are evaluated from
closed forms (no grid, no finite differences). The guidance velocity is
computed from the probability current, (hbar/m) Im(psi* grad psi)/|psi|^2,
which equals grad(S)/m wherever the phase S is defined and has no branch-cut
artifacts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import kernels as _K
from .errors import FieldPreconditionError, NodeProximityError

# Density threshold for node detection, relative to the field's peak density.
NODE_DENSITY_REL = 1e-10


class WWLabel(enum.IntEnum):
    """Which-way coordinate: NONE before the tag event, R/T after."""

    NONE = 0
    R = 1
    T = 2


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0.0 and self.mass > 0.0):
            raise ValueError("hbar and mass must be positive")


@dataclass(frozen=True)
class GaussianPacket:
    """One freely propagating isotropic Gaussian term.

    center0/wavevector are the birth-time center and wavevector; amplitude is
    a complex weight that folds in accumulated optical phases. At time
    t >= birth_time the packet has complex width
    sigma_c(t) = sigma0 * (1 + i*hbar*(t - birth_time)/(2*m*sigma0^2)) and
    drifted center center0 + (hbar/m)*wavevector*(t - birth_time).
    """

    center0: tuple[float, float]
    wavevector: tuple[float, float]
    sigma0: float = 1.0
    birth_time: float = 0.0
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "center0", (float(self.center0[0]), float(self.center0[1])))
        object.__setattr__(
            self, "wavevector", (float(self.wavevector[0]), float(self.wavevector[1]))
        )
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        if not self.sigma0 > 0.0:
            raise ValueError("sigma0 must be positive")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    def drifted_center(self, t: float, constants: PhysicalConstants) -> np.ndarray:
        tau = t - self.birth_time
        v = constants.hbar / constants.mass
        return np.array(
            [
                self.center0[0] + v * self.wavevector[0] * tau,
                self.center0[1] + v * self.wavevector[1] * tau,
            ]
        )

    def sigma_t(self, t: float, constants: PhysicalConstants) -> float:
        """Spreading law |sigma_c(t)| = sigma0*sqrt(1 + (hbar*tau/(2*m*sigma0^2))^2)."""
        tau = t - self.birth_time
        theta = constants.hbar * tau / (2.0 * constants.mass * self.sigma0**2)
        return self.sigma0 * math.sqrt(1.0 + theta * theta)

    def group_velocity(self, constants: PhysicalConstants) -> np.ndarray:
        c = constants.hbar / constants.mass
        return np.array([c * self.wavevector[0], c * self.wavevector[1]])


@dataclass(frozen=True)
class PolarForm:
    """Polar decomposition R*exp(i*S/hbar): amplitude, action phase, density.

    S_phase is NaN at nodes (|amplitude| below the node threshold), where the
    phase is undefined.
    """

    R_amp: float
    S_phase: float
    P_density: float


@dataclass(frozen=True)
class WaveField:
    """Immutable superposition of labeled packets; all evaluations are pure."""

    terms: tuple[tuple[WWLabel, GaussianPacket], ...]
    constants: PhysicalConstants = PhysicalConstants()

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((WWLabel(lbl), pkt) for lbl, pkt in self.terms)
        )
        if not self.terms:
            raise ValueError("field needs at least one term")
        if len({lbl for lbl, _ in self.terms}) > 2:
            raise ValueError("at most two distinct which-way labels may be present")

    @cached_property
    def _packed(self):
        n = len(self.terms)
        centers = np.empty((n, 2))
        kvecs = np.empty((n, 2))
        sigmas = np.empty(n)
        births = np.empty(n)
        amps = np.empty(n, dtype=np.complex128)
        labels = np.empty(n, dtype=np.int8)
        for i, (lbl, p) in enumerate(self.terms):
            centers[i] = p.center0
            kvecs[i] = p.wavevector
            sigmas[i] = p.sigma0
            births[i] = p.birth_time
            amps[i] = p.amplitude
            labels[i] = int(lbl)
        return centers, kvecs, sigmas, births, amps, labels

    @property
    def labels_present(self) -> set[WWLabel]:
        return {lbl for lbl, _ in self.terms}

    @property
    def max_birth_time(self) -> float:
        return max(p.birth_time for _, p in self.terms)

    def packets(self, w: WWLabel | None = None):
        if w is None:
            return [p for _, p in self.terms]
        return [p for lbl, p in self.terms if lbl == w]

    def with_terms(self, terms) -> "WaveField":
        return WaveField(tuple(terms), self.constants)

    def simplified(self, drop_below: float = 1e-14) -> "WaveField":
        """Merge terms with identical packet parameters, drop nulled terms."""
        merged: dict = {}
        order: list = []
        for lbl, p in self.terms:
            key = (lbl, p.center0, p.wavevector, p.sigma0, p.birth_time)
            if key in merged:
                merged[key] += p.amplitude
            else:
                merged[key] = p.amplitude
                order.append(key)
        amax = max(abs(a) for a in merged.values())
        out = []
        for key in order:
            amp = merged[key]
            if abs(amp) <= drop_below * amax:
                continue
            lbl, c0, k, s0, tb = key
            out.append((lbl, GaussianPacket(c0, k, s0, tb, amp)))
        if not out:
            raise ValueError("simplification removed every term")
        return self.with_terms(out)

    def _check_time(self, t: float):
        if t < self.max_birth_time - 1e-15:
            raise FieldPreconditionError(
                f"field evaluated at t={t} before a term's birth time {self.max_birth_time}"
            )


def evaluate(field: WaveField, w: WWLabel, x, t: float) -> complex:
    """Field value of the label-w slice at point x and time t."""
    field._check_time(t)
    c, k, s, b, a, l = field._packed
    psi, _, _, _ = _K.eval_point(
        c, k, s, b, a, l, int(w), field.constants.hbar, field.constants.mass,
        float(x[0]), float(x[1]), t,
    )
    return psi


def evaluate_with_derivatives(field: WaveField, w: WWLabel, x, t: float):
    """(psi, grad, lap): value, analytic gradient (complex 2-vector), Laplacian."""
    field._check_time(t)
    c, k, s, b, a, l = field._packed
    psi, gx, gy, lap = _K.eval_point(
        c, k, s, b, a, l, int(w), field.constants.hbar, field.constants.mass,
        float(x[0]), float(x[1]), t,
    )
    return psi, np.array([gx, gy]), lap


def evaluate_many(field: WaveField, w: WWLabel, xs, ys, t: float):
    """Vectorised evaluate over arrays of points; returns the value array."""
    field._check_time(t)
    c, k, s, b, a, l = field._packed
    psi, _, _, _ = _K.eval_many(
        c, k, s, b, a, l, int(w), field.constants.hbar, field.constants.mass, xs, ys, t
    )
    return psi


def evaluate_many_with_derivatives(field: WaveField, w: WWLabel, xs, ys, t: float):
    field._check_time(t)
    c, k, s, b, a, l = field._packed
    return _K.eval_many(
        c, k, s, b, a, l, int(w), field.constants.hbar, field.constants.mass, xs, ys, t
    )


def peak_density_bound(field: WaveField, w: WWLabel, t: float) -> float:
    """Analytic upper bound on the label-w density at time t (node normalizer)."""
    _, _, s, b, a, l = field._packed
    return _K.peak_density_bound(s, b, a, l, int(w), field.constants.hbar,
                                 field.constants.mass, t)


def polar_decompose(a: complex, hbar: float = 1.0, node_threshold: float = 0.0) -> PolarForm:
    """Split an amplitude into (R, S, P) with S = hbar*arg(a) in (-pi*hbar, pi*hbar].

    S is NaN when |a| <= node_threshold (phase undefined at a node).
    """
    r = abs(a)
    if r <= node_threshold:
        return PolarForm(R_amp=r, S_phase=math.nan, P_density=r * r)
    return PolarForm(R_amp=r, S_phase=hbar * math.atan2(a.imag, a.real), P_density=r * r)


def velocity(
    field: WaveField, w: WWLabel, x, t: float, node_rel: float = NODE_DENSITY_REL
) -> np.ndarray:
    """Guidance velocity (hbar/m) Im(psi* grad psi)/|psi|^2 of the label-w slice.

    Raises NodeProximityError when the local density is below node_rel times
    the field's peak density (phase undefined; integrators shrink their step).
    """
    psi, grad, _ = evaluate_with_derivatives(field, w, x, t)
    den = psi.real**2 + psi.imag**2
    peak = peak_density_bound(field, w, t)
    threshold = node_rel * peak
    if den < threshold or peak == 0.0:
        raise NodeProximityError(
            f"|psi|^2 = {den:.3e} below node threshold {threshold:.3e} at x={tuple(x)}, t={t}",
            x=tuple(x), density=den, threshold=threshold,
        )
    c = field.constants.hbar / (field.constants.mass * den)
    return np.array(
        [
            c * (psi.real * grad[0].imag - psi.imag * grad[0].real),
            c * (psi.real * grad[1].imag - psi.imag * grad[1].real),
        ]
    )


def quantum_potential(
    field: WaveField, w: WWLabel, x, t: float, node_rel: float = NODE_DENSITY_REL
) -> float:
    """Quantum potential U = -hbar^2/(2m) * lap(R)/R from analytic derivatives.

    Uses lap(R)/R = Re(lap(psi)/psi) + |Im(grad(psi)/psi)|^2, which follows
    from psi = R exp(iS/hbar) and avoids differentiating |psi| directly.
    """
    psi, grad, lap = evaluate_with_derivatives(field, w, x, t)
    den = psi.real**2 + psi.imag**2
    peak = peak_density_bound(field, w, t)
    threshold = node_rel * peak
    if den < threshold or peak == 0.0:
        raise NodeProximityError(
            f"|psi|^2 = {den:.3e} below node threshold {threshold:.3e} at x={tuple(x)}, t={t}",
            x=tuple(x), density=den, threshold=threshold,
        )
    re_lap = (lap.real * psi.real + lap.imag * psi.imag) / den
    im_gx = (grad[0].imag * psi.real - grad[0].real * psi.imag) / den
    im_gy = (grad[1].imag * psi.real - grad[1].real * psi.imag) / den
    hbar, mass = field.constants.hbar, field.constants.mass
    return -(hbar * hbar) / (2.0 * mass) * (re_lap + im_gx * im_gx + im_gy * im_gy)


def interference_identity_check(field: WaveField, x, t: float) -> float:
    """Residual of R^2 = R_r^2 + R_t^2 + 2 R_r R_t cos((S_r - S_t)/hbar).

    The left side comes from the total field's polar form, the right side from
    the two terms' polar forms; for an exact implementation the residual is
    pure rounding noise. Requires exactly two unlabeled terms, both away from
    nodes at x.
    """
    if len(field.terms) != 2 or field.labels_present != {WWLabel.NONE}:
        raise FieldPreconditionError(
            "interference identity requires exactly two unlabeled terms"
        )
    hbar = field.constants.hbar
    peak = peak_density_bound(field, WWLabel.NONE, t)
    total = polar_decompose(evaluate(field, WWLabel.NONE, x, t), hbar)
    parts = []
    for _, pkt in field.terms:
        sub = field.with_terms([(WWLabel.NONE, pkt)])
        a = evaluate(sub, WWLabel.NONE, x, t)
        pf = polar_decompose(a, hbar)
        if pf.P_density < NODE_DENSITY_REL * peak:
            raise FieldPreconditionError(
                f"term amplitude below node threshold at x={tuple(x)}, t={t}"
            )
        parts.append(pf)
    pr, pt = parts
    rhs = (
        pr.R_amp**2
        + pt.R_amp**2
        + 2.0 * pr.R_amp * pt.R_amp * math.cos((pr.S_phase - pt.S_phase) / hbar)
    )
    return abs(total.P_density - rhs)


def overlap(pa: GaussianPacket, pb: GaussianPacket, t: float, constants: PhysicalConstants
            ) -> complex:
    """Exact overlap integral <a|b> of two packets at a common time t.

    Closed-form 2D complex Gaussian integral; for free packets the value is
    independent of t (free propagation is unitary).
    """
    hbar, mass = constants.hbar, constants.mass

    def params(p: GaussianPacket):
        tau = t - p.birth_time
        theta = hbar * tau / (2.0 * mass * p.sigma0**2)
        den = 1.0 + theta * theta
        gamma = complex(1.0, -theta) / (4.0 * p.sigma0**2 * den)
        nrm = (
            (1.0 / math.sqrt(2.0 * math.pi * p.sigma0**2))
            * p.sigma0
            * complex(1.0, -theta)
            / (p.sigma0 * den)
        )
        c = p.drifted_center(t, constants)
        omega = hbar * (p.wavevector[0] ** 2 + p.wavevector[1] ** 2) * tau / (2.0 * mass)
        return gamma, nrm, c, omega

    ga, na, ca, oa = params(pa)
    gb, nb, cb, ob = params(pb)
    ka = np.asarray(pa.wavevector)
    kb = np.asarray(pb.wavevector)
    x0a = np.asarray(pa.center0)
    x0b = np.asarray(pb.center0)

    alpha = np.conj(ga) + gb
    exponent = (
        -np.conj(ga) * (ca[0] ** 2 + ca[1] ** 2)
        - gb * (cb[0] ** 2 + cb[1] ** 2)
        + 1j * (ka @ x0a - kb @ x0b)
        + 1j * (oa - ob)
    )
    for d in range(2):
        beta = 2.0 * np.conj(ga) * ca[d] + 2.0 * gb * cb[d] + 1j * (kb[d] - ka[d])
        exponent += beta * beta / (4.0 * alpha)
    pref = np.conj(pa.amplitude) * pb.amplitude * np.conj(na) * nb * (np.pi / alpha)
    return complex(pref * np.exp(exponent))


def norm(field: WaveField, t: float | None = None) -> float:
    """Total squared norm from analytic overlap integrals.

    Cross-label pairs contribute exactly zero (orthogonal tag states).
    """
    if t is None:
        t = field.max_birth_time
    field._check_time(t)
    acc = 0.0
    for i, (la, pa) in enumerate(field.terms):
        for j, (lb, pb) in enumerate(field.terms):
            if la != lb:
                continue
            if j < i:
                continue
            ov = overlap(pa, pb, t, field.constants)
            if i == j:
                acc += ov.real
            else:
                acc += 2.0 * ov.real
    return acc


def cross_label_spatial_overlap(field: WaveField, group_a, group_b, t: float) -> float:
    """|sum of pairwise overlaps| between two packet groups (spatial parts only)."""
    acc = 0.0 + 0.0j
    for pa in group_a:
        for pb in group_b:
            acc += overlap(pa, pb, t, field.constants)
    return abs(acc)
