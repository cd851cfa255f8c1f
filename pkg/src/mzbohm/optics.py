"""Interferometer geometry and instantaneous packet-level optical elements.

Beam splitter, mirrors and the which-way tag act as unitary maps on the packet
list at scheduled instants; between events propagation is exactly free. Free
propagation commutes with reflections, so a reflected packet is represented
exactly by reflecting its birth center and wavevector while keeping its width
clock (sigma0, birth_time) untouched.

Beam-splitter convention: transmitted amplitude 1/sqrt(2) for either input
side, reflected amplitude +1/sqrt(2) for packets arriving from the positive
side of the plane and -1/sqrt(2) from the negative side (a real, symmetric
unitary). With this choice a balanced interferometer fed from one port obeys
Psi(Rx) = +/- Psi(x) exactly, the sign fixed by the input side, which is what
pins the trajectories to their side of the symmetry plane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    BranchOverlapError,
    DoubleTagError,
    GeometryError,
    TimelineGapError,
)
from .wavefield import (
    GaussianPacket,
    PhysicalConstants,
    WaveField,
    WWLabel,
    cross_label_spatial_overlap,
    norm,
)

SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Plane2D:
    """Oriented line in the plane: point plus unit normal."""

    point: tuple[float, float]
    unit_normal: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))
        n = (float(self.unit_normal[0]), float(self.unit_normal[1]))
        object.__setattr__(self, "unit_normal", n)
        if abs(math.hypot(*n) - 1.0) > 1e-12:
            raise ValueError("unit_normal must have length 1 (within 1e-12)")

    def signed_distance(self, x) -> float:
        return (x[0] - self.point[0]) * self.unit_normal[0] + (
            x[1] - self.point[1]
        ) * self.unit_normal[1]

    def reflect_point(self, x) -> np.ndarray:
        d = self.signed_distance(x)
        return np.array(
            [x[0] - 2.0 * d * self.unit_normal[0], x[1] - 2.0 * d * self.unit_normal[1]]
        )

    def reflect_vector(self, v) -> np.ndarray:
        d = v[0] * self.unit_normal[0] + v[1] * self.unit_normal[1]
        return np.array(
            [v[0] - 2.0 * d * self.unit_normal[0], v[1] - 2.0 * d * self.unit_normal[1]]
        )


def reflect_config(x, plane: Plane2D) -> np.ndarray:
    """Reflection of a configuration-space point through a plane (involution)."""
    return plane.reflect_point(x)


class EventKind(enum.Enum):
    BEAM_SPLIT = "beam_split"
    MIRROR = "mirror"
    WW_TAG = "ww_tag"


@dataclass(frozen=True)
class HalfPlaneFilter:
    """Selects packets whose drifted center lies on one side of a plane."""

    plane: Plane2D
    side: int  # +1 or -1

    def matches(self, packet: GaussianPacket, t: float, constants: PhysicalConstants) -> bool:
        d = self.plane.signed_distance(packet.drifted_center(t, constants))
        return d * self.side > 0.0


@dataclass(frozen=True)
class OpticalEvent:
    kind: EventKind
    plane: Plane2D
    time: float
    applies_to: Optional[HalfPlaneFilter] = None

    def affected(self, field: WaveField):
        out = []
        for i, (lbl, p) in enumerate(field.terms):
            if self.applies_to is None or self.applies_to.matches(
                p, self.time, field.constants
            ):
                out.append(i)
        return out


class DetectorId(enum.Enum):
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True)
class DetectorRegion:
    """Half-plane detector: membership is signed distance > 0."""

    id: DetectorId
    half_plane: Plane2D

    def contains(self, x) -> bool:
        return self.half_plane.signed_distance(x) > 0.0


@dataclass(frozen=True)
class ConvexRegion:
    """Convex polygon given by counter-clockwise vertices."""

    vertices: tuple[tuple[float, float], ...]

    def contains(self, x) -> bool:
        v = self.vertices
        n = len(v)
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            if (bx - ax) * (x[1] - ay) - (by - ay) * (x[0] - ax) < 0.0:
                return False
        return True

    @property
    def center(self) -> np.ndarray:
        return np.mean(np.asarray(self.vertices), axis=0)

    @staticmethod
    def box(cx: float, cy: float, half_width: float) -> "ConvexRegion":
        h = half_width
        return ConvexRegion(
            ((cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h))
        )


@dataclass(frozen=True)
class InterferometerGeometry:
    source: GaussianPacket
    beam_splitter: Plane2D
    mirrors: tuple[Plane2D, ...]  # (r-arm mirror, t-arm mirror)
    ww_tag_planes: Optional[tuple[Plane2D, Plane2D]]
    detectors: tuple[DetectorRegion, DetectorRegion]
    region_I: ConvexRegion
    final_time: float

    def __post_init__(self):
        d1, d2 = self.detectors
        n1 = np.asarray(d1.half_plane.unit_normal)
        n2 = np.asarray(d2.half_plane.unit_normal)
        if n1 @ n2 > -1.0 + 1e-9:
            raise ValueError("detector half-planes must be oppositely oriented")
        s = (np.asarray(d2.half_plane.point) - np.asarray(d1.half_plane.point)) @ n1
        if s > 0.0:
            raise ValueError("detector half-planes overlap")

    def is_balanced(self, tol: float = 1e-12) -> bool:
        """Mirror planes are images of each other through the beam splitter."""
        if len(self.mirrors) != 2:
            return False
        mr, mt = self.mirrors
        p_img = self.beam_splitter.reflect_point(mr.point)
        n_img = self.beam_splitter.reflect_vector(mr.unit_normal)
        dp = abs(mt.signed_distance(p_img))
        dn = min(
            np.linalg.norm(n_img - np.asarray(mt.unit_normal)),
            np.linalg.norm(n_img + np.asarray(mt.unit_normal)),
        )
        return dp < tol and dn < tol


def _require_on_plane(packet: GaussianPacket, plane: Plane2D, t: float,
                      constants: PhysicalConstants, what: str):
    d = plane.signed_distance(packet.drifted_center(t, constants))
    if abs(d) > 0.1 * packet.sigma0:
        raise AlignmentError(
            f"{what} at t={t}: packet center is {d:.4g} off the event plane "
            f"(tolerance {0.1 * packet.sigma0:.4g}); timeline mis-scheduled"
        )


def apply_beam_splitter(field: WaveField, ev: OpticalEvent) -> WaveField:
    """Split each affected packet into a transmitted and a reflected copy.

    Transmitted: wavevector kept, amplitude * 1/sqrt(2). Reflected: wavevector
    and birth center reflected through the plane, amplitude * s/sqrt(2) with
    s = +1 (-1) for incidence from the positive (negative) side.
    """
    idx = set(ev.affected(field))
    terms = []
    for i, (lbl, p) in enumerate(field.terms):
        if i not in idx:
            terms.append((lbl, p))
            continue
        _require_on_plane(p, ev.plane, ev.time, field.constants, "beam splitter")
        k_dot_n = (
            p.wavevector[0] * ev.plane.unit_normal[0]
            + p.wavevector[1] * ev.plane.unit_normal[1]
        )
        if k_dot_n == 0.0:
            raise AlignmentError("packet propagates parallel to the beam-splitter plane")
        refl_sign = 1.0 if k_dot_n < 0.0 else -1.0
        terms.append(
            (lbl, GaussianPacket(p.center0, p.wavevector, p.sigma0, p.birth_time,
                                 p.amplitude * SQRT_HALF))
        )
        terms.append(
            (
                lbl,
                GaussianPacket(
                    tuple(ev.plane.reflect_point(p.center0)),
                    tuple(ev.plane.reflect_vector(p.wavevector)),
                    p.sigma0,
                    p.birth_time,
                    p.amplitude * refl_sign * SQRT_HALF,
                ),
            )
        )
    return field.with_terms(terms)


def apply_mirror(field: WaveField, ev: OpticalEvent) -> WaveField:
    """Reflect affected packets through the mirror plane; amplitude * i."""
    idx = set(ev.affected(field))
    terms = []
    for i, (lbl, p) in enumerate(field.terms):
        if i not in idx:
            terms.append((lbl, p))
            continue
        _require_on_plane(p, ev.plane, ev.time, field.constants, "mirror")
        terms.append(
            (
                lbl,
                GaussianPacket(
                    tuple(ev.plane.reflect_point(p.center0)),
                    tuple(ev.plane.reflect_vector(p.wavevector)),
                    p.sigma0,
                    p.birth_time,
                    p.amplitude * 1j,
                ),
            )
        )
    return field.with_terms(terms)


def apply_ww_tag(field: WaveField, ev: OpticalEvent, overlap_tol: float = 1e-12
                 ) -> WaveField:
    """Record the one-bit which-way tag: label packets by arm membership.

    Packets on the positive side of the event plane become R, negative side T;
    spatial parts are untouched (no momentum or energy exchange). Requires the
    two branches to be spatially disjoint and the field to be untagged.
    """
    if field.labels_present != {WWLabel.NONE}:
        raise DoubleTagError("which-way tag applied to an already tagged field")
    groups: dict[int, list[GaussianPacket]] = {1: [], -1: []}
    sides = []
    for _, p in field.terms:
        d = ev.plane.signed_distance(p.drifted_center(ev.time, field.constants))
        if d == 0.0:
            raise AlignmentError("packet center exactly on the tag partition plane")
        side = 1 if d > 0.0 else -1
        sides.append(side)
        groups[side].append(p)
    ov = cross_label_spatial_overlap(field, groups[1], groups[-1], ev.time)
    if ov > overlap_tol:
        raise BranchOverlapError(
            f"arm branches overlap ({ov:.3e} > {overlap_tol:.1e}) at tag time {ev.time}"
        )
    terms = []
    for (lbl, p), side in zip(field.terms, sides):
        terms.append((WWLabel.R if side > 0 else WWLabel.T, p))
    return field.with_terms(terms)


def apply_event(field: WaveField, ev: OpticalEvent) -> WaveField:
    if ev.kind is EventKind.BEAM_SPLIT:
        return apply_beam_splitter(field, ev)
    if ev.kind is EventKind.MIRROR:
        return apply_mirror(field, ev)
    if ev.kind is EventKind.WW_TAG:
        return apply_ww_tag(field, ev)
    raise ValueError(f"unknown event kind {ev.kind}")


def build_timeline(geom: InterferometerGeometry, constants: PhysicalConstants
                   ) -> list[OpticalEvent]:
    """Derive the ordered optical events from packet kinematics.

    Event times follow from the group velocity hbar*k/m and the plane
    positions, so packet centers sit on the event planes at the event times by
    construction. Simultaneous events (the two mirrors of a balanced
    interferometer) carry disjoint half-plane filters.
    """
    src = geom.source
    speed2 = src.wavevector[0] ** 2 + src.wavevector[1] ** 2
    if speed2 == 0.0:
        raise GeometryError("source wavevector must be non-zero")
    v = src.group_velocity(constants)

    def hit_time(pos, vel, plane: Plane2D, t_from: float) -> float:
        vn = vel[0] * plane.unit_normal[0] + vel[1] * plane.unit_normal[1]
        if vn == 0.0:
            raise GeometryError("packet path parallel to target plane")
        dt = -plane.signed_distance(pos) / vn
        if dt <= 0.0:
            raise GeometryError("non-positive flight time to target plane")
        return t_from + dt

    bs = geom.beam_splitter
    t_bs = hit_time(np.asarray(src.center0), v, bs, 0.0)
    x_bs = np.asarray(src.center0) + v * t_bs
    events = [OpticalEvent(EventKind.BEAM_SPLIT, bs, t_bs, None)]

    k_refl = bs.reflect_vector(src.wavevector)
    v_r = constants.hbar / constants.mass * k_refl
    v_t = v
    # r-arm is the reflected beam's side of the beam-splitter plane
    probe = x_bs + v_r * 1e-9
    r_side = 1 if bs.signed_distance(probe) > 0.0 else -1
    arm_of = {r_side: (v_r, geom.mirrors[0]), -r_side: (v_t, geom.mirrors[1])}

    if geom.ww_tag_planes is not None:
        cr, ct = geom.ww_tag_planes
        t_tag_r = hit_time(x_bs, arm_of[r_side][0], cr, t_bs)
        t_tag_t = hit_time(x_bs, arm_of[-r_side][0], ct, t_bs)
        if abs(t_tag_r - t_tag_t) > 1e-9:
            raise GeometryError(
                f"which-way tag planes are not simultaneous ({t_tag_r} vs {t_tag_t})"
            )
        events.append(OpticalEvent(EventKind.WW_TAG, bs, t_tag_r, None))

    for side in (r_side, -r_side):
        vel, mirror = arm_of[side]
        t_m = hit_time(x_bs, vel, mirror, t_bs)
        events.append(
            OpticalEvent(EventKind.MIRROR, mirror, t_m, HalfPlaneFilter(bs, side))
        )

    events.sort(key=lambda e: (e.time, e.kind.value))
    for a, b in zip(events, events[1:]):
        if b.time < a.time:
            raise GeometryError("events out of order")
        if b.time == a.time and not (
            a.applies_to is not None
            and b.applies_to is not None
            and a.applies_to.side != b.applies_to.side
        ):
            raise GeometryError("simultaneous events must affect disjoint packet sets")
    if geom.ww_tag_planes is not None:
        t_tag = next(e.time for e in events if e.kind is EventKind.WW_TAG)
        t_mirror = min(e.time for e in events if e.kind is EventKind.MIRROR)
        if not (t_bs < t_tag < t_mirror):
            raise GeometryError(
                "which-way tag must fall between the split and the mirrors"
            )
    if events[-1].time >= geom.final_time:
        raise GeometryError("final_time precedes the last optical event")
    return events


@dataclass(frozen=True)
class FieldTimeline:
    """Piecewise-free field history: segments (t_start, t_end, field)."""

    segments: tuple[tuple[float, float, WaveField], ...]
    events: tuple[OpticalEvent, ...]

    @property
    def t0(self) -> float:
        return self.segments[0][0]

    @property
    def t1(self) -> float:
        return self.segments[-1][1]

    def field_at(self, t: float) -> WaveField:
        if t < self.t0 - 1e-12 or t > self.t1 + 1e-12:
            raise TimelineGapError(f"t={t} outside timeline [{self.t0}, {self.t1}]")
        for ts, te, f in self.segments:
            if t < te:
                return f
        return self.segments[-1][2]

    def segment_index_at(self, t: float) -> int:
        if t < self.t0 - 1e-12 or t > self.t1 + 1e-12:
            raise TimelineGapError(f"t={t} outside timeline [{self.t0}, {self.t1}]")
        for i, (ts, te, _f) in enumerate(self.segments):
            if t < te:
                return i
        return len(self.segments) - 1


def evolve_field(field0: WaveField, events: Sequence[OpticalEvent], t_final: float,
                 norm_tol: float = 1e-12) -> FieldTimeline:
    """Apply the event sequence, checking unitarity, and return the timeline."""
    segs = []
    f = field0
    t_prev = 0.0
    n_prev = norm(f, max(t_prev, f.max_birth_time))
    for ev in events:
        if ev.time < t_prev:
            raise GeometryError("event times must not decrease")
        if ev.time > t_prev:
            segs.append((t_prev, ev.time, f))
        f = apply_event(f, ev)
        n_new = norm(f, ev.time)
        if abs(n_new - n_prev) > norm_tol * max(1.0, abs(n_prev)):
            raise GeometryError(
                f"{ev.kind.value} at t={ev.time} changed the norm by {n_new - n_prev:.3e}"
            )
        n_prev = n_new
        t_prev = ev.time
    if t_final <= t_prev:
        raise GeometryError("final time precedes the last event")
    segs.append((t_prev, t_final, f))
    # collapse zero-length segments produced by simultaneous events
    segs = [(a, b, f) for a, b, f in segs if b > a]
    return FieldTimeline(tuple(segs), tuple(events))
