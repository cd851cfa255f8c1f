"""Field- and ensemble-level checks of the interferometer's symmetry claims.

Covers: reflection symmetry of the balanced field (plain and labeled forms),
flux antisymmetry across the beam-splitter plane, fringe visibility, the
free-region vs interference-region behaviour of the quantum potential, and the
two-sheet projection picture with crossing markers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import FieldPreconditionError, NodeProximityError
from .optics import ConvexRegion, Plane2D
from .trajectories import Trajectory, _common_grid, _labels_at, detect_projected_pair_crossings
from .wavefield import (
    WaveField,
    WWLabel,
    evaluate_many,
    peak_density_bound,
    quantum_potential,
    velocity,
)

DENSITY_FLOOR_REL = 1e-6


@dataclass(frozen=True)
class SymmetryReport:
    """Residuals of the reflection/flux symmetry checks (None = not evaluated)."""

    max_field_asymmetry: Optional[float]
    global_sign: int
    max_flux_symmetry_violation: Optional[float]
    sampled_points: int

    def as_dict(self):
        return {
            "max_field_asymmetry": self.max_field_asymmetry,
            "global_sign": self.global_sign,
            "max_flux_symmetry_violation": self.max_flux_symmetry_violation,
            "sampled_points": self.sampled_points,
        }


@dataclass(frozen=True)
class VisibilityReport:
    visibility: float
    scan_time: float
    scenario: str

    def as_dict(self):
        return {
            "visibility": self.visibility,
            "scan_time": self.scan_time,
            "scenario": self.scenario,
        }


@dataclass(frozen=True)
class ContrastReport:
    """Quantum-potential contrast: free-region excess vs interference-region scale."""

    free_excess: float
    interference_max_abs: Optional[float] = None
    branch_excess: Optional[float] = None

    def as_dict(self):
        return {
            "free_excess": self.free_excess,
            "interference_max_abs": self.interference_max_abs,
            "branch_excess": self.branch_excess,
        }


def _support_samples(field: WaveField, labels: Sequence[WWLabel], t: float,
                     n_points: int, seed: int) -> np.ndarray:
    """Deterministic scatter around the drifted centers of the given labels."""
    rng = np.random.default_rng(seed)
    packets = [p for lbl, p in field.terms if lbl in labels]
    if not packets:
        raise FieldPreconditionError("no packets with the requested labels")
    c = field.constants
    out = np.empty((n_points, 2))
    for i in range(n_points):
        p = packets[i % len(packets)]
        out[i] = p.drifted_center(t, c) + p.sigma_t(t, c) * rng.standard_normal(2)
    return out


def check_reflection_symmetry(field: WaveField, plane: Plane2D, t: float,
                              n_points: int = 200, seed: int = 0) -> SymmetryReport:
    """Max relative residual of Psi(x) = s * Psi(Rx) over support samples.

    For a tagged field the labeled form is used: the r-branch at x against the
    t-branch at Rx. The single sign s is fit by least squares over the sample.
    """
    labeled = field.labels_present == {WWLabel.R, WWLabel.T}
    if labeled:
        sample_labels, wa, wb = (WWLabel.R,), WWLabel.R, WWLabel.T
    else:
        sample_labels, wa, wb = tuple(field.labels_present), WWLabel.NONE, WWLabel.NONE
        if field.labels_present != {WWLabel.NONE}:
            raise FieldPreconditionError("field must be untagged or fully tagged")
    pts = _support_samples(field, sample_labels, t, n_points, seed)
    refl = np.array([plane.reflect_point(p) for p in pts])
    a = evaluate_many(field, wa, pts[:, 0], pts[:, 1], t)
    b = evaluate_many(field, wb, refl[:, 0], refl[:, 1], t)
    peak = math.sqrt(peak_density_bound(field, wa, t))
    amp = np.maximum(np.abs(a), np.abs(b))
    keep = amp > math.sqrt(DENSITY_FLOOR_REL) * peak
    if keep.sum() < max(8, n_points // 20):
        raise FieldPreconditionError(
            f"only {int(keep.sum())} sample points above the density floor"
        )
    a, b, amp = a[keep], b[keep], amp[keep]
    sign = 1 if float(np.real(np.vdot(b, a))) >= 0.0 else -1
    resid = np.abs(a - sign * b) / amp
    return SymmetryReport(
        max_field_asymmetry=float(resid.max()),
        global_sign=sign,
        max_flux_symmetry_violation=None,
        sampled_points=int(keep.sum()),
    )


def check_flux_antisymmetry(field: WaveField, plane: Plane2D, times: Sequence[float],
                            n_points: int = 50, node_rel: float = 1e-10
                            ) -> SymmetryReport:
    """Max violation of the no-net-flux condition on the beam-splitter plane.

    Tagged field: |v_perp(r, xbar) + v_perp(t, xbar)| over plane points with
    density above the floor on both branches. Untagged field: |v_perp(xbar)|
    (the symmetric field has no normal phase gradient on its fixed points).
    """
    labeled = field.labels_present == {WWLabel.R, WWLabel.T}
    n_hat = np.asarray(plane.unit_normal)
    tangent = np.array([-n_hat[1], n_hat[0]])
    p0 = np.asarray(plane.point)
    c = field.constants
    worst = 0.0
    kept = 0
    for t in times:
        spread = max(p.sigma_t(t, c) for _, p in field.terms)
        centers = [p.drifted_center(t, c) for _, p in field.terms]
        u_centers = [(np.asarray(cc) - p0) @ tangent for cc in centers]
        us = np.concatenate(
            [np.linspace(u - 2.5 * spread, u + 2.5 * spread, n_points) for u in u_centers]
        )
        for u in us:
            x = p0 + u * tangent
            try:
                if labeled:
                    floor_ok = all(
                        abs(
                            complex(
                                evaluate_many(field, w, np.array([x[0]]),
                                              np.array([x[1]]), t)[0]
                            )
                        ) ** 2
                        > DENSITY_FLOOR_REL * peak_density_bound(field, w, t)
                        for w in (WWLabel.R, WWLabel.T)
                    )
                    if not floor_ok:
                        continue
                    vr = velocity(field, WWLabel.R, x, t, node_rel)
                    vt = velocity(field, WWLabel.T, x, t, node_rel)
                    viol = abs((vr + vt) @ n_hat)
                else:
                    psi = complex(
                        evaluate_many(field, WWLabel.NONE, np.array([x[0]]),
                                      np.array([x[1]]), t)[0]
                    )
                    if abs(psi) ** 2 <= DENSITY_FLOOR_REL * peak_density_bound(
                        field, WWLabel.NONE, t
                    ):
                        continue
                    viol = abs(velocity(field, WWLabel.NONE, x, t, node_rel) @ n_hat)
            except NodeProximityError:
                continue
            worst = max(worst, viol)
            kept += 1
    if kept == 0:
        raise FieldPreconditionError(
            "no on-plane points above the density floor at any sampled time"
        )
    return SymmetryReport(
        max_field_asymmetry=None,
        global_sign=0,
        max_flux_symmetry_violation=worst,
        sampled_points=kept,
    )


def _region_samples(region: ConvexRegion, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    verts = np.asarray(region.vertices)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    out = []
    while len(out) < n:
        p = lo + (hi - lo) * rng.random(2)
        if region.contains(p):
            out.append(p)
    return np.asarray(out)


def quantum_potential_contrast(
    field: WaveField,
    region_free: ConvexRegion,
    t_free: float,
    region_interference: ConvexRegion,
    t_overlap: float,
    w: WWLabel = WWLabel.NONE,
    n_samples: int = 60,
    seed: int = 0,
    node_rel: float = 1e-10,
) -> ContrastReport:
    """Free-region excess |U - U_single| and interference-region max |U|.

    The free probe compares the full field's quantum potential against the
    single packet whose center lies nearest the probe region (the other packet
    is far away and must not matter). The interference probe scans the region
    densely along the fringe normal and keeps the largest |U| outside node
    zones.
    """
    c_free = region_free.center
    packets = field.packets(w)
    nearest = min(
        packets,
        key=lambda p: float(np.sum((p.drifted_center(t_free, field.constants) - c_free) ** 2)),
    )
    single = field.with_terms([(w, nearest)])
    pts = _region_samples(region_free, n_samples, seed)
    free_excess = 0.0
    for p in pts:
        u_full = quantum_potential(field, w, p, t_free, node_rel)
        u_one = quantum_potential(single, w, p, t_free, node_rel)
        free_excess = max(free_excess, abs(u_full - u_one))

    u_max = interference_quantum_potential_peak(
        field, region_interference, t_overlap, w=w, node_rel=node_rel
    )
    return ContrastReport(free_excess=free_excess, interference_max_abs=u_max)


def interference_quantum_potential_peak(
    field: WaveField,
    region: ConvexRegion,
    t: float,
    w: WWLabel = WWLabel.NONE,
    node_rel: float = 1e-10,
) -> float:
    """Largest |U| found next to a located fringe node inside the region.

    The quantum potential diverges like 1/(distance to node) where the fringe
    envelope varies, so the dark fringe nearest the region center is located
    by bounded minimization of the density along the fringe normal and |U| is
    probed on a ladder of offsets, keeping points outside the node zone.
    """
    from scipy.optimize import minimize_scalar

    center = region.center
    verts = np.asarray(region.vertices)
    half = 0.45 * float(verts[:, 1].max() - verts[:, 1].min())
    ys = center[1] + np.linspace(-half, half, 4096)
    dens = np.abs(
        evaluate_many(field, w, np.full(ys.shape, center[0]), ys, t)
    ) ** 2
    interior = np.arange(1, len(ys) - 1)
    is_min = (dens[interior] < dens[interior - 1]) & (dens[interior] <= dens[interior + 1])
    minima = interior[is_min]
    deep = minima[dens[minima] < 0.2 * dens.max()]
    if len(deep) == 0:
        raise FieldPreconditionError("no dark fringe inside the probe region")
    i0 = deep[np.argmin(np.abs(ys[deep] - center[1]))]

    def d(y):
        v = complex(
            evaluate_many(field, w, np.array([center[0]]), np.array([y]), t)[0]
        )
        return v.real * v.real + v.imag * v.imag

    res = minimize_scalar(
        d, bounds=(ys[i0 - 1], ys[i0 + 1]), method="bounded",
        options={"xatol": 1e-15},
    )
    y_node = float(res.x)
    width = float(ys[i0 + 1] - ys[i0 - 1])
    u_max = 0.0
    probed = 0
    for delta in width * np.geomspace(1e-1, 1e-7, 25):
        for s in (-1.0, 1.0):
            try:
                u = quantum_potential(field, w, (center[0], y_node + s * delta), t, node_rel)
            except NodeProximityError:
                continue
            probed += 1
            u_max = max(u_max, abs(u))
    if probed == 0:
        raise FieldPreconditionError("every node probe fell inside the node zone")
    return u_max


def branch_quantum_potential_excess(
    field: WaveField,
    w: WWLabel,
    region: ConvexRegion,
    t: float,
    n_samples: int = 60,
    seed: int = 0,
    node_rel: float = 1e-10,
) -> float:
    """Max |U(branch) - U(single packet)| over the region (tagged fields).

    With the tag recorded, a branch holds one packet and no fringes: its
    quantum potential must equal the free single-packet value.
    """
    packets = field.packets(w)
    if not packets:
        raise FieldPreconditionError(f"no packets with label {w}")
    center = region.center
    nearest = min(
        packets,
        key=lambda p: float(np.sum((p.drifted_center(t, field.constants) - center) ** 2)),
    )
    single = WaveField(((w, nearest),), field.constants)
    worst = 0.0
    for p in _region_samples(region, n_samples, seed):
        u_branch = quantum_potential(field, w, p, t, node_rel)
        u_one = quantum_potential(single, w, p, t, node_rel)
        worst = max(worst, abs(u_branch - u_one))
    return worst


def compute_visibility(scan: Sequence[float]) -> float:
    """Fringe contrast (max - min)/(max + min) over the central half of a scan."""
    scan = np.asarray(scan, dtype=float)
    if len(scan) < 16:
        raise FieldPreconditionError("visibility scan needs at least 16 samples")
    q = len(scan) // 4
    central = scan[q : len(scan) - q]
    hi, lo = float(central.max()), float(central.min())
    if hi <= 0.0:
        raise FieldPreconditionError("degenerate all-zero scan")
    return (hi - lo) / (hi + lo)


@dataclass
class ProjectionPicture:
    """Resampled spatial polylines per sheet plus projected-crossing markers."""

    times: np.ndarray
    positions: np.ndarray  # (n_traj, n_times, 2)
    labels: np.ndarray  # (n_traj, n_times) which-way label codes
    markers: list = dc_field(default_factory=list)

    @property
    def n_trajectories(self) -> int:
        return self.positions.shape[0]


def build_projection_picture(trajs: Sequence[Trajectory], n_samples: int = 2000
                             ) -> ProjectionPicture:
    """Project the ensemble to the plane and mark equal-time sheet crossings."""
    alive = [t for t in trajs if t.failure is None]
    if not alive:
        raise FieldPreconditionError("no completed trajectories to project")
    grid = _common_grid(alive, n_samples)
    pos = np.stack([t.resample(grid) for t in alive])
    lbl = np.stack([_labels_at(t, grid) for t in alive])
    markers, _total = detect_projected_pair_crossings(alive, n_samples, collect=True)
    return ProjectionPicture(times=grid, positions=pos, labels=lbl, markers=markers)
