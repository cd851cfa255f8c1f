"""Bohm trajectory ensembles on the extended configuration space.

Initial positions are Born-sampled from |Psi|^2, integrated through the field
timeline with an adaptive Dormand-Prince 5(4) stepper (compiled kernel when
available), and attributed to detectors at the final time. Trajectories keep
their which-way coordinate: NONE until the tag event, then R or T by arm
membership, after which they are guided by their own branch only.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels as _K
from .errors import FieldPreconditionError, FlowCrossingError, SamplerEfficiencyError
from .optics import DetectorRegion, EventKind, FieldTimeline, Plane2D
from .wavefield import WaveField, WWLabel, norm as field_norm

log = logging.getLogger(__name__)

DEFAULT_TOL_STEP = 1e-8
DEFAULT_NODE_REL = 1e-10
DEFAULT_H_MIN = 1e-12
MAX_POINTS_PER_LEG = 400_000


class OriginArm(enum.Enum):
    R_ARM = "r"
    T_ARM = "t"
    UNKNOWN = "?"


class Endpoint(enum.Enum):
    D1 = "D1"
    D2 = "D2"
    UNDETECTED = "undetected"


@dataclass(frozen=True)
class TrajectoryPoint:
    """State at one accepted integrator step."""

    t: float
    x: np.ndarray
    w: WWLabel
    v: np.ndarray
    near_node: bool


@dataclass
class Trajectory:
    """Time-stamped path with which-way history and endpoint attribution.

    Stored as parallel arrays (times strictly increasing); point(i) gives the
    record view. Labels switch from NONE at most once, at the tag event.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    labels: np.ndarray
    near_node: np.ndarray
    origin_arm: OriginArm = OriginArm.UNKNOWN
    endpoint: Endpoint = Endpoint.UNDETECTED
    failure: Optional[str] = None

    def __len__(self) -> int:
        return len(self.times)

    def point(self, i: int) -> TrajectoryPoint:
        return TrajectoryPoint(
            t=float(self.times[i]),
            x=self.positions[i],
            w=WWLabel(int(self.labels[i])),
            v=self.velocities[i],
            near_node=bool(self.near_node[i]),
        )

    @property
    def final_label(self) -> WWLabel:
        return WWLabel(int(self.labels[-1]))

    @property
    def final_position(self) -> np.ndarray:
        return self.positions[-1]

    def resample(self, times: np.ndarray) -> np.ndarray:
        """Positions linearly interpolated onto the given time grid."""
        if times[0] < self.times[0] - 1e-12 or times[-1] > self.times[-1] + 1e-12:
            raise FieldPreconditionError("resample grid outside trajectory span")
        x = np.interp(times, self.times, self.positions[:, 0])
        y = np.interp(times, self.times, self.positions[:, 1])
        return np.column_stack([x, y])


@dataclass(frozen=True)
class EnsembleResult:
    """Per-run statistics: counts[origin_arm, detector] plus crossing totals."""

    counts: np.ndarray  # 2x2 int: rows (r_arm, t_arm), cols (D1, D2)
    undetected: int
    crossings_of_bs_plane: int
    projected_pair_crossings: int
    seed: int

    @property
    def size(self) -> int:
        return int(self.counts.sum()) + self.undetected


def born_sample(field: WaveField, t: float, n: int, seed: int,
                batch: int = 4096) -> np.ndarray:
    """Draw n i.i.d. points from the Born density |Psi(., t)|^2 (marginal over w).

    Rejection sampling against a Gaussian-mixture envelope built from the
    packet list; deterministic given the seed.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.zeros((0, 2))
    total = field_norm(field, t)
    if abs(total - 1.0) > 1e-9:
        raise FieldPreconditionError(f"born_sample requires a normalized field (norm={total})")

    packets = [p for _, p in field.terms]
    weights = np.array([abs(p.amplitude) ** 2 for p in packets])
    weights = weights / weights.sum()
    centers = np.array([p.drifted_center(t, field.constants) for p in packets])
    widths = np.array([1.3 * p.sigma_t(t, field.constants) for p in packets])
    sig_t = np.array([p.sigma_t(t, field.constants) for p in packets])
    n_terms = len(packets)
    w_sum = sum(abs(p.amplitude) ** 2 for p in packets)
    bound = n_terms * w_sum * float(np.max((widths / sig_t) ** 2))

    c, k, s, b, a, l = field._packed
    labels_present = sorted({int(lbl) for lbl, _ in field.terms})
    hbar, mass = field.constants.hbar, field.constants.mass

    def density(pts):
        d = np.zeros(len(pts))
        for w in labels_present:
            psi, _, _, _ = _K.eval_many(c, k, s, b, a, l, w, hbar, mass,
                                        pts[:, 0], pts[:, 1], t)
            d += np.abs(psi) ** 2
        return d

    rng = np.random.default_rng(seed)
    out = np.empty((n, 2))
    got = 0
    drawn = 0
    while got < n:
        comp = rng.choice(n_terms, size=batch, p=weights) if n_terms > 1 else np.zeros(
            batch, dtype=int)
        pts = centers[comp] + widths[comp, None] * rng.standard_normal((batch, 2))
        env = np.zeros(batch)
        for j in range(n_terms):
            diff = pts - centers[j]
            env += (
                weights[j]
                / (2.0 * np.pi * widths[j] ** 2)
                * np.exp(-np.sum(diff**2, axis=1) / (2.0 * widths[j] ** 2))
            )
        accept = rng.random(batch) < density(pts) / (bound * env)
        sel = pts[accept]
        drawn += batch
        take = min(len(sel), n - got)
        out[got : got + take] = sel[:take]
        got += take
        if drawn >= 10 * batch and got / drawn < 1e-3:
            raise SamplerEfficiencyError(
                f"acceptance rate {got / drawn:.2e} below 1e-3; envelope misconfigured"
            )
    return out


def integrate_trajectory(
    timeline: FieldTimeline,
    x0,
    t0: Optional[float] = None,
    t1: Optional[float] = None,
    tol_step: float = DEFAULT_TOL_STEP,
    node_rel: float = DEFAULT_NODE_REL,
    h_min: float = DEFAULT_H_MIN,
) -> Trajectory:
    """Integrate one trajectory through the piecewise-free field timeline.

    Positions are continuous across optical events; at the tag event the
    which-way coordinate is set by arm membership (side of the tag partition
    plane). Node traps abandon the trajectory, which stays UNDETECTED.
    """
    t0 = timeline.t0 if t0 is None else t0
    t1 = timeline.t1 if t1 is None else t1
    if not (timeline.t0 - 1e-12 <= t0 < t1 <= timeline.t1 + 1e-12):
        raise FieldPreconditionError("integration window not covered by the timeline")

    tag_events = [e for e in timeline.events if e.kind is EventKind.WW_TAG]
    tag_time = tag_events[0].time if tag_events else None
    tag_plane = tag_events[0].plane if tag_events else None

    w = WWLabel.NONE
    x = np.asarray(x0, dtype=float)
    t = t0
    ts_parts = []
    xy_parts = []
    v_parts = []
    nn_parts = []
    lbl_parts = []
    failure = None

    i_seg = timeline.segment_index_at(t0)
    while True:
        seg_t0, seg_t1, field = timeline.segments[i_seg]
        leg_end = min(seg_t1, t1)
        if tag_time is not None and t >= tag_time and w is WWLabel.NONE:
            d = tag_plane.signed_distance(x)
            if d == 0.0:
                failure = "position exactly on the tag partition plane"
                if not ts_parts:
                    ts_parts.append(np.array([t]))
                    xy_parts.append(x.reshape(1, 2))
                    v_parts.append(np.zeros((1, 2)))
                    nn_parts.append(np.array([False]))
                    lbl_parts.append(np.array([int(w)], dtype=np.int8))
                break
            w = WWLabel.R if d > 0.0 else WWLabel.T
        c, k, s, b, a, l = field._packed
        status, ts, xy, vs, nn = _K.integrate_leg(
            c, k, s, b, a, l, int(w),
            field.constants.hbar, field.constants.mass, node_rel,
            float(x[0]), float(x[1]), t, leg_end,
            tol_step, tol_step, h_min, MAX_POINTS_PER_LEG,
        )
        ts_parts.append(ts)
        xy_parts.append(xy)
        v_parts.append(vs)
        nn_parts.append(nn)
        lbl_parts.append(np.full(len(ts), int(w), dtype=np.int8))
        if status == _K.STATUS_NODE_TRAP:
            failure = "node trap (step size collapsed below h_min)"
            break
        if status == _K.STATUS_STEP_LIMIT:
            failure = "step limit exceeded"
            break
        t = ts[-1]
        x = xy[-1]
        if t >= t1:
            break
        i_seg += 1
        if i_seg >= len(timeline.segments):
            break

    times = np.concatenate(ts_parts)
    positions = np.concatenate(xy_parts)
    velocities = np.concatenate(v_parts)
    near = np.concatenate(nn_parts)
    labels = np.concatenate(lbl_parts)
    # legs share their boundary point; keep the later (post-event) row
    keep = np.ones(len(times), dtype=bool)
    keep[:-1] &= np.diff(times) > 0.0
    traj = Trajectory(times[keep], positions[keep], velocities[keep],
                      labels[keep], near[keep], failure=failure)
    return traj


def attribute_endpoint(traj: Trajectory, detectors: Sequence[DetectorRegion]) -> Endpoint:
    """Detector whose half-plane contains the final position, else UNDETECTED."""
    if traj.failure is not None:
        return Endpoint.UNDETECTED
    x = traj.final_position
    for det in detectors:
        if det.contains(x):
            return Endpoint(det.id.value)
    return Endpoint.UNDETECTED


def classify_origin_arm(traj: Trajectory, bs_plane: Plane2D, t_split: float) -> OriginArm:
    """Arm membership immediately after the beam splitter (side of the plane)."""
    i = int(np.searchsorted(traj.times, t_split, side="left"))
    if i >= len(traj.times):
        return OriginArm.UNKNOWN
    d = bs_plane.signed_distance(traj.positions[i])
    if d > 0.0:
        return OriginArm.R_ARM
    if d < 0.0:
        return OriginArm.T_ARM
    return OriginArm.UNKNOWN


def detect_bs_plane_crossings(traj: Trajectory, plane: Plane2D, window) -> int:
    """Strict sign changes of the signed distance over recorded points in window."""
    t_lo, t_hi = window
    if t_lo < traj.times[0] - 1e-12 or t_hi > traj.times[-1] + 1e-12:
        raise FieldPreconditionError("crossing window outside trajectory span")
    m = (traj.times >= t_lo) & (traj.times <= t_hi)
    pos = traj.positions[m]
    if len(pos) < 2:
        return 0
    d = (pos[:, 0] - plane.point[0]) * plane.unit_normal[0] + (
        pos[:, 1] - plane.point[1]
    ) * plane.unit_normal[1]
    s = np.sign(d)
    s = s[s != 0.0]
    return int(np.count_nonzero(s[1:] * s[:-1] < 0.0))


def _common_grid(trajs: Sequence[Trajectory], n_samples: int) -> np.ndarray:
    t_lo = max(t.times[0] for t in trajs)
    t_hi = min(t.times[-1] for t in trajs)
    if t_hi <= t_lo:
        raise FieldPreconditionError("trajectories have disjoint time spans")
    return np.linspace(t_lo, t_hi, n_samples + 1)


def _segment_intersections(pa: np.ndarray, pb: np.ndarray):
    """Indices i where segment pa[i]->pa[i+1] properly crosses pb[i]->pb[i+1]."""
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    db = b1 - b0
    da = a1 - a0
    d1 = db[:, 0] * (a0[:, 1] - b0[:, 1]) - db[:, 1] * (a0[:, 0] - b0[:, 0])
    d2 = db[:, 0] * (a1[:, 1] - b0[:, 1]) - db[:, 1] * (a1[:, 0] - b0[:, 0])
    d3 = da[:, 0] * (b0[:, 1] - a0[:, 1]) - da[:, 1] * (b0[:, 0] - a0[:, 0])
    d4 = da[:, 0] * (b1[:, 1] - a0[:, 1]) - da[:, 1] * (b1[:, 0] - a0[:, 0])
    hit = (d1 * d2 < 0.0) & (d3 * d4 < 0.0)
    idx = np.nonzero(hit)[0]
    pts = []
    for i in idx:
        u = d1[i] / (d1[i] - d2[i])
        pts.append(a0[i] + u * da[i])
    return idx, pts


def _labels_at(traj: Trajectory, times: np.ndarray) -> np.ndarray:
    """Which-way label in force at each time (step function of the recorded labels)."""
    idx = np.searchsorted(traj.times, times, side="right") - 1
    return traj.labels[np.clip(idx, 0, len(traj.labels) - 1)]


def _chords_cross_at_recorded_resolution(a: Trajectory, b: Trajectory,
                                         t_lo: float, t_hi: float) -> bool:
    """Re-test an apparent equal-time crossing on the merged recorded time points.

    Coarse resampling can cut corners during fast fringe-riding kinks and make
    two same-sheet paths look like they swap; the recorded adaptive steps are
    the finest honest resolution available.
    """
    times = np.unique(np.concatenate([
        a.times[(a.times >= t_lo) & (a.times <= t_hi)],
        b.times[(b.times >= t_lo) & (b.times <= t_hi)],
        [t_lo, t_hi],
    ]))
    if len(times) < 2:
        return False
    idx, _ = _segment_intersections(a.resample(times), b.resample(times))
    return len(idx) > 0


def detect_projected_pair_crossings(
    trajs: Sequence[Trajectory], n_samples: int = 2000, collect: bool = False
):
    """Equal-time-interval crossings of spatial projections between branch sheets.

    Counts, over every pair and every resampled time interval in which the two
    trajectories carry different which-way labels, the intervals where their
    spatial segments intersect. Intervals with equal labels belong to a single
    branch sheet, where the flow cannot cross: an apparent intersection there
    is re-tested at the recorded step resolution and raises FlowCrossingError
    if it survives.
    """
    trajs = [t for t in trajs if t.failure is None]
    if len(trajs) < 2:
        return ([], 0) if collect else 0
    grid = _common_grid(trajs, n_samples)
    pos = np.stack([t.resample(grid) for t in trajs])
    lbl = np.stack([_labels_at(t, grid) for t in trajs])
    total = 0
    markers = []
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            idx, pts = _segment_intersections(pos[i], pos[j])
            if len(idx) == 0:
                continue
            for kk, p in zip(idx, pts):
                if lbl[i][kk] != lbl[j][kk]:
                    total += 1
                    if collect:
                        markers.append(
                            {"t": float(grid[kk]), "x": float(p[0]), "y": float(p[1]),
                             "pair": (i, j)}
                        )
                else:
                    if _chords_cross_at_recorded_resolution(
                        trajs[i], trajs[j], grid[max(0, kk - 1)],
                        grid[min(len(grid) - 1, kk + 2)]
                    ):
                        raise FlowCrossingError(
                            f"same-label trajectories {i} and {j} intersect at equal "
                            f"times near t={grid[kk]:.6g}"
                        )
    return (markers, total) if collect else total


def min_pairwise_distance(trajs: Sequence[Trajectory], label: WWLabel,
                          n_samples: int = 2000) -> float:
    """Smallest equal-time distance between any two same-label trajectories."""
    sel = [t for t in trajs if t.failure is None and t.final_label == label]
    if len(sel) < 2:
        return np.inf
    grid = _common_grid(sel, n_samples)
    pos = np.stack([t.resample(grid) for t in sel])
    best = np.inf
    for i in range(len(sel)):
        d = np.linalg.norm(pos[i + 1 :] - pos[i], axis=2)
        if d.size:
            best = min(best, float(d.min()))
    return best


def _integrate_one(args):
    timeline, x0, tol_step, node_rel, h_min = args
    return integrate_trajectory(
        timeline, x0, tol_step=tol_step, node_rel=node_rel, h_min=h_min
    )


def integrate_ensemble(
    timeline: FieldTimeline,
    starts: np.ndarray,
    tol_step: float = DEFAULT_TOL_STEP,
    node_rel: float = DEFAULT_NODE_REL,
    h_min: float = DEFAULT_H_MIN,
    workers: int = 1,
) -> list[Trajectory]:
    """Integrate independent trajectories; results identical for any worker count."""
    jobs = [(timeline, x0, tol_step, node_rel, h_min) for x0 in starts]
    if workers <= 1 or len(jobs) < 2:
        return [_integrate_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_integrate_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_ensemble(scenario, n: int, seed: int, workers: int = 1, keep_trajectories: bool = True):
    """Sample, integrate and attribute a full ensemble.

    Returns (EnsembleResult, trajectories); deterministic given (config, seed)
    and independent of the worker count.
    """
    timeline = scenario.timeline
    geom = scenario.geometry
    if n == 0:
        empty = EnsembleResult(np.zeros((2, 2), dtype=int), 0, 0, 0, seed)
        return (empty, []) if keep_trajectories else (empty, None)
    starts = born_sample(timeline.segments[0][2], timeline.t0, n, seed)
    trajs = integrate_ensemble(
        timeline,
        starts,
        tol_step=scenario.tol_step,
        node_rel=scenario.node_rel,
        h_min=scenario.h_min,
        workers=workers,
    )
    t_split = next(e.time for e in timeline.events if e.kind is EventKind.BEAM_SPLIT)
    counts = np.zeros((2, 2), dtype=int)
    undetected = 0
    crossings = 0
    post_split = (np.nextafter(t_split, np.inf), timeline.t1)
    for traj in trajs:
        traj.origin_arm = classify_origin_arm(traj, geom.beam_splitter, t_split)
        traj.endpoint = attribute_endpoint(traj, geom.detectors)
        if traj.failure is not None:
            log.warning("trajectory undetected: %s", traj.failure)
        if traj.endpoint is Endpoint.UNDETECTED or traj.origin_arm is OriginArm.UNKNOWN:
            undetected += 1
        else:
            row = 0 if traj.origin_arm is OriginArm.R_ARM else 1
            col = 0 if traj.endpoint is Endpoint.D1 else 1
            counts[row, col] += 1
        if traj.failure is None and traj.times[-1] >= post_split[0]:
            crossings += detect_bs_plane_crossings(
                traj, geom.beam_splitter, (post_split[0], traj.times[-1])
            )
    pair_crossings = detect_projected_pair_crossings(trajs)
    result = EnsembleResult(counts, undetected, crossings, pair_crossings, seed)
    return (result, trajs) if keep_trajectories else (result, None)
