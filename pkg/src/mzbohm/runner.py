"""Scenario orchestration: run, check, export, and plot.

run_scenario builds the geometry and field timeline, integrates the ensemble,
evaluates every enabled invariant check (analytic and, optionally, the grid
oracle), and returns a RunSummary whose serialized form is deterministic:
repeated runs with the same config and seed produce byte-identical artifacts,
so wall time stays out of the files and execution knobs (worker count, output
paths) stay out of the manifest.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field, fields as dc_fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, grid_oracle, trajectories as tj, wavefield as wf
from .errors import FieldPreconditionError, SimulationError
from .scenario import (
    EXECUTION_FIELDS,
    Scenario,
    ScenarioConfig,
    ScenarioKind,
    build_scenario,
    config_fingerprint,
)
from .wavefield import WWLabel

SCHEMA_VERSION = 1

_W_NAMES = {0: "none", 1: "r", 2: "t"}
_W_CODES = {v: k for k, v in _W_NAMES.items()}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "value", float(self.value))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: value={self.value:.6g} (require {self.threshold})"


@dataclass
class RunSummary:
    scenario: str
    seed: int
    n: int
    ensemble: tj.EnsembleResult
    reflection: analysis.SymmetryReport
    flux: analysis.SymmetryReport
    contrast: analysis.ContrastReport
    norm_deviation: float
    interference_residual: Optional[float]
    min_crossings_per_trajectory: Optional[int]
    visibility: Optional[analysis.VisibilityReport] = None
    oracle_legs: Optional[list] = None
    continuity: Optional[dict] = None
    checks: list = dc_field(default_factory=list)
    wall_time: float = 0.0

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "n": self.n,
            "counts": [[int(v) for v in row] for row in self.ensemble.counts],
            "undetected": int(self.ensemble.undetected),
            "crossings_of_bs_plane": int(self.ensemble.crossings_of_bs_plane),
            "projected_pair_crossings": int(self.ensemble.projected_pair_crossings),
            "min_crossings_per_trajectory": self.min_crossings_per_trajectory,
            "reflection": self.reflection.as_dict(),
            "flux": self.flux.as_dict(),
            "contrast": self.contrast.as_dict(),
            "norm_deviation": self.norm_deviation,
            "interference_residual": self.interference_residual,
            "visibility": self.visibility.as_dict() if self.visibility else None,
            "oracle_legs": [r.as_dict() for r in self.oracle_legs]
            if self.oracle_legs is not None
            else None,
            "continuity": self.continuity,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value,
                 "threshold": c.threshold}
                for c in self.checks
            ],
        }
        return d


def _kinetic_scale(cfg: ScenarioConfig) -> float:
    return cfg.hbar**2 * cfg.wavevector**2 / (2.0 * cfg.mass)


def _analytic_checks(scn: Scenario, result: tj.EnsembleResult, trajs) -> tuple:
    cfg = scn.config
    checks: list[Check] = []
    t_cross = scn.t_cross
    field_cross = scn.timeline.field_at(t_cross)
    ww = cfg.scenario is ScenarioKind.WW

    # detector correspondence
    wrong = int(result.counts[0, 0] + result.counts[1, 1]) if ww else int(
        result.counts[0, 1] + result.counts[1, 0]
    )
    rule = "r->D2, t->D1" if ww else "r->D1, t->D2"
    checks.append(Check(f"correspondence ({rule})", wrong == 0, wrong, "== 0"))
    frac_undet = result.undetected / max(1, result.size)
    checks.append(Check("undetected fraction", frac_undet < 0.01, frac_undet, "< 0.01"))

    # plane crossings
    detected = [t for t in trajs if t.failure is None]
    min_cross = None
    if ww:
        per = [
            tj.detect_bs_plane_crossings(
                t, scn.geometry.beam_splitter,
                (np.nextafter(scn.t_split, np.inf), t.times[-1]),
            )
            for t in detected
        ]
        min_cross = int(min(per)) if per else 0
        checks.append(
            Check("plane crossings per trajectory", min_cross >= 1, min_cross, ">= 1")
        )
        checks.append(
            Check(
                "projected pair crossings",
                result.projected_pair_crossings >= 1,
                result.projected_pair_crossings,
                ">= 1",
            )
        )
    else:
        checks.append(
            Check("post-split plane crossings", result.crossings_of_bs_plane == 0,
                  result.crossings_of_bs_plane, "== 0")
        )
        checks.append(
            Check("projected pair crossings", result.projected_pair_crossings == 0,
                  result.projected_pair_crossings, "== 0")
        )

    # field reflection symmetry at the crossing time
    reflection = analysis.check_reflection_symmetry(
        field_cross, scn.geometry.beam_splitter, t_cross, n_points=200, seed=cfg.seed
    )
    checks.append(
        Check("reflection symmetry residual", reflection.max_field_asymmetry < 1e-9,
              reflection.max_field_asymmetry, "< 1e-9")
    )

    # flux (anti)symmetry on the plane around the crossing window
    times = [t_cross - 0.4, t_cross, t_cross + 0.4]
    if ww:
        times.insert(0, min(scn.t_split + 0.1, t_cross))
    flux = analysis.check_flux_antisymmetry(
        field_cross, scn.geometry.beam_splitter, times, n_points=20,
        node_rel=cfg.node_rel,
    )
    lbl = "flux antisymmetry" if ww else "on-plane normal velocity"
    checks.append(
        Check(lbl, flux.max_flux_symmetry_violation < 1e-9,
              flux.max_flux_symmetry_violation, "< 1e-9")
    )

    # quantum-potential contrast; the free probe sits just after the mirrors,
    # where the arms are far apart (>= 10 sigma between probe and other packet)
    from .optics import ConvexRegion

    v = scn.speed
    t_mirror = max(e.time for e in scn.events)
    w_probe = WWLabel.R if ww else WWLabel.NONE
    half_box = 1.5 * cfg.sigma0
    t_free = None
    for frac in (0.05, 0.1, 0.15, 0.2, 0.3):
        t_cand = t_mirror + frac * (t_cross - t_mirror)
        pkts = sorted(
            field_cross.packets(WWLabel.NONE) if not ww else field_cross.packets(
                WWLabel.R) + field_cross.packets(WWLabel.T),
            key=lambda p: p.drifted_center(t_cand, scn.constants)[1],
        )
        c_lo = pkts[0].drifted_center(t_cand, scn.constants)
        c_hi = pkts[-1].drifted_center(t_cand, scn.constants)
        sep = float(np.linalg.norm(c_hi - c_lo))
        sig = max(p.sigma_t(t_cand, scn.constants) for p in pkts)
        if (sep - 2.0 * half_box) / sig >= 10.5:
            t_free = t_cand
            break
    if t_free is None:
        raise FieldPreconditionError(
            "no probe time with >= 10.5 sigma arm separation after the mirrors"
        )
    r_packet = max(
        field_cross.packets(w_probe),
        key=lambda p: p.drifted_center(t_free, scn.constants)[1],
    )
    c_free = r_packet.drifted_center(t_free, scn.constants)
    region_free = ConvexRegion.box(c_free[0], c_free[1], half_box)
    if ww:
        exc_r = analysis.branch_quantum_potential_excess(
            field_cross, WWLabel.R, scn.geometry.region_I, t_cross, seed=cfg.seed,
            node_rel=cfg.node_rel,
        )
        exc_t = analysis.branch_quantum_potential_excess(
            field_cross, WWLabel.T, scn.geometry.region_I, t_cross, seed=cfg.seed,
            node_rel=cfg.node_rel,
        )
        free_single = wf.WaveField(((WWLabel.R, r_packet),), scn.constants)
        free_exc = 0.0
        for p in analysis._region_samples(region_free, 40, cfg.seed):
            u_full = wf.quantum_potential(field_cross, WWLabel.R, p, t_free, cfg.node_rel)
            u_one = wf.quantum_potential(free_single, WWLabel.R, p, t_free, cfg.node_rel)
            free_exc = max(free_exc, abs(u_full - u_one))
        contrast = analysis.ContrastReport(
            free_excess=free_exc, branch_excess=max(exc_r, exc_t)
        )
        checks.append(
            Check("free-region quantum-potential excess", contrast.free_excess < 1e-9,
                  contrast.free_excess, "< 1e-9")
        )
        checks.append(
            Check("branch quantum potential equals single packet",
                  contrast.branch_excess < 1e-9, contrast.branch_excess, "< 1e-9")
        )
    else:
        contrast = analysis.quantum_potential_contrast(
            field_cross, region_free, t_free, scn.geometry.region_I, t_cross,
            seed=cfg.seed, node_rel=cfg.node_rel,
        )
        checks.append(
            Check("free-region quantum-potential excess", contrast.free_excess < 1e-9,
                  contrast.free_excess, "< 1e-9")
        )
        ratio = contrast.interference_max_abs / _kinetic_scale(cfg)
        checks.append(
            Check("interference quantum potential vs kinetic scale", ratio >= 100.0,
                  ratio, ">= 100")
        )

    # norm constancy over the whole run
    worst_norm = 0.0
    for t in np.linspace(0.0, scn.geometry.final_time, 15):
        f = scn.timeline.field_at(float(t))
        worst_norm = max(worst_norm, abs(wf.norm(f, max(float(t), f.max_birth_time)) - 1.0))
    checks.append(Check("norm constancy", worst_norm < 1e-12, worst_norm, "< 1e-12"))

    # interference identity at random region-I points (two unlabeled terms)
    interf_resid = None
    if not ww:
        rng = np.random.default_rng(cfg.seed + 1)
        center = scn.geometry.region_I.center
        worst = 0.0
        got = 0
        while got < 100:
            x = center + rng.standard_normal(2) * cfg.sigma0
            try:
                worst = max(worst, wf.interference_identity_check(field_cross, x, t_cross))
            except FieldPreconditionError:
                continue
            got += 1
        interf_resid = worst
        checks.append(
            Check("interference identity residual", interf_resid < 1e-10,
                  interf_resid, "< 1e-10")
        )
    return checks, reflection, flux, contrast, worst_norm, interf_resid, min_cross


def _oracle_checks(scn: Scenario) -> tuple:
    """Per-leg grid-oracle equivalence, fringe visibility, continuity residual."""
    cfg = scn.config
    ww = cfg.scenario is ScenarioKind.WW
    t_cross = scn.t_cross
    checks: list[Check] = []
    legs = []
    scan = None
    for i, (t0, t1, field) in enumerate(scn.timeline.segments):
        t_end = min(t1, t_cross) if ww else t1
        if t_end <= t0:
            continue
        captures = [t_cross] if t0 < t_cross <= t_end else []
        rep, caps = grid_oracle.verify_leg(field, t0, t_end, capture_times=captures)
        legs.append(rep)
        if captures:
            state = caps[t_cross]
            cx, cy = scn.geometry.region_I.center
            half = 1.5 * cfg.sigma0
            scan = grid_oracle.fringe_scan(
                state, ((cx, cy - half), (cx, cy + half)), 256
            )

    l2 = max(r.l2_rel_error for r in legs)
    vel = max(r.velocity_rel_error for r in legs)
    drift = max(r.norm_drift / max(1.0, r.n_steps / 1000.0) for r in legs)
    checks.append(Check("oracle L2 equivalence per leg", l2 < 1e-6, l2, "< 1e-6"))
    checks.append(Check("oracle velocity-field equivalence", vel < 1e-4, vel, "< 1e-4"))
    checks.append(Check("grid norm drift per 1000 steps", drift < 1e-10, drift, "< 1e-10"))

    vis_report = None
    if scan is not None:
        vis = analysis.compute_visibility(scan)
        vis_report = analysis.VisibilityReport(
            visibility=vis, scan_time=t_cross, scenario=cfg.scenario.value
        )
        if ww:
            checks.append(Check("fringe visibility (which-way)", vis < 0.05, vis, "< 0.05"))
        else:
            checks.append(Check("fringe visibility (interfering)", vis > 0.9, vis, "> 0.9"))

    # continuity equation on a compact single-packet grid, plus 2nd-order refinement
    field0 = scn.timeline.segments[0][2]
    t_probe = 0.5 * scn.t_split
    base = grid_oracle.auto_grid_config(field0, 0.0, scn.t_split)
    st = grid_oracle.init_from_analytic(field0, base, t_probe)
    peak = st.marginal_density().max()
    tau_char = 2.0 * cfg.mass * cfg.sigma0**2 / cfg.hbar
    bound = 1e-5 * peak / tau_char
    r_coarse = grid_oracle.continuity_residual(st, 1e-4)
    fine_cfg = grid_oracle.GridConfig(
        extent=base.extent, points=(base.points[0] * 2, base.points[1] * 2),
        dt=base.dt / 4.0, center=base.center,
    )
    st_fine = grid_oracle.init_from_analytic(field0, fine_cfg, t_probe)
    r_fine = grid_oracle.continuity_residual(st_fine, 5e-5)
    ratio = r_coarse / r_fine
    checks.append(
        Check("continuity residual", r_coarse < bound, r_coarse,
              f"< {bound:.3e} (1e-5 * peak/tau)")
    )
    checks.append(
        Check("continuity residual 2nd-order refinement", ratio >= 3.5, ratio, ">= 3.5")
    )
    continuity = {
        "residual": r_coarse,
        "residual_refined": r_fine,
        "refinement_ratio": ratio,
        "bound": bound,
    }
    return checks, legs, vis_report, continuity, scan


def run_scenario(cfg: ScenarioConfig):
    """Execute a full scenario; returns (summary, scenario, trajectories, scan)."""
    t_start = time.perf_counter()
    scn = build_scenario(cfg)
    result, trajs = tj.run_ensemble(scn, cfg.n, cfg.seed, workers=cfg.workers)
    (checks, reflection, flux, contrast, worst_norm, interf_resid,
     min_cross) = _analytic_checks(scn, result, trajs)

    visibility = None
    oracle_legs = None
    continuity = None
    scan = None
    if cfg.oracle:
        o_checks, oracle_legs, visibility, continuity, scan = _oracle_checks(scn)
        checks.extend(o_checks)

    summary = RunSummary(
        scenario=cfg.scenario.value,
        seed=cfg.seed,
        n=cfg.n,
        ensemble=result,
        reflection=reflection,
        flux=flux,
        contrast=contrast,
        norm_deviation=worst_norm,
        interference_residual=interf_resid,
        min_crossings_per_trajectory=min_cross,
        visibility=visibility,
        oracle_legs=oracle_legs,
        continuity=continuity,
        checks=checks,
        wall_time=time.perf_counter() - t_start,
    )
    return summary, scn, trajs, scan


def export_trajectories(trajs, out_dir: Path) -> list[str]:
    """One TSV per trajectory: t, x, y, w, vx, vy, near_node (full precision)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, tr in enumerate(trajs):
        name = f"traj_{i:04d}.tsv"
        with open(out_dir / name, "w", newline="\n") as fh:
            fh.write("t\tx\ty\tw\tvx\tvy\tnear_node\n")
            for j in range(len(tr.times)):
                fh.write(
                    "\t".join(
                        (
                            repr(float(tr.times[j])),
                            repr(float(tr.positions[j, 0])),
                            repr(float(tr.positions[j, 1])),
                            _W_NAMES[int(tr.labels[j])],
                            repr(float(tr.velocities[j, 0])),
                            repr(float(tr.velocities[j, 1])),
                            "1" if tr.near_node[j] else "0",
                        )
                    )
                    + "\n"
                )
        names.append(name)
    return names


def read_trajectory_file(path) -> tj.Trajectory:
    ts, xs, ys, ws, vx, vy, nn = [], [], [], [], [], [], []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("t\t"):
            raise SimulationError(f"{path}: not a trajectory file")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ts.append(float(parts[0]))
            xs.append(float(parts[1]))
            ys.append(float(parts[2]))
            ws.append(_W_CODES[parts[3]])
            vx.append(float(parts[4]))
            vy.append(float(parts[5]))
            nn.append(parts[6] == "1")
    return tj.Trajectory(
        times=np.asarray(ts),
        positions=np.column_stack([xs, ys]),
        velocities=np.column_stack([vx, vy]),
        labels=np.asarray(ws, dtype=np.int8),
        near_node=np.asarray(nn, dtype=bool),
    )


def write_manifest(cfg: ScenarioConfig, defaults: Optional[dict], artifacts: list[str],
                   out_dir: Path):
    physics = {
        f.name: (getattr(cfg, f.name).value if f.name == "scenario" else getattr(cfg, f.name))
        for f in dc_fields(ScenarioConfig)
        if f.name not in EXECUTION_FIELDS
    }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config_sha256": config_fingerprint(cfg),
        "config": physics,
        "defaults_applied": sorted(
            k for k in (defaults or {}) if k not in EXECUTION_FIELDS
        ),
        "artifacts": sorted(artifacts),
        "trajectory_format": "tsv: t, x, y, w, vx, vy, near_node; full-precision decimals",
    }
    _write_json(out_dir / "manifest.json", manifest)


def _write_json(path: Path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def render_plots(scn: Scenario, trajs, out_dir: Path, scan=None) -> list[str]:
    """Static SVG plots: spatial trajectories, two-sheet projection, fringe scan."""
    from .svg import SvgCanvas

    out_dir.mkdir(parents=True, exist_ok=True)
    geom = scn.geometry
    names = []
    alive = [t for t in trajs if t.failure is None]

    all_pts = (
        np.concatenate([t.positions for t in alive])
        if alive
        else np.zeros((1, 2))
    )
    lo = all_pts.min(axis=0) - 2.0
    hi = all_pts.max(axis=0) + 2.0
    world = ((lo[0], lo[1]), (hi[0], hi[1]))

    def draw_geometry(cv: SvgCanvas):
        bs = geom.beam_splitter
        cv.line((lo[0], bs.point[1]), (hi[0], bs.point[1]), "#bbbbbb", 0.8, dash="6,4")
        for m in geom.mirrors:
            mx, my = m.point
            cv.line((mx - 2.5, my), (mx + 2.5, my), "#333333", 3.0)
        if geom.ww_tag_planes:
            for cplane in geom.ww_tag_planes:
                cv.circle(cplane.point, 6.0, "#8e44ad")
        verts = list(geom.region_I.vertices) + [geom.region_I.vertices[0]]
        cv.polyline(verts, "#999999", 0.8, dash="3,3")
        cx = geom.region_I.center[0]
        cv.text((cx, geom.region_I.vertices[0][1] - 1.5), "I", 12, "#777777", "middle")

    colors = {"r": "#c0392b", "t": "#2471a3", "?": "#7f8c8d"}
    cv = SvgCanvas(900, 640, world)
    draw_geometry(cv)
    for tr in alive:
        cv.polyline(tr.positions[::3], colors[tr.origin_arm.value], 0.7, opacity=0.55)
    cv.text_px(12, 20, f"{scn.config.scenario.value} scenario: Bohm trajectories "
                       f"(red: r arm, blue: t arm)", 13)
    cv.write(out_dir / "trajectories.svg")
    names.append("trajectories.svg")

    # two-sheet picture with the spatial projection at the bottom
    pic = analysis.build_projection_picture(trajs) if len(alive) >= 1 else None
    if pic is not None:
        cv = SvgCanvas(900, 1100, world)
        span_y = hi[1] - lo[1]
        offsets = {1: 2.2 * span_y, 2: 1.1 * span_y, 0: 0.0}
        cv2 = SvgCanvas(900, 1100, ((lo[0], lo[1]), (hi[0], hi[1] + 2.2 * span_y)))
        for sheet, off in offsets.items():
            if sheet != 0:
                cv2.line((lo[0], lo[1] + off), (hi[0], lo[1] + off), "#dddddd", 0.6)
        for i in range(pic.n_trajectories):
            w_final = int(pic.labels[i, -1])
            col = {0: "#7f8c8d", 1: "#c0392b", 2: "#2471a3"}[w_final]
            pos = pic.positions[i][::3]
            lab = pic.labels[i][::3]
            if w_final != 0:
                sheet_pts = [
                    (x, y + offsets[w]) for (x, y), w in zip(pos, lab) if w == w_final
                ]
                cv2.polyline(sheet_pts, col, 0.6, opacity=0.5)
            cv2.polyline([(x, y) for x, y in pos], col, 0.6, opacity=0.5)
        for m in pic.markers[:400]:
            cv2.cross((m["x"], m["y"]), 3.0, "#111111")
        cv2.text_px(12, 20, "branch sheets (top) and their spatial projection "
                            "(bottom); x marks equal-time projected crossings", 13)
        cv2.write(out_dir / "sheets.svg")
        names.append("sheets.svg")

    if scan is not None:
        n = len(scan)
        cv3 = SvgCanvas(700, 420, ((0.0, 0.0), (float(n - 1), float(max(scan) * 1.05) or 1.0)))
        cv3.polyline([(float(i), float(v)) for i, v in enumerate(scan)], "#1a5276", 1.4)
        cv3.text_px(12, 20, "marginal density along the region-I scan", 13)
        cv3.write(out_dir / "fringes.svg")
        names.append("fringes.svg")
    return names


def write_outputs(summary: RunSummary, scn: Scenario, trajs, scan, out_dir: Path,
                  defaults: Optional[dict] = None) -> list[str]:
    """Write every artifact; returns the artifact list (paths relative to out_dir)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [
        f"trajectories/{n}" for n in export_trajectories(trajs, out_dir / "trajectories")
    ]
    names += [f"plots/{n}" for n in render_plots(scn, trajs, out_dir / "plots", scan)]
    _write_json(out_dir / "summary.json", summary.as_dict())
    names.append("summary.json")
    write_manifest(scn.config, defaults, names + ["manifest.json"], out_dir)
    names.append("manifest.json")
    return names
