"""Optical element maps: unitarity, reflection algebra, timeline construction."""

import math

import numpy as np
import pytest

from mzbohm import grid_oracle as go, optics as op, wavefield as wf
from mzbohm.errors import (
    AlignmentError,
    BranchOverlapError,
    DoubleTagError,
    GeometryError,
)
from mzbohm.scenario import ScenarioConfig, ScenarioKind, build_geometry, build_scenario
from mzbohm.wavefield import GaussianPacket, PhysicalConstants, WaveField, WWLabel

C = PhysicalConstants()


def incoming_field(inlet=5.0, k0=10.0):
    s = 1.0 / math.sqrt(2.0)
    p = GaussianPacket((-inlet * s, inlet * s), (k0 * s, -k0 * s), 1.0)
    return WaveField(((WWLabel.NONE, p),), C)


BS = op.Plane2D((0.0, 0.0), (0.0, 1.0))


class TestReflectConfig:
    def test_fixed_points(self):
        plane = op.Plane2D((1.0, 2.0), (0.6, 0.8))
        x = np.array([1.0 + 0.8, 2.0 - 0.6])  # on the plane
        assert np.allclose(op.reflect_config(x, plane), x, atol=1e-15)

    def test_involution(self):
        plane = op.Plane2D((0.3, -1.0), (0.6, 0.8))
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.normal(size=2) * 5
            xx = op.reflect_config(op.reflect_config(x, plane), plane)
            assert np.allclose(xx, x, atol=1e-15)

    def test_signed_distance_negates(self):
        plane = op.Plane2D((0.0, 0.0), (0.0, 1.0))
        x = np.array([2.0, 3.5])
        assert plane.signed_distance(op.reflect_config(x, plane)) == -plane.signed_distance(x)

    def test_unit_normal_enforced(self):
        with pytest.raises(ValueError):
            op.Plane2D((0.0, 0.0), (1.0, 1.0))


class TestBeamSplitter:
    def test_fifty_fifty_split_preserves_norm(self):
        f = incoming_field()
        ev = op.OpticalEvent(op.EventKind.BEAM_SPLIT, BS, 0.5)
        g = op.apply_beam_splitter(f, ev)
        assert len(g.terms) == 2
        for _, p in g.terms:
            assert abs(p.amplitude) ** 2 == pytest.approx(0.5, abs=1e-15)
        assert wf.norm(g, 0.5) == pytest.approx(wf.norm(f, 0.5), abs=1e-12)

    def test_reflected_wavevector_algebra(self):
        k0 = 3.0
        plane = op.Plane2D((0.0, 0.0), (1.0 / math.sqrt(2), -1.0 / math.sqrt(2)))
        p = GaussianPacket((-0.0, 0.0), (k0, 0.0), 1.0)
        f = WaveField(((WWLabel.NONE, p),), C)
        ev = op.OpticalEvent(op.EventKind.BEAM_SPLIT, plane, 1e-9)
        g = op.apply_beam_splitter(f, ev)
        refl = g.terms[1][1]
        assert np.allclose(refl.wavevector, (0.0, k0), atol=1e-12)

    def test_alignment_error(self):
        f = incoming_field()
        ev = op.OpticalEvent(op.EventKind.BEAM_SPLIT, BS, 0.2)  # center not on plane yet
        with pytest.raises(AlignmentError):
            op.apply_beam_splitter(f, ev)

    def test_complete_interferometer_single_port(self, simple_scenario):
        """A second splitter at the crossing point sends everything to one port."""
        scn = simple_scenario
        t_cross = scn.t_cross
        f = scn.timeline.field_at(t_cross)
        bs2 = op.OpticalEvent(
            op.EventKind.BEAM_SPLIT,
            op.Plane2D(tuple(scn.geometry.region_I.center), (0.0, 1.0)),
            t_cross,
        )
        g = op.apply_beam_splitter(f, bs2).simplified(drop_below=0.0)
        # port weights: packets moving up vs down
        up = sum(abs(p.amplitude) ** 2 for _, p in g.terms if p.wavevector[1] > 0)
        down = sum(abs(p.amplitude) ** 2 for _, p in g.terms if p.wavevector[1] < 0)
        assert up == pytest.approx(1.0, abs=1e-10)
        assert down == pytest.approx(0.0, abs=1e-10)

    def test_complete_interferometer_grid_oracle(self, simple_scenario):
        """Grid run of the full Mach-Zehnder: all probability in one half-plane.

        After two more time units the live port's packet sits 4.2 sigma above
        the axis; anything beyond its ~2e-5 tail in the lower half-plane would
        expose amplitude in the dark port.
        """
        scn = simple_scenario
        t_cross = scn.t_cross
        f = scn.timeline.field_at(t_cross)
        bs2 = op.OpticalEvent(
            op.EventKind.BEAM_SPLIT,
            op.Plane2D(tuple(scn.geometry.region_I.center), (0.0, 1.0)),
            t_cross,
        )
        g = op.apply_beam_splitter(f, bs2).simplified()
        t_end = t_cross + 2.0
        cx = scn.geometry.region_I.center[0] + scn.speed * 1.0 / math.sqrt(2.0)
        cy = scn.speed * 1.0 / math.sqrt(2.0)
        cfg = go.GridConfig(
            extent=(31.0, 31.0), points=(512, 512), dt=0.0039, center=(cx, cy)
        )
        state = go.init_from_analytic(g, cfg, t_cross)
        state = go.step(state, round((t_end - t_cross) / cfg.dt))
        dens = state.marginal_density()
        _, y = state.config.axes()
        upper = float(dens[:, y > 0.0].sum()) * state.cell_area
        lower = float(dens[:, y < 0.0].sum()) * state.cell_area
        assert upper == pytest.approx(1.0, abs=5e-5)
        assert lower < 5e-5


class TestMirror:
    def test_relative_phase_unchanged(self):
        f = incoming_field()
        g = op.apply_beam_splitter(f, op.OpticalEvent(op.EventKind.BEAM_SPLIT, BS, 0.5))
        ratio_before = g.terms[0][1].amplitude / g.terms[1][1].amplitude
        cfg = ScenarioConfig(scenario=ScenarioKind.SIMPLE, seed=1)
        scn = build_scenario(cfg)
        post = scn.timeline.field_at(3.0)
        ratio_after = post.terms[0][1].amplitude / post.terms[1][1].amplitude
        assert ratio_after == pytest.approx(ratio_before, abs=1e-15)

    def test_mirrored_packet_reaches_crossing_on_schedule(self, simple_scenario):
        scn = simple_scenario
        post = scn.timeline.field_at(3.0)
        t_cross = scn.t_cross
        centers = [p.drifted_center(t_cross, C) for p in post.packets()]
        expect = scn.geometry.region_I.center
        for c in centers:
            assert np.allclose(c, expect, atol=1e-9)

    def test_norm_preserved(self, simple_scenario):
        # the scenario's own mirror events (arms far apart when they fire)
        scn = simple_scenario
        t_m = max(e.time for e in scn.events)
        before = scn.timeline.field_at(t_m - 1e-9)
        after = scn.timeline.field_at(t_m + 1e-9)
        assert wf.norm(after, t_m) == pytest.approx(wf.norm(before, t_m), abs=1e-12)


class TestWWTag:
    def test_labels_by_arm_and_norm(self, ww_scenario):
        scn = ww_scenario
        pre = scn.timeline.segments[1][2]  # post-split, pre-tag
        t_tag = next(e.time for e in scn.events if e.kind is op.EventKind.WW_TAG)
        ev = op.OpticalEvent(op.EventKind.WW_TAG, scn.geometry.beam_splitter, t_tag)
        tagged = op.apply_ww_tag(pre, ev)
        labels = {lbl for lbl, _ in tagged.terms}
        assert labels == {WWLabel.R, WWLabel.T}
        for lbl, p in tagged.terms:
            side = scn.geometry.beam_splitter.signed_distance(p.drifted_center(t_tag, C))
            assert (lbl is WWLabel.R) == (side > 0)
        assert wf.norm(tagged, t_tag) == pytest.approx(wf.norm(pre, t_tag), abs=1e-12)

    def test_untagged_slice_empty_after_tag(self, ww_scenario):
        f = ww_scenario.timeline.field_at(3.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=2) * 10
            assert wf.evaluate(f, WWLabel.NONE, x, 3.0) == 0.0

    def test_double_tag_rejected(self, ww_scenario):
        f = ww_scenario.timeline.field_at(3.0)
        ev = op.OpticalEvent(op.EventKind.WW_TAG, ww_scenario.geometry.beam_splitter, 3.0)
        with pytest.raises(DoubleTagError):
            op.apply_ww_tag(f, ev)

    def test_overlapping_branches_rejected(self):
        # co-moving packets with touching envelopes: spatial overlap is O(1)
        s = 1.0 / math.sqrt(2.0)
        pa = GaussianPacket((0.0, 0.5), (3.0, 0.0), 1.0, amplitude=s)
        pb = GaussianPacket((0.0, -0.5), (3.0, 0.0), 1.0, amplitude=s)
        f = WaveField(((WWLabel.NONE, pa), (WWLabel.NONE, pb)), C)
        ev = op.OpticalEvent(op.EventKind.WW_TAG, BS, 0.1)
        with pytest.raises(BranchOverlapError):
            op.apply_ww_tag(f, ev)


class TestTimeline:
    def test_balanced_arrivals(self, simple_scenario):
        evs = simple_scenario.events
        mirrors = [e for e in evs if e.kind is op.EventKind.MIRROR]
        assert len(mirrors) == 2
        assert mirrors[0].time == mirrors[1].time

    def test_ww_tag_between_split_and_mirrors(self, ww_scenario):
        evs = ww_scenario.events
        t_bs = next(e.time for e in evs if e.kind is op.EventKind.BEAM_SPLIT)
        t_tag = next(e.time for e in evs if e.kind is op.EventKind.WW_TAG)
        t_m = min(e.time for e in evs if e.kind is op.EventKind.MIRROR)
        assert t_bs < t_tag < t_m

    def test_doubling_arm_length_doubles_leg_times(self):
        cfg1 = ScenarioConfig(scenario=ScenarioKind.SIMPLE, seed=1, arm_length=20.0)
        cfg2 = ScenarioConfig(scenario=ScenarioKind.SIMPLE, seed=1, arm_length=40.0)
        g1, g2 = build_geometry(cfg1), build_geometry(cfg2)
        ev1 = op.build_timeline(g1, C)
        ev2 = op.build_timeline(g2, C)
        span = lambda evs: evs[-1].time - evs[0].time
        assert span(ev2) == pytest.approx(2.0 * span(ev1), rel=1e-12)

    def test_unreachable_mirror_rejected(self):
        cfg = ScenarioConfig(scenario=ScenarioKind.SIMPLE, seed=1)
        geom = build_geometry(cfg)
        bad_source = GaussianPacket(
            geom.source.center0,
            (-geom.source.wavevector[0], -geom.source.wavevector[1]),
            1.0,
        )
        bad = op.InterferometerGeometry(
            source=bad_source,
            beam_splitter=geom.beam_splitter,
            mirrors=geom.mirrors,
            ww_tag_planes=None,
            detectors=geom.detectors,
            region_I=geom.region_I,
            final_time=geom.final_time,
        )
        with pytest.raises(GeometryError):
            op.build_timeline(bad, C)

    def test_replay_never_misaligns(self, simple_scenario, ww_scenario):
        # evolve_field applies every event with the alignment precondition on;
        # reaching here means build_timeline scheduled them correctly
        assert simple_scenario.timeline.segments
        assert ww_scenario.timeline.segments

    def test_all_events_preserve_norm(self, ww_scenario):
        for t0, _, f in ww_scenario.timeline.segments:
            assert wf.norm(f, max(t0, f.max_birth_time)) == pytest.approx(1.0, abs=1e-12)


class TestGlobalReflectionSign:
    def test_top_input_gives_plus(self, simple_scenario):
        scn = simple_scenario
        f = scn.timeline.field_at(scn.t_cross)
        rng = np.random.default_rng(4)
        for _ in range(40):
            x = np.asarray(scn.geometry.region_I.center) + rng.normal(size=2) * 2
            a = wf.evaluate(f, WWLabel.NONE, x, scn.t_cross)
            b = wf.evaluate(f, WWLabel.NONE, scn.geometry.beam_splitter.reflect_point(x),
                            scn.t_cross)
            assert a == pytest.approx(b, abs=1e-12)

    def test_bottom_input_gives_minus(self):
        # feed the splitter from below: the global sign flips
        s = 1.0 / math.sqrt(2.0)
        p = GaussianPacket((-5 * s, -5 * s), (10 * s, 10 * s), 1.0)
        f = WaveField(((WWLabel.NONE, p),), C)
        g = op.apply_beam_splitter(
            f, op.OpticalEvent(op.EventKind.BEAM_SPLIT, BS, 0.5)
        )
        rng = np.random.default_rng(5)
        for _ in range(40):
            x = rng.normal(size=2) * 2
            a = wf.evaluate(g, WWLabel.NONE, x, 0.8)
            b = wf.evaluate(g, WWLabel.NONE, BS.reflect_point(x), 0.8)
            assert a == pytest.approx(-b, abs=1e-12)

    def test_labeled_form_after_tag(self, ww_scenario):
        scn = ww_scenario
        t = scn.t_cross
        f = scn.timeline.field_at(t)
        rng = np.random.default_rng(6)
        for _ in range(40):
            x = np.asarray(scn.geometry.region_I.center) + rng.normal(size=2) * 2
            a = wf.evaluate(f, WWLabel.R, x, t)
            b = wf.evaluate(f, WWLabel.T, scn.geometry.beam_splitter.reflect_point(x), t)
            assert a == pytest.approx(b, abs=1e-12)
