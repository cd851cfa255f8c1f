"""Born sampling, guidance integration, endpoint attribution, crossings."""

import math

import numpy as np
import pytest

from mzbohm import trajectories as tj
from mzbohm.errors import FieldPreconditionError
from mzbohm.optics import DetectorId, DetectorRegion, Plane2D
from mzbohm.wavefield import GaussianPacket, PhysicalConstants, WaveField, WWLabel

C = PhysicalConstants()


class TestBornSample:
    def test_single_packet_mean_and_covariance(self):
        sigma0, t, n = 1.0, 1.4, 4000
        p = GaussianPacket((0.5, -0.3), (3.0, 1.0), sigma0)
        f = WaveField(((WWLabel.NONE, p),), C)
        pts = tj.born_sample(f, t, n, seed=123)
        center = p.drifted_center(t, C)
        assert np.linalg.norm(pts.mean(axis=0) - center) < 4 * sigma0 / math.sqrt(n) * 2
        # spreading law oracle: sigma(t) = sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)
        sig_t = p.sigma_t(t, C)
        cov = np.cov(pts.T)
        assert cov[0, 0] == pytest.approx(sig_t**2, rel=0.1)
        assert cov[1, 1] == pytest.approx(sig_t**2, rel=0.1)
        assert abs(cov[0, 1]) < 0.1 * sig_t**2

    def test_two_disjoint_packets_binomial_split(self):
        s = 1 / math.sqrt(2)
        pa = GaussianPacket((0.0, 8.0), (1.0, 0.0), 1.0, amplitude=s)
        pb = GaussianPacket((0.0, -8.0), (1.0, 0.0), 1.0, amplitude=s)
        f = WaveField(((WWLabel.NONE, pa), (WWLabel.NONE, pb)), C)
        n = 200
        pts = tj.born_sample(f, 0.0, n, seed=7)
        upper = int(np.count_nonzero(pts[:, 1] > 0))
        assert abs(upper - n / 2) <= 4 * math.sqrt(n / 4)

    def test_deterministic_given_seed(self):
        f = WaveField(((WWLabel.NONE, GaussianPacket((0, 0), (2, 0))),), C)
        a = tj.born_sample(f, 0.0, 50, seed=9)
        b = tj.born_sample(f, 0.0, 50, seed=9)
        assert np.array_equal(a, b)
        c = tj.born_sample(f, 0.0, 50, seed=10)
        assert not np.array_equal(a, c)

    def test_empty_and_unnormalized(self):
        f = WaveField(((WWLabel.NONE, GaussianPacket((0, 0), (2, 0))),), C)
        assert tj.born_sample(f, 0.0, 0, seed=1).shape == (0, 2)
        bad = WaveField(
            ((WWLabel.NONE, GaussianPacket((0, 0), (2, 0), amplitude=2.0)),), C
        )
        with pytest.raises(FieldPreconditionError):
            tj.born_sample(bad, 0.0, 10, seed=1)

    def test_collapsed_acceptance_rate_raises(self):
        # two nearly cancelling packets: unit norm but huge mixture weight, so
        # the envelope bound collapses the acceptance rate below 1e-3
        from mzbohm.errors import SamplerEfficiencyError
        from mzbohm.wavefield import norm as field_norm, overlap

        pa = GaussianPacket((0.0, 0.0), (2.0, 0.0), 1.0)
        pb = GaussianPacket((0.0, 0.0), (2.0, 0.0), 1.002)
        ov = overlap(pa, pb, 0.0, C)
        # solve |a|^2 + |a|^2 - 2 |a|^2 Re<a|b> = 1 for opposite-sign amplitudes
        a = 1.0 / math.sqrt(2.0 * (1.0 - ov.real))
        f = WaveField(
            (
                (WWLabel.NONE, GaussianPacket((0.0, 0.0), (2.0, 0.0), 1.0, amplitude=a)),
                (WWLabel.NONE, GaussianPacket((0.0, 0.0), (2.0, 0.0), 1.002, amplitude=-a)),
            ),
            C,
        )
        assert abs(field_norm(f, 0.0) - 1.0) < 1e-9
        with pytest.raises(SamplerEfficiencyError):
            tj.born_sample(f, 0.0, 50, seed=1)


class TestIntegrateTrajectory:
    def test_packet_center_rides_straight(self, simple_scenario):
        # the center of the initial packet drifts at hbar k / m until the split
        scn = simple_scenario
        x0 = np.asarray(scn.geometry.source.center0)
        tr = tj.integrate_trajectory(scn.timeline, x0, t1=scn.t_split)
        v = scn.geometry.source.group_velocity(scn.constants)
        for i in range(0, len(tr.times), 50):
            expect = x0 + v * tr.times[i]
            assert np.linalg.norm(tr.positions[i] - expect) < 1e-6

    def test_simple_r_to_d1(self, simple_scenario):
        scn = simple_scenario
        x0 = np.asarray(scn.geometry.source.center0) + np.array([0.5, 0.5]) / math.sqrt(2)
        tr = tj.integrate_trajectory(scn.timeline, x0)
        tr.origin_arm = tj.classify_origin_arm(tr, scn.geometry.beam_splitter, scn.t_split)
        assert tr.origin_arm is tj.OriginArm.R_ARM
        assert tj.attribute_endpoint(tr, scn.geometry.detectors) is tj.Endpoint.D1

    def test_ww_r_to_d2(self, ww_scenario):
        scn = ww_scenario
        x0 = np.asarray(scn.geometry.source.center0) + np.array([0.5, 0.5]) / math.sqrt(2)
        tr = tj.integrate_trajectory(scn.timeline, x0)
        tr.origin_arm = tj.classify_origin_arm(tr, scn.geometry.beam_splitter, scn.t_split)
        assert tr.origin_arm is tj.OriginArm.R_ARM
        assert tr.final_label is WWLabel.R
        assert tj.attribute_endpoint(tr, scn.geometry.detectors) is tj.Endpoint.D2

    def test_point_records_and_monotone_times(self, simple_scenario):
        scn = simple_scenario
        tr = tj.integrate_trajectory(scn.timeline, scn.geometry.source.center0)
        assert np.all(np.diff(tr.times) > 0)
        p = tr.point(0)
        assert p.t == 0.0 and p.w is tj.WWLabel.NONE and not p.near_node
        assert len(tr) == len(tr.times)

    def test_window_validation(self, simple_scenario):
        scn = simple_scenario
        with pytest.raises(FieldPreconditionError):
            tj.integrate_trajectory(scn.timeline, (0.0, 0.0), t0=0.0, t1=99.0)


class TestAttributeEndpoint:
    def _traj(self, final_pos):
        n = 5
        return tj.Trajectory(
            times=np.linspace(0, 1, n),
            positions=np.tile(np.asarray(final_pos, dtype=float), (n, 1)),
            velocities=np.zeros((n, 2)),
            labels=np.zeros(n, dtype=np.int8),
            near_node=np.zeros(n, dtype=bool),
        )

    def test_membership(self):
        d1 = DetectorRegion(DetectorId.D1, Plane2D((0, 0), (0, 1)))
        d2 = DetectorRegion(DetectorId.D2, Plane2D((0, 0), (0, -1)))
        assert tj.attribute_endpoint(self._traj((3, 5)), (d1, d2)) is tj.Endpoint.D1
        assert tj.attribute_endpoint(self._traj((3, -5)), (d1, d2)) is tj.Endpoint.D2
        assert tj.attribute_endpoint(self._traj((3, 0)), (d1, d2)) is tj.Endpoint.UNDETECTED

    def test_moving_plane_flips_attribution(self):
        tr = self._traj((3.0, 5.0))
        d1 = DetectorRegion(DetectorId.D1, Plane2D((0, 4), (0, 1)))
        d2 = DetectorRegion(DetectorId.D2, Plane2D((0, 4), (0, -1)))
        assert tj.attribute_endpoint(tr, (d1, d2)) is tj.Endpoint.D1
        d1b = DetectorRegion(DetectorId.D1, Plane2D((0, 6), (0, 1)))
        d2b = DetectorRegion(DetectorId.D2, Plane2D((0, 6), (0, -1)))
        assert tj.attribute_endpoint(tr, (d1b, d2b)) is tj.Endpoint.D2


class TestPlaneCrossings:
    def test_constant_side_zero(self):
        tr = tj.Trajectory(
            times=np.linspace(0, 1, 50),
            positions=np.column_stack([np.linspace(0, 5, 50), np.full(50, 2.0)]),
            velocities=np.zeros((50, 2)),
            labels=np.zeros(50, dtype=np.int8),
            near_node=np.zeros(50, dtype=bool),
        )
        plane = Plane2D((0, 0), (0, 1))
        assert tj.detect_bs_plane_crossings(tr, plane, (0.0, 1.0)) == 0

    def test_zigzag_counted(self):
        ys = np.array([1.0, 0.5, -0.5, -1.0, 0.5, 1.0, -2.0])
        tr = tj.Trajectory(
            times=np.linspace(0, 1, len(ys)),
            positions=np.column_stack([np.arange(len(ys), dtype=float), ys]),
            velocities=np.zeros((len(ys), 2)),
            labels=np.zeros(len(ys), dtype=np.int8),
            near_node=np.zeros(len(ys), dtype=bool),
        )
        plane = Plane2D((0, 0), (0, 1))
        assert tj.detect_bs_plane_crossings(tr, plane, (0.0, 1.0)) == 3

    def test_window_restriction(self):
        ys = np.array([1.0, -1.0, 1.0, -1.0])
        tr = tj.Trajectory(
            times=np.array([0.0, 0.25, 0.5, 0.75]),
            positions=np.column_stack([np.zeros(4), ys]),
            velocities=np.zeros((4, 2)),
            labels=np.zeros(4, dtype=np.int8),
            near_node=np.zeros(4, dtype=bool),
        )
        plane = Plane2D((0, 0), (0, 1))
        # only the points at t=0.25 and t=0.5 fall inside: one sign change
        assert tj.detect_bs_plane_crossings(tr, plane, (0.2, 0.55)) == 1
        assert tj.detect_bs_plane_crossings(tr, plane, (0.2, 0.75)) == 2
        with pytest.raises(FieldPreconditionError):
            tj.detect_bs_plane_crossings(tr, plane, (0.0, 2.0))


class TestPairCrossings:
    def test_single_trajectory_none(self):
        tr = tj.Trajectory(
            times=np.linspace(0, 1, 10),
            positions=np.random.default_rng(0).normal(size=(10, 2)),
            velocities=np.zeros((10, 2)),
            labels=np.zeros(10, dtype=np.int8),
            near_node=np.zeros(10, dtype=bool),
        )
        assert tj.detect_projected_pair_crossings([tr]) == 0

    def test_different_label_cross_counted(self):
        t = np.linspace(0, 1, 100)
        a = tj.Trajectory(
            times=t,
            positions=np.column_stack([t, 1.0 - 2.0 * t]),
            velocities=np.zeros((100, 2)),
            labels=np.full(100, 1, dtype=np.int8),
            near_node=np.zeros(100, dtype=bool),
        )
        b = tj.Trajectory(
            times=t,
            positions=np.column_stack([t, -1.0 + 2.2 * t]),
            velocities=np.zeros((100, 2)),
            labels=np.full(100, 2, dtype=np.int8),
            near_node=np.zeros(100, dtype=bool),
        )
        assert tj.detect_projected_pair_crossings([a, b], n_samples=100) == 1

    def test_disjoint_spans_rejected(self):
        mk = lambda t0, t1: tj.Trajectory(
            times=np.linspace(t0, t1, 10),
            positions=np.zeros((10, 2)),
            velocities=np.zeros((10, 2)),
            labels=np.zeros(10, dtype=np.int8),
            near_node=np.zeros(10, dtype=bool),
        )
        with pytest.raises(FieldPreconditionError):
            tj.detect_projected_pair_crossings([mk(0, 1), mk(2, 3)])


class TestEnsemble:
    def test_empty_ensemble(self, simple_scenario):
        res, trajs = tj.run_ensemble(simple_scenario, 0, seed=1)
        assert res.size == 0 and trajs == []
        assert res.counts.sum() == 0

    def test_counts_partition(self, simple_run):
        _summary, scn, trajs, _scan = simple_run
        res = _summary.ensemble
        assert res.size == scn.config.n
        assert res.counts.sum() + res.undetected == scn.config.n

    def test_worker_count_does_not_change_bits(self, simple_scenario):
        r1, t1 = tj.run_ensemble(simple_scenario, 16, seed=3, workers=1)
        r2, t2 = tj.run_ensemble(simple_scenario, 16, seed=3, workers=2)
        assert np.array_equal(r1.counts, r2.counts)
        for a, b in zip(t1, t2):
            assert np.array_equal(a.times, b.times)
            assert np.array_equal(a.positions, b.positions)
            assert np.array_equal(a.velocities, b.velocities)

    def test_same_label_min_distance(self, simple_run):
        _summary, scn, trajs, _scan = simple_run
        d = tj.min_pairwise_distance(trajs, WWLabel.NONE)
        assert d > 10 * scn.config.tol_step

    def test_tolerance_convergence(self, simple_scenario):
        """Halving tol_step changes no endpoint and barely moves final points."""
        scn = simple_scenario
        starts = tj.born_sample(scn.timeline.segments[0][2], 0.0, 24, seed=5)
        coarse = tj.integrate_ensemble(scn.timeline, starts, tol_step=1e-8)
        fine = tj.integrate_ensemble(scn.timeline, starts, tol_step=5e-9)
        for a, b in zip(coarse, fine):
            ea = tj.attribute_endpoint(a, scn.geometry.detectors)
            eb = tj.attribute_endpoint(b, scn.geometry.detectors)
            assert ea == eb
            assert np.linalg.norm(a.final_position - b.final_position) < 1e-4
