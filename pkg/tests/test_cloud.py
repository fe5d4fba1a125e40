import math

import numpy as np
import pytest

from boundaryflow import (
    CloudConfig,
    FibreCloud,
    IntegratorConfig,
    ReconstructionConfig,
    SystemSpec,
    TimeInterval,
    convex_hull_2d,
    evolve_cloud,
    reconstruct_fibre,
    sample_control,
    support_function,
)
from boundaryflow.integrate import IntegrationError
from boundaryflow.linear import StabilityCertificate, diagonal_field, linear_system_spec
from boundaryflow.verify import signed_distance_to_polygon

CFG = IntegratorConfig()


def minus_x_spec(rho):
    return SystemSpec(
        dim=2,
        rhs=lambda t, x: -x,
        jacobian=lambda t, x: -np.eye(2),
        rho=rho,
        rhs_batch=lambda t, X: -X,
    )


def diag_extremal_cloud(tau=0.0, horizon=16.0, segment=0.05, n_controls=512, rho=1.0):
    """Closed-form oracle for diag(-1, -2): endpoints of the per-segment
    optimal (adjoint-aligned) piecewise-constant controls, one per direction.
    No library integrator involved."""
    rates = np.array([-1.0, -2.0])
    n_seg = int(round(horizon / segment))
    u_hi = horizon - segment * np.arange(n_seg)  # age of segment start
    u_lo = u_hi - segment
    # c[k, i] = integral of e^{rates_i * u} du over segment k
    c = (np.exp(rates[None, :] * u_lo[:, None]) - np.exp(rates[None, :] * u_hi[:, None])) / (
        -rates[None, :]
    )
    thetas = 2.0 * math.pi * np.arange(n_controls) / n_controls
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    points = np.empty((n_controls, 2))
    for j, n in enumerate(dirs):
        w = c * n[None, :]
        xi = w / np.linalg.norm(w, axis=1)[:, None]
        points[j] = rho * (c * xi).sum(axis=0)
    return points


class TestSampleControl:
    def test_unit_sphere_law_norms(self):
        ccfg = CloudConfig(trajectory_count=1, segment_length=0.5, seed=1)
        xi = sample_control(ccfg, TimeInterval(0.0, 50.0), 0)
        norms = np.linalg.norm(xi.values, axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-15

    def test_deterministic_streams(self):
        ccfg = CloudConfig(trajectory_count=1, seed=42)
        a = sample_control(ccfg, TimeInterval(0.0, 10.0), 3)
        b = sample_control(ccfg, TimeInterval(0.0, 10.0), 3)
        np.testing.assert_array_equal(a.breakpoints, b.breakpoints)
        np.testing.assert_array_equal(a.values, b.values)
        c = sample_control(ccfg, TimeInterval(0.0, 10.0), 4)
        assert not np.array_equal(a.values, c.values)

    def test_ball_law_mean_norm(self):
        # uniform disc in 2D has E|U| = 2/3
        ccfg = CloudConfig(trajectory_count=1, segment_length=1.0, control_law="ball", seed=0)
        xi = sample_control(ccfg, TimeInterval(0.0, 1e5), 0)
        mean = np.linalg.norm(xi.values, axis=1).mean()
        assert abs(mean - 2.0 / 3.0) <= 0.01 * (2.0 / 3.0)

    def test_breakpoints_cover_interval(self):
        ccfg = CloudConfig(trajectory_count=1, segment_length=0.3, seed=0)
        xi = sample_control(ccfg, TimeInterval(0.0, 1.0), 0)
        assert xi.breakpoints[0] == 0.0
        assert xi.breakpoints[-1] >= 1.0


class TestEvolveCloud:
    def test_noise_free_decay(self):
        ccfg = CloudConfig(trajectory_count=1, seed=0)
        start = FibreCloud(time=0.0, points=[[1.0, 0.0]])
        clouds = evolve_cloud(minus_x_spec(0.0), ccfg, start, TimeInterval(0.0, 5.0), CFG, [5.0])
        np.testing.assert_allclose(clouds[0].points[0], [math.exp(-5.0), 0.0], atol=1e-8)

    def test_unit_ball_invariance(self):
        ccfg = CloudConfig(trajectory_count=64, seed=3)
        start = FibreCloud(time=0.0, points=np.zeros((1, 2)))
        clouds = evolve_cloud(
            minus_x_spec(1.0), ccfg, start, TimeInterval(0.0, 12.0), CFG, [6.0, 12.0]
        )
        for cloud in clouds:
            assert np.linalg.norm(cloud.points, axis=1).max() <= 1.0 + 1e-6

    def test_bitwise_determinism(self):
        ccfg = CloudConfig(trajectory_count=16, seed=11)
        start = FibreCloud(time=0.0, points=np.zeros((1, 2)))
        spec = linear_system_spec(diagonal_field([-1.0, -2.0]), 1.0)
        a = evolve_cloud(spec, ccfg, start, TimeInterval(0.0, 3.0), CFG, [3.0])
        b = evolve_cloud(spec, ccfg, start, TimeInterval(0.0, 3.0), CFG, [3.0])
        np.testing.assert_array_equal(a[0].points, b[0].points)

    def test_start_points_cycle(self):
        ccfg = CloudConfig(trajectory_count=4, seed=0)
        start = FibreCloud(time=0.0, points=[[1.0, 0.0], [0.0, 1.0]])
        clouds = evolve_cloud(
            minus_x_spec(0.0), ccfg, start, TimeInterval(0.0, 1.0), CFG, [1.0]
        )
        pts = clouds[0].points
        np.testing.assert_allclose(pts[0], pts[2], atol=1e-14)
        np.testing.assert_allclose(pts[1], pts[3], atol=1e-14)
        assert np.linalg.norm(pts[0] - pts[1]) > 0.1

    def test_divergence_reports_indices(self):
        unstable = SystemSpec(
            dim=2,
            rhs=lambda t, x: 5.0 * x,
            jacobian=lambda t, x: 5.0 * np.eye(2),
            rho=1.0,
            rhs_batch=lambda t, X: 5.0 * X,
        )
        ccfg = CloudConfig(trajectory_count=3, seed=0)
        start = FibreCloud(time=0.0, points=[[1.0, 1.0]])
        with pytest.raises(IntegrationError, match="indices"):
            with np.errstate(over="ignore", invalid="ignore"):
                evolve_cloud(unstable, ccfg, start, TimeInterval(0.0, 200.0), CFG, [200.0])

    def test_fallback_without_batch_rhs(self):
        spec = SystemSpec(
            dim=2, rhs=lambda t, x: -x, jacobian=lambda t, x: -np.eye(2), rho=0.0
        )
        ccfg = CloudConfig(trajectory_count=2, seed=0)
        start = FibreCloud(time=0.0, points=[[1.0, 0.0]])
        clouds = evolve_cloud(spec, ccfg, start, TimeInterval(0.0, 2.0), CFG, [2.0])
        np.testing.assert_allclose(clouds[0].points[0], [math.exp(-2.0), 0.0], atol=1e-9)


class TestConvexHull:
    def test_square_with_interior_point(self):
        pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]
        hull = convex_hull_2d(pts)
        assert hull.shape == (4, 2)
        assert {tuple(v) for v in hull} == {(0, 0), (1, 0), (1, 1), (0, 1)}
        # counter-clockwise: positive signed area
        x, y = hull[:, 0], hull[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area > 0

    def test_all_points_identical(self):
        hull = convex_hull_2d([[2.0, 3.0]] * 5)
        assert hull.shape == (1, 2)

    def test_collinear_returns_extremes(self):
        hull = convex_hull_2d([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        assert hull.shape == (2, 2)
        assert {tuple(v) for v in hull} == {(0.0, 0.0), (2.0, 2.0)}

    def test_hull_contains_all_points(self):
        rng = np.random.default_rng(0)
        r = np.sqrt(rng.uniform(0, 1, 1000))
        th = rng.uniform(0, 2 * math.pi, 1000)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
        hull = convex_hull_2d(pts)
        hull_set = {tuple(v) for v in hull}
        assert hull_set <= {tuple(p) for p in pts}
        assert signed_distance_to_polygon(pts, hull).max() <= 1e-12


class TestSupportFunction:
    def test_unit_circle(self):
        th = np.linspace(0, 2 * math.pi, 400, endpoint=False)
        pts = np.column_stack([np.cos(th), np.sin(th)])
        assert support_function(pts, [1.0, 0.0]) == pytest.approx(1.0, abs=1e-4)

    def test_singleton_origin(self):
        assert support_function([[0.0, 0.0]], [0.6, 0.8]) == 0.0

    def test_requires_unit_direction(self):
        with pytest.raises(ValueError):
            support_function([[1.0, 0.0]], [2.0, 0.0])

    def test_diagonal_fibre_support_vs_extremal_cloud(self):
        # closed-form support of the diag(-1,-2) fibre in direction e2 is
        # 1/2; the sampled extremal cloud must reach it within 5e-3
        pts = diag_extremal_cloud(n_controls=256)
        assert abs(support_function(pts, [0.0, 1.0]) - 0.5) <= 5e-3


class TestCloudAgainstReconstruction:
    def setup_method(self):
        self.L = diagonal_field([-1.0, -2.0])
        self.cert = StabilityCertificate(K=1.0, gamma=1.0, window=TimeInterval(-100.0, 100.0))
        rcfg = ReconstructionConfig(normal_count=128, horizon=16.0)
        self.fibre = reconstruct_fibre(self.L, 1.0, 0.0, self.cert, rcfg, CFG)
        ccfg = CloudConfig(trajectory_count=200, seed=5)
        start = FibreCloud(time=-16.0, points=np.zeros((1, 2)))
        self.cloud = evolve_cloud(
            linear_system_spec(self.L, 1.0), ccfg, start, TimeInterval(-16.0, 0.0), CFG, [0.0]
        )[0]

    def test_cloud_inside_reconstruction(self):
        sd = signed_distance_to_polygon(self.cloud.points, self.fibre.points)
        assert sd.max() <= 1e-3

    def test_support_dominance(self):
        for x, n in zip(self.fibre.points, self.fibre.normals):
            assert support_function(self.cloud.points, n) <= float(n @ x) + 1e-3
