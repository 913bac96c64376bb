"""Random- and deterministic-loading expectation estimators."""

import numpy as np
import pytest

from ddinfer.geometry import AffineSubspace, Metric
from ddinfer.inference import (
    LocalQuadrature,
    expect_det_loading,
    expect_random_loading,
    local_gaussian_average,
    marginal_gap,
    qoi_coordinate,
    qoi_member_component,
    qoi_polynomial,
    qoi_quadratic,
    QuantityOfInterest,
)
from ddinfer.measures import EmpiricalMeasure, ThermalizationParams


def paired_measure(rng, n=30, dim=4, spread=1.5):
    y = rng.normal(size=(n, dim), scale=spread)
    z = y + rng.normal(size=(n, dim), scale=0.5)
    w = rng.uniform(0.2, 2.0, size=n)
    return EmpiricalMeasure.from_weights(y, w, pair_points=z)


class TestRandomLoading:
    def test_two_atom_closed_form(self):
        g = Metric.euclidean(2)
        y = np.array([[0.0, 0.0], [1.0, 0.0]])
        z = np.array([[0.0, 0.0], [0.0, 0.0]])
        mu = EmpiricalMeasure.from_weights(y, [1.0, 3.0], pair_points=z)
        p = ThermalizationParams(beta=2.0)
        qoi = qoi_coordinate(0, source="material")
        res = expect_random_loading(mu, qoi, p, g)
        w2 = 3.0 * np.exp(-2.0)
        np.testing.assert_allclose(res.expectation, w2 / (1.0 + w2), rtol=1e-13)

    def test_convex_hull(self):
        rng = np.random.default_rng(171)
        g = Metric.euclidean(4)
        p = ThermalizationParams(beta=1.3)
        qoi = qoi_coordinate(1)
        for _ in range(20):
            mu = paired_measure(rng)
            res = expect_random_loading(mu, qoi, p, g)
            values = mu.pair_points[:, 1]
            span = np.ptp(values) + 1.0
            assert values.min() - 1e-10 * span <= res.expectation <= values.max() + 1e-10 * span

    def test_constant_observable_is_exact(self):
        rng = np.random.default_rng(173)
        g = Metric.euclidean(4)
        mu = paired_measure(rng)
        qoi = QuantityOfInterest(fn=lambda z: np.full(z.shape[0], 3.7))
        res = expect_random_loading(mu, qoi, ThermalizationParams(beta=4.0), g)
        assert res.expectation == 3.7

    def test_weight_rescaling_is_exact(self):
        rng = np.random.default_rng(179)
        g = Metric.euclidean(4)
        p = ThermalizationParams(beta=2.0)
        qoi = qoi_coordinate(2)
        mu = paired_measure(rng)
        base = expect_random_loading(mu, qoi, p, g)
        for t in (1e-6, 1.0, 1e6):
            scaled = expect_random_loading(mu.scale_weights(t), qoi, p, g)
            assert scaled.expectation == base.expectation
            assert scaled.effective_sample_size == base.effective_sample_size

    def test_effective_sample_size_limits(self):
        g = Metric.euclidean(2)
        y = np.zeros((8, 2))
        z = np.zeros((8, 2))
        mu = EmpiricalMeasure.from_weights(y, np.ones(8), pair_points=z)
        res = expect_random_loading(mu, qoi_coordinate(0), ThermalizationParams(1.0), g)
        np.testing.assert_allclose(res.effective_sample_size, 8.0, rtol=1e-12)
        assert not res.degenerate
        # One close pair dominating far pairs: ESS collapses toward 1.
        y2 = np.array([[0.0, 0.0]] + [[6.0, 0.0]] * 4)
        z2 = np.zeros((5, 2))
        mu2 = EmpiricalMeasure.from_weights(y2, np.ones(5), pair_points=z2)
        res2 = expect_random_loading(mu2, qoi_coordinate(0), ThermalizationParams(5.0), g)
        assert res2.effective_sample_size < 2.0
        assert res2.degenerate

    def test_pair_observable(self):
        g = Metric.euclidean(2)
        y = np.array([[1.0, 0.0], [3.0, 0.0]])
        z = np.array([[0.0, 0.0], [2.0, 0.0]])
        mu = EmpiricalMeasure.from_weights(y, [1.0, 1.0], pair_points=z)
        qoi = QuantityOfInterest(fn=lambda yy, zz: yy[:, 0] - zz[:, 0], pair=True)
        res = expect_random_loading(mu, qoi, ThermalizationParams(1.0), g)
        np.testing.assert_allclose(res.expectation, 1.0, rtol=1e-12)


class TestLocalGaussianAverage:
    def test_linear_observables_are_centered(self):
        rng = np.random.default_rng(181)
        g = Metric(np.ones(2), [1.0, 2.0])
        e = AffineSubspace.from_span(rng.normal(size=4), rng.normal(size=(4, 2)), g)
        centers = e.project_many(rng.normal(size=(6, 4)))
        qoi = qoi_coordinate(3)
        avg = local_gaussian_average(qoi, centers, e, beta=2.0)
        np.testing.assert_allclose(avg, centers[:, 3], atol=1e-12)

    def test_squared_distance_gives_dimension_over_two_beta(self):
        rng = np.random.default_rng(191)
        for k in (1, 2, 3):
            g = Metric(np.ones(2), [1.3, 0.7])
            e = AffineSubspace.from_span(np.zeros(4), rng.normal(size=(4, k)), g)
            center = e.project(rng.normal(size=4))
            qoi = QuantityOfInterest(fn=lambda z: g.sq_norm_many(z - center))
            beta = 2.5
            avg = local_gaussian_average(qoi, center[None, :], e, beta)
            np.testing.assert_allclose(avg[0], k / (2.0 * beta), rtol=1e-12)

    def test_monte_carlo_agrees_with_tensor_rule(self):
        rng = np.random.default_rng(193)
        g = Metric.euclidean(4)
        e = AffineSubspace.from_span(rng.normal(size=4), rng.normal(size=(4, 2)), g)
        center = e.project(rng.normal(size=4))[None, :]
        qoi = QuantityOfInterest(fn=lambda z: np.cos(z[:, 0]) + z[:, 2] ** 2)
        beta = 1.8
        gh = local_gaussian_average(qoi, center, e, beta)
        mc = local_gaussian_average(
            qoi, center, e, beta, LocalQuadrature(method="monte_carlo", n_samples=200_000, seed=5)
        )
        np.testing.assert_allclose(mc, gh, rtol=2e-2)

    def test_monte_carlo_streams_are_deterministic(self):
        g = Metric.euclidean(2)
        e = AffineSubspace.from_span(np.zeros(2), np.array([[1.0], [0.5]]), g)
        centers = np.array([[0.0, 0.0], [1.0, 1.0]])
        qoi = QuantityOfInterest(fn=lambda z: np.sin(z).sum(axis=1))
        rule = LocalQuadrature(method="monte_carlo", n_samples=500, seed=11)
        a = local_gaussian_average(qoi, centers, e, 1.0, rule)
        b = local_gaussian_average(qoi, centers, e, 1.0, rule)
        np.testing.assert_array_equal(a, b)


class TestDeterministicLoading:
    def oracle_ratio(self, points, weights, e, g, qoi, beta, half_width=12.0, n_grid=200_001):
        """Dense 1-d quadrature of the unsimplified surface integrals."""
        t = np.linspace(-half_width, half_width, n_grid)
        states = e.origin + t[:, None] * e.basis[:, 0]
        f_vals = qoi.evaluate_states(states)
        num = 0.0
        den = 0.0
        for y, c in zip(points, weights):
            d2 = g.sq_norm_many(states - y)
            kernel = np.exp(-beta * d2)
            num += c * np.trapezoid(kernel * f_vals, t)
            den += c * np.trapezoid(kernel, t)
        return num / den

    def test_matches_dense_quadrature(self):
        rng = np.random.default_rng(197)
        g = Metric([1.0], [1.6])
        e = AffineSubspace.from_span(
            np.array([0.2, -0.1]), np.array([[1.0], [0.4]]), g
        )
        points = rng.normal(size=(5, 2), scale=1.2)
        weights = rng.uniform(0.5, 2.0, size=5)
        mu = EmpiricalMeasure.from_weights(points, weights)
        beta = 2.0
        for qoi in (
            QuantityOfInterest(fn=lambda z: np.ones(z.shape[0])),
            qoi_coordinate(0),
            qoi_quadratic(np.array([[1.0, 0.3], [0.3, 0.5]])),
        ):
            res = expect_det_loading(mu, e, qoi, ThermalizationParams(beta), g)
            ref = self.oracle_ratio(points, weights, e, g, qoi, beta)
            np.testing.assert_allclose(res.expectation, ref, rtol=1e-6)

    def test_constant_observable_is_exact(self):
        rng = np.random.default_rng(199)
        g = Metric.euclidean(2)
        e = AffineSubspace.from_span(np.zeros(2), np.array([[1.0], [0.0]]), g)
        mu = EmpiricalMeasure.from_weights(rng.normal(size=(7, 2)), np.ones(7))
        qoi = QuantityOfInterest(fn=lambda z: np.full(z.shape[0], -2.25))
        res = expect_det_loading(mu, e, qoi, ThermalizationParams(3.0), g)
        assert res.expectation == -2.25

    def test_total_variation_formula(self):
        rng = np.random.default_rng(211)
        g = Metric(np.ones(1), [2.0])
        e = AffineSubspace.from_span(np.zeros(2), np.array([[1.0], [2.0]]), g)
        pts = rng.normal(size=(10, 2))
        mu = EmpiricalMeasure.from_weights(pts, np.ones(10))
        beta = 1.7
        res = expect_det_loading(mu, e, qoi_coordinate(0), ThermalizationParams(beta), g)
        from ddinfer.measures import gaussian_mass, subspace_gaussian_mass

        d = e.distance_many(pts)
        manual = (
            subspace_gaussian_mass(beta, e)
            / gaussian_mass(beta, g)
            * np.sum(np.exp(-beta * d * d))
        )
        np.testing.assert_allclose(res.total_variation, manual, rtol=1e-10)


class TestMarginalGap:
    def test_constant_observable_gap_is_zero(self):
        rng = np.random.default_rng(223)
        g = Metric.euclidean(4)
        mu = paired_measure(rng)
        qoi = QuantityOfInterest(fn=lambda z: np.full(z.shape[0], 9.9))
        assert marginal_gap(mu, qoi, ThermalizationParams(1.0), g) == 0.0

    def test_gap_concentrates_on_near_pairs(self):
        # One exactly-matched pair, one mismatched pair: increasing beta pushes
        # the weight onto the matched pair, so the gap w/(1+w) with
        # w = exp(-beta d^2) decreases to zero.
        g = Metric.euclidean(2)
        y = np.array([[0.0, 0.0], [2.0, 0.0]])
        z = np.array([[0.0, 0.0], [1.0, 0.0]])
        mu = EmpiricalMeasure.from_weights(y, [1.0, 1.0], pair_points=z)
        qoi = qoi_coordinate(0)
        gaps = []
        for beta in (0.1, 1.0, 10.0):
            gap = marginal_gap(mu, qoi, ThermalizationParams(beta), g)
            w = np.exp(-beta)
            np.testing.assert_allclose(gap, w / (1.0 + w), rtol=1e-12)
            gaps.append(gap)
        assert gaps[2] < gaps[1] < gaps[0]

    def test_manual_two_atom_value(self):
        g = Metric.euclidean(2)
        y = np.array([[1.0, 0.0], [2.0, 0.0]])
        z = np.array([[0.5, 0.0], [2.5, 0.0]])
        mu = EmpiricalMeasure.from_weights(y, [1.0, 1.0], pair_points=z)
        # Equal distances give equal thermal weights; the signed offsets
        # y_0 - z_0 = +0.5 and -0.5 cancel in the mean.
        gap = marginal_gap(mu, qoi_coordinate(0), ThermalizationParams(1.0), g)
        np.testing.assert_allclose(gap, 0.0, atol=1e-12)

    def test_manual_asymmetric_value(self):
        g = Metric.euclidean(2)
        y = np.array([[1.0, 0.0], [3.0, 0.0]])
        z = np.zeros((2, 2))
        mu = EmpiricalMeasure.from_weights(y, [1.0, 1.0], pair_points=z)
        beta = 0.5
        r = np.exp(-beta * np.array([1.0, 9.0]))
        expected = abs(np.dot(r, [1.0, 3.0]) / r.sum())
        gap = marginal_gap(mu, qoi_coordinate(0), ThermalizationParams(beta), g)
        np.testing.assert_allclose(gap, expected, rtol=1e-12)


class TestQoiFactories:
    def test_member_component_indices(self):
        qoi_s = qoi_member_component(1, "strain", half_dim=3)
        qoi_t = qoi_member_component(2, "stress", half_dim=3)
        z = np.arange(6.0)[None, :]
        assert qoi_s.evaluate_states(z)[0] == 1.0
        assert qoi_t.evaluate_states(z)[0] == 5.0

    def test_polynomial(self):
        qoi = qoi_polynomial([1.0, 0.0, 2.0], index=1)
        z = np.array([[0.0, 3.0]])
        assert qoi.evaluate_states(z)[0] == 1.0 + 2.0 * 9.0

    def test_pair_observable_requires_pairs(self):
        qoi = qoi_coordinate(0, source="material")
        with pytest.raises(ValueError, match="pair observable"):
            qoi.evaluate_states(np.zeros((1, 2)))
