import numpy as np
import pytest

from matrixot import (
    ScalarDensity,
    discrete_ot_lp,
    displacement_geodesic,
    monotone_map,
    quantile,
    rebin,
    w2_closed_form,
)
from helpers import random_scalar_density, transportation_vertices


def density(grid, weights):
    return ScalarDensity(np.asarray(grid, float), np.asarray(weights, float))


class TestScalarDensity:
    def test_rejects_unsorted_grid(self):
        with pytest.raises(ValueError, match="increasing"):
            density([0.0, 0.0, 1.0], [0.3, 0.3, 0.4])

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError, match="nonnegative"):
            density([0.0, 1.0], [0.5, -0.5])

    def test_normalized(self):
        d = density([0.0, 1.0], [2.0, 6.0]).normalized()
        assert d.is_normalized
        assert np.allclose(d.weights, [0.25, 0.75])


class TestQuantile:
    def test_point_mass(self):
        d = density([2.5], [1.0])
        for t in (0.1, 0.5, 1.0):
            assert quantile(d, t) == 2.5

    def test_uniform_two_points(self):
        d = density([0.0, 1.0], [0.5, 0.5])
        assert quantile(d, 0.25) == 0.0
        assert quantile(d, 0.75) == 1.0

    def test_linear_scan_oracle(self):
        rng = np.random.default_rng(0)
        d = random_scalar_density(rng, 10)
        cum = np.cumsum(d.weights)
        for t in rng.uniform(0, 1, size=100):
            expected = d.grid[next(k for k in range(10) if cum[k] >= t)]
            assert quantile(d, t) == expected

    def test_rejects_out_of_range(self):
        d = density([0.0], [1.0])
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            quantile(d, 1.5)


class TestW2ClosedForm:
    def test_identical(self):
        rng = np.random.default_rng(1)
        d = random_scalar_density(rng, 6)
        assert w2_closed_form(d, d) == pytest.approx(0.0, abs=1e-15)

    def test_point_masses(self):
        assert w2_closed_form(
            density([1.0], [1.0]), density([4.0], [1.0])
        ) == pytest.approx(9.0)

    def test_lp_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            mu0 = random_scalar_density(rng, 8)
            mu1 = random_scalar_density(rng, 8)
            cost = (mu0.grid[:, None] - mu1.grid[None, :]) ** 2
            _, lp_value, _ = discrete_ot_lp(cost, mu0, mu1)
            closed = w2_closed_form(mu0, mu1)
            assert abs(closed - lp_value) <= 1e-8 * (1 + abs(lp_value))

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        mu0 = random_scalar_density(rng, 7)
        mu1 = random_scalar_density(rng, 9)
        assert w2_closed_form(mu0, mu1) == pytest.approx(
            w2_closed_form(mu1, mu0), abs=1e-12
        )

    def test_zero_iff_identical(self):
        rng = np.random.default_rng(4)
        mu0 = random_scalar_density(rng, 5)
        bumped = ScalarDensity(mu0.grid, mu0.weights + 0.0)
        weights = mu0.weights.copy()
        weights[0] += 0.05
        weights[-1] -= 0.05
        mu1 = ScalarDensity(mu0.grid, weights).normalized()
        assert w2_closed_form(mu0, bumped) == pytest.approx(0.0, abs=1e-15)
        assert w2_closed_form(mu0.normalized(), mu1) > 1e-6

    def test_mass_mismatch(self):
        with pytest.raises(ValueError, match="normalized"):
            w2_closed_form(density([0.0], [0.5]), density([1.0], [1.0]))


class TestMonotoneMap:
    def test_identical_densities_diagonal(self):
        rng = np.random.default_rng(5)
        d = random_scalar_density(rng, 6)
        plan = monotone_map(d, d)
        assert np.allclose(plan.coupling, np.diag(d.weights), atol=1e-12)

    def test_point_masses(self):
        plan = monotone_map(density([0.0], [1.0]), density([3.0], [1.0]))
        assert plan.coupling.shape == (1, 1)
        assert plan.coupling[0, 0] == pytest.approx(1.0)

    def test_cost_matches_closed_form(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            mu0 = random_scalar_density(rng, 9)
            mu1 = random_scalar_density(rng, 5)
            plan = monotone_map(mu0, mu1)
            cost = (mu0.grid[:, None] - mu1.grid[None, :]) ** 2
            assert plan.cost(cost) == pytest.approx(
                w2_closed_form(mu0, mu1), abs=1e-10
            )

    def test_support_is_monotone(self):
        rng = np.random.default_rng(7)
        mu0 = random_scalar_density(rng, 8)
        mu1 = random_scalar_density(rng, 8)
        support = monotone_map(mu0, mu1).support(1e-12)
        for a in range(len(support)):
            for b in range(len(support)):
                (i1, j1), (i2, j2) = support[a], support[b]
                if i2 > i1:
                    assert j2 >= j1


class TestDisplacementGeodesic:
    def test_endpoints(self):
        rng = np.random.default_rng(8)
        mu0 = random_scalar_density(rng, 6)
        mu1 = random_scalar_density(rng, 6)
        start = displacement_geodesic(mu0, mu1, 0.0)
        end = displacement_geodesic(mu0, mu1, 1.0)
        assert np.allclose(start.grid, mu0.grid) and np.allclose(
            start.weights, mu0.weights, atol=1e-12
        )
        assert np.allclose(end.grid, mu1.grid) and np.allclose(
            end.weights, mu1.weights, atol=1e-12
        )

    def test_point_midpoint(self):
        mid = displacement_geodesic(
            density([0.0], [1.0]), density([2.0], [1.0]), 0.5
        )
        assert np.allclose(mid.grid, [1.0])
        assert np.allclose(mid.weights, [1.0])

    def test_constant_speed(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            mu0 = random_scalar_density(rng, 7)
            mu1 = random_scalar_density(rng, 6)
            w2 = w2_closed_form(mu0, mu1)
            for tau in (0.25, 0.5, 0.75):
                part = w2_closed_form(mu0, displacement_geodesic(mu0, mu1, tau))
                assert abs(part - tau**2 * w2) <= 1e-8 * (1 + w2)


class TestRebin:
    def test_exact_hits_preserved(self):
        d = density([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
        out = rebin(d, d.grid)
        assert np.allclose(out.weights, d.weights, atol=1e-15)

    def test_linear_split(self):
        d = density([0.25], [1.0])
        out = rebin(d, np.array([0.0, 1.0]))
        assert np.allclose(out.weights, [0.75, 0.25])

    def test_mass_preserved_and_clamped(self):
        d = density([-1.0, 0.5, 5.0], [0.2, 0.3, 0.5])
        out = rebin(d, np.array([0.0, 1.0, 2.0]))
        assert out.total_mass == pytest.approx(d.total_mass)
        assert out.weights[0] >= 0.2


class TestDiscreteOtLp:
    def test_single_cell(self):
        plan, value, cert = discrete_ot_lp(
            np.array([[3.5]]), density([0.0], [1.0]), density([1.0], [1.0])
        )
        assert value == pytest.approx(3.5)
        assert plan.coupling[0, 0] == pytest.approx(1.0)
        assert cert.objective(plan.row_marginal, plan.col_marginal) == pytest.approx(3.5, abs=1e-9)

    def test_quadratic_matches_closed_form(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            mu0 = random_scalar_density(rng, 6)
            mu1 = random_scalar_density(rng, 6)
            cost = (mu0.grid[:, None] - mu1.grid[None, :]) ** 2
            _, value, _ = discrete_ot_lp(cost, mu0, mu1)
            assert abs(value - w2_closed_form(mu0, mu1)) <= 1e-8 * (1 + value)

    def test_vertex_enumeration_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            mu0 = random_scalar_density(rng, 3)
            mu1 = random_scalar_density(rng, 3)
            cost = rng.uniform(0, 5, size=(3, 3))
            _, value, _ = discrete_ot_lp(cost, mu0, mu1)
            best = min(
                float(np.sum(v * cost))
                for v in transportation_vertices(mu0.weights, mu1.weights)
            )
            assert value == pytest.approx(best, abs=1e-9)

    def test_duality_gap_and_feasibility(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            mu0 = random_scalar_density(rng, 7)
            mu1 = random_scalar_density(rng, 5)
            cost = rng.uniform(0, 3, size=(7, 5))
            plan, value, cert = discrete_ot_lp(cost, mu0, mu1)
            assert cert.feasibility_violation(cost) <= 1e-9
            gap = value - cert.objective(mu0, mu1)
            assert abs(gap) <= 1e-8 * (1 + abs(value))

    def test_complementary_slackness(self):
        rng = np.random.default_rng(13)
        mu0 = random_scalar_density(rng, 6)
        mu1 = random_scalar_density(rng, 6)
        cost = (mu0.grid[:, None] - mu1.grid[None, :]) ** 2
        plan, _, cert = discrete_ot_lp(cost, mu0, mu1)
        for i, j in plan.support(1e-10):
            assert cert.phi0[i] - cert.phi1[j] == pytest.approx(
                cost[i, j], abs=1e-8
            )

    def test_support_monotone_for_quadratic(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            mu0 = random_scalar_density(rng, 8)
            mu1 = random_scalar_density(rng, 7)
            cost = (mu0.grid[:, None] - mu1.grid[None, :]) ** 2
            plan, _, _ = discrete_ot_lp(cost, mu0, mu1)
            cells = plan.support(1e-10)
            x = mu0.grid[cells[:, 0]]
            y = mu1.grid[cells[:, 1]]
            areas = (x[None, :] - x[:, None]) * (y[:, None] - y[None, :])
            mask = (x[None, :] - x[:, None] > 0) & (y[:, None] - y[None, :] > 0)
            assert not np.any(areas[mask] > 1e-9)

    def test_row_constant_shift(self):
        rng = np.random.default_rng(15)
        mu0 = random_scalar_density(rng, 5)
        mu1 = random_scalar_density(rng, 6)
        cost = rng.uniform(0, 2, size=(5, 6))
        _, value, _ = discrete_ot_lp(cost, mu0, mu1)
        shifted = cost.copy()
        shifted[2, :] += 1.25
        _, value2, _ = discrete_ot_lp(shifted, mu0, mu1)
        assert value2 == pytest.approx(value + 1.25 * mu0.weights[2], abs=1e-9)

    def test_mass_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mass mismatch"):
            discrete_ot_lp(
                np.zeros((1, 1)), density([0.0], [1.0]), density([0.0], [0.5])
            )
