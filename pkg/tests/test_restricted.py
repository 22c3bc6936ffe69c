import numpy as np
import pytest

from matrixot import (
    GroundCost,
    MatrixDensity,
    SolverConfig,
    d2lambda,
    rotational_cost,
    solve_full,
    transport_cost,
    w2_closed_form,
)
from matrixot.restricted import RestrictedPlan
from helpers import quadratic_cost, random_density, random_unit_trace_psd

LAM = 0.1


class TestRotationalCost:
    def test_identical_diagonal_zero(self):
        rng = np.random.default_rng(0)
        mu = random_density(rng, 5, 2)
        rot = rotational_cost(mu, mu)
        assert np.allclose(np.diag(rot.matrix), 0.0, atol=1e-14)

    def test_orthogonal_projectors(self):
        grid = np.array([0.0])
        mu0 = MatrixDensity(grid, np.array([np.diag([1.0, 0.0])], dtype=complex))
        mu1 = MatrixDensity(grid, np.array([np.diag([0.0, 1.0])], dtype=complex))
        rot = rotational_cost(mu0, mu1)
        assert rot.matrix[0, 0] == pytest.approx(2.0)

    def test_bounds(self):
        rng = np.random.default_rng(1)
        mu0 = random_density(rng, 6, 3)
        mu1 = random_density(rng, 4, 3)
        rot = rotational_cost(mu0, mu1)
        assert np.all(rot.matrix >= 0.0)
        assert np.all(rot.matrix <= 2.0 + 1e-12)

    def test_zero_trace_rejected(self):
        grid = np.array([0.0, 1.0])
        blocks = np.array([np.eye(2), np.zeros((2, 2))], dtype=complex)
        degenerate = MatrixDensity(grid, blocks / 2.0)
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError, match="positive traces"):
            rotational_cost(degenerate, random_density(rng, 2, 2))


class TestD2Lambda:
    def test_identity(self):
        rng = np.random.default_rng(3)
        mu = random_density(rng, 5, 2)
        res = d2lambda(mu, mu, quadratic_cost(mu, mu), LAM)
        assert res.value <= 1e-9
        assert np.allclose(
            res.plan.coupling, np.diag(mu.traces), atol=1e-9
        )

    def test_single_point_closed_form(self):
        rng = np.random.default_rng(4)
        a = random_unit_trace_psd(rng, 2)
        b = random_unit_trace_psd(rng, 2)
        mu0 = MatrixDensity(np.array([0.0]), a[None])
        mu1 = MatrixDensity(np.array([0.0]), b[None])
        cost = GroundCost("quadratic-linear", np.zeros((1, 1)))
        res = d2lambda(mu0, mu1, cost, LAM)
        frob = float(np.sum(np.abs(a - b) ** 2))
        assert res.value == pytest.approx(np.sqrt(LAM * frob), abs=1e-12)

    def test_lambda_zero_is_scalar_w2(self):
        rng = np.random.default_rng(5)
        mu0 = random_density(rng, 6, 2)
        mu1 = random_density(rng, 6, 2)
        res = d2lambda(mu0, mu1, quadratic_cost(mu0, mu1), 0.0)
        w2 = w2_closed_form(mu0.trace_density(), mu1.trace_density())
        assert res.value == pytest.approx(np.sqrt(w2), abs=1e-9)

    def test_metric_axioms(self):
        rng = np.random.default_rng(6)
        grid = np.sort(rng.uniform(0, 3, size=8))
        for _ in range(30):
            trio = [
                MatrixDensity(
                    grid, np.array([
                        np.outer(v, v.conj()) + 0.02 * np.eye(2)
                        for v in rng.normal(size=(8, 2))
                        + 1j * rng.normal(size=(8, 2))
                    ])
                ).normalized()
                for _ in range(3)
            ]
            cost = GroundCost.quadratic(grid, grid)
            d01 = d2lambda(trio[0], trio[1], cost, LAM).value
            d12 = d2lambda(trio[1], trio[2], cost, LAM).value
            d02 = d2lambda(trio[0], trio[2], cost, LAM).value
            assert d02 <= d01 + d12 + 1e-7
            d10 = d2lambda(trio[1], trio[0], cost, LAM).value
            assert abs(d01 - d10) <= 1e-9
            assert d2lambda(trio[0], trio[0], cost, LAM).value <= 1e-9
            assert d01 > 1e-6

    def test_restricted_dominates_full(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            mu0 = random_density(rng, 3, 2)
            mu1 = random_density(rng, 3, 2)
            cost = quadratic_cost(mu0, mu1)
            cfg = SolverConfig(lam=LAM, tol_primal=1e-8, tol_dual=1e-8,
                               max_iter=40_000, check_every=25)
            full = solve_full(mu0, mu1, cost, cfg)
            restricted = d2lambda(mu0, mu1, cost, LAM)
            assert restricted.squared >= full.value - 1e-7

    def test_reduction_matches_full_cost_formula(self):
        rng = np.random.default_rng(8)
        mu0 = random_density(rng, 5, 2)
        mu1 = random_density(rng, 4, 2)
        cost = quadratic_cost(mu0, mu1)
        res = d2lambda(mu0, mu1, cost, LAM)
        # arbitrary feasible coupling too, not just the optimizer
        from matrixot import monotone_map

        arbitrary = monotone_map(mu0.trace_density(), mu1.trace_density())
        for coupling in (res.plan.coupling, arbitrary.coupling):
            rplan = RestrictedPlan(coupling, mu0, mu1)
            lifted_cost = transport_cost(rplan.to_full_plan(), cost, LAM)
            rot = rotational_cost(mu0, mu1)
            direct = float(np.sum((cost.matrix + LAM * rot.matrix) * coupling))
            assert lifted_cost == pytest.approx(direct, abs=1e-10)

    def test_plan_marginals_validated(self):
        rng = np.random.default_rng(9)
        mu0 = random_density(rng, 3, 2)
        mu1 = random_density(rng, 3, 2)
        bad = np.full((3, 3), 1.0 / 9.0)
        with pytest.raises(ValueError, match="marginals"):
            RestrictedPlan(bad, mu0, mu1)
