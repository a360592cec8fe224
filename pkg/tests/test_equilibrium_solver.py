import numpy as np
import pytest

from conftest import build
from engines.demand_oracle import excess_demand
from engines.dual_objective import hessian_phi, tilde
from engines.equilibrium_solver import (
    EquilibriumSolver,
    cobb_douglas_prices,
    effective_residual,
    estimate_bounds,
    solve_equilibrium,
)
from engines.market_loader import MarketLoader, random_market


@pytest.fixture
def solver():
    return EquilibriumSolver()


def test_cobb_douglas_closed_form(solver, cobb_douglas):
    report = solver.solve(cobb_douglas, tol=1e-9)
    np.testing.assert_allclose(report.p_star, [0.3, 0.7], atol=1e-15)
    assert report.iterations == 0
    assert report.converged
    assert report.to_dict()["prices"] == pytest.approx({"g1": 0.3, "g2": 0.7})


def test_cobb_douglas_prices_sum_budget_weighted_exponents(rng):
    market = random_market(rng, "cobb_douglas", 4, 3)
    expected = sum(form.budget * form.a.T @ form.c for form in market.forms)
    np.testing.assert_allclose(cobb_douglas_prices(market), expected, rtol=1e-13)
    np.testing.assert_allclose(excess_demand(market, expected).z, np.zeros(3), atol=1e-12)


def test_symmetric_leontief(solver, leontief):
    report = solver.solve(leontief)
    np.testing.assert_allclose(report.p_star, [0.5, 0.5], atol=1e-9)
    assert report.residual <= 1e-9


def test_nested_singletons(solver, ces_half):
    report = solver.solve(ces_half, tol=1e-10)
    expected = np.sqrt([0.4, 0.6])
    np.testing.assert_allclose(report.p_star, expected / expected.sum(), atol=1e-8)
    np.testing.assert_allclose(report.p_star, [0.4495, 0.5505], atol=1e-4)


def test_residual_on_sample_markets(solver, markets_dir):
    loader = MarketLoader()
    for name in ("cobb_douglas", "leontief_symmetric", "nested"):
        report = solver.solve(loader.load(markets_dir / f"{name}.json"), tol=1e-9)
        assert report.converged
        assert report.residual <= 1e-7


def test_residual_on_random_nested(solver, nested_markets):
    for market in nested_markets[::3]:
        report = solver.solve(market, tol=1e-9)
        assert report.residual <= 1e-7
        assert np.sum(report.p_star) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_residual_on_all_random_nested(solver, nested_markets):
    for market in nested_markets:
        assert solver.solve(market, tol=1e-9).residual <= 1e-7


def test_iteration_cap_returns_best_iterate(solver, nested_markets):
    market = nested_markets[0]
    report = solver.solve(market, tol=1e-14, max_iters=3)
    assert not report.converged
    assert report.iterations == 3
    assert np.all(report.p_star > 0)


def test_effective_residual_ignores_free_goods():
    p = np.array([1e-12, 0.5, 0.5])
    z = np.array([-0.3, 1e-10, -1e-10])
    assert effective_residual(p, z, tol=1e-9) == pytest.approx(1e-10)
    assert effective_residual(np.array([0.1, 0.5, 0.4]), z, tol=1e-9) == pytest.approx(0.3)


def test_module_level_solve(cobb_douglas):
    np.testing.assert_allclose(solve_equilibrium(cobb_douglas).p_star, [0.3, 0.7])


def test_bounds_single_good():
    market = build({"goods": ["g1"], "agents": [
        {"budget": 1, "utility": {"family": "ces", "rho": 0.5, "c": {"g1": 1}}},
    ]})
    bounds = estimate_bounds(market, samples=5)
    assert bounds.W == 1.0
    assert bounds.A == pytest.approx(1.0)
    assert bounds.L_min == pytest.approx(1.0)
    assert bounds.L_max == pytest.approx(1.0)
    assert bounds.samples == 5


def test_bounds_object_count(solver, rng):
    market = random_market(rng, "nested_ces_leontief", 3, 4, rho=-0.5, objects_per_agent=2)
    bounds = solver.estimate_bounds(market, samples=30, seed=4)
    assert bounds.A <= len(market.table.c) + 1e-12
    assert bounds.W >= 1.0
    assert 0.0 <= bounds.L_min <= bounds.L_max
    assert bounds.lambda_max > 0


def test_bounds_are_deterministic(solver, nested_markets):
    first = solver.estimate_bounds(nested_markets[5], samples=25, seed=9)
    second = solver.estimate_bounds(nested_markets[5], samples=25, seed=9)
    assert first.to_dict() == second.to_dict()


def test_lambda_on_held_out_prices(solver):
    generator = np.random.default_rng(21)
    market = random_market(generator, "nested_ces_leontief", 3, 4, rho=0.5)
    bounds = solver.estimate_bounds(market, samples=200, seed=0)
    for _ in range(50):
        p = np.maximum(generator.dirichlet(np.ones(market.m)), 0.25 / market.m)
        p /= p.sum()
        H = hessian_phi(market, p)
        x = generator.normal(size=market.m)
        Hx = H @ x
        # held-out points may exceed the sampled maximum slightly
        assert Hx @ Hx <= 2.0 * bounds.lambda_max ** 2 * tilde(market, x).norm_squared() + 1e-12


def test_bounds_reject_zero_samples(solver, cobb_douglas):
    with pytest.raises(ValueError):
        solver.estimate_bounds(cobb_douglas, samples=0)
