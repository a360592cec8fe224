import numpy as np
import pytest

import config
from conftest import build, interior_prices
from engines.demand_oracle import excess_demand
from engines.dual_objective import (
    check_price_bounds,
    evaluate,
    finite_difference_gradient,
    finite_difference_hessian,
    grad_phi,
    hessian_phi,
    phi,
    phi_closed_form,
    psi,
    tilde,
)
from engines.equilibrium_solver import EquilibriumSolver
from engines.market_loader import random_market, tilde_constants
from models.data_models import Bundle, PrimalInfeasibleError

HALF = np.array([0.5, 0.5])


def test_psi_unit_bundle(cobb_douglas):
    assert psi(cobb_douglas, np.ones((1, 2))) == pytest.approx(0.0, abs=1e-15)


def test_psi_zero_utility(cobb_douglas):
    with pytest.raises(PrimalInfeasibleError):
        psi(cobb_douglas, np.array([[0.0, 1.0]]))


def test_psi_scaling_loses_at_most_alpha(rng):
    market = random_market(rng, "ces", 3, 4, rho=-0.5)
    alpha = 0.1
    for _ in range(20):
        x = rng.random((market.n, market.m)) + 0.01
        assert psi(market, x / (1 + alpha)) >= psi(market, x) - alpha - 1e-12


def test_cobb_douglas_phi_both_routes(cobb_douglas):
    expected = psi(cobb_douglas, np.array([[0.6, 1.4]]))
    assert phi(cobb_douglas, HALF) == pytest.approx(expected, abs=1e-14)
    assert phi_closed_form(cobb_douglas, HALF) == pytest.approx(expected, abs=1e-14)


def test_cobb_douglas_gradient(cobb_douglas):
    np.testing.assert_allclose(grad_phi(cobb_douglas, HALF), [0.4, -0.4], atol=1e-14)


def test_closed_form_matches_generic_route(nested_markets, rng):
    for market in nested_markets:
        for _ in range(5):
            p = interior_prices(rng, market.m)
            assert phi_closed_form(market, p) == pytest.approx(phi(market, p), abs=1e-9)


@pytest.mark.parametrize("family", ["leontief", "cobb_douglas", "ces"])
def test_closed_form_other_families(family, rng):
    market = random_market(rng, family, 3, 4, rho=-0.5 if family == "ces" else None)
    p = interior_prices(rng, market.m)
    assert phi_closed_form(market, p) == pytest.approx(phi(market, p), abs=1e-9)


def test_gradient_is_negative_excess_demand(nested_markets, rng):
    for market in nested_markets:
        for _ in range(5):
            p = interior_prices(rng, market.m)
            analytic = grad_phi(market, p)
            np.testing.assert_array_equal(analytic, -excess_demand(market, p).z)
            numeric = finite_difference_gradient(lambda q: phi(market, q), p, h=1e-6)
            scale = max(1.0, float(np.max(np.abs(analytic))))
            assert np.max(np.abs(numeric - analytic)) / scale <= 1e-4


def test_hessian_matches_finite_differences(nested_markets, rng):
    for market in nested_markets:
        for _ in range(5):
            p = interior_prices(rng, market.m)
            H = hessian_phi(market, p)
            numeric = finite_difference_hessian(lambda q: grad_phi(market, q), p, h=1e-6)
            scale = max(1.0, float(np.max(np.abs(H))))
            assert np.max(np.abs(numeric - H)) / scale <= 1e-3
            np.testing.assert_allclose(H, H.T, atol=config.HESSIAN_SYMMETRY_TOL * scale)


@pytest.mark.parametrize("family", ["leontief", "cobb_douglas"])
def test_hessian_other_families(family, rng):
    market = random_market(rng, family, 3, 3)
    p = interior_prices(rng, market.m)
    H = hessian_phi(market, p)
    numeric = finite_difference_hessian(lambda q: grad_phi(market, q), p, h=1e-6)
    np.testing.assert_allclose(H, numeric, rtol=1e-3, atol=1e-6 * np.max(np.abs(H)))


def test_hessian_is_positive_semidefinite(nested_markets, rng):
    for market in nested_markets:
        p = interior_prices(rng, market.m)
        H = hessian_phi(market, p)
        for _ in range(100):
            x = rng.normal(size=market.m)
            assert x @ H @ x >= -1e-10 * np.max(np.abs(H)) * (x @ x)


def test_hessian_sandwich_at_uniform_prices(nested_markets, rng):
    solver = EquilibriumSolver()
    for market in nested_markets[::4]:
        bounds = solver.estimate_bounds(market, samples=20, seed=1)
        p = np.full(market.m, 1.0 / market.m)
        H = hessian_phi(market, p)
        for _ in range(50):
            x = rng.normal(size=market.m)
            quad = x @ H @ x
            tilde_norm = tilde(market, x).norm_squared()
            slack = 1e-8 * max(1.0, abs(quad))
            assert bounds.L_min * tilde_norm - slack <= quad <= bounds.L_max * tilde_norm + slack


def test_evaluate_bundles_value_gradient_and_hessian(ces_half):
    evaluation = evaluate(ces_half, HALF, with_hessian=True)
    assert evaluation.phi == pytest.approx(phi(ces_half, HALF), abs=1e-12)
    np.testing.assert_allclose(evaluation.grad, grad_phi(ces_half, HALF))
    np.testing.assert_allclose(evaluation.hessian, hessian_phi(ces_half, HALF))
    assert evaluate(ces_half, HALF).hessian is None


@pytest.mark.parametrize("family, rho", [("ces", -0.5), ("ces", 0.5), ("leontief", None), ("cobb_douglas", None)])
def test_weak_duality(family, rho):
    generator = np.random.default_rng(11)
    market = random_market(generator, family, 3, 4, rho=rho)
    for _ in range(250):
        # each column split among agents, scaled below supply
        x = generator.dirichlet(np.ones(market.n), size=market.m).T * generator.uniform(0.1, 1.0, size=market.m)
        p = generator.dirichlet(np.ones(market.m)) + 1e-3
        p /= p.sum()
        assert psi(market, x) <= phi(market, p) + 1e-9


def test_strong_duality_at_oracle(leontief):
    report = EquilibriumSolver().solve(leontief)
    assert psi(leontief, report.x_star) == pytest.approx(report.dual_value, abs=1e-8)


def test_tilde_sandwich(rng):
    market = random_market(rng, "nested_ces_leontief", 4, 5, rho=0.5, objects_per_agent=3)
    constants = tilde_constants(market)
    for _ in range(100):
        v = rng.random(market.m)
        norm = float(v @ v)
        tilde_norm = tilde(market, v).norm_squared()
        assert constants.a_min ** 2 * norm <= tilde_norm * (1 + 1e-12)
        assert tilde_norm <= constants.A * norm * (1 + 1e-12)


def test_price_bounds_hold_at_uniform(nested_markets):
    for market in nested_markets:
        assert check_price_bounds(market, np.full(market.m, 1.0 / market.m)) == []


def test_price_bound_violation_reported(ces_half):
    violations = check_price_bounds(ces_half, np.array([1e-9, 1.0 - 1e-9]))
    assert [v.row for v in violations] == [0]
    assert violations[0].p_tilde < violations[0].bound


def test_psi_accepts_bundles(ces_half):
    bundles = [Bundle(np.array([0.8, 1.2]), np.array([0.8, 1.2]))]
    assert psi(ces_half, bundles) == pytest.approx(psi(ces_half, np.array([[0.8, 1.2]])))


@pytest.mark.parametrize("rho", [1e-4, -1e-4])
def test_closed_form_near_cobb_douglas_limit(rho, rng):
    market = build({
        "goods": ["g1", "g2", "g3"],
        "agents": [
            {"budget": 0.6, "utility": {"family": "nested_ces_leontief", "rho": rho, "objects": [
                {"c": 0.3, "a": {"g1": 1.0, "g2": 0.5}},
                {"c": 0.7, "a": {"g3": 1.0}},
            ]}},
            {"budget": 0.4, "utility": {"family": "ces", "rho": rho, "c": {"g2": 0.2, "g3": 0.8}}},
        ],
    })
    for _ in range(5):
        p = interior_prices(rng, market.m)
        value = phi_closed_form(market, p)
        assert np.isfinite(value)
        assert value == pytest.approx(phi(market, p), abs=1e-8)
        numeric = finite_difference_gradient(lambda q: phi_closed_form(market, q), p, h=1e-6)
        np.testing.assert_allclose(numeric, grad_phi(market, p), atol=1e-4)
