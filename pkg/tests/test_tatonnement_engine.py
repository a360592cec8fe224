import numpy as np
import pytest

from engines.demand_oracle import excess_demand
from engines.market_loader import MarketLoader, market_hash, normalize, parse_market, random_market
from engines.tatonnement_engine import (
    TatonnementEngine,
    average_trace,
    choose_epsilon,
    delta_achieved,
    distort,
    distortion_rho,
    init_prices,
    run,
    step,
)
from models.data_models import (
    DistortionRequiredError,
    MarketError,
    NumericalInstabilityError,
    UtilityFamily,
)
from models.report_models import BoundsEstimate, RunConfig, TraceBuilder


def bounds(W=1.0, L_max=1.0, A=1.0, lambda_max=1.0):
    return BoundsEstimate(A=A, a_min=1.0, W=W, L_min=0.0, L_max=L_max, lambda_max=lambda_max, samples=1)


def test_step_example():
    np.testing.assert_allclose(step([0.5, 0.5], [0.2, -0.2], 0.1), [0.51, 0.49], rtol=1e-15)


def test_step_fixed_point_iff_zero_excess():
    p = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(step(p, np.zeros(3), 0.2), p)
    assert not np.array_equal(step(p, np.array([0.0, 1e-3, -6e-4]), 0.2), p)


def test_step_stays_positive(rng):
    p = rng.dirichlet(np.ones(5))
    z = rng.uniform(-1.0, 3.0, size=5)
    z -= np.dot(p, z) / p.sum()
    z = np.maximum(z, -1.0)
    nxt = step(p, z, 0.25)
    assert np.all(nxt > 0)


def test_cobb_douglas_one_step(cobb_douglas):
    p0 = init_prices(cobb_douglas)
    p1 = step(p0, excess_demand(cobb_douglas, p0).z, 1.0)
    assert np.max(np.abs(p1 - np.array([0.3, 0.7]))) <= 1e-12


def test_delta_achieved():
    assert delta_achieved([0.5, 0.5], [0.2, -0.2]) == pytest.approx(0.2)
    # an under-demanded good only counts up to its price
    assert delta_achieved([0.05, 0.95], [-0.9, 0.9 * 0.05 / 0.95]) == pytest.approx(0.05)
    assert delta_achieved([0.5, 0.5], [0.0, 0.0]) == 0.0


def test_init_uniform(rng):
    market = random_market(rng, "ces", 2, 4, rho=0.5)
    np.testing.assert_array_equal(init_prices(market, "uniform"), np.full(4, 0.25))


def test_init_spend_reset_lands_on_simplex(nested_markets):
    for market in nested_markets:
        p = init_prices(market, "spend-reset", seed=3)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p > 0)


def test_init_explicit_rescales_with_warning(cobb_douglas, capsys):
    p = init_prices(cobb_douglas, "explicit", [0.2, 0.9])
    np.testing.assert_allclose(p, [2 / 11, 9 / 11], rtol=1e-15)
    assert "rescaled" in capsys.readouterr().err


@pytest.mark.parametrize("explicit", [[0.0, 1.0], [0.5], None])
def test_init_explicit_errors(cobb_douglas, explicit):
    with pytest.raises(MarketError):
        init_prices(cobb_douglas, "explicit", explicit)


def test_choose_epsilon_examples(cobb_douglas):
    assert choose_epsilon(cobb_douglas, bounds(W=1.0, L_max=10.0, A=1.0)) == pytest.approx(0.1)
    tiny = choose_epsilon(cobb_douglas, bounds(L_max=1e12))
    assert 0 < tiny <= 1e-12
    assert choose_epsilon(cobb_douglas, bounds(W=1.0, L_max=0.0, lambda_max=0.0)) == 0.25


def test_auto_epsilon_on_cobb_douglas_is_conservative(cobb_douglas):
    engine = TatonnementEngine()
    epsilon = engine.resolve_epsilon(cobb_douglas, RunConfig())
    assert 0 < epsilon <= 0.25


def test_distortion_rho():
    assert distortion_rho(0.4, 55) == pytest.approx(0.975, abs=1e-4)
    assert distortion_rho(0.1, 2) == pytest.approx(1 - 0.1 / (4 * np.log(2)))
    assert distortion_rho(0.1, 2) == pytest.approx(0.9639, abs=1e-4)
    assert 1 - 1e-8 < distortion_rho(1e-9, 2) < 1


@pytest.mark.parametrize("delta, k", [(1.0, 2), (0.0, 2), (0.1, 1)])
def test_distortion_rho_errors(delta, k):
    with pytest.raises(MarketError):
        distortion_rho(delta, k)


def test_distort_resource_market(markets_dir):
    market = MarketLoader().load(markets_dir / "resource_allocation.json")
    distorted = distort(market, 0.1)
    assert distorted.normalized
    for agent, original in zip(distorted.agents, market.agents):
        assert agent.utility.family is UtilityFamily.NESTED_CES_LEONTIEF
        assert agent.utility.rho == pytest.approx(0.9639, abs=1e-4)
        for obj, before in zip(agent.utility.objects, original.utility.objects):
            assert obj.a == pytest.approx(before.a)


def test_distort_needs_resource_agents(cobb_douglas):
    with pytest.raises(MarketError, match="resource_allocation"):
        distort(cobb_douglas, 0.1)


def test_average_trace_two_rounds():
    builder = TraceBuilder(["g1", "g2"])
    builder.append(0, np.array([0.4, 0.6]), np.array([0.1, -0.1]), 1.0, np.zeros(2))
    builder.append(1, np.array([0.6, 0.4]), np.array([-0.1, 0.1]), 0.9, np.zeros(2))
    avg_p, avg_x = average_trace(builder.build(0.1))
    np.testing.assert_allclose(avg_p, [0.5, 0.5])
    np.testing.assert_allclose(avg_x, [1.0, 1.0])


def test_average_trace_empty_window():
    builder = TraceBuilder(["g1"])
    builder.append(0, np.ones(1), np.zeros(1), 0.0, np.ones(1))
    with pytest.raises(ValueError):
        average_trace(builder.build(0.1), from_round=5)


def test_run_cobb_douglas_converges_in_one_round(cobb_douglas):
    trace, result = run(cobb_douglas, RunConfig(epsilon=1.0, delta=1e-9))
    assert result.converged
    assert result.stopping_reason == "converged"
    assert result.rounds == 1
    np.testing.assert_allclose(result.prices, [0.3, 0.7], atol=1e-12)
    assert len(trace) == 2
    assert trace.market_hash == market_hash(cobb_douglas)


def test_run_leontief_at_equilibrium_stops_immediately(leontief):
    trace, result = run(leontief, RunConfig(epsilon=0.1, init="explicit", init_prices=[0.5, 0.5]))
    assert result.converged
    assert result.rounds == 0
    np.testing.assert_allclose(trace.excess[0], [0.0, 0.0], atol=1e-15)


def test_run_iteration_cap(ces_half):
    trace, result = run(ces_half, RunConfig(epsilon=0.01, delta=1e-14, max_iters=5))
    assert result.stopping_reason == "iteration_cap"
    assert not result.converged
    assert result.rounds == 5
    assert list(trace.t) == [0, 1, 2, 3, 4, 5]


def test_run_checks_the_capped_round(cobb_douglas):
    # p - c = 0.5^t (p0 - c): Definition 1 first holds at t = 13, between checks at 10 and 20
    _, result = run(cobb_douglas, RunConfig(epsilon=0.5, delta=1e-4, max_iters=15, check_every=10))
    assert result.stopping_reason == "converged"
    assert result.rounds == 15
    assert result.delta_achieved <= 1e-4


def test_run_records_simplex_and_step(nested_markets):
    trace, result = run(nested_markets[6], RunConfig(delta=1e-2, max_iters=20000))
    np.testing.assert_allclose(trace.prices.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(trace.prices > 0)
    np.testing.assert_array_equal(trace.prices[1:], step(trace.prices[:-1], trace.excess[:-1], trace.epsilon))
    assert len(result.allocation) == nested_markets[6].n


def test_run_nested_auto_epsilon_is_monotone():
    market = random_market(np.random.default_rng(8), "nested_ces_leontief", 3, 3, rho=-0.5)
    trace, result = run(market, RunConfig(delta=1e-2, max_iters=200000))
    assert result.converged
    assert result.delta_achieved <= 1e-2
    assert np.all(np.diff(trace.phi) <= 1e-12)


def test_run_spend_reset(ces_half):
    trace, result = run(ces_half, RunConfig(epsilon=0.2, delta=1e-6, init="spend-reset", seed=4))
    assert trace.prices[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert result.converged


def test_run_rejects_undistorted_resource_market(markets_dir):
    market = normalize(parse_market((markets_dir / "resource_allocation.json").read_text()))
    with pytest.raises(DistortionRequiredError):
        run(market, RunConfig(epsilon=0.1))


def test_run_reports_blow_up_round(markets_dir):
    # an undemanded good's price drops to zero under epsilon = 1
    market = normalize(parse_market((markets_dir / "bad.json").read_text()))
    with pytest.raises(NumericalInstabilityError) as info:
        run(market, RunConfig(epsilon=1.0, delta=1e-12, max_iters=10))
    assert info.value.round_index == 1


def test_run_is_deterministic(nested_markets):
    config = RunConfig(delta=1e-3, max_iters=500, seed=2, init="spend-reset")
    first, _ = run(nested_markets[2], config)
    second, _ = run(nested_markets[2], config)
    np.testing.assert_array_equal(first.prices, second.prices)
    np.testing.assert_array_equal(first.phi, second.phi)
