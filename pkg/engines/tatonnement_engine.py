"""
Tatonnement Engine - discrete price adjustment p_j <- p_j (1 + eps z_j)
"""
from typing import Optional, Tuple

import numpy as np

from engines.demand_oracle import bundles_from_state, evaluate_table, check_prices
from engines.dual_objective import closed_form_from_state, check_price_bounds
from engines.equilibrium_solver import EquilibriumSolver
from engines.market_loader import market_hash, normalize
from models.data_models import (
    Agent,
    DistortionRequiredError,
    Market,
    MarketError,
    NumericalInstabilityError,
    UtilityFamily,
    UtilitySpec,
)
from models.report_models import BoundsEstimate, RunConfig, RunResult, Trace, TraceBuilder
from utils.helpers import Logger, format_vector
import config


def step(p, z, epsilon: float) -> np.ndarray:
    """One synchronous price update; p' = p (1 + eps z)"""
    p = np.asarray(p, dtype=float)
    return p * (1.0 + epsilon * np.asarray(z, dtype=float))


def delta_achieved(p, z) -> float:
    """
    Smallest delta for which (p, x(p)) passes Definition 1:
    max(max_j z_j, max_j min(p_j, -z_j)) over under-demanded goods, floored at 0
    """
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    over = max(0.0, float(np.max(z)))
    under = float(np.max(np.minimum(p, np.maximum(-z, 0.0))))
    return max(over, under)


def _safe_inverse(x: float) -> float:
    return np.inf if not x > 0 else 1.0 / x


def choose_epsilon(market: Market, bounds: BoundsEstimate) -> float:
    """
    min(EPSILON_CAP, 1/(2W), 1/(L_max A), 1/(lambda_max * EPSILON_SAFETY))
    """
    candidates = [
        config.EPSILON_CAP,
        _safe_inverse(2.0 * bounds.W),
        _safe_inverse(bounds.L_max * bounds.A),
        _safe_inverse(bounds.lambda_max * config.EPSILON_SAFETY),
    ]
    return float(min(candidates))


def distortion_rho(delta: float, k: int) -> float:
    """rho = 1 - delta / (4 ln k)"""
    if not 0.0 < delta < 1.0:
        raise MarketError(f"distortion delta must be in (0, 1), got {delta}")
    if k < 2:
        raise MarketError("distortion needs an agent with at least 2 objects (ln k = 0 for k = 1)")
    return 1.0 - delta / (4.0 * np.log(k))


def distort(market: Market, delta: float) -> Market:
    """
    Replace resource allocation utilities by nested CES-Leontief ones with
    rho = 1 - delta / (4 ln k), k the largest object count; renormalized
    """
    resource = [a for a in market.agents if a.utility.family is UtilityFamily.RESOURCE_ALLOCATION]
    if not resource:
        raise MarketError("distort needs at least one resource_allocation agent")
    k = max(len(a.utility.objects) for a in resource)
    rho = distortion_rho(delta, k)

    agents = []
    for agent in market.agents:
        spec = agent.utility
        if spec.family is UtilityFamily.RESOURCE_ALLOCATION:
            spec = UtilitySpec(family=UtilityFamily.NESTED_CES_LEONTIEF, rho=rho, objects=list(spec.objects))
        agents.append(Agent(budget=agent.budget, utility=spec))
    return normalize(Market(goods=list(market.goods), agents=agents))


def init_prices(market: Market, mode: str = "uniform", explicit=None,
                seed: int = config.DEFAULT_SEED) -> np.ndarray:
    """
    Starting prices: uniform 1/m, spend-reset from a random positive start, or
    an explicit vector rescaled onto the simplex
    """
    m = market.m
    if mode == "uniform":
        return np.full(m, 1.0 / m)

    if mode == "spend-reset":
        rng = np.random.default_rng(seed)
        start = rng.uniform(0.5, 1.5, size=m)
        return start * evaluate_table(market.table, start).aggregate

    if mode == "explicit":
        if explicit is None:
            raise MarketError("explicit init needs a price vector")
        p = np.asarray(explicit, dtype=float)
        if p.shape != (m,):
            raise MarketError(f"initial price vector has {p.size} entries, expected {m}")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise MarketError("initial prices must be strictly positive; tatonnement cannot recover from zero prices")
        total = p.sum()
        if abs(total - 1.0) > config.SIMPLEX_TOL:
            Logger.log("TatonnementEngine",
                f"⚠️ Initial prices sum to {total:.6g}; rescaled onto the simplex", "WARNING")
            p = p / total
        return p

    raise MarketError(f"unknown init mode '{mode}'")


def average_trace(trace: Trace, from_round: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Means of p^t and of aggregate demand z^t + 1 over rounds t >= from_round"""
    window = trace.t >= from_round
    if not np.any(window):
        raise ValueError(f"no recorded rounds at or after t={from_round}")
    return trace.prices[window].mean(axis=0), (trace.excess[window] + 1.0).mean(axis=0)


class TatonnementEngine:
    """
    Runs the synchronous dynamics, recording every round
    """

    def __init__(self, solver: Optional[EquilibriumSolver] = None):
        self.name = "TatonnementEngine"
        self.logger = Logger()
        self.solver = solver or EquilibriumSolver()

    def resolve_epsilon(self, market: Market, run_config: RunConfig) -> float:
        if run_config.epsilon is not None:
            if run_config.epsilon >= 0.5:
                self.logger.log(self.name,
                    f"⚠️ epsilon={run_config.epsilon} is outside (0, 1/2); no convergence guarantee", "WARNING")
            return run_config.epsilon
        bounds = self.solver.estimate_bounds(market, seed=run_config.seed)
        epsilon = choose_epsilon(market, bounds)
        self.logger.log(self.name, f"Auto epsilon = {epsilon:.6g}")
        return epsilon

    def _should_check(self, t: int, check_every: int) -> bool:
        return t < check_every or t % check_every == 0

    def run(self, market: Market, run_config: RunConfig) -> Tuple[Trace, RunResult]:
        """
        Execute rounds until Definition 1 holds at run_config.delta, the
        iteration cap, or sustained growth of phi

        Raises:
            DistortionRequiredError: market still has resource_allocation agents
            NumericalInstabilityError: prices became non-finite or non-positive
        """
        table = market.table
        if np.any(table.resource):
            raise DistortionRequiredError("run needs a distorted market; call distort first")

        epsilon = self.resolve_epsilon(market, run_config)
        p = init_prices(market, run_config.init, run_config.init_prices, run_config.seed)
        check_prices(p, market.m)

        self.logger.log(self.name,
            f"🚀 Starting run: eps={epsilon:.6g}, delta={run_config.delta:g}, "
            f"max_iters={run_config.max_iters}, p0={format_vector(p, 4)}")

        builder = TraceBuilder(market.goods, capacity=min(run_config.max_iters + 1, 4096))
        increases = 0
        warned_divergence = False
        bound_violations = 0
        stopping_reason = "iteration_cap"
        previous_phi = np.inf
        t = 0

        while True:
            state = evaluate_table(table, p)
            z = state.aggregate - 1.0
            value = closed_form_from_state(table, p, state)
            builder.append(t, p, z, value, p * state.aggregate)

            at_cap = t >= run_config.max_iters
            if at_cap or self._should_check(t, run_config.check_every):
                if delta_achieved(p, z) <= run_config.delta:
                    stopping_reason = "converged"
                    break
                violations = check_price_bounds(market, p)
                if violations:
                    if bound_violations == 0:
                        first = violations[0]
                        self.logger.log(self.name,
                            f"⚠️ Round {t}: p~ of agent {first.agent} row {first.row} is "
                            f"{first.p_tilde:.3e} < bound {first.bound:.3e}", "WARNING")
                    bound_violations += len(violations)

            if value > previous_phi + config.DIVERGENCE_TOL:
                increases += 1
            else:
                increases = 0
            previous_phi = value
            if increases >= config.DIVERGENCE_WINDOW:
                if run_config.expect_monotone:
                    stopping_reason = "diverged"
                    self.logger.log(self.name,
                        f"❌ phi increased for {increases} consecutive rounds at t={t}", "ERROR")
                    break
                if not warned_divergence:
                    self.logger.log(self.name,
                        f"⚠️ phi increased for {increases} consecutive rounds at t={t}", "WARNING")
                    warned_divergence = True

            if at_cap:
                break

            p = step(p, z, epsilon)
            t += 1
            if not np.all(np.isfinite(p)) or np.any(p <= 0):
                raise NumericalInstabilityError(t, f"non-finite or non-positive prices at round {t}")

        final_state = evaluate_table(table, p)
        z = final_state.aggregate - 1.0
        trace = builder.build(epsilon, market_hash(market), run_config.to_dict())
        result = RunResult(
            converged=stopping_reason == "converged",
            rounds=t,
            stopping_reason=stopping_reason,
            delta_achieved=delta_achieved(p, z),
            epsilon_used=epsilon,
            phi_final=closed_form_from_state(table, p, final_state),
            prices=p.copy(),
            allocation=bundles_from_state(table, final_state),
            price_bound_violations=bound_violations,
        )

        level = "SUCCESS" if result.converged else "WARNING"
        self.logger.log(self.name,
            f"Stopped: {stopping_reason} after {t} rounds, delta_achieved={result.delta_achieved:.3e}", level)
        return trace, result


def run(market: Market, run_config: RunConfig) -> Tuple[Trace, RunResult]:
    return TatonnementEngine().run(market, run_config)
