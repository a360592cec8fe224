"""
Verification Engine - approximate equilibrium checks, trace invariants and
empirical convergence fits
"""
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr
from sklearn.linear_model import LinearRegression

from engines.demand_oracle import bundles_from_state, check_prices, evaluate_table, optimal_utility, utility_form
from engines.dual_objective import Allocation, as_bundles, psi
from engines.tatonnement_engine import delta_achieved, step
from models.data_models import Bundle, Market, UtilityFamily
from models.report_models import (
    ApproxEquilibriumReport,
    InvariantCheck,
    InvariantReport,
    MWUCertificate,
    RateFit,
    RelaxedPrimalReport,
    Trace,
    UniformityFit,
)
from utils.helpers import Logger
import config

INVARIANT_CLASSES = ("simplex", "positivity", "budget_balance", "phi_monotone", "step_consistency")


def _excess_conditions(p: np.ndarray, z: np.ndarray, delta: float) -> Tuple[List[int], List[int]]:
    """Goods over-demanded beyond delta, and goods under-demanded beyond delta yet priced above delta"""
    over = [int(j) for j in np.flatnonzero(z > delta)]
    under = [int(j) for j in np.flatnonzero((z < -delta) & (p > delta))]
    return over, under


def excess_conditions(p, z, delta: float) -> Tuple[bool, bool]:
    """(P2, P3) of Definition 1 for given prices and excess demand"""
    over, under = _excess_conditions(np.asarray(p, dtype=float), np.asarray(z, dtype=float), delta)
    return not over, not under


def check_def1(market: Market, p, x: Allocation, delta: float) -> ApproxEquilibriumReport:
    """
    Definition 1: x = x(p) up to DEMAND_MATCH_TOL, z_j(p) <= delta and
    z_j(p) < -delta only for goods priced at most delta
    """
    p = check_prices(p, market.m)
    bundles = as_bundles(market, x)
    table = market.table
    state = evaluate_table(table, p)
    z = state.aggregate - 1.0

    p1_witnesses = []
    for i, (given, exact) in enumerate(zip(bundles, bundles_from_state(table, state))):
        gap = np.max(np.abs(given.x - exact.x))
        if gap > config.DEMAND_MATCH_TOL * max(1.0, float(np.max(np.abs(exact.x)))):
            p1_witnesses.append(i)

    over, under = _excess_conditions(p, z, delta)
    return ApproxEquilibriumReport(
        definition=1,
        delta=delta,
        p1_pass=not p1_witnesses,
        p2_pass=not over,
        p3_pass=not under,
        p1_witnesses=p1_witnesses,
        p2_witnesses=over,
        p3_witnesses=under,
        delta_achieved=delta_achieved(p, z),
    )


def check_def2(market: Market, p, x: Allocation, delta: float) -> ApproxEquilibriumReport:
    """
    Definition 2: u_i(x_i) >= (1 - delta) u_i(x_i(p)), supply respected and
    under-demanded goods priced at most delta

    Raises:
        ValueError: some agent has zero optimal utility at p
    """
    p = check_prices(p, market.m)
    bundles = as_bundles(market, x)

    p1_witnesses = []
    for i, (form, bundle) in enumerate(zip(market.forms, bundles)):
        best = optimal_utility(form, p)
        if not best > 0:
            raise ValueError(f"agent {i} has zero optimal utility at these prices")
        if utility_form(form, bundle) < (1.0 - delta) * best:
            p1_witnesses.append(i)

    z = np.sum([bundle.x for bundle in bundles], axis=0) - 1.0
    over = [int(j) for j in np.flatnonzero(z > config.SUPPLY_TOL)]
    _, under = _excess_conditions(p, z, delta)
    return ApproxEquilibriumReport(
        definition=2,
        delta=delta,
        p1_pass=not p1_witnesses,
        p2_pass=not over,
        p3_pass=not under,
        p1_witnesses=p1_witnesses,
        p2_witnesses=over,
        p3_witnesses=under,
    )


def assert_invariants(trace: Trace, market: Market, expect_monotone: bool = True) -> InvariantReport:
    """
    Per-round simplex membership, positivity, budget balance, phi
    monotonicity and stored-vs-recomputed step consistency
    """
    report = InvariantReport({name: InvariantCheck(name) for name in INVARIANT_CLASSES})
    checks = report.checks

    for k in range(len(trace)):
        t = int(trace.t[k])
        p = trace.prices[k]
        z = trace.excess[k]

        drift = abs(float(p.sum()) - 1.0)
        if drift > config.SIMPLEX_TOL:
            checks["simplex"].record(t, drift)
        if np.any(p <= 0):
            checks["positivity"].record(t, float(-p.min()))
        imbalance = abs(float(np.dot(p, z)))
        if imbalance > config.SPEND_TOL * max(1.0, float(np.max(np.abs(z)))):
            checks["budget_balance"].record(t, imbalance)

        if k + 1 < len(trace) and trace.t[k + 1] == t + 1:
            rise = float(trace.phi[k + 1] - trace.phi[k])
            if expect_monotone and rise > config.MONOTONE_TOL:
                checks["phi_monotone"].record(t + 1, rise)
            expected = step(p, z, trace.epsilon)
            mismatch = float(np.max(np.abs(trace.prices[k + 1] - expected)))
            if mismatch > 4.0 * np.finfo(float).eps * float(np.max(expected)):
                checks["step_consistency"].record(t + 1, mismatch)

    return report


def _prefix_lengths(T: int) -> List[int]:
    lengths = []
    length = 1
    while length < T:
        lengths.append(length)
        length *= 2
    lengths.append(T)
    return lengths


def mwu_certificate(trace: Trace) -> MWUCertificate:
    """
    For every good j and prefix T in {1, 2, 4, ..., len}:
    mean_{t<T} z_j <= eps v_T + ln(1/p0_j) / (eps T), v_T = max_j mean_{t<T} z_j^2
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    eps = trace.epsilon
    z = trace.excess
    w = float(np.max(np.abs(z)))
    log_inv_p0 = -np.log(trace.prices[0])

    prefixes = _prefix_lengths(len(trace))
    cumulative = np.cumsum(z, axis=0)
    cumulative_sq = np.cumsum(z * z, axis=0)

    averages = np.zeros((len(prefixes), z.shape[1]))
    bounds = np.zeros_like(averages)
    violations = []
    for row, T in enumerate(prefixes):
        averages[row] = cumulative[T - 1] / T
        v = float(np.max(cumulative_sq[T - 1] / T))
        bounds[row] = eps * v + log_inv_p0 / (eps * T)
        for j in np.flatnonzero(averages[row] > bounds[row] + config.MWU_SLACK):
            violations.append({"prefix": T, "good": trace.goods[j],
                               "slack": float(bounds[row, j] - averages[row, j])})

    return MWUCertificate(
        epsilon=eps,
        w=w,
        applicable=eps <= 1.0 / (2.0 * w) if w > 0 else True,
        prefixes=prefixes,
        averages=averages,
        bounds=bounds,
        min_slack=float(np.min(bounds - averages)),
        violations=violations,
    )


def fit_rate_series(t, phi, phi_star: float, window: Optional[Tuple[int, int]] = None) -> RateFit:
    """
    Least-squares fit of ln(phi_t - phi_star) = a + t ln r over rounds whose
    gap exceeds RATE_GAP_FLOOR

    Raises:
        ValueError: fewer than two usable rounds
    """
    t = np.asarray(t, dtype=float)
    gap = np.asarray(phi, dtype=float) - phi_star
    usable = gap > config.RATE_GAP_FLOOR
    if window is not None:
        usable &= (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(usable) < 2:
        raise ValueError("dual gap is below the floor on (almost) the whole window")

    rounds = t[usable]
    log_gap = np.log(gap[usable])
    model = LinearRegression().fit(rounds.reshape(-1, 1), log_gap)
    fitted = model.predict(rounds.reshape(-1, 1))
    residual = float(np.sqrt(np.mean((log_gap - fitted) ** 2)))
    spread = float(log_gap.max() - log_gap.min())
    return RateFit(
        window=(int(rounds[0]), int(rounds[-1])),
        ratio=float(np.exp(model.coef_[0])),
        residual=residual,
        relative_residual=residual / spread if spread > 0 else 0.0,
        points=int(rounds.size),
    )


def strongly_convex_dual(market: Market) -> bool:
    """CES (singleton objects) and Cobb-Douglas agents only"""
    for form in market.forms:
        if form.family in (UtilityFamily.COBB_DOUGLAS, UtilityFamily.CES):
            continue
        if form.family is UtilityFamily.NESTED_CES_LEONTIEF and np.all((form.a > 0).sum(axis=1) == 1):
            continue
        return False
    return True


def fit_rate(trace: Trace, p_star_value: float, window: Optional[Tuple[int, int]] = None,
             market: Optional[Market] = None) -> RateFit:
    """
    Contraction ratio of the dual gap along a trace; with a market whose phi
    is strongly convex the fit also requires r < 1
    """
    fit = fit_rate_series(trace.t, trace.phi, p_star_value, window)
    if market is not None:
        fit = replace(fit, requires_contraction=strongly_convex_dual(market))
    return fit


def fit_uniformity(trace: Trace, phi_star: float, z_star) -> UniformityFit:
    """
    Pairs (phi_t - phi*, |z_t - z*|_inf) along the trace: kappa is the
    smallest gap / deviation^2 and the rank correlation tells whether a
    smaller gap goes with a smaller deviation
    """
    gap = trace.phi - phi_star
    deviation = np.max(np.abs(trace.excess - np.asarray(z_star, dtype=float)), axis=1)
    usable = (gap > config.RATE_GAP_FLOOR) & (deviation > 0)
    points = int(np.count_nonzero(usable))
    if points == 0:
        return UniformityFit(kappa=float("nan"), correlation=float("nan"), points=0)

    kappa = float(np.min(gap[usable] / deviation[usable] ** 2))
    if points < 3:
        return UniformityFit(kappa=kappa, correlation=float("nan"), points=points)
    correlation = spearmanr(gap[usable], deviation[usable]).correlation
    return UniformityFit(kappa=kappa, correlation=float(correlation), points=points)


def average_allocation(market: Market, trace: Trace, from_round: int = 0) -> List[Bundle]:
    """Per-agent mean of x(p^t) over recorded rounds t >= from_round"""
    window = np.flatnonzero(trace.t >= from_round)
    if window.size == 0:
        raise ValueError(f"no recorded rounds at or after t={from_round}")
    table = market.table
    sums_x = np.zeros((market.n, market.m))
    sums_levels = np.zeros(len(table.c))
    for k in window:
        state = evaluate_table(table, trace.prices[k])
        sums_levels += state.levels
        for i, bundle in enumerate(bundles_from_state(table, state)):
            sums_x[i] += bundle.x
    levels = sums_levels / window.size
    bundles = []
    for i in range(market.n):
        idx = table.agent_rows(i)
        object_levels = None if np.all(table.cobb_douglas[idx]) else levels[idx]
        bundles.append(Bundle(sums_x[i] / window.size, object_levels))
    return bundles


def relaxed_primal_check(market: Market, trace: Trace, from_round: int = 0,
                         phi_star: Optional[float] = None) -> RelaxedPrimalReport:
    """
    The averaged allocation scaled by 1/(1 + beta), beta = max(0, max_j avg z_j),
    is supply-feasible, loses at most beta in psi, and stays below phi(p*)
    """
    averaged = average_allocation(market, trace, from_round)
    aggregate = np.sum([bundle.x for bundle in averaged], axis=0)
    average_excess = aggregate - 1.0
    beta = max(0.0, float(np.max(average_excess)))
    scaled = [bundle.scaled(1.0 / (1.0 + beta)) for bundle in averaged]

    feasible = bool(np.all(aggregate / (1.0 + beta) - 1.0 <= config.SUPPLY_TOL))
    psi_average = psi(market, averaged)
    psi_scaled = psi(market, scaled)
    scaling_ok = psi_scaled >= psi_average - beta - config.MWU_SLACK
    duality_ok = True if phi_star is None else psi_scaled <= phi_star + config.MWU_SLACK
    return RelaxedPrimalReport(
        beta=beta,
        feasible=feasible,
        scaling_bound_holds=bool(scaling_ok),
        weak_duality_holds=bool(duality_ok),
        psi_average=psi_average,
        psi_scaled=psi_scaled,
        average_excess=average_excess,
    )


class VerificationEngine:
    """
    Runs the checkers and logs a verdict for each
    """

    def __init__(self):
        self.name = "VerificationEngine"
        self.logger = Logger()

    def check(self, market: Market, p, x: Optional[Allocation], delta: float,
              definition: int = 1) -> ApproxEquilibriumReport:
        if definition not in (1, 2):
            raise ValueError(f"definition must be 1 or 2, got {definition}")
        if x is None:
            if definition == 2 and np.any(market.table.resource):
                raise ValueError("Definition 2 on a resource allocation market needs an explicit allocation")
            x = bundles_from_state(market.table, evaluate_table(market.table, check_prices(p, market.m)))
        checker = check_def1 if definition == 1 else check_def2
        report = checker(market, p, x, delta)

        if report.overall:
            self.logger.log(self.name, f"✓ Definition {definition} holds at delta={delta:g}", "SUCCESS")
        else:
            failed = [name for name, ok in (("P1", report.p1_pass), ("P2", report.p2_pass),
                                             ("P3", report.p3_pass)) if not ok]
            self.logger.log(self.name,
                f"❌ Definition {definition} fails at delta={delta:g}: {', '.join(failed)}", "WARNING")
        return report

    def audit(self, trace: Trace, market: Market, expect_monotone: bool = True) -> InvariantReport:
        report = assert_invariants(trace, market, expect_monotone)
        for name, check in report.checks.items():
            if not check.passed:
                self.logger.log(self.name,
                    f"⚠️ {name}: {check.violations} violation(s), first at round {check.first_round}, "
                    f"worst {check.worst:.3e}", "WARNING")
        certificate = mwu_certificate(trace)
        if certificate.applicable and not certificate.holds:
            self.logger.log(self.name,
                f"⚠️ multiplicative weights bound violated, min slack {certificate.min_slack:.3e}", "WARNING")
        return report

    def rate(self, trace: Trace, phi_star: float, window: Optional[Sequence[int]] = None,
             market: Optional[Market] = None) -> Optional[RateFit]:
        try:
            fit = fit_rate(trace, phi_star, tuple(window) if window else None, market)
        except ValueError as e:
            self.logger.log(self.name, f"Rate fit skipped: {e}", "DEBUG")
            return None
        self.logger.log(self.name,
            f"Dual gap contraction ratio {fit.ratio:.6f} over rounds {fit.window[0]}-{fit.window[1]}")
        if not fit.holds:
            self.logger.log(self.name,
                f"⚠️ phi is strongly convex here but the fitted ratio {fit.ratio:.6f} is not below 1", "WARNING")
        return fit
