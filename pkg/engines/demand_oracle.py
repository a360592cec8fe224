"""
Demand Oracle - closed-form optimal bundles and excess demand

Every family is evaluated on the per-object layout: an agent spends the
share s_J of its budget on object J and buys u_J = b * s_J / p~_J units of
it, where p~_J = sum_j a_j^J p_j. Shares are a softmax of
(rho/(1-rho)) * ln(c_J / p~_J) for the CES families and c / sum(c) for
Cobb-Douglas.
"""
from typing import List, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from models.data_models import (
    Agent,
    AgentForm,
    Bundle,
    DistortionRequiredError,
    ExcessDemand,
    Market,
    MarketError,
    ObjectTable,
    compile_agent,
)


class DemandState(NamedTuple):
    """Per-row demand quantities at one price vector"""
    p_tilde: np.ndarray
    shares: np.ndarray
    levels: np.ndarray
    aggregate: np.ndarray
    log_norm: np.ndarray


def check_prices(p, m: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (m,):
        raise ValueError(f"price vector has shape {p.shape}, expected ({m},)")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise ValueError("prices must be finite and strictly positive")
    return p


def _require_distorted(table: ObjectTable):
    if np.any(table.resource):
        raise DistortionRequiredError(
            "resource_allocation utilities have no unique demand; distort the market first")


def _log_weights(table: ObjectTable, p_tilde: np.ndarray) -> np.ndarray:
    return np.where(table.cobb_douglas, table.log_c, table.exponent * (table.log_c - np.log(p_tilde)))


def evaluate_table(table: ObjectTable, p: np.ndarray) -> DemandState:
    """Vectorized demand of every agent in the table"""
    _require_distorted(table)
    p_tilde = table.rows @ p
    log_w = _log_weights(table, p_tilde)

    # per-agent softmax with max subtraction
    peak = np.full(table.n, -np.inf)
    np.maximum.at(peak, table.owners, log_w)
    w = np.exp(log_w - peak[table.owners])
    totals = np.bincount(table.owners, weights=w, minlength=table.n)
    shares = w / totals[table.owners]
    log_norm = peak + np.log(totals)

    levels = table.budgets[table.owners] * shares / p_tilde
    aggregate = table.rows.T @ levels
    return DemandState(p_tilde=p_tilde, shares=shares, levels=levels, aggregate=aggregate,
                       log_norm=log_norm)


def bundles_from_state(table: ObjectTable, state: DemandState) -> List[Bundle]:
    bundles = []
    for i in range(table.n):
        idx = table.agent_rows(i)
        levels = state.levels[idx]
        x = table.rows[idx].T @ levels
        object_levels = None if np.all(table.cobb_douglas[idx]) else levels
        bundles.append(Bundle(np.maximum(x, 0.0), object_levels))
    return bundles


def _form(agent: Union[Agent, AgentForm], m: int) -> AgentForm:
    return agent if isinstance(agent, AgentForm) else compile_agent(agent, m)


def demand_form(form: AgentForm, p: np.ndarray) -> Bundle:
    if form.kind == "resource":
        raise DistortionRequiredError(
            "resource_allocation utilities have no unique demand; distort the market first")

    if form.kind == "cobb_douglas":
        goods = form.a.argmax(axis=1)
        x = np.zeros(len(p))
        x[goods] = form.budget * (form.c / form.c.sum()) / p[goods]
        return Bundle(x)

    p_tilde = form.a @ p
    log_w = form.exponent * (form.log_c - np.log(p_tilde))
    shares = np.exp(log_w - logsumexp(log_w))
    levels = form.budget * shares / p_tilde
    return Bundle(np.maximum(form.a.T @ levels, 0.0), levels)


def demand(agent: Union[Agent, AgentForm], p) -> Bundle:
    """
    Optimal bundle of one agent at prices p

    Raises:
        DistortionRequiredError: resource_allocation agent
        ValueError: non-positive price
    """
    p = np.asarray(p, dtype=float)
    p = check_prices(p, len(p))
    return demand_form(_form(agent, len(p)), p)


def excess_demand(market: Market, p) -> ExcessDemand:
    """z_j = sum_i x_ij(p) - 1, with the individual bundles"""
    p = check_prices(p, market.m)
    table = market.table
    state = evaluate_table(table, p)
    return ExcessDemand(z=state.aggregate - 1.0, bundles=bundles_from_state(table, state))


def spend(market: Market, p) -> np.ndarray:
    """Money spent on each good, p_j * sum_i x_ij"""
    p = check_prices(p, market.m)
    return p * evaluate_table(market.table, p).aggregate


def object_levels(form: AgentForm, bundle: Bundle) -> np.ndarray:
    """u^J for each object: supplied levels, else min_j x_j / a_j^J"""
    if bundle.object_levels is not None and len(bundle.object_levels) == len(form.c):
        return np.asarray(bundle.object_levels, dtype=float)

    support_overlap = (form.a > 0).sum(axis=0).max() > 1 if len(form.c) > 1 else False
    if support_overlap and form.family.has_objects:
        raise MarketError("objects share goods; utility needs explicit object levels")

    levels = np.empty(len(form.c))
    for k, row in enumerate(form.a):
        goods = row > 0
        levels[k] = np.min(bundle.x[goods] / row[goods])
    return levels


def utility_form(form: AgentForm, bundle: Bundle) -> float:
    x = np.asarray(bundle.x, dtype=float)

    if form.kind == "cobb_douglas":
        goods = form.a.argmax(axis=1)
        if np.any(x[goods] <= 0):
            return 0.0
        return float(np.exp(np.dot(form.c, np.log(x[goods]))))

    levels = object_levels(form, bundle)
    if form.kind == "resource":
        return float(np.dot(form.c, levels))
    if form.rho is None:
        # Leontief: a single object with c = 1
        return float(form.c[0] * levels[0])

    rho = form.rho
    positive = levels > 0
    if rho < 0 and not np.all(positive):
        return 0.0
    if not np.any(positive):
        return 0.0
    terms = rho * (form.log_c[positive] + np.log(levels[positive]))
    with np.errstate(over="ignore"):
        return float(np.exp(logsumexp(terms) / rho))


def utility(agent: Union[Agent, AgentForm], bundle: Union[Bundle, Sequence[float]]) -> float:
    """u_i(x_i) for any family"""
    if not isinstance(bundle, Bundle):
        bundle = Bundle(np.asarray(bundle, dtype=float))
    return utility_form(_form(agent, len(bundle.x)), bundle)


def optimal_utility(agent: Union[Agent, AgentForm], p) -> float:
    """
    u_i(x_i(p)); resource_allocation agents use b * max_J c^J / p~^J directly
    """
    p = np.asarray(p, dtype=float)
    p = check_prices(p, len(p))
    form = _form(agent, len(p))
    if form.kind == "resource":
        return float(form.budget * np.max(form.c / (form.a @ p)))
    return utility_form(form, demand_form(form, p))
