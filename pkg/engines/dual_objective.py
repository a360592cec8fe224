"""
Eisenberg-Gale primal and dual objectives with analytic derivatives
"""
from typing import Callable, List, NamedTuple, Sequence, Union

import numpy as np

from engines.demand_oracle import (
    DemandState,
    bundles_from_state,
    check_prices,
    evaluate_table,
    utility_form,
)
from engines.market_loader import tilde_constants
from models.data_models import Bundle, Market, ObjectTable, PrimalInfeasibleError
from models.report_models import DualEvaluation, TildeVector

Allocation = Union[Sequence[Bundle], np.ndarray]


class PriceBoundViolation(NamedTuple):
    agent: int
    row: int
    p_tilde: float
    bound: float


def as_bundles(market: Market, x: Allocation) -> List[Bundle]:
    if isinstance(x, np.ndarray) or (len(x) and not isinstance(x[0], Bundle)):
        x = np.asarray(x, dtype=float)
        if x.shape != (market.n, market.m):
            raise ValueError(f"allocation has shape {x.shape}, expected ({market.n}, {market.m})")
        return [Bundle(row) for row in x]
    if len(x) != market.n:
        raise ValueError(f"allocation has {len(x)} bundles, expected {market.n}")
    for bundle in x:
        if len(bundle.x) != market.m:
            raise ValueError(f"bundle has {len(bundle.x)} goods, expected {market.m}")
    return list(x)


def psi(market: Market, x: Allocation) -> float:
    """
    Primal objective sum_i b_i ln u_i(x_i)

    Raises:
        PrimalInfeasibleError: an agent with positive budget has zero utility
    """
    total = 0.0
    for i, (form, bundle) in enumerate(zip(market.forms, as_bundles(market, x))):
        if form.budget <= 0:
            continue
        u = utility_form(form, bundle)
        if not u > 0:
            raise PrimalInfeasibleError(f"agent {i} has zero utility; primal value is -infinity")
        total += form.budget * np.log(u)
    return float(total)


def phi(market: Market, p) -> float:
    """
    Dual objective through the maximizing allocation:
    phi(p) = psi(x(p)) + sum_j p_j (1 - sum_i x_ij(p))
    """
    p = check_prices(p, market.m)
    table = market.table
    state = evaluate_table(table, p)
    bundles = bundles_from_state(table, state)
    return psi(market, bundles) + float(np.dot(p, 1.0 - state.aggregate))


def _agent_first_rows(table: ObjectTable) -> np.ndarray:
    return np.searchsorted(table.owners, np.arange(table.n))


def closed_form_from_state(table: ObjectTable, p: np.ndarray, state: DemandState) -> float:
    budgets = table.budgets
    first = _agent_first_rows(table)
    r = table.exponent[first]
    cd_agent = table.cobb_douglas[first]
    active = budgets > 0

    log_b = np.log(np.where(active, budgets, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ces_term = np.where(r != 0, log_b + state.log_norm / np.where(r != 0, r, 1.0),
                            log_b + table.log_c[first] - np.log(state.p_tilde[first]))

    cd_rows = table.cobb_douglas & active[table.owners]
    cd_term = np.bincount(
        table.owners[cd_rows],
        weights=table.c[cd_rows] * np.log(state.levels[cd_rows]),
        minlength=table.n,
    )

    per_agent = np.where(cd_agent, cd_term, ces_term)
    return float(p.sum() - budgets.sum() + np.sum(budgets[active] * per_agent[active]))


def phi_closed_form(market: Market, p) -> float:
    """
    Explicit dual objective
    sum_j p_j - sum_i b_i + sum_i b_i ((1-rho)/rho) ln sum_J (b_i c^J / p~^J)^(rho/(1-rho)),
    with Leontief and Cobb-Douglas agents contributing ln(b c / p~) and
    sum_j c_j ln(b c_j / p_j) respectively.
    """
    p = check_prices(p, market.m)
    table = market.table
    return closed_form_from_state(table, p, evaluate_table(table, p))


def grad_phi(market: Market, p) -> np.ndarray:
    """Gradient of phi, which is exactly -z(p)"""
    p = check_prices(p, market.m)
    return 1.0 - evaluate_table(market.table, p).aggregate


def hessian_from_state(table: ObjectTable, state: DemandState) -> np.ndarray:
    rows = table.rows
    m = rows.shape[1]
    b_rows = table.budgets[table.owners]
    nested = ~table.cobb_douglas

    rho_rows = table.rho
    curvature = b_rows * state.shares / (state.p_tilde ** 2)
    weight = np.where(nested, curvature / (1.0 - rho_rows), curvature)
    H = rows.T @ (weight[:, None] * rows)

    # -rho * g g^T per agent, g = sum_J s_J a^J / p~^J
    G = np.zeros((table.n, m))
    scaled = (state.shares / state.p_tilde)[:, None] * rows
    np.add.at(G, table.owners[nested], scaled[nested])
    first = _agent_first_rows(table)
    rho_agent = np.where(table.cobb_douglas[first], 0.0, table.rho[first])
    coef = table.budgets * rho_agent / (1.0 - rho_agent)
    H -= G.T @ (coef[:, None] * G)

    return 0.5 * (H + H.T)


def hessian_phi(market: Market, p) -> np.ndarray:
    """
    Analytic Hessian of phi:
    sum_i b_i/(1-rho) (sum_J s_J a^J a^J^T / p~_J^2 - rho g_i g_i^T) with
    g_i = sum_J s_J a^J / p~_J. Leontief agents use rho = 0, Cobb-Douglas
    agents contribute diag(b c / p^2).
    """
    p = check_prices(p, market.m)
    table = market.table
    return hessian_from_state(table, evaluate_table(table, p))


def evaluate(market: Market, p, with_hessian: bool = False) -> DualEvaluation:
    p = check_prices(p, market.m)
    table = market.table
    state = evaluate_table(table, p)
    return DualEvaluation(
        phi=closed_form_from_state(table, p, state),
        grad=1.0 - state.aggregate,
        hessian=hessian_from_state(table, state) if with_hessian else None,
    )


def tilde(market: Market, v) -> TildeVector:
    """v~ per (agent, object): sum_j a_j^J v_j"""
    v = np.asarray(v, dtype=float)
    table = market.table
    return TildeVector(values=table.rows @ v, owners=table.owners.copy())


def check_price_bounds(market: Market, p) -> List[PriceBoundViolation]:
    """
    Rows whose p~ falls under the lower bound guaranteed for CES objects:
    2^((rho-2)/(1-rho)) b c_min^2 when rho > 0, 2^(rho-2) b^(1-rho) when rho < 0
    """
    p = np.asarray(p, dtype=float)
    table = market.table
    c_min = tilde_constants(market).c_min
    p_tilde = table.rows @ p
    violations = []
    for k in range(len(table.c)):
        rho = table.rho[k]
        if table.cobb_douglas[k] or table.resource[k] or rho == 0:
            continue
        b = table.budgets[table.owners[k]]
        if rho > 0:
            bound = 2.0 ** ((rho - 2.0) / (1.0 - rho)) * b * c_min ** 2
        else:
            bound = 2.0 ** (rho - 2.0) * b ** (1.0 - rho)
        if p_tilde[k] < bound:
            violations.append(PriceBoundViolation(int(table.owners[k]), k, float(p_tilde[k]), float(bound)))
    return violations


def finite_difference_gradient(fn: Callable[[np.ndarray], float], p, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function"""
    p = np.asarray(p, dtype=float)
    grad = np.zeros_like(p)
    for j in range(len(p)):
        e = np.zeros_like(p)
        e[j] = h
        grad[j] = (fn(p + e) - fn(p - e)) / (2.0 * h)
    return grad


def finite_difference_hessian(grad: Callable[[np.ndarray], np.ndarray], p, h: float = 1e-6) -> np.ndarray:
    """Central differences of a gradient; column l is d grad / d p_l"""
    p = np.asarray(p, dtype=float)
    H = np.zeros((len(p), len(p)))
    for l in range(len(p)):
        e = np.zeros_like(p)
        e[l] = h
        H[:, l] = (np.asarray(grad(p + e)) - np.asarray(grad(p - e))) / (2.0 * h)
    return H
