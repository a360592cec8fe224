"""
Equilibrium Solver - reference equilibrium and empirical curvature constants

The reference solver minimizes phi over the price simplex with
exponentiated-gradient mirror descent and an adaptive step. It shares no
step rule with the fixed-epsilon dynamics it is used to check.
"""
from typing import Optional

import numpy as np
from scipy.linalg import eigh
from scipy.special import softmax

from engines.demand_oracle import bundles_from_state, evaluate_table
from engines.dual_objective import closed_form_from_state, hessian_from_state
from engines.market_loader import tilde_constants
from models.data_models import Market
from models.report_models import BoundsEstimate, EquilibriumReport
from utils.helpers import Logger, format_vector
import config

PRICE_FLOOR = 1e-300
MIN_STEP = 1e-12


def effective_residual(p: np.ndarray, z: np.ndarray, tol: float) -> float:
    """
    sup-norm of z ignoring goods that are over-supplied and already (nearly) free
    """
    counted = ~((z < 0) & (p <= tol))
    return float(np.max(np.abs(z[counted]))) if np.any(counted) else 0.0


def cobb_douglas_prices(market: Market) -> np.ndarray:
    """p*_j = sum_i b_i c_ij for an all Cobb-Douglas market"""
    table = market.table
    goods = table.rows.argmax(axis=1)
    c_hat = table.c / np.bincount(table.owners, weights=table.c, minlength=table.n)[table.owners]
    p = np.zeros(market.m)
    np.add.at(p, goods, table.budgets[table.owners] * c_hat)
    return p


class EquilibriumSolver:
    """
    Computes reference equilibria and the curvature constants used to pick epsilon
    """

    def __init__(self):
        self.name = "EquilibriumSolver"
        self.logger = Logger()

    def _report(self, market: Market, p: np.ndarray, iterations: int, tol: float,
                converged: Optional[bool] = None) -> EquilibriumReport:
        table = market.table
        state = evaluate_table(table, p)
        z = state.aggregate - 1.0
        residual = effective_residual(p, z, tol)
        return EquilibriumReport(
            goods=list(market.goods),
            p_star=p,
            x_star=bundles_from_state(table, state),
            dual_value=closed_form_from_state(table, p, state),
            residual=residual,
            raw_residual=float(np.max(np.abs(z))),
            iterations=iterations,
            converged=residual <= tol if converged is None else converged,
        )

    def solve(self, market: Market, tol: Optional[float] = None,
              max_iters: Optional[int] = None) -> EquilibriumReport:
        """
        Minimize phi over the simplex from the uniform price vector

        Args:
            market: validated, normalized market
            tol: target residual (config.SOLVER_TOL by default)
            max_iters: iteration cap (config.SOLVER_MAX_ITERS by default)

        Returns:
            EquilibriumReport; converged=False with the best iterate when the cap is hit
        """
        tol = config.SOLVER_TOL if tol is None else tol
        max_iters = config.SOLVER_MAX_ITERS if max_iters is None else max_iters
        table = market.table

        if np.all(table.cobb_douglas):
            p = cobb_douglas_prices(market)
            self.logger.log(self.name, f"Cobb-Douglas market, closed-form prices {format_vector(p)}")
            return self._report(market, p, 0, tol)

        eps = np.finfo(float).eps
        p = np.full(market.m, 1.0 / market.m)
        state = evaluate_table(table, p)
        z = state.aggregate - 1.0
        value = closed_form_from_state(table, p, state)
        merit = float(np.dot(p, z * z))
        residual = effective_residual(p, z, tol)
        best_p, best_residual = p, residual

        step = config.SOLVER_INITIAL_STEP
        iterations = 0
        while residual > tol and iterations < max_iters and step >= MIN_STEP:
            iterations += 1
            q = np.maximum(softmax(np.log(p) + step * z), PRICE_FLOOR)
            q /= q.sum()
            q_state = evaluate_table(table, q)
            q_z = q_state.aggregate - 1.0
            q_value = closed_form_from_state(table, q, q_state)
            q_merit = float(np.dot(q, q_z * q_z))

            noise = 4.0 * eps * (1.0 + abs(value))
            accept = np.isfinite(q_value) and (
                q_value < value - noise or (q_value <= value + noise and q_merit <= merit)
            )
            if accept:
                p, z, value, merit = q, q_z, q_value, q_merit
                residual = effective_residual(p, z, tol)
                if residual < best_residual:
                    best_p, best_residual = p, residual
                step = min(step * config.SOLVER_STEP_GROWTH, config.SOLVER_MAX_STEP)
            else:
                step *= 0.5

        report = self._report(market, best_p, iterations, tol)
        if report.converged:
            self.logger.log(self.name,
                f"✓ Converged in {iterations} iterations, residual {report.residual:.3e}", "SUCCESS")
        else:
            self.logger.log(self.name,
                f"⚠️ Stopped after {iterations} iterations with residual {report.residual:.3e} "
                f"(tol {tol:.1e})", "WARNING")
        return report

    def estimate_bounds(self, market: Market, samples: int = config.BOUNDS_SAMPLES,
                        seed: int = config.DEFAULT_SEED) -> BoundsEstimate:
        """
        Empirical A, a_min, W, L_min, L_max and lambda_max over sampled prices

        Prices are Dirichlet(1) draws floored at BOUNDS_PRICE_FLOOR_SHARE / m and
        renormalized; the uniform vector is always the first sample. L and lambda
        are extreme generalized eigenvalues of the Hessian (and its square)
        against the tilde metric sum of a^J a^J^T.
        """
        if samples < 1:
            raise ValueError("samples must be >= 1")
        m = market.m
        rng = np.random.default_rng(seed)
        prices = rng.dirichlet(np.ones(m), size=samples - 1) if samples > 1 else np.zeros((0, m))
        prices = np.maximum(prices, config.BOUNDS_PRICE_FLOOR_SHARE / m)
        prices = prices / prices.sum(axis=1, keepdims=True)
        prices = np.vstack([np.full(m, 1.0 / m), prices])

        table = market.table
        metric = table.rows.T @ table.rows
        values, vectors = eigh(metric)
        keep = values > 1e-12 * max(values.max(), 1.0)
        basis = vectors[:, keep]
        reduced_metric = np.diag(values[keep])

        W = 1.0
        L_min, L_max, lam_sq = np.inf, 0.0, 0.0
        for p in prices:
            state = evaluate_table(table, p)
            W = max(W, float(np.max(state.aggregate - 1.0)))
            H = hessian_from_state(table, state)
            ratios = eigh(basis.T @ H @ basis, reduced_metric, eigvals_only=True)
            L_min = min(L_min, float(ratios.min()))
            L_max = max(L_max, float(ratios.max()))
            squared = eigh(basis.T @ H @ H @ basis, reduced_metric, eigvals_only=True)
            lam_sq = max(lam_sq, float(squared.max()))

        constants = tilde_constants(market)
        bounds = BoundsEstimate(
            A=constants.A,
            a_min=constants.a_min,
            W=W,
            L_min=max(L_min, 0.0),
            L_max=L_max,
            lambda_max=float(np.sqrt(max(lam_sq, 0.0))),
            samples=len(prices),
        )
        self.logger.log(self.name,
            f"Bounds over {bounds.samples} samples: A={bounds.A:.4g}, W={bounds.W:.4g}, "
            f"L=[{bounds.L_min:.4g}, {bounds.L_max:.4g}], lambda={bounds.lambda_max:.4g}")
        return bounds


def solve_equilibrium(market: Market, tol: Optional[float] = None) -> EquilibriumReport:
    return EquilibriumSolver().solve(market, tol)


def estimate_bounds(market: Market, samples: int = config.BOUNDS_SAMPLES,
                    seed: int = config.DEFAULT_SEED) -> BoundsEstimate:
    return EquilibriumSolver().estimate_bounds(market, samples, seed)
