"""
Experiment Coordinator - wires loader, dynamics, oracle and checkers into
the command-line workflows
"""
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from engines.equilibrium_solver import EquilibriumSolver
from engines.market_loader import MarketLoader, market_to_document
from engines.tatonnement_engine import TatonnementEngine, distort
from engines.verification_engine import VerificationEngine, mwu_certificate, fit_uniformity
from models.report_models import RunConfig
from utils.helpers import Logger, goods_map, sup_norm
from utils.trace_store import TraceStore
import config


class ExperimentCoordinator:
    """Runs one CLI workflow end to end and maps its outcome to an exit code"""

    def __init__(self, loader: Optional[MarketLoader] = None, solver: Optional[EquilibriumSolver] = None,
                 engine: Optional[TatonnementEngine] = None, verifier: Optional[VerificationEngine] = None,
                 store: Optional[TraceStore] = None):
        self.name = "ExperimentCoordinator"
        self.logger = Logger()

        self.loader = loader or MarketLoader()
        self.solver = solver or EquilibriumSolver()
        self.engine = engine or TatonnementEngine(self.solver)
        self.verifier = verifier or VerificationEngine()
        self.store = store or TraceStore()

    def run_experiment(self, market_path: str, run_config: RunConfig, trace_path: Optional[str] = None,
                       result_path: Optional[str] = None, with_oracle: bool = False,
                       strict: bool = False, allocation_path: Optional[str] = None,
                       init_file: Optional[str] = None) -> int:
        """
        Run the dynamics, audit the trace and write trace CSV and result JSON

        Returns:
            0 converged, 2 iteration cap, 3 divergence, 4 invariant violations under strict
        """
        self.logger.log_section(f"TATONNEMENT RUN: {Path(market_path).name}")
        market = self.loader.load(market_path)
        if init_file:
            start = self.store.load_prices(init_file, market.goods)
            run_config = replace(run_config, init="explicit", init_prices=[float(v) for v in start])
        trace, result = self.engine.run(market, run_config)
        invariants = self.verifier.audit(trace, market, run_config.expect_monotone)

        output: Dict[str, Any] = result.to_dict()
        output["prices"] = goods_map(market.goods, result.prices)
        output["price_bound_violations"] = result.price_bound_violations
        output["invariants"] = invariants.to_dict()

        if with_oracle:
            output["oracle"] = self._oracle_comparison(market, trace, result.prices)

        if trace_path:
            self.store.save_trace(trace, trace_path)
            self.logger.log(self.name, f"✓ Trace ({len(trace)} rounds) written to {trace_path}")
        if allocation_path:
            self.store.write_json(self.store.allocation_document(result.allocation, market.goods), allocation_path)
        self.store.write_json(output, result_path)

        if strict and not invariants.ok:
            self.logger.log(self.name, "❌ Invariant violations under --strict", "ERROR")
            return config.EXIT_INVARIANT_VIOLATION
        return {
            "converged": config.EXIT_OK,
            "iteration_cap": config.EXIT_ITERATION_CAP,
            "diverged": config.EXIT_DIVERGED,
        }[result.stopping_reason]

    def _oracle_comparison(self, market, trace, prices: np.ndarray) -> Dict[str, Any]:
        oracle = self.solver.solve(market)
        rate = self.verifier.rate(trace, oracle.dual_value, market=market)
        certificate = mwu_certificate(trace)
        z_star = np.sum([b.x for b in oracle.x_star], axis=0) - 1.0
        uniformity = fit_uniformity(trace, oracle.dual_value, z_star)
        return {
            "p_star": goods_map(market.goods, oracle.p_star),
            "phi_star": oracle.dual_value,
            "oracle_residual": oracle.residual,
            "price_distance": sup_norm(prices - oracle.p_star),
            "rate": rate.to_dict() if rate else None,
            "mwu": {
                "applicable": certificate.applicable,
                "holds": certificate.holds,
                "min_slack": certificate.min_slack,
            },
            "uniformity": {
                "kappa": uniformity.kappa,
                "correlation": uniformity.correlation,
                "monotone": uniformity.monotone,
            },
        }

    def solve(self, market_path: str, tol: Optional[float] = None, output_path: Optional[str] = None) -> int:
        self.logger.log_section(f"REFERENCE EQUILIBRIUM: {Path(market_path).name}")
        market = self.loader.load(market_path)
        report = self.solver.solve(market, tol)
        self.store.write_json(report.to_dict(), output_path)
        return config.EXIT_OK if report.converged else config.EXIT_ITERATION_CAP

    def check(self, market_path: str, prices_path: str, definition: int, delta: float,
              allocation_path: Optional[str] = None, scale: float = 1.0,
              output_path: Optional[str] = None) -> int:
        """Definition 1 or 2 check; exit 0 iff the report passes overall"""
        self.logger.log_section(f"DEFINITION {definition} CHECK: {Path(market_path).name}")
        if not scale > 0:
            raise ValueError(f"--scale must be > 0, got {scale}")
        market = self.loader.load(market_path)
        p = self.store.load_prices(prices_path, market.goods)

        allocation = None
        if allocation_path:
            allocation = self.store.load_allocation(allocation_path, market.goods, market.n)
            allocation = [bundle.scaled(1.0 / scale) for bundle in allocation]

        report = self.verifier.check(market, p, allocation, delta, definition)
        self.store.write_json(report.to_dict(market.goods), output_path)
        return config.EXIT_OK if report.overall else config.EXIT_CHECK_FAILED

    def bounds(self, market_path: str, samples: int, seed: int, output_path: Optional[str] = None) -> int:
        self.logger.log_section(f"CURVATURE BOUNDS: {Path(market_path).name}")
        market = self.loader.load(market_path)
        estimate = self.solver.estimate_bounds(market, samples, seed)
        self.store.write_json(estimate.to_dict(), output_path)
        return config.EXIT_OK

    def distort(self, market_path: str, delta: float, output_path: Optional[str] = None) -> int:
        self.logger.log_section(f"DISTORTION: {Path(market_path).name}")
        market = self.loader.load(market_path)
        distorted = self.loader.prepare(distort(market, delta))
        if output_path:
            self.loader.save(distorted, output_path)
        else:
            self.store.write_json(market_to_document(distorted))
        return config.EXIT_OK
