"""
Data models for runs, traces, oracle output and verification reports
"""
from typing import List, Dict, Any, Optional
from dataclasses import dataclass, field
import numpy as np
import pandas as pd

import config


INIT_MODES = ("uniform", "spend-reset", "explicit")
STOPPING_REASONS = ("converged", "iteration_cap", "diverged")


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float)]


@dataclass
class RunConfig:
    """
    Configuration of one tatonnement run. `epsilon=None` means choose it
    from estimated bounds.
    """
    epsilon: Optional[float] = None
    delta: float = config.DEFAULT_DELTA
    max_iters: int = config.DEFAULT_MAX_ITERS
    init: str = "uniform"
    init_prices: Optional[List[float]] = None
    check_every: int = config.DEFAULT_CHECK_EVERY
    seed: int = config.DEFAULT_SEED
    expect_monotone: bool = True

    def __post_init__(self):
        if self.epsilon is not None and not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got '{self.init}'")
        if self.init == "explicit" and self.init_prices is None:
            raise ValueError("explicit init requires init_prices")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "max_iters": self.max_iters,
            "init": self.init,
            "check_every": self.check_every,
            "seed": self.seed,
        }


@dataclass
class Trace:
    """
    Per-round record of the dynamics. Row k holds round t[k]; arrays are
    (rounds, m).
    """
    goods: List[str]
    t: np.ndarray
    prices: np.ndarray
    excess: np.ndarray
    phi: np.ndarray
    spend: np.ndarray
    epsilon: float
    market_hash: str = ""
    run_config: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def to_frame(self) -> pd.DataFrame:
        """Trace as a DataFrame with the CSV column layout"""
        columns: Dict[str, Any] = {
            "t": self.t.astype(int),
            "phi": self.phi,
            "max_excess": self.excess.max(axis=1) if len(self) else np.array([]),
            "min_price": self.prices.min(axis=1) if len(self) else np.array([]),
        }
        for j, good in enumerate(self.goods):
            columns[f"p_{good}"] = self.prices[:, j]
        for j, good in enumerate(self.goods):
            columns[f"z_{good}"] = self.excess[:, j]
        return pd.DataFrame(columns)


class TraceBuilder:
    """Single-writer append buffer for a Trace"""

    def __init__(self, goods: List[str], capacity: int = 1024):
        self.goods = list(goods)
        m = len(goods)
        self._size = 0
        self._t = np.zeros(capacity, dtype=np.int64)
        self._prices = np.zeros((capacity, m))
        self._excess = np.zeros((capacity, m))
        self._phi = np.zeros(capacity)
        self._spend = np.zeros((capacity, m))

    def _grow(self):
        capacity = 2 * len(self._t)
        self._t = np.resize(self._t, capacity)
        self._phi = np.resize(self._phi, capacity)
        for name in ("_prices", "_excess", "_spend"):
            old = getattr(self, name)
            new = np.zeros((capacity, old.shape[1]))
            new[: self._size] = old[: self._size]
            setattr(self, name, new)

    def append(self, t: int, prices: np.ndarray, excess: np.ndarray, phi: float, spend: np.ndarray):
        if self._size == len(self._t):
            self._grow()
        k = self._size
        self._t[k] = t
        self._prices[k] = prices
        self._excess[k] = excess
        self._phi[k] = phi
        self._spend[k] = spend
        self._size += 1

    def build(self, epsilon: float, market_hash: str = "", run_config: Optional[Dict[str, Any]] = None) -> Trace:
        k = self._size
        return Trace(
            goods=self.goods,
            t=self._t[:k].copy(),
            prices=self._prices[:k].copy(),
            excess=self._excess[:k].copy(),
            phi=self._phi[:k].copy(),
            spend=self._spend[:k].copy(),
            epsilon=epsilon,
            market_hash=market_hash,
            run_config=run_config or {},
        )


@dataclass
class RunResult:
    converged: bool
    rounds: int
    stopping_reason: str
    delta_achieved: float
    epsilon_used: float
    phi_final: float
    prices: np.ndarray
    allocation: list
    price_bound_violations: int = 0

    def __post_init__(self):
        if self.stopping_reason not in STOPPING_REASONS:
            raise ValueError(f"unknown stopping reason '{self.stopping_reason}'")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "rounds": self.rounds,
            "delta_achieved": float(self.delta_achieved),
            "epsilon_used": float(self.epsilon_used),
            "phi_final": float(self.phi_final),
            "stopping_reason": self.stopping_reason,
        }


@dataclass
class DualEvaluation:
    """phi, its gradient and optionally the Hessian at one price vector"""
    phi: float
    grad: np.ndarray
    hessian: Optional[np.ndarray] = None


@dataclass
class TildeVector:
    """v~ per (agent, object) row, in market.table row order"""
    values: np.ndarray
    owners: np.ndarray

    def norm_squared(self) -> float:
        return float(np.dot(self.values, self.values))


@dataclass
class EquilibriumReport:
    goods: List[str]
    p_star: np.ndarray
    x_star: list
    dual_value: float
    residual: float
    raw_residual: float
    iterations: int
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "prices": {good: float(price) for good, price in zip(self.goods, self.p_star)},
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "dual_value": float(self.dual_value),
            "converged": self.converged,
        }


@dataclass
class BoundsEstimate:
    """Empirical replacements for the constants of the convergence theory"""
    A: float
    a_min: float
    W: float
    L_min: float
    L_max: float
    lambda_max: float
    samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "A": float(self.A),
            "a_min": float(self.a_min),
            "W": float(self.W),
            "L_est_min": float(self.L_min),
            "L_est_max": float(self.L_max),
            "lambda_est_max": float(self.lambda_max),
            "samples": int(self.samples),
        }


@dataclass
class ApproxEquilibriumReport:
    """
    Outcome of a Definition 1 or Definition 2 check with violating indices.
    P1 witnesses are agent indices, P2/P3 witnesses are good indices.
    """
    definition: int
    delta: float
    p1_pass: bool
    p2_pass: bool
    p3_pass: bool
    p1_witnesses: List[int] = field(default_factory=list)
    p2_witnesses: List[int] = field(default_factory=list)
    p3_witnesses: List[int] = field(default_factory=list)
    delta_achieved: Optional[float] = None

    @property
    def overall(self) -> bool:
        return self.p1_pass and self.p2_pass and self.p3_pass

    def to_dict(self, goods: Optional[List[str]] = None) -> Dict[str, Any]:
        def name(j):
            return goods[j] if goods else j

        return {
            "definition": self.definition,
            "delta": float(self.delta),
            "overall": self.overall,
            "p1": {"pass": self.p1_pass, "agents": list(self.p1_witnesses)},
            "p2": {"pass": self.p2_pass, "goods": [name(j) for j in self.p2_witnesses]},
            "p3": {"pass": self.p3_pass, "goods": [name(j) for j in self.p3_witnesses]},
            "delta_achieved": None if self.delta_achieved is None else float(self.delta_achieved),
        }


@dataclass
class InvariantCheck:
    name: str
    passed: bool = True
    violations: int = 0
    first_round: Optional[int] = None
    worst: float = 0.0

    def record(self, t: int, amount: float):
        if self.passed:
            self.first_round = t
        self.passed = False
        self.violations += 1
        self.worst = max(self.worst, float(amount))


@dataclass
class InvariantReport:
    checks: Dict[str, InvariantCheck] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            name: {
                "passed": check.passed,
                "violations": check.violations,
                "first_round": check.first_round,
                "worst": check.worst,
            }
            for name, check in self.checks.items()
        }


@dataclass
class MWUCertificate:
    """Prefix-average excess demand against the multiplicative weights bound"""
    epsilon: float
    w: float
    applicable: bool
    prefixes: List[int]
    averages: np.ndarray
    bounds: np.ndarray
    min_slack: float
    violations: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.min_slack >= -config.MWU_SLACK


@dataclass
class RateFit:
    window: tuple
    ratio: float
    residual: float
    relative_residual: float
    points: int
    # phi is strongly convex on the fitted market, so r < 1 is required
    requires_contraction: bool = False

    @property
    def contracting(self) -> bool:
        return self.ratio < 1.0 - 1e-12

    @property
    def holds(self) -> bool:
        return self.contracting or not self.requires_contraction

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": [int(self.window[0]), int(self.window[1])],
            "ratio": float(self.ratio),
            "residual": float(self.residual),
            "relative_residual": float(self.relative_residual),
            "contracting": self.contracting,
            "requires_contraction": self.requires_contraction,
            "holds": self.holds,
        }


@dataclass
class UniformityFit:
    """Empirical link between dual gap and excess-demand deviation"""
    kappa: float
    correlation: float
    points: int

    @property
    def monotone(self) -> bool:
        return self.points < 3 or self.correlation > 0.0


@dataclass
class RelaxedPrimalReport:
    beta: float
    feasible: bool
    scaling_bound_holds: bool
    weak_duality_holds: bool
    psi_average: float
    psi_scaled: float
    average_excess: np.ndarray

    @property
    def ok(self) -> bool:
        return self.feasible and self.scaling_bound_holds and self.weak_duality_holds
