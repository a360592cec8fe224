"""
Data models for Fisher market instances, prices and bundles
"""
from typing import List, Dict, Optional
from enum import Enum
from dataclasses import dataclass, field
from functools import cached_property
import numpy as np


class UtilityFamily(Enum):
    """Supported utility families"""
    CES = "ces"
    COBB_DOUGLAS = "cobb_douglas"
    LEONTIEF = "leontief"
    NESTED_CES_LEONTIEF = "nested_ces_leontief"
    RESOURCE_ALLOCATION = "resource_allocation"

    @property
    def has_rho(self) -> bool:
        return self in (UtilityFamily.CES, UtilityFamily.NESTED_CES_LEONTIEF)

    @property
    def has_objects(self) -> bool:
        return self in (UtilityFamily.NESTED_CES_LEONTIEF, UtilityFamily.RESOURCE_ALLOCATION)


class MarketError(ValueError):
    """Malformed or unusable market input"""


class DistortionRequiredError(MarketError):
    """Resource allocation utilities must be distorted before demand is defined"""


class PrimalInfeasibleError(ValueError):
    """Some agent has zero utility, so the primal objective is -infinity"""


class NumericalInstabilityError(RuntimeError):
    """Prices became non-finite during the dynamics"""

    def __init__(self, round_index: int, message: str = ""):
        self.round_index = round_index
        super().__init__(message or f"non-finite prices at round {round_index}")


def rho_in_range(rho: float) -> bool:
    """CES exponents live in (-inf, 0) u (0, 1)"""
    return bool(np.isfinite(rho)) and rho != 0.0 and rho < 1.0


@dataclass(frozen=True)
class ObjectSpec:
    """
    A Leontief bundle inside a nested utility.

    `a` maps dense good indices to strictly positive coefficients.
    """
    c: float
    a: Dict[int, float]

    def __post_init__(self):
        if not self.a:
            raise MarketError("object must contain at least one good")
        if not self.c > 0:
            raise MarketError(f"object coefficient c must be > 0, got {self.c}")
        for good, coeff in self.a.items():
            if not coeff > 0:
                raise MarketError(f"object coefficient a[{good}] must be > 0, got {coeff}")

    @property
    def goods(self) -> List[int]:
        return sorted(self.a)


@dataclass(frozen=True)
class UtilitySpec:
    """
    Utility description of one agent.

    `coefficients` holds c (CES / Cobb-Douglas) or a (Leontief) keyed by good
    index; `objects` is used by the nested families. The power normalization
    of the CES families is kept as `log_scale`: the normalized coefficient is
    c * exp(log_scale), which need not be representable when rho is near 0.
    """
    family: UtilityFamily
    rho: Optional[float] = None
    coefficients: Dict[int, float] = field(default_factory=dict)
    objects: List[ObjectSpec] = field(default_factory=list)
    log_scale: float = 0.0

    def __post_init__(self):
        if self.family.has_rho:
            if self.rho is None or not rho_in_range(self.rho):
                raise MarketError(f"rho out of range for family '{self.family.value}': {self.rho}")
        elif self.rho is not None:
            raise MarketError(f"rho is not applicable to family '{self.family.value}'")

        if self.family.has_objects:
            if self.coefficients:
                raise MarketError(f"family '{self.family.value}' takes objects, not coefficients")
        elif self.objects:
            raise MarketError(f"family '{self.family.value}' does not take objects")

        for good, coeff in self.coefficients.items():
            if coeff < 0 or not np.isfinite(coeff):
                raise MarketError(f"negative coefficient for good {good}: {coeff}")
        if not np.isfinite(self.log_scale):
            raise MarketError(f"coefficient scale must be finite, got log {self.log_scale}")

    def support(self) -> List[int]:
        """Goods this utility actually cares about"""
        if self.family.has_objects:
            return sorted({g for obj in self.objects for g in obj.a})
        return sorted(g for g, coeff in self.coefficients.items() if coeff > 0)


@dataclass(frozen=True)
class Agent:
    """A buyer holding money only"""
    budget: float
    utility: UtilitySpec

    def __post_init__(self):
        if self.budget < 0 or not np.isfinite(self.budget):
            raise MarketError(f"budget must be a nonnegative number, got {self.budget}")


@dataclass(frozen=True)
class AgentForm:
    """
    Compiled per-object layout of an agent used by the numerical code.

    CES agents become singleton objects, Leontief agents a single object and
    Cobb-Douglas agents keep their exponent vector in `c` with `a` the identity
    rows of their support. `log_c` is exact; `c` may under- or overflow for
    CES rows with rho near 0, so those rows are only read through `log_c`.
    """
    family: UtilityFamily
    budget: float
    rho: Optional[float]
    c: np.ndarray
    log_c: np.ndarray
    a: np.ndarray

    @property
    def kind(self) -> str:
        if self.family is UtilityFamily.COBB_DOUGLAS:
            return "cobb_douglas"
        if self.family is UtilityFamily.RESOURCE_ALLOCATION:
            return "resource"
        return "nested"

    @property
    def exponent(self) -> float:
        """rho/(1-rho); Leontief agents have a single object so any value works"""
        if self.rho is None:
            return 0.0
        return self.rho / (1.0 - self.rho)


@dataclass(frozen=True)
class Market:
    """
    A Fisher market: m goods of unit supply and agents with budgets.
    """
    goods: List[str]
    agents: List[Agent]
    normalized: bool = False

    def __post_init__(self):
        if not self.goods:
            raise MarketError("market must declare at least one good")
        if len(set(self.goods)) != len(self.goods):
            raise MarketError("duplicate good identifiers")
        if not self.agents:
            raise MarketError("market must contain at least one agent")

    @property
    def m(self) -> int:
        return len(self.goods)

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def budgets(self) -> np.ndarray:
        return np.array([agent.budget for agent in self.agents], dtype=float)

    def families(self) -> List[UtilityFamily]:
        return [agent.utility.family for agent in self.agents]

    @cached_property
    def forms(self) -> List[AgentForm]:
        return [compile_agent(agent, self.m) for agent in self.agents]

    @cached_property
    def table(self) -> "ObjectTable":
        return ObjectTable.from_forms(self.forms, self.m)

    def __repr__(self) -> str:
        return f"Market(m={self.m}, n={self.n}, normalized={self.normalized})"


def compile_agent(agent: Agent, m: int) -> AgentForm:
    """Map any utility family onto the per-object layout"""
    spec = agent.utility
    if spec.family.has_objects:
        c = np.array([obj.c for obj in spec.objects], dtype=float)
        a = np.zeros((len(spec.objects), m))
        for row, obj in enumerate(spec.objects):
            for good, coeff in obj.a.items():
                a[row, good] = coeff
    elif spec.family is UtilityFamily.LEONTIEF:
        c = np.ones(1)
        a = np.zeros((1, m))
        for good, coeff in spec.coefficients.items():
            a[0, good] = coeff
    else:
        support = spec.support()
        c = np.array([spec.coefficients[g] for g in support], dtype=float)
        a = np.zeros((len(support), m))
        a[np.arange(len(support)), support] = 1.0

    log_c = np.log(c) + spec.log_scale
    if spec.log_scale != 0.0:
        with np.errstate(over="ignore", under="ignore"):
            c = np.exp(log_c)
    return AgentForm(family=spec.family, budget=agent.budget, rho=spec.rho, c=c, log_c=log_c, a=a)


@dataclass(frozen=True)
class ObjectTable:
    """
    Every (agent, object) row of a market stacked for vectorized evaluation.

    Rows of one agent are contiguous and ordered by agent index. For
    Cobb-Douglas rows `rho` is 0 and the spend share is c / sum(c).
    """
    rows: np.ndarray
    owners: np.ndarray
    c: np.ndarray
    log_c: np.ndarray
    rho: np.ndarray
    cobb_douglas: np.ndarray
    resource: np.ndarray
    budgets: np.ndarray

    @classmethod
    def from_forms(cls, forms: List[AgentForm], m: int) -> "ObjectTable":
        rows = [form.a for form in forms]
        owners = [np.full(len(form.c), i, dtype=np.int64) for i, form in enumerate(forms)]
        rhos = [np.full(len(form.c), form.rho if form.rho is not None else 0.0) for form in forms]
        cd = [np.full(len(form.c), form.kind == "cobb_douglas") for form in forms]
        res = [np.full(len(form.c), form.kind == "resource") for form in forms]
        return cls(
            rows=np.vstack(rows) if rows else np.zeros((0, m)),
            owners=np.concatenate(owners),
            c=np.concatenate([form.c for form in forms]),
            log_c=np.concatenate([form.log_c for form in forms]),
            rho=np.concatenate(rhos),
            cobb_douglas=np.concatenate(cd),
            resource=np.concatenate(res),
            budgets=np.array([form.budget for form in forms], dtype=float),
        )

    @property
    def n(self) -> int:
        return len(self.budgets)

    @property
    def exponent(self) -> np.ndarray:
        """rho/(1-rho) per row; zero for Leontief and Cobb-Douglas rows"""
        rho = np.where(self.resource, 0.0, self.rho)
        return rho / (1.0 - rho)

    def agent_rows(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owners == i)


@dataclass
class Bundle:
    """
    Quantities bought by one agent; nested families also carry object levels.
    """
    x: np.ndarray
    object_levels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if np.any(self.x < 0):
            raise ValueError("bundle quantities must be nonnegative")
        if self.object_levels is not None:
            self.object_levels = np.asarray(self.object_levels, dtype=float)

    def scaled(self, factor: float) -> "Bundle":
        levels = None if self.object_levels is None else self.object_levels * factor
        return Bundle(self.x * factor, levels)


@dataclass
class ExcessDemand:
    """z_j = total demand for good j minus its unit supply"""
    z: np.ndarray
    bundles: List[Bundle]

    @property
    def aggregate(self) -> np.ndarray:
        return self.z + 1.0


@dataclass
class ValidationIssue:
    kind: str
    index: int
    message: str


@dataclass
class ValidationReport:
    """Violations found in a normalized market; empty means usable"""
    issues: List[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def kinds(self) -> List[str]:
        return [issue.kind for issue in self.issues]

    def summary(self) -> str:
        return "; ".join(issue.message for issue in self.issues)
