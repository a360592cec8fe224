"""
Market Loader - parses, normalizes and validates Fisher market documents
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Union

import numpy as np
from scipy.special import logsumexp

from models.data_models import (
    Agent,
    Market,
    MarketError,
    ObjectSpec,
    UtilityFamily,
    UtilitySpec,
    ValidationIssue,
    ValidationReport,
)
from utils.helpers import Logger
import config

TOP_LEVEL_FIELDS = {"version", "goods", "agents"}
AGENT_FIELDS = {"budget", "utility"}
UTILITY_FIELDS = {"family", "rho", "c", "a", "objects"}
OBJECT_FIELDS = {"c", "a"}


class TildeConstants(NamedTuple):
    """Market constants governing the tilde transform and the price bounds"""
    A: float
    a_min: float
    b_min: float
    c_min: float


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MarketError(f"{where} must be a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise MarketError(f"{where} must be finite, got {value}")
    return value


def _reject_unknown(document: Dict[str, Any], allowed: set, where: str):
    unknown = sorted(set(document) - allowed)
    if unknown:
        raise MarketError(f"unknown field(s) in {where}: {', '.join(unknown)}")


def _coefficient_map(raw: Any, goods: List[str], where: str) -> Dict[int, float]:
    if not isinstance(raw, dict):
        raise MarketError(f"{where} must map goods to numbers")
    coefficients = {}
    for good, value in raw.items():
        if good not in goods:
            raise MarketError(f"{where} references undeclared good '{good}'")
        coeff = _number(value, f"{where}[{good}]")
        if coeff < 0:
            raise MarketError(f"negative coefficient {where}[{good}] = {coeff}")
        coefficients[goods.index(good)] = coeff
    return coefficients


def _parse_utility(raw: Any, goods: List[str], where: str) -> UtilitySpec:
    if not isinstance(raw, dict):
        raise MarketError(f"{where} must be an object")
    _reject_unknown(raw, UTILITY_FIELDS, where)

    try:
        family = UtilityFamily(raw.get("family"))
    except ValueError:
        raise MarketError(f"unknown family '{raw.get('family')}' in {where}") from None

    rho = None
    if "rho" in raw:
        rho = _number(raw["rho"], f"{where}.rho")

    if family.has_objects:
        if "c" in raw or "a" in raw:
            raise MarketError(f"{where}: family '{family.value}' takes 'objects' only")
        raw_objects = raw.get("objects")
        if not isinstance(raw_objects, list) or not raw_objects:
            raise MarketError(f"{where}.objects must be a non-empty list")
        objects = []
        for k, raw_object in enumerate(raw_objects):
            object_where = f"{where}.objects[{k}]"
            if not isinstance(raw_object, dict):
                raise MarketError(f"{object_where} must be an object")
            _reject_unknown(raw_object, OBJECT_FIELDS, object_where)
            a = _coefficient_map(raw_object.get("a"), goods, f"{object_where}.a")
            if any(v == 0 for v in a.values()):
                raise MarketError(f"{object_where}.a: zero coefficients are not allowed inside an object")
            objects.append(ObjectSpec(c=_number(raw_object.get("c"), f"{object_where}.c"), a=a))
        return UtilitySpec(family=family, rho=rho, objects=objects)

    key = "a" if family is UtilityFamily.LEONTIEF else "c"
    other = "c" if key == "a" else "a"
    if other in raw or "objects" in raw:
        raise MarketError(f"{where}: family '{family.value}' takes '{key}' only")
    if key not in raw:
        raise MarketError(f"{where}: missing '{key}' for family '{family.value}'")
    coefficients = _coefficient_map(raw[key], goods, f"{where}.{key}")
    return UtilitySpec(family=family, rho=rho, coefficients=coefficients)


def parse_market(text: Union[str, bytes, Dict[str, Any]]) -> Market:
    """
    Parse a market document (schema version 1) into an un-normalized Market

    Args:
        text: JSON text or an already decoded document

    Returns:
        Market with normalized=False

    Raises:
        MarketError: malformed document, unknown family, rho out of range,
            negative coefficient or undeclared good
    """
    if isinstance(text, (str, bytes)):
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise MarketError(f"malformed market document: {e}") from None
    else:
        document = text

    if not isinstance(document, dict):
        raise MarketError("market document must be a JSON object")
    _reject_unknown(document, TOP_LEVEL_FIELDS, "market")

    version = document.get("version", config.MARKET_SCHEMA_VERSION)
    if version != config.MARKET_SCHEMA_VERSION:
        raise MarketError(f"unsupported market schema version {version!r}")

    goods = document.get("goods")
    if not isinstance(goods, list) or not all(isinstance(g, str) for g in goods):
        raise MarketError("'goods' must be a list of strings")

    raw_agents = document.get("agents")
    if not isinstance(raw_agents, list):
        raise MarketError("'agents' must be a list")

    agents = []
    for i, raw_agent in enumerate(raw_agents):
        where = f"agents[{i}]"
        if not isinstance(raw_agent, dict):
            raise MarketError(f"{where} must be an object")
        _reject_unknown(raw_agent, AGENT_FIELDS, where)
        budget = _number(raw_agent.get("budget"), f"{where}.budget")
        utility = _parse_utility(raw_agent.get("utility"), goods, f"{where}.utility")
        agents.append(Agent(budget=budget, utility=utility))

    return Market(goods=list(goods), agents=agents)


def market_to_document(market: Market) -> Dict[str, Any]:
    """Inverse of parse_market"""
    agents = []
    for agent in market.agents:
        spec = agent.utility
        utility: Dict[str, Any] = {"family": spec.family.value}
        if spec.rho is not None:
            utility["rho"] = spec.rho
        if spec.family.has_objects:
            c = _document_coefficients([obj.c for obj in spec.objects], spec.log_scale)
            utility["objects"] = [
                {"c": ck, "a": {market.goods[j]: obj.a[j] for j in sorted(obj.a)}}
                for ck, obj in zip(c, spec.objects)
            ]
        else:
            key = "a" if spec.family is UtilityFamily.LEONTIEF else "c"
            goods = sorted(spec.coefficients)
            values = _document_coefficients([spec.coefficients[j] for j in goods], spec.log_scale)
            utility[key] = {market.goods[j]: v for j, v in zip(goods, values)}
        agents.append({"budget": agent.budget, "utility": utility})
    return {"version": config.MARKET_SCHEMA_VERSION, "goods": list(market.goods), "agents": agents}


def market_hash(market: Market) -> str:
    """sha256 of the canonical document of the normalized market"""
    canonical = json.dumps(market_to_document(normalize(market)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _power_log_scale(c: np.ndarray, rho: float) -> float:
    """log s such that sum((s c) ** (rho/(1-rho))) = 1"""
    r = rho / (1.0 - rho)
    return float(-logsumexp(r * np.log(c)) / r)


def _normalize_utility(spec: UtilitySpec, i: int) -> UtilitySpec:
    support = spec.support()
    if not support:
        raise MarketError(f"agent {i} has an empty utility support")

    family = spec.family
    if family.has_objects:
        objects = []
        for obj in spec.objects:
            scale = sum(obj.a.values())
            objects.append(ObjectSpec(c=obj.c / scale, a={g: v / scale for g, v in obj.a.items()}))
        log_scale = 0.0
        if family is UtilityFamily.NESTED_CES_LEONTIEF:
            log_scale = _power_log_scale(np.array([obj.c for obj in objects]), spec.rho)
        return UtilitySpec(family=family, rho=spec.rho, objects=objects, log_scale=log_scale)

    values = np.array([spec.coefficients[g] for g in support], dtype=float)
    if family is UtilityFamily.CES:
        return UtilitySpec(
            family=family,
            rho=spec.rho,
            coefficients={g: float(v) for g, v in zip(support, values)},
            log_scale=_power_log_scale(values, spec.rho),
        )
    values = values / values.sum()
    return UtilitySpec(family=family, coefficients={g: float(v) for g, v in zip(support, values)})


def _document_coefficients(values: List[float], log_scale: float) -> List[float]:
    """Normalized c when every value survives exp(), otherwise c as parsed"""
    if log_scale == 0.0:
        return list(values)
    with np.errstate(over="ignore", under="ignore"):
        scaled = np.exp(np.log(np.asarray(values, dtype=float)) + log_scale)
    if np.all(np.isfinite(scaled)) and np.all(scaled >= np.finfo(float).tiny):
        return [float(v) for v in scaled]
    return list(values)


def normalize(market: Market) -> Market:
    """
    Scale budgets and utility coefficients without changing behavior:
    budgets sum to one, Cobb-Douglas and Leontief coefficients sum to one,
    every object's a sums to one with c absorbing the factor, and CES and
    nested agents satisfy sum(c ** (rho/(1-rho))) = 1 through their
    log-space `log_scale`. Idempotent.
    """
    if market.normalized:
        return market

    total = float(market.budgets.sum())
    if not total > 0:
        raise MarketError("all-zero budget vector")

    agents = [
        Agent(budget=agent.budget / total, utility=_normalize_utility(agent.utility, i))
        for i, agent in enumerate(market.agents)
    ]
    return Market(goods=list(market.goods), agents=agents, normalized=True)


def validate(market: Market) -> ValidationReport:
    """List every reason the market does not admit positive equilibrium prices"""
    report = ValidationReport()

    if market.normalized and abs(market.budgets.sum() - 1.0) > config.BUDGET_SUM_TOL:
        report.issues.append(ValidationIssue(
            "unnormalized budgets", -1, f"budgets sum to {market.budgets.sum():.17g}, expected 1"))

    demanded = set()
    for i, agent in enumerate(market.agents):
        if agent.budget <= 0:
            report.issues.append(ValidationIssue("zero budget", i, f"agent {i} has budget 0"))
        support = agent.utility.support()
        if not support:
            report.issues.append(ValidationIssue(
                "degenerate object", i, f"agent {i} has an empty utility support"))
        for k, obj in enumerate(agent.utility.objects):
            if not all(np.isfinite(v) and v > 0 for v in [obj.c, *obj.a.values()]):
                report.issues.append(ValidationIssue(
                    "degenerate object", i, f"agent {i} object {k} has non-positive coefficients"))
        if agent.budget > 0:
            demanded.update(support)

    for j, good in enumerate(market.goods):
        if j not in demanded:
            report.issues.append(ValidationIssue(
                "undemanded good", j, f"good '{good}' has no demand"))

    return report


def tilde_constants(market: Market) -> TildeConstants:
    """A = max column sum of object rows, a_min = min positive a, b_min, c_min"""
    table = market.table
    rows = table.rows
    A = float(rows.sum(axis=0).max()) if rows.size else 0.0
    positive = rows[rows > 0]
    a_min = float(positive.min()) if positive.size else 0.0
    b_min = float(table.budgets.min())

    usable = ~table.cobb_douglas & ~table.resource
    if np.any(usable):
        c_min = float(np.min(np.exp(table.exponent[usable] * table.log_c[usable])))
    else:
        c_min = 1.0
    return TildeConstants(A=A, a_min=a_min, b_min=b_min, c_min=c_min)


def _support_mask(rng: np.random.Generator, n: int, m: int, density: float) -> np.ndarray:
    mask = rng.random((n, m)) < density
    for i in range(n):
        if not mask[i].any():
            mask[i, rng.integers(m)] = True
    for j in range(m):
        if not mask[:, j].any():
            mask[rng.integers(n), j] = True
    return mask


def random_market(rng: np.random.Generator, family: Union[str, UtilityFamily], n: int, m: int,
                  rho: Optional[float] = None, objects_per_agent: int = 2,
                  max_object_size: int = 2, density: float = 1.0) -> Market:
    """
    Seeded generator of valid normalized markets in which every good is demanded

    Args:
        rng: numpy Generator driving every draw
        family: utility family shared by all agents
        n, m: agent and good counts
        rho: exponent for the CES families (0.5 when omitted)
        objects_per_agent: object count for nested families
        max_object_size: largest number of goods inside one object
        density: share of goods in a CES / Cobb-Douglas / Leontief support
    """
    family = UtilityFamily(family)
    if family.has_rho and rho is None:
        rho = 0.5
    if not family.has_rho:
        rho = None

    goods = [f"g{j + 1}" for j in range(m)]
    budgets = rng.uniform(0.5, 1.5, size=n)
    agents = []

    if family.has_objects:
        layouts = []
        for _ in range(n):
            agent_objects = []
            for _ in range(objects_per_agent):
                size = int(rng.integers(1, min(max_object_size, m) + 1))
                agent_objects.append(set(rng.choice(m, size=size, replace=False).tolist()))
            layouts.append(agent_objects)
        covered = set().union(*[s for agent_objects in layouts for s in agent_objects])
        for j in range(m):
            if j not in covered:
                i = int(rng.integers(n))
                layouts[i][int(rng.integers(objects_per_agent))].add(j)
        for i in range(n):
            objects = [
                ObjectSpec(c=float(rng.uniform(0.5, 1.5)),
                           a={g: float(rng.uniform(0.2, 1.0)) for g in sorted(goods_set)})
                for goods_set in layouts[i]
            ]
            agents.append(Agent(budget=float(budgets[i]),
                                utility=UtilitySpec(family=family, rho=rho, objects=objects)))
    else:
        mask = _support_mask(rng, n, m, density)
        values = rng.uniform(0.2, 1.0, size=(n, m))
        for i in range(n):
            coefficients = {j: float(values[i, j]) for j in range(m) if mask[i, j]}
            agents.append(Agent(budget=float(budgets[i]),
                                utility=UtilitySpec(family=family, rho=rho, coefficients=coefficients)))

    return normalize(Market(goods=goods, agents=agents))


class MarketLoader:
    """
    Loads market files into validated, normalized markets and writes them back
    """

    def __init__(self):
        self.name = "MarketLoader"
        self.logger = Logger()

    def load(self, path: Union[str, Path]) -> Market:
        """
        Read, parse, normalize and validate a market file

        Raises:
            MarketError: unreadable file, parse error or validation issues
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise MarketError(f"cannot read market file '{path}': {e.strerror}") from None

        market = self.prepare(parse_market(text))
        self.logger.log(self.name,
            f"✓ Loaded {path.name}: n={market.n}, m={market.m}, "
            f"families={sorted({f.value for f in market.families()})}")
        return market

    def prepare(self, market: Market) -> Market:
        market = normalize(market)
        report = validate(market)
        if not report.ok:
            for issue in report.issues:
                self.logger.log(self.name, f"⚠️ {issue.kind}: {issue.message}", "WARNING")
            raise MarketError(f"market failed validation: {report.summary()}")
        return market

    def save(self, market: Market, path: Union[str, Path]):
        path = Path(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(market_to_document(market), f, indent=config.JSON_INDENT)
        self.logger.log(self.name, f"✓ Market written to {path}", "SUCCESS")
