"""
Shared fixtures: the small markets used throughout the suite
"""
from pathlib import Path

import numpy as np
import pytest

from engines.market_loader import normalize, parse_market, random_market

MARKETS_DIR = Path(__file__).resolve().parent.parent / "markets"


def build(document):
    return normalize(parse_market(document))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def markets_dir():
    return MARKETS_DIR


@pytest.fixture
def cobb_douglas():
    return build({
        "goods": ["g1", "g2"],
        "agents": [{"budget": 1.0, "utility": {"family": "cobb_douglas", "c": {"g1": 0.3, "g2": 0.7}}}],
    })


@pytest.fixture
def leontief():
    return build({
        "goods": ["g1", "g2"],
        "agents": [
            {"budget": 0.5, "utility": {"family": "leontief", "a": {"g1": 0.8, "g2": 0.2}}},
            {"budget": 0.5, "utility": {"family": "leontief", "a": {"g1": 0.2, "g2": 0.8}}},
        ],
    })


@pytest.fixture
def ces_half():
    """rho = 0.5 with singleton objects c = (0.4, 0.6)"""
    return build({
        "goods": ["g1", "g2"],
        "agents": [{"budget": 1.0, "utility": {"family": "nested_ces_leontief", "rho": 0.5, "objects": [
            {"c": 0.4, "a": {"g1": 1.0}},
            {"c": 0.6, "a": {"g2": 1.0}},
        ]}}],
    })


@pytest.fixture
def nested_markets():
    """Seeded nested markets across the supported exponents"""
    markets = []
    for k, rho in enumerate((-2.0, -0.5, 0.5, 0.9)):
        generator = np.random.default_rng(100 + k)
        for _ in range(5):
            n = int(generator.integers(2, 6))
            m = int(generator.integers(2, 6))
            markets.append(random_market(generator, "nested_ces_leontief", n, m, rho=rho,
                                         objects_per_agent=int(generator.integers(1, 4))))
    return markets


def interior_prices(generator: np.random.Generator, m: int) -> np.ndarray:
    p = generator.dirichlet(np.ones(m))
    p = np.maximum(p, 0.2 / m)
    return p / p.sum()
