"""
Trace Store - reads and writes traces, reports, prices and allocations
"""
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from models.data_models import Bundle, MarketError
from models.report_models import Trace
from utils.helpers import to_jsonable
import config

PathLike = Union[str, Path]


class TraceStore:
    """File persistence for traces (CSV + metadata sidecar) and JSON documents"""

    def __init__(self, float_format: str = config.CSV_FLOAT_FORMAT, indent: int = config.JSON_INDENT):
        self.float_format = float_format
        self.indent = indent

    @staticmethod
    def metadata_path(path: PathLike) -> Path:
        path = Path(path)
        return path.with_name(path.name + ".meta.json")

    def save_trace(self, trace: Trace, path: PathLike) -> Path:
        """Write the trace CSV and a sidecar with epsilon, market hash and run config"""
        path = Path(path)
        trace.to_frame().to_csv(path, index=False, float_format=self.float_format)
        metadata = {
            "goods": trace.goods,
            "epsilon": trace.epsilon,
            "market_hash": trace.market_hash,
            "run_config": trace.run_config,
        }
        self.write_json(metadata, self.metadata_path(path))
        return path

    def load_trace(self, path: PathLike) -> Trace:
        """Read a trace written by save_trace; spend is rebuilt as p * (z + 1)"""
        path = Path(path)
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise MarketError(f"cannot read trace '{path}': {e}") from None

        meta_path = self.metadata_path(path)
        metadata = self.read_json(meta_path) if meta_path.exists() else {}
        goods = metadata.get("goods") or [c[2:] for c in frame.columns if c.startswith("p_")]

        prices = frame[[f"p_{g}" for g in goods]].to_numpy(dtype=float)
        excess = frame[[f"z_{g}" for g in goods]].to_numpy(dtype=float)
        return Trace(
            goods=list(goods),
            t=frame["t"].to_numpy(dtype=np.int64),
            prices=prices,
            excess=excess,
            phi=frame["phi"].to_numpy(dtype=float),
            spend=prices * (excess + 1.0),
            epsilon=float(metadata.get("epsilon", np.nan)),
            market_hash=metadata.get("market_hash", ""),
            run_config=metadata.get("run_config", {}),
        )

    def write_json(self, payload: Any, path: Optional[PathLike] = None):
        """Write JSON to a file, or to stdout when no path is given"""
        text = json.dumps(to_jsonable(payload), indent=self.indent)
        if path is None:
            sys.stdout.write(text + "\n")
            return
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text + "\n")

    def read_json(self, path: PathLike) -> Any:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except OSError as e:
            raise MarketError(f"cannot read '{path}': {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise MarketError(f"'{path}' is not valid JSON: {e}") from None

    def load_prices(self, path: PathLike, goods: List[str]) -> np.ndarray:
        """
        Prices from {good: price}, a solve report {"prices": {...}} or a plain list
        """
        document = self.read_json(path)
        if isinstance(document, dict) and isinstance(document.get("prices"), (dict, list)):
            document = document["prices"]
        if isinstance(document, list):
            if len(document) != len(goods):
                raise MarketError(f"price list has {len(document)} entries, expected {len(goods)}")
            return np.asarray(document, dtype=float)
        if not isinstance(document, dict):
            raise MarketError(f"'{path}' does not hold a price vector")
        unknown = sorted(set(document) - set(goods))
        if unknown:
            raise MarketError(f"prices reference undeclared goods: {', '.join(unknown)}")
        missing = [g for g in goods if g not in document]
        if missing:
            raise MarketError(f"prices missing for goods: {', '.join(missing)}")
        return np.array([float(document[g]) for g in goods])

    def _bundle(self, entry: Dict[str, Any], goods: List[str], where: str) -> Bundle:
        levels = None
        if "x" in entry:
            levels = entry.get("object_levels")
            entry = entry["x"]
        x = np.zeros(len(goods))
        for good, qty in entry.items():
            if good not in goods:
                raise MarketError(f"{where} references undeclared good '{good}'")
            x[goods.index(good)] = float(qty)
        if np.any(x < 0):
            raise MarketError(f"{where} has negative quantities")
        return Bundle(x, None if levels is None else np.asarray(levels, dtype=float))

    def load_allocation(self, path: PathLike, goods: List[str], n: int) -> List[Bundle]:
        """
        Allocation from {agent_index: {good: qty}}; an entry may instead be
        {"x": {good: qty}, "object_levels": [...]}. Missing agents get nothing.
        """
        document = self.read_json(path)
        if not isinstance(document, dict):
            raise MarketError(f"'{path}' must map agent indices to bundles")
        bundles = [Bundle(np.zeros(len(goods))) for _ in range(n)]
        for key, entry in document.items():
            try:
                i = int(key)
            except ValueError:
                raise MarketError(f"allocation key '{key}' is not an agent index") from None
            if not 0 <= i < n:
                raise MarketError(f"allocation names agent {i}, market has {n}")
            bundles[i] = self._bundle(entry, goods, f"allocation[{key}]")
        return bundles

    @staticmethod
    def allocation_document(bundles: List[Bundle], goods: List[str]) -> Dict[str, Any]:
        document = {}
        for i, bundle in enumerate(bundles):
            entry: Dict[str, Any] = {"x": {g: float(v) for g, v in zip(goods, bundle.x)}}
            if bundle.object_levels is not None:
                entry["object_levels"] = [float(v) for v in bundle.object_levels]
            document[str(i)] = entry
        return document
