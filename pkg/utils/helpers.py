"""
Helper utilities for the tatonnement toolkit
"""
import sys
from typing import List, Dict, Any
import numpy as np

import config


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy containers and scalars into plain JSON types

    Args:
        value: Any nested structure of dicts, lists, numpy arrays and scalars

    Returns:
        Structure accepted by json.dump; non-finite floats become null
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def goods_map(goods: List[str], values) -> Dict[str, float]:
    """Label a per-good vector with good names"""
    return {good: float(v) for good, v in zip(goods, np.asarray(values, dtype=float))}


def format_vector(values, digits: int = 6) -> str:
    """Compact one-line rendering of a short vector for log messages"""
    return "(" + ", ".join(f"{v:.{digits}g}" for v in np.asarray(values, dtype=float)) + ")"


def sup_norm(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values))) if values.size else 0.0


class Logger:
    """
    Simple logger for engine actions with colored output.

    Messages go to stderr so that JSON reports on stdout stay clean.
    """

    # ANSI color codes
    COLORS = {
        "DEBUG": "\033[90m",     # Grey
        "INFO": "\033[94m",      # Blue
        "SUCCESS": "\033[92m",   # Green
        "WARNING": "\033[93m",   # Yellow
        "ERROR": "\033[91m",     # Red
        "RESET": "\033[0m"       # Reset
    }

    @staticmethod
    def enabled(level: str) -> bool:
        levels = config.LOG_LEVELS
        threshold = levels.index(config.LOG_LEVEL) if config.LOG_LEVEL in levels else 1
        rank = levels.index(level) if level in levels else 1
        return rank >= threshold

    @staticmethod
    def log(component: str, message: str, level: str = "INFO"):
        """
        Log a message with component name and level

        Args:
            component: Name of the engine emitting the message
            message: Log message
            level: Log level (DEBUG, INFO, SUCCESS, WARNING, ERROR)
        """
        if not Logger.enabled(level):
            return
        if config.ENABLE_COLOR_LOGGING:
            color = Logger.COLORS.get(level, Logger.COLORS["INFO"])
            reset = Logger.COLORS["RESET"]
        else:
            color = reset = ""
        print(f"{color}[{level}]{reset} {component}: {message}", file=sys.stderr)

    @staticmethod
    def log_section(title: str):
        """
        Log a section header

        Args:
            title: Section title
        """
        if not Logger.enabled("INFO"):
            return
        print(f"\n{'='*80}\n{title}\n{'='*80}", file=sys.stderr)

    @staticmethod
    def log_error(component: str, error: Exception):
        """
        Log an error, with traceback when debugging

        Args:
            component: Name of the engine
            error: Exception object
        """
        Logger.log(component, f"ERROR: {str(error)}", "ERROR")

        if Logger.enabled("DEBUG"):
            import traceback
            traceback.print_exc(file=sys.stderr)
