"""
Configuration for the Fisher market tatonnement toolkit
"""
import os
import sys


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(float(value)) if value not in (None, "") else default


# ============================================================
# NUMERICAL TOLERANCES
# ============================================================

# Prices produced by the dynamics must stay on the simplex within this
SIMPLEX_TOL = 1e-10

# Every agent spends its whole budget within this
SPEND_TOL = 1e-10

# Budgets sum to one after normalization within this
BUDGET_SUM_TOL = 1e-12

# Slack for "x = x(p)" in Definition 1
DEMAND_MATCH_TOL = 1e-10

# Per-round allowance for phi increases along a trace
MONOTONE_TOL = 1e-12

# Slack of the multiplicative weights prefix inequality
MWU_SLACK = 1e-9

# Dual gaps below this are ignored by rate fits
RATE_GAP_FLOOR = 1e-13

# Relative asymmetry allowed in analytic Hessians
HESSIAN_SYMMETRY_TOL = 1e-10

# Supply feasibility slack for Definition 2
SUPPLY_TOL = 1e-12

# ============================================================
# DYNAMICS DEFAULTS
# ============================================================

DEFAULT_DELTA = 1e-3
DEFAULT_MAX_ITERS = _env_int("TATONNEMENT_MAX_ITERS", 1_000_000)
DEFAULT_CHECK_EVERY = 10
DEFAULT_SEED = 0

# Automatic epsilon never exceeds this
EPSILON_CAP = 0.25
EPSILON_SAFETY = 2.0

# Sustained phi increase over this many rounds counts as divergence
DIVERGENCE_WINDOW = 100
DIVERGENCE_TOL = 1e-9

# ============================================================
# REFERENCE SOLVER
# ============================================================

SOLVER_TOL = _env_float("TATONNEMENT_SOLVER_TOL", 1e-9)
SOLVER_MAX_ITERS = 200_000
SOLVER_INITIAL_STEP = 1.0
SOLVER_STEP_GROWTH = 1.25
SOLVER_MAX_STEP = 1e4

# ============================================================
# BOUNDS ESTIMATION
# ============================================================

BOUNDS_SAMPLES = 200

# Sampled prices are floored at BOUNDS_PRICE_FLOOR_SHARE / m before renormalizing
BOUNDS_PRICE_FLOOR_SHARE = 0.25

# ============================================================
# LOGGING CONFIGURATION
# ============================================================

# Log level options: "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"
LOG_LEVEL = os.getenv("TATONNEMENT_LOG_LEVEL", "INFO").upper()

# Enable colored output (set to False if running in environments that don't support colors)
ENABLE_COLOR_LOGGING = os.getenv("TATONNEMENT_COLOR", "1").lower() not in ("0", "false", "no")

# ============================================================
# OUTPUT CONFIGURATION
# ============================================================

JSON_INDENT = 2

# Full precision for trace CSV files
CSV_FLOAT_FORMAT = "%.17g"

MARKET_SCHEMA_VERSION = 1

# ============================================================
# VALIDATION
# ============================================================

LOG_LEVELS = ["DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"]


def validate_config():
    """Validate configuration settings"""
    errors = []

    for name in ("SIMPLEX_TOL", "SPEND_TOL", "BUDGET_SUM_TOL", "DEMAND_MATCH_TOL",
                 "MONOTONE_TOL", "MWU_SLACK", "RATE_GAP_FLOOR", "SOLVER_TOL"):
        if not globals()[name] > 0:
            errors.append(f"{name} must be > 0, got {globals()[name]}")

    if not 0.0 < EPSILON_CAP < 0.5:
        errors.append(f"EPSILON_CAP must be in (0, 0.5), got {EPSILON_CAP}")
    if EPSILON_SAFETY < 1.0:
        errors.append(f"EPSILON_SAFETY must be >= 1, got {EPSILON_SAFETY}")
    if DEFAULT_CHECK_EVERY < 1:
        errors.append("DEFAULT_CHECK_EVERY must be >= 1")
    if DIVERGENCE_WINDOW < 1:
        errors.append("DIVERGENCE_WINDOW must be >= 1")
    if not 0.0 < BOUNDS_PRICE_FLOOR_SHARE < 1.0:
        errors.append(f"BOUNDS_PRICE_FLOOR_SHARE must be in (0, 1), got {BOUNDS_PRICE_FLOOR_SHARE}")
    if SOLVER_STEP_GROWTH < 1.0:
        errors.append("SOLVER_STEP_GROWTH must be >= 1")
    if LOG_LEVEL not in LOG_LEVELS:
        errors.append(f"Invalid LOG_LEVEL: {LOG_LEVEL}")

    if errors:
        raise ValueError("Configuration errors:\n" + "\n".join(errors))

# ============================================================
# CLI EXIT CODES
# ============================================================

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_ITERATION_CAP = 2
EXIT_DIVERGED = 3
EXIT_INVARIANT_VIOLATION = 4

# `check` reports a failed definition with this code
EXIT_CHECK_FAILED = 2

# Run validation on import
try:
    validate_config()
except ValueError as e:
    print(f"⚠️ Configuration Warning: {e}", file=sys.stderr)
