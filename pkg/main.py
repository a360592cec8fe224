"""
Command-line entry point for tatonnement experiments on Fisher markets

    python main.py run --market markets/cobb_douglas.json --epsilon 1.0 --delta 1e-9
    python main.py solve --market markets/cobb_douglas.json --tol 1e-9
    python main.py check --market m.json --prices pstar.json --definition 1 --delta 1e-3
    python main.py bounds --market m.json --samples 200
    python main.py distort --market markets/resource_allocation.json --delta 0.1
"""
import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

# .env overrides must be visible before config is imported
load_dotenv()

import config  # noqa: E402
from engines.experiment_coordinator import ExperimentCoordinator  # noqa: E402
from models.data_models import NumericalInstabilityError  # noqa: E402
from models.report_models import RunConfig  # noqa: E402
from utils.helpers import Logger  # noqa: E402

INIT_MODES = ("uniform", "spend-reset")


def parse_epsilon(value: str) -> Optional[float]:
    if value == "auto":
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--epsilon must be a number or 'auto', got '{value}'") from None


def positive_float(value: str) -> float:
    number = float(value)
    if not number > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return number


class CliParser(argparse.ArgumentParser):
    """Argument errors are input errors: exit 1 instead of argparse's 2"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(config.EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="tatonnement",
        description="Simulate and verify tatonnement price dynamics in Fisher markets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the price dynamics")
    run.add_argument("--market", required=True, help="market JSON file")
    run.add_argument("--epsilon", type=parse_epsilon, default=None, help="step size or 'auto' (default)")
    run.add_argument("--delta", type=positive_float, default=config.DEFAULT_DELTA)
    run.add_argument("--max-iters", type=int, default=config.DEFAULT_MAX_ITERS)
    run.add_argument("--init", default="uniform", help="uniform, spend-reset or a price JSON file")
    run.add_argument("--trace", help="trace CSV output path")
    run.add_argument("--result", help="result JSON path (stdout when omitted)")
    run.add_argument("--allocation-out", help="write the final allocation x(p^T) as JSON")
    run.add_argument("--check-every", type=int, default=config.DEFAULT_CHECK_EVERY)
    run.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    run.add_argument("--oracle", action="store_true", help="compare against the reference equilibrium")
    run.add_argument("--strict", action="store_true", help="exit 4 on invariant violations")

    solve = sub.add_parser("solve", help="compute the reference equilibrium")
    solve.add_argument("--market", required=True)
    solve.add_argument("--tol", type=positive_float, default=config.SOLVER_TOL)
    solve.add_argument("--output", help="report path (stdout when omitted)")

    check = sub.add_parser("check", help="check an approximate equilibrium")
    check.add_argument("--market", required=True)
    check.add_argument("--prices", required=True, help="price JSON ({good: price} or a solve report)")
    check.add_argument("--definition", type=int, choices=(1, 2), default=1)
    check.add_argument("--delta", type=positive_float, default=config.DEFAULT_DELTA)
    check.add_argument("--allocation", help="allocation JSON {agent_index: {good: qty}}")
    check.add_argument("--scale", type=positive_float, default=1.0, help="divide the allocation by this")
    check.add_argument("--output")

    bounds = sub.add_parser("bounds", help="estimate curvature constants")
    bounds.add_argument("--market", required=True)
    bounds.add_argument("--samples", type=int, default=config.BOUNDS_SAMPLES)
    bounds.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    bounds.add_argument("--output")

    distort = sub.add_parser("distort", help="distort resource allocation utilities")
    distort.add_argument("--market", required=True)
    distort.add_argument("--delta", type=float, required=True)
    distort.add_argument("--output", help="market path (stdout when omitted)")

    return parser


def dispatch(args: argparse.Namespace, coordinator: ExperimentCoordinator) -> int:
    if args.command == "run":
        init_file = None if args.init in INIT_MODES else args.init
        run_config = RunConfig(
            epsilon=args.epsilon,
            delta=args.delta,
            max_iters=args.max_iters,
            init=args.init if init_file is None else "uniform",
            check_every=args.check_every,
            seed=args.seed,
        )
        return coordinator.run_experiment(
            args.market, run_config,
            trace_path=args.trace,
            result_path=args.result,
            with_oracle=args.oracle,
            strict=args.strict,
            allocation_path=args.allocation_out,
            init_file=init_file,
        )
    if args.command == "solve":
        return coordinator.solve(args.market, args.tol, args.output)
    if args.command == "check":
        return coordinator.check(args.market, args.prices, args.definition, args.delta,
                                 args.allocation, args.scale, args.output)
    if args.command == "bounds":
        if args.samples < 1:
            raise ValueError("--samples must be >= 1")
        return coordinator.bounds(args.market, args.samples, args.seed, args.output)
    return coordinator.distort(args.market, args.delta, args.output)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code"""
    args = build_parser().parse_args(argv)
    coordinator = ExperimentCoordinator()

    try:
        return dispatch(args, coordinator)
    except NumericalInstabilityError as e:
        Logger.log_error("main", e)
        return config.EXIT_DIVERGED
    except (ValueError, OSError) as e:
        Logger.log_error("main", e)
        return config.EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
