"""
Command-line entry point of the probabilistic verifier.

Subcommands:
    verify        run branch and bound (or the no-split / oracle modes) on a problem file
    make-problem  build a robustness problem from a classifier and an input
    bench         run strategies over a corpus of problem files
    oracle        direct-sampling reference probability of a problem

Exit codes: 0 TRUE, 1 FALSE, 2 TIMEOUT/undecided, 3 usage or input error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.config.settings import config_manager
from app.models.benchmark import BenchmarkConfig
from app.models.network import ModelError
from app.models.probability import GaussianInput
from app.models.verification import RunConfig, RunMode, StrategyName, Verdict
from app.services.bab.engine import verify, verify_no_split
from app.services.bab.pool import BabEngineError
from app.services.benchmark_service import (
    BenchmarkError,
    ProblemGenerationError,
    make_robustness_problem,
    run_benchmark,
)
from app.services.model_service import model_service
from app.services.oracle_service import OracleError, oracle_service
from app.utils.log_setup import configure_logging

logger = logging.getLogger(__name__)

EXIT_CODES = {Verdict.TRUE: 0, Verdict.FALSE: 1, Verdict.TIMEOUT: 2}
USAGE_ERROR = 3


class CliUsageError(Exception):
    """Exception raised for invalid command-line usage."""
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    settings = config_manager.settings
    parser.add_argument("--strategy", choices=[s.value for s in StrategyName], default=settings.strategy)
    parser.add_argument("--tau", type=float, default=settings.tau, help="babsr-prob uncertainty threshold")
    parser.add_argument("--samples", type=int, default=settings.n_samples, help="Monte Carlo samples per branch")
    parser.add_argument("--split-depth", type=int, default=settings.split_depth)
    parser.add_argument("--batch", type=int, default=settings.batch_size, help="branches popped per iteration")
    parser.add_argument("--workers", type=int, default=settings.workers, help="threads per iteration")
    parser.add_argument(
        "--time-limit", type=float, default=settings.time_limit_s,
        help="seconds; 0 or less disables the limit",
    )
    parser.add_argument("--seed", type=int, default=None, help="run seed (default: PROBVERIF_SEED or 0)")
    parser.add_argument("--z", type=float, default=None, help="truncation half-width in standard deviations")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probverif", description="Probabilistic branch-and-bound verifier for ReLU networks")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-iteration bounds")
    parser.add_argument("--log-json", action="store_true", help="render logs as JSON lines")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("verify", help="verify a problem file")
    run.add_argument("problem", help="problem JSON file")
    run.add_argument("--eta", type=float, default=None, help="override the problem's threshold")
    run.add_argument("--mode", choices=[m.value for m in RunMode], default=RunMode.BAB.value)
    run.add_argument("--trace", action="store_true", help="include per-iteration bounds in the report")
    run.add_argument("--out", default=None, help="also write the report JSON here")
    _add_run_flags(run)

    make = commands.add_parser("make-problem", help="build a robustness problem")
    make.add_argument("model", help="classifier model JSON file")
    make.add_argument("--x0", type=float, nargs="+", required=True)
    make.add_argument("--target", type=int, required=True)
    make.add_argument("--attack", type=int, required=True)
    noise = make.add_mutually_exclusive_group(required=True)
    noise.add_argument("--sigma", type=_positive_float, help="isotropic noise standard deviation")
    noise.add_argument("--sigma-diag", type=_positive_float, nargs="+", help="diagonal covariance entries")
    noise.add_argument("--cov-file", help="JSON file holding a full covariance matrix")
    noise.add_argument(
        "--radius-99.7", dest="radius_99_7", type=_positive_float,
        help="per-dimension 3-sigma radius; sets sigma = r / 3",
    )
    make.add_argument("--eta", type=float, default=config_manager.settings.eta)
    make.add_argument("--z", type=float, default=config_manager.settings.truncation_z)
    make.add_argument("--out", required=True, help="problem JSON destination")

    bench = commands.add_parser("bench", help="benchmark strategies over a corpus")
    bench.add_argument("corpus", help="directory of problem files")
    bench.add_argument(
        "--strategies", nargs="+", choices=[s.value for s in StrategyName],
        default=[s.value for s in StrategyName],
    )
    bench.add_argument("--no-split", action="store_true", help="add the root-only mode as a column")
    bench.add_argument("--reference", action="store_true", help="add oracle reference verdicts as a column")
    bench.add_argument("--out", default=None, help="'.csv' or '.json' table destination")
    _add_run_flags(bench)

    oracle = commands.add_parser("oracle", help="direct-sampling probability of a problem")
    oracle.add_argument("problem", help="problem JSON file")
    oracle.add_argument("--samples", type=int, default=config_manager.settings.oracle_samples)
    oracle.add_argument("--seed", type=int, default=None)
    oracle.add_argument("--workers", type=int, default=config_manager.settings.workers)
    oracle.add_argument("--reference", action="store_true", help="adaptive sample size and a verdict")
    return parser


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else config_manager.settings.seed


def _time_limit(value: Optional[float]) -> Optional[float]:
    return value if value is not None and value > 0 else None


def run_verify(config: RunConfig, record_trace: bool = False):
    """
    Load the problem named by config and run it in the configured mode.

    Returns:
        (verdict, payload dict printed as JSON)
    """
    problem = model_service.load_problem(config.problem_path, truncation_z=config.truncation_z)
    if config.eta is not None:
        problem = problem.model_copy(update={"eta": config.eta})

    if config.mode is RunMode.ORACLE:
        gaussian = GaussianInput(mean=problem.input_mean, cov=problem.input_cov)
        verdict, estimate = oracle_service.reference_verdict(
            problem.network, gaussian, problem.eta, config.seed, config.workers
        )
        payload = {
            "verdict": verdict.value,
            "P": estimate.value,
            "std_error": estimate.std_error,
            "n_samples": estimate.n_samples,
            "eta": problem.eta,
            "instance": problem.name,
        }
        return verdict, payload

    budget = config_manager.default_budget(**config.budget_overrides())
    if config.mode is RunMode.NO_SPLIT:
        report = verify_no_split(problem, budget, config.seed, config.strategy)
    else:
        report = verify(problem, config.strategy, budget, config.seed, config.tau, record_trace)
    payload = report.to_dict()
    if record_trace:
        payload["trace"] = [record.model_dump() for record in report.trace]
    return report.verdict, payload


def _cmd_verify(args: argparse.Namespace) -> int:
    config = RunConfig(
        problem_path=args.problem,
        strategy=args.strategy,
        eta=args.eta,
        tau=args.tau,
        n_samples=args.samples,
        split_depth=args.split_depth,
        batch_size=args.batch,
        workers=args.workers,
        time_limit_s=_time_limit(args.time_limit),
        seed=_seed(args),
        truncation_z=args.z,
        mode=args.mode,
    )
    verdict, payload = run_verify(config, record_trace=args.trace)
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_CODES[verdict]


def _cmd_make_problem(args: argparse.Namespace) -> int:
    network = model_service.load_model(args.model)
    if args.sigma is not None:
        sigma = args.sigma
    elif args.radius_99_7 is not None:
        sigma = args.radius_99_7 / 3.0
    elif args.sigma_diag is not None:
        sigma = args.sigma_diag
    else:
        sigma = json.loads(Path(args.cov_file).read_text())
    problem = make_robustness_problem(
        network, args.x0, sigma, args.target, args.attack, args.eta,
        truncation_z=args.z, name=Path(args.out).stem,
    )
    model_path = model_service.save_problem(problem, args.out)
    print(json.dumps({"problem": str(args.out), "model": str(model_path)}))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    configs = [BenchmarkConfig(strategy=s, mode=RunMode.BAB) for s in args.strategies]
    if args.no_split:
        configs.append(BenchmarkConfig(strategy=args.strategies[0], mode=RunMode.NO_SPLIT))
    if args.reference:
        configs.append(BenchmarkConfig(mode=RunMode.ORACLE))
    budget = config_manager.default_budget(
        time_limit_s=_time_limit(args.time_limit),
        n_samples=args.samples,
        split_depth=args.split_depth,
        batch_size=args.batch,
        workers=args.workers,
    )
    result = run_benchmark(args.corpus, configs, budget, _seed(args), args.tau, args.out)
    print(json.dumps([s.model_dump() for s in result.summaries], indent=2))
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    problem = model_service.load_problem(args.problem)
    gaussian = GaussianInput(mean=problem.input_mean, cov=problem.input_cov)
    if args.reference:
        verdict, estimate = oracle_service.reference_verdict(
            problem.network, gaussian, problem.eta, _seed(args), args.workers
        )
        payload = {"verdict": verdict.value}
    else:
        estimate = oracle_service.oracle_probability(
            problem.network, gaussian, None, args.samples, _seed(args), args.workers
        )
        payload = {}
    payload.update({"P": estimate.value, "std_error": estimate.std_error, "n_samples": estimate.n_samples})
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "verify": _cmd_verify,
    "make-problem": _cmd_make_problem,
    "bench": _cmd_bench,
    "oracle": _cmd_oracle,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR

    settings = config_manager.settings
    configure_logging(
        level=settings.log_level,
        renderer="json" if args.log_json else settings.log_renderer,
        verbose=args.verbose,
    )
    try:
        return COMMANDS[args.command](args)
    except (
        ModelError,
        BabEngineError,
        OracleError,
        ProblemGenerationError,
        BenchmarkError,
        ValidationError,
        OSError,
        ValueError,
    ) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
