"""
Problem generation (robustness instances and random toy corpora) and
benchmark runs over a corpus of problem files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.models.benchmark import (
    ROW_COLUMNS,
    SUMMARY_COLUMNS,
    BenchmarkConfig,
    BenchmarkResult,
    BenchmarkRow,
    BenchmarkSummary,
)
from app.models.network import AffineLayer, HalfSpaceSpec, ModelError, Network, ProblemInstance
from app.models.probability import GaussianInput
from app.models.verification import RunMode, VerificationBudget
from app.services.bab.engine import verify, verify_no_split
from app.services.model_service import model_service
from app.services.oracle_service import oracle_service
from app.utils.timing import Deadline, format_duration

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ProblemGenerationError(Exception):
    """Custom exception for problem generation errors."""
    pass


class BenchmarkError(Exception):
    """Custom exception for benchmark errors."""
    pass


def _covariance(sigma, dim: int) -> np.ndarray:
    """Scalar sigma -> sigma^2 on the diagonal; a vector is a diagonal covariance; a matrix is used as is."""
    array = np.asarray(sigma, dtype=np.float64)
    if array.ndim == 0:
        if not float(array) > 0.0:
            raise ProblemGenerationError(f"noise standard deviation must be positive, got {float(array)}")
        return np.full(dim, float(array) ** 2)
    if array.ndim == 1 and array.shape[0] == dim:
        return array
    if array.shape == (dim, dim):
        return array
    raise ProblemGenerationError(f"noise description of shape {array.shape} does not fit input dimension {dim}")


def make_robustness_problem(
    network: Network,
    x0: Sequence[float],
    sigma,
    target: int,
    attack: int,
    eta: float,
    truncation_z: float = 3.0,
    name: Optional[str] = None,
) -> ProblemInstance:
    """
    Robustness instance 'class target beats class attack under Gaussian noise around x0'.

    Args:
        network: Multi-output classifier
        x0: Correctly classified input
        sigma: Isotropic noise std, a diagonal covariance vector or a full covariance matrix
        target: Class predicted at x0
        attack: Competing class
        eta: Probability threshold
        truncation_z: Half-width of the truncation box in standard deviations
        name: Optional instance name

    Returns:
        Folded ProblemInstance with c = e_target - e_attack, d = 0, mean = x0

    Raises:
        ProblemGenerationError: If x0 is misclassified or the classes are invalid
    """
    m = network.output_dim
    if not (0 <= target < m and 0 <= attack < m) or target == attack:
        raise ProblemGenerationError(f"target {target} and attack {attack} must be distinct classes in 0..{m - 1}")

    x0 = np.asarray(x0, dtype=np.float64)
    predicted = int(np.argmax(model_service.evaluate(network, x0)))
    if predicted != target:
        error_msg = f"x0 is classified as {predicted}, not target {target}; refusing to build the problem"
        logger.error(error_msg)
        raise ProblemGenerationError(error_msg)

    c = np.zeros(m)
    c[target], c[attack] = 1.0, -1.0
    folded = model_service.fold_spec(network, HalfSpaceSpec(c=c, d=0.0))
    try:
        return ProblemInstance(
            network=folded,
            input_mean=x0,
            input_cov=_covariance(sigma, network.input_dim),
            eta=eta,
            truncation_z=truncation_z,
            name=name,
        )
    except ValueError as e:
        raise ProblemGenerationError(f"invalid robustness problem: {e}") from e


def generate_toy_network(
    rng: np.random.Generator,
    widths: Sequence[int] = (5, 10, 10, 1),
    weight_std: float = 0.5,
    max_draws: int = 10_000,
) -> Network:
    """
    Random ReLU network with i.i.d. N(0, weight_std^2) weights and biases,
    redrawn until f(0) > 0.

    Raises:
        ProblemGenerationError: If no draw satisfies f(0) > 0
    """
    if widths[-1] != 1:
        raise ProblemGenerationError(f"toy networks need a scalar output, got widths {list(widths)}")
    origin = np.zeros(widths[0])
    for draw in range(max_draws):
        layers = [
            AffineLayer(
                weights=rng.normal(0.0, weight_std, size=(n_out, n_in)),
                bias=rng.normal(0.0, weight_std, size=n_out),
            )
            for n_in, n_out in zip(widths[:-1], widths[1:])
        ]
        network = Network(layers=layers)
        if model_service.forward(network, origin) > 0.0:
            logger.debug(f"🎲 TOY: accepted draw {draw} for widths {list(widths)}")
            return network
    raise ProblemGenerationError(f"no network with f(0) > 0 in {max_draws} draws")


def generate_toy_corpus(
    n: int,
    seed: int,
    out_dir: Optional[PathLike] = None,
    widths: Sequence[int] = (5, 10, 10, 1),
    weight_std: float = 0.5,
    noise_var: float = 0.1,
    eta: float = 0.95,
    truncation_z: float = 3.0,
) -> List[ProblemInstance]:
    """
    n toy problems with mean 0 and covariance noise_var * I, optionally written to out_dir.
    """
    rng = np.random.default_rng(seed)
    problems = []
    for index in range(n):
        network = generate_toy_network(rng, widths, weight_std)
        problem = ProblemInstance(
            network=network,
            input_mean=np.zeros(widths[0]),
            input_cov=np.full(widths[0], noise_var),
            eta=eta,
            truncation_z=truncation_z,
            name=f"toy_{index:02d}",
        )
        problems.append(problem)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            model_service.save_problem(problem, out / f"{problem.name}.json")
    logger.info(f"🎲 TOY: generated {n} problems with widths {list(widths)} (seed {seed})")
    return problems


def corpus_files(corpus_dir: PathLike) -> List[Path]:
    """Problem files of a corpus directory in name order; model files are skipped."""
    directory = Path(corpus_dir)
    if not directory.is_dir():
        raise BenchmarkError(f"corpus directory not found: {directory}")
    return sorted(p for p in directory.glob("*.json") if not p.name.endswith(".model.json"))


def _run_one(
    problem: ProblemInstance, config: BenchmarkConfig, budget: VerificationBudget, seed: int, tau: float
) -> BenchmarkRow:
    if config.mode is RunMode.ORACLE:
        deadline = Deadline(None)
        gaussian = GaussianInput(mean=problem.input_mean, cov=problem.input_cov)
        verdict, estimate = oracle_service.reference_verdict(problem.network, gaussian, problem.eta, seed)
        return BenchmarkRow(
            instance=problem.name or "", strategy=config.label, verdict=verdict.value,
            P_lower=estimate.value, P_upper=estimate.value, confidence=0.0, splits=0, time_s=deadline.elapsed,
        )
    if config.mode is RunMode.NO_SPLIT:
        report = verify_no_split(problem, budget, seed, config.strategy)
    else:
        report = verify(problem, config.strategy, budget, seed, tau)
    return BenchmarkRow(
        instance=problem.name or "", strategy=config.label, verdict=report.verdict.value,
        P_lower=report.P_lower, P_upper=report.P_upper, confidence=report.confidence,
        splits=report.splits, time_s=report.wall_time,
    )


def summarize(rows: Sequence[BenchmarkRow], labels: Sequence[str]) -> List[BenchmarkSummary]:
    """Per-configuration aggregates recomputed from per-instance rows."""
    summaries = []
    for label in labels:
        selected = [r for r in rows if r.strategy == label]
        decided = [r for r in selected if r.verdict != "TIMEOUT"]
        count = len(selected)
        summaries.append(BenchmarkSummary(
            strategy=label,
            instances=count,
            decided=len(decided),
            success_rate=len(decided) / count if count else 0.0,
            avg_time_s=sum(r.time_s for r in selected) / count if count else 0.0,
            avg_splits=sum(r.splits for r in selected) / count if count else 0.0,
        ))
    return summaries


def run_benchmark(
    corpus_dir: PathLike,
    configs: Sequence[BenchmarkConfig],
    budget: VerificationBudget,
    seed: int = 0,
    tau: float = 0.01,
    out_path: Optional[PathLike] = None,
) -> BenchmarkResult:
    """
    Run every configuration on every problem of a corpus.

    Rows are ordered by instance name, then by configuration order.

    Args:
        out_path: Optional '.csv' or '.json' destination for the table

    Raises:
        BenchmarkError: If the corpus is empty or a problem file cannot be loaded
    """
    files = corpus_files(corpus_dir)
    if not files:
        raise BenchmarkError(f"no problem files in {corpus_dir}")
    if not configs:
        raise BenchmarkError("no benchmark configurations given")

    rows: List[BenchmarkRow] = []
    for path in files:
        try:
            problem = model_service.load_problem(path)
        except ModelError as e:
            raise BenchmarkError(f"cannot load {path.name}: {e}") from e
        for config in configs:
            row = _run_one(problem, config, budget, seed, tau)
            logger.info(
                f"📊 BENCH: {row.instance} [{row.strategy}] {row.verdict} splits={row.splits} "
                f"in {format_duration(row.time_s)}"
            )
            rows.append(row)

    labels = list(dict.fromkeys(config.label for config in configs))
    result = BenchmarkResult(rows=rows, summaries=summarize(rows, labels))
    if out_path is not None:
        write_benchmark(result, out_path)
    return result


def write_benchmark(result: BenchmarkResult, out_path: PathLike) -> Tuple[Path, ...]:
    """
    Write the table as JSON, or as CSV with a '.summary.csv' sibling for aggregates.
    """
    path = Path(out_path)
    if path.suffix == ".json":
        path.write_text(json.dumps(result.model_dump(mode="json"), indent=2))
        return (path,)

    summary_path = path.with_name(f"{path.stem}.summary.csv")
    for target, columns, records in (
        (path, ROW_COLUMNS, result.rows),
        (summary_path, SUMMARY_COLUMNS, result.summaries),
    ):
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns))
            writer.writeheader()
            for record in records:
                writer.writerow(record.model_dump())
    logger.info(f"📊 BENCH: wrote {path.name} and {summary_path.name}")
    return path, summary_path
