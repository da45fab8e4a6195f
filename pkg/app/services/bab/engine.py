"""
Branch-and-bound verification of P[f(X) > 0] >= eta.

The engine keeps a pool of branches, each a set of preactivation sign
constraints with Monte Carlo bounds on the probability mass of its region.
Branch bounds are restricted to the truncation box; the box complement
delta is added once to the global upper bound.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Set, Tuple, TypeVar

from pydantic import ValidationError

from app.config.settings import config_manager
from app.models.bounds import ConstraintSet, LinearBoundsSet, NeuronKey, Sign
from app.models.network import ProblemInstance
from app.models.probability import BoundSide, GaussianInput
from app.models.verification import (
    Branch,
    IterationRecord,
    RunMode,
    SplitChoice,
    StopReason,
    StrategyName,
    Verdict,
    VerificationBudget,
    VerificationReport,
)
from app.services.bab.pool import BabEngineError, BranchPool, bound_global_probability
from app.services.lirpa.propagation import compute_linear_bounds
from app.services.probability.confidence import bernstein_confidence
from app.services.probability.events import build_branch_events, estimate_branch
from app.services.probability.sampling import truncation_domain
from app.services.split_service import SplitSelector
from app.utils.seeding import BRANCH_STREAM, UNCERTAINTY_STREAM, SeedDeriver
from app.utils.timing import Deadline, format_duration

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# A leaf awaiting estimation: its constraints and nesting depth
Leaf = Tuple[ConstraintSet, int]


class BabEngine:
    """One verification run over a folded problem."""

    def __init__(
        self,
        problem: ProblemInstance,
        strategy: StrategyName,
        budget: VerificationBudget,
        seed: int,
        tau: float,
        mode: RunMode = RunMode.BAB,
        record_trace: bool = False,
    ):
        self.problem = problem
        self.network = problem.network
        self.strategy = StrategyName(strategy)
        self.budget = budget
        self.seed = seed
        self.mode = mode
        self.record_trace = record_trace

        self.gaussian = GaussianInput(mean=problem.input_mean, cov=problem.input_cov)
        self.domain = truncation_domain(self.gaussian, problem.truncation_z)
        self.selector = SplitSelector(
            self.strategy, self.network, self.gaussian, self.domain, tau, budget.n_samples
        )

        self.n_samples = budget.n_samples
        self.sampling_round = 0
        self.splits = 0
        self.escalations = 0
        self.trace: List[IterationRecord] = []
        self._next_id = 0
        self._split_neurons: Set[NeuronKey] = set()
        self._executor: Optional[ThreadPoolExecutor] = None

    # ------------------------------------------------------------ helpers

    @contextmanager
    def _workers(self) -> Iterator[None]:
        if self.budget.workers > 1:
            with ThreadPoolExecutor(max_workers=self.budget.workers) as executor:
                self._executor = executor
                try:
                    yield
                finally:
                    self._executor = None
        else:
            yield

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Apply fn to every item; results keep input order whatever the worker count."""
        if self._executor is None or len(items) <= 1:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def _map_within(self, fn: Callable[[T], R], items: Sequence[T], deadline: Deadline) -> Optional[List[R]]:
        """
        Like _map, in batches of one task per worker with a deadline check between batches.

        Returns:
            Results in input order, or None when the deadline expired before every batch ran
        """
        step = max(1, self.budget.workers)
        results: List[R] = []
        for start in range(0, len(items), step):
            if start and deadline.expired():
                logger.info(f"⏱️ BAB: time limit hit after {start}/{len(items)} estimates")
                return None
            results.extend(self._map(fn, items[start:start + step]))
        return results

    def _branch_seed(self, branch_id: int) -> int:
        return SeedDeriver.derive(self.seed, BRANCH_STREAM, branch_id, self.sampling_round)

    def _selection_seed(self, branch_id: int) -> int:
        return SeedDeriver.derive(self.seed, UNCERTAINTY_STREAM, branch_id)

    def _allocate_ids(self, count: int) -> List[int]:
        ids = list(range(self._next_id, self._next_id + count))
        self._next_id += count
        return ids

    # ------------------------------------------------------------ branches

    def _mark(self, branch_id: int, constraints: ConstraintSet, bounds=None) -> SplitChoice:
        if bounds is None:
            bounds = compute_linear_bounds(self.network, self.domain.box, constraints)
        return self.selector.select(bounds, constraints, self._selection_seed(branch_id))

    def _build_branch(self, job: Tuple[int, Leaf], bounds: Optional[LinearBoundsSet] = None) -> Branch:
        """Bound, estimate and mark one leaf. Pure given the job."""
        branch_id, (constraints, depth) = job
        if bounds is None:
            bounds = compute_linear_bounds(self.network, self.domain.box, constraints)
        lower_event, upper_event = build_branch_events(bounds, constraints)
        p_lower, p_upper = estimate_branch(
            lower_event, upper_event, self.gaussian, self.domain, self.n_samples,
            self._branch_seed(branch_id), charge_truncation=False,
            chunk_size=self.budget.sample_chunk_size,
        )
        marked = None
        if p_lower.value < p_upper.value:
            marked = self._mark(branch_id, constraints, bounds)
        return Branch(
            branch_id=branch_id,
            constraints=constraints,
            p_lower=p_lower,
            p_upper=p_upper,
            lower_event=lower_event,
            upper_event=upper_event,
            marked_split=marked,
            depth=depth,
        )

    def _reestimate(self, branch: Branch) -> Branch:
        """Fresh estimate of a stored branch at the current sample count."""
        p_lower, p_upper = estimate_branch(
            branch.lower_event, branch.upper_event, self.gaussian, self.domain, self.n_samples,
            self._branch_seed(branch.branch_id), charge_truncation=False,
            chunk_size=self.budget.sample_chunk_size,
        )
        marked = branch.marked_split
        if p_lower.value < p_upper.value and marked is None:
            marked = self._mark(branch.branch_id, branch.constraints)
        elif p_lower.value >= p_upper.value:
            marked = None
        return branch.model_copy(update={"p_lower": p_lower, "p_upper": p_upper, "marked_split": marked})

    def _expand(self, parent: Branch) -> Tuple[List[Leaf], int, List[NeuronKey]]:
        """
        Split a popped branch split_depth times.

        Intermediate nodes are bounded to pick their next split but not
        estimated; a node with no unstable neuron stops early as a leaf.

        Returns:
            (leaves, splits performed, neurons split on)
        """
        if parent.marked_split is None:
            raise BabEngineError(f"branch {parent.branch_id} popped without a marked split")

        frontier: List[Tuple[ConstraintSet, Optional[SplitChoice]]] = [(parent.constraints, parent.marked_split)]
        leaves: List[Leaf] = []
        split_count = 0
        used: List[NeuronKey] = []

        for level in range(self.budget.split_depth):
            next_frontier: List[Tuple[ConstraintSet, Optional[SplitChoice]]] = []
            for constraints, choice in frontier:
                if choice is None:
                    leaves.append((constraints, parent.depth + level))
                    continue
                split_count += 1
                used.append(choice.key)
                for sign in (Sign.GEQ_ZERO, Sign.LT_ZERO):
                    child = constraints.with_constraint(choice.layer, choice.neuron, sign)
                    next_choice = None
                    if level < self.budget.split_depth - 1:
                        bounds = compute_linear_bounds(self.network, self.domain.box, child)
                        if bounds.unstable_neurons():
                            seed = SeedDeriver.derive(
                                self.seed, UNCERTAINTY_STREAM, parent.branch_id, level + 1, len(next_frontier)
                            )
                            next_choice = self.selector.select(bounds, child, seed)
                    next_frontier.append((child, next_choice))
            frontier = next_frontier

        leaves.extend((constraints, parent.depth + self.budget.split_depth) for constraints, _ in frontier)
        return leaves, split_count, used

    def split_branch(self, parent: Branch) -> Tuple[Branch, Branch]:
        """
        Split a marked branch once into its GEQ and LT children.

        Each child gets fresh linear bounds, fresh estimates and a marked
        split iff its gap is positive. The caller owns pool insertion.

        Raises:
            BabEngineError: If the parent carries no marked split
        """
        if parent.marked_split is None:
            error_msg = f"branch {parent.branch_id} has no marked split"
            logger.error(error_msg)
            raise BabEngineError(error_msg)
        choice = parent.marked_split
        leaves = [
            (parent.constraints.with_constraint(choice.layer, choice.neuron, sign), parent.depth + 1)
            for sign in (Sign.GEQ_ZERO, Sign.LT_ZERO)
        ]
        child_geq, child_lt = self._map(self._build_branch, list(zip(self._allocate_ids(2), leaves)))
        self.splits += 1
        self._split_neurons.add(choice.key)
        return child_geq, child_lt

    def root_branch(self, bounds: Optional[LinearBoundsSet] = None) -> Branch:
        """Bound, estimate and mark the unconstrained branch; reuses precomputed root bounds."""
        return self._build_branch((self._allocate_ids(1)[0], (ConstraintSet(), 0)), bounds)

    # ------------------------------------------------------------ run

    def _global_bounds(self, pool: BranchPool) -> Tuple[float, float]:
        return bound_global_probability(pool, self.domain.delta)

    def _decide(self, p_lower: float, p_upper: float) -> Optional[Verdict]:
        if p_lower >= self.problem.eta:
            return Verdict.TRUE
        if p_upper < self.problem.eta:
            return Verdict.FALSE
        return None

    def _confidence(self, pool: BranchPool, verdict: Verdict) -> float:
        branches = pool.branches()
        if verdict is Verdict.TRUE:
            return bernstein_confidence(
                [b.p_lower for b in branches], self.n_samples, self.problem.eta, BoundSide.LOWER
            )
        return bernstein_confidence(
            [b.p_upper for b in branches], self.n_samples, self.problem.eta, BoundSide.UPPER,
            offset=self.domain.delta,
        )

    def _escalate(self, pool: BranchPool, deadline: Deadline) -> bool:
        """
        Double the sample count and re-estimate every branch with fresh seeds.

        Returns:
            False when the deadline cut the re-estimation short; the pool and
            sample count are then left as they were
        """
        self.n_samples *= 2
        self.sampling_round += 1
        branches = self._map_within(self._reestimate, pool.branches(), deadline)
        if branches is None:
            self.n_samples //= 2
            self.sampling_round -= 1
            logger.info("🔁 ESCALATE: abandoned at the time limit, keeping the previous estimates")
            return False
        self.escalations += 1
        self.selector.update_sample_count(self.n_samples)
        pool.replace_all(branches)
        logger.info(
            f"🔁 ESCALATE: round {self.sampling_round}, {len(pool)} branches re-estimated with N={self.n_samples}"
        )
        return True

    def _split_cap(self, root_unstable: Set[NeuronKey], pending: Set[NeuronKey]) -> int:
        return 2 ** len(root_unstable | self._split_neurons | pending)

    def run(self) -> VerificationReport:
        deadline = Deadline(self.budget.time_limit_s)
        pool = BranchPool()
        confidence_target = self.budget.confidence_target

        with self._workers():
            root_bounds = compute_linear_bounds(self.network, self.domain.box, ConstraintSet())
            root_unstable = set(root_bounds.unstable_neurons())
            pool.push(self.root_branch(root_bounds))
            logger.info(
                f"🌳 BAB: start {self.problem.name or 'problem'} strategy={self.strategy.value} "
                f"eta={self.problem.eta} N={self.n_samples} delta={self.domain.delta:.2e} "
                f"root unstable={len(root_unstable)}"
            )

            iteration = 0
            while True:
                p_lower, p_upper = self._global_bounds(pool)
                top_gap = pool.peek_gap() or 0.0
                if self.record_trace:
                    self.trace.append(IterationRecord(
                        iteration=iteration, p_lower=p_lower, p_upper=p_upper,
                        pool_size=len(pool), popped_gap=top_gap, n_samples=self.n_samples,
                    ))
                logger.debug(
                    f"🌳 BAB: iter {iteration} P_lower={p_lower:.6f} P_upper={p_upper:.6f} "
                    f"pool={len(pool)} max_gap={top_gap:.6f}"
                )

                verdict = self._decide(p_lower, p_upper)
                if verdict is not None:
                    confidence = self._confidence(pool, verdict)
                    while (
                        confidence < confidence_target
                        and self.escalations < self.budget.max_escalations
                        and not deadline.expired()
                    ):
                        if not self._escalate(pool, deadline):
                            break
                        p_lower, p_upper = self._global_bounds(pool)
                        verdict = self._decide(p_lower, p_upper)
                        if verdict is None:
                            break
                        confidence = self._confidence(pool, verdict)
                    if verdict is not None:
                        return self._report(verdict, p_lower, p_upper, confidence, pool, deadline, StopReason.DECIDED)
                    logger.info("🔁 ESCALATE: re-estimation withdrew the verdict, resuming search")
                    iteration += 1
                    continue

                if self.mode is RunMode.NO_SPLIT:
                    return self._report(Verdict.TIMEOUT, p_lower, p_upper, 0.0, pool, deadline, StopReason.NO_SPLIT)
                if top_gap <= 0.0:
                    return self._report(Verdict.TIMEOUT, p_lower, p_upper, 0.0, pool, deadline, StopReason.EXHAUSTED)
                if deadline.expired():
                    return self._report(Verdict.TIMEOUT, p_lower, p_upper, 0.0, pool, deadline, StopReason.TIME_LIMIT)

                wave: List[Branch] = []
                while len(wave) < self.budget.batch_size and len(pool) and pool.peek_gap() > 0.0:
                    wave.append(pool.pop())
                for parent in wave:
                    if not parent.gap > 0.0:
                        raise BabEngineError(f"popped branch {parent.branch_id} has no positive gap")

                expansions = self._map(self._expand, wave)
                leaves: List[Leaf] = []
                wave_splits = 0
                wave_neurons: Set[NeuronKey] = set()
                for parent_leaves, split_count, used in expansions:
                    leaves.extend(parent_leaves)
                    wave_splits += split_count
                    wave_neurons.update(used)
                cap = self._split_cap(root_unstable, wave_neurons)
                if self.splits + wave_splits >= cap:
                    error_msg = f"split count {self.splits + wave_splits} reached the finite-termination cap {cap}"
                    logger.error(error_msg)
                    raise BabEngineError(error_msg)

                jobs = list(zip(self._allocate_ids(len(leaves)), leaves))
                children = self._map_within(self._build_branch, jobs, deadline)
                if children is None:
                    # the popped parents still cover their regions
                    for parent in wave:
                        pool.push(parent)
                    p_lower, p_upper = self._global_bounds(pool)
                    return self._report(Verdict.TIMEOUT, p_lower, p_upper, 0.0, pool, deadline, StopReason.TIME_LIMIT)
                self.splits += wave_splits
                self._split_neurons.update(wave_neurons)
                for child in children:
                    pool.push(child)
                iteration += 1

    def _report(
        self,
        verdict: Verdict,
        p_lower: float,
        p_upper: float,
        confidence: float,
        pool: BranchPool,
        deadline: Deadline,
        stop_reason: StopReason,
    ) -> VerificationReport:
        report = VerificationReport(
            verdict=verdict,
            P_lower=p_lower,
            P_upper=p_upper,
            confidence=confidence,
            splits=self.splits,
            branches_final=len(pool),
            wall_time=deadline.elapsed,
            seed=self.seed,
            strategy=self.strategy.value,
            mode=self.mode.value,
            eta=self.problem.eta,
            n_samples=self.n_samples,
            confidence_escalations=self.escalations,
            truncation_delta=self.domain.delta,
            stop_reason=stop_reason,
            instance=self.problem.name,
            trace=self.trace,
        )
        logger.info(
            f"🏁 BAB: {verdict.value} ({stop_reason.value}) P in [{p_lower:.6f}, {p_upper:.6f}] "
            f"confidence={confidence:.6f} splits={self.splits} in {format_duration(deadline.elapsed)}"
        )
        return report


def _resolve_budget(budget: Optional[VerificationBudget]) -> VerificationBudget:
    return budget if budget is not None else config_manager.default_budget()


def verify(
    problem: ProblemInstance,
    strategy: StrategyName = StrategyName.BABSR_PROB,
    budget: Optional[VerificationBudget] = None,
    seed: int = 0,
    tau: Optional[float] = None,
    record_trace: bool = False,
) -> VerificationReport:
    """
    Decide P[f(X) > 0] >= eta by branch and bound.

    Args:
        problem: Folded problem instance
        strategy: Split selection strategy
        budget: Time, sampling and concurrency limits; settings defaults when None
        seed: Run seed; the report is deterministic given seed, budget and strategy
        tau: Uncertainty threshold of babsr-prob
        record_trace: Keep per-iteration global bounds on the report

    Returns:
        VerificationReport

    Raises:
        BabEngineError: If the strategy or budget is invalid, or an engine invariant breaks
    """
    try:
        strategy = StrategyName(strategy)
        budget = _resolve_budget(budget)
    except (ValueError, ValidationError) as e:
        raise BabEngineError(f"invalid run configuration: {e}") from e
    tau = config_manager.settings.tau if tau is None else tau
    if tau < 0.0:
        raise BabEngineError(f"tau must be nonnegative, got {tau}")
    engine = BabEngine(problem, strategy, budget, seed, tau, RunMode.BAB, record_trace)
    return engine.run()


def verify_no_split(
    problem: ProblemInstance,
    budget: Optional[VerificationBudget] = None,
    seed: int = 0,
    strategy: StrategyName = StrategyName.BABSR_PROB,
) -> VerificationReport:
    """
    Root-branch-only verification: decides only when the root bounds already
    do, otherwise TIMEOUT with zero splits and stop reason no_split.
    """
    try:
        budget = _resolve_budget(budget)
    except ValidationError as e:
        raise BabEngineError(f"invalid run configuration: {e}") from e
    engine = BabEngine(problem, strategy, budget, seed, config_manager.settings.tau, RunMode.NO_SPLIT)
    return engine.run()
