"""
Unit tests for the branch pool and the branch-and-bound engine.
"""
import logging

import pytest
from pydantic import ValidationError

from app.models.bounds import Sign
from app.models.network import ProblemInstance
from app.models.probability import ProbEstimate
from app.models.verification import StopReason, StrategyName, Verdict, VerificationBudget
from app.services.bab import BabEngine, BabEngineError, BranchPool, bound_global_probability, verify, verify_no_split
from app.services.lirpa import compute_linear_bounds
from app.utils.timing import Deadline
from tests.conftest import make_branch


class TestBranchPool:
    """Max-gap ordering and aggregation."""

    def test_pops_largest_gap_first(self):
        pool = BranchPool()
        for branch in (make_branch(0, 10, 20), make_branch(1, 0, 50), make_branch(2, 30, 30)):
            pool.push(branch)

        assert [pool.pop().branch_id for _ in range(3)] == [1, 0, 2]

    def test_equal_gaps_pop_smaller_id(self):
        pool = BranchPool()
        pool.push(make_branch(5, 10, 20))
        pool.push(make_branch(3, 10, 20))

        assert pool.peek_gap() == pytest.approx(0.1)
        assert pool.pop().branch_id == 3

    def test_pop_from_empty_pool(self):
        with pytest.raises(BabEngineError, match="empty branch pool"):
            BranchPool().pop()

    def test_peek_on_empty_pool(self):
        assert BranchPool().peek_gap() is None

    def test_global_bounds_sum_and_charge_delta_once(self):
        pool = BranchPool()
        pool.push(make_branch(0, 10, 20))
        pool.push(make_branch(1, 30, 45))

        p_lower, p_upper = bound_global_probability(pool, truncation_mass=0.01)

        assert p_lower == pytest.approx(0.4)
        assert p_upper == pytest.approx(0.66)

    def test_global_upper_capped_at_one(self):
        pool = BranchPool()
        pool.push(make_branch(0, 60, 90))
        pool.push(make_branch(1, 10, 30))

        _, p_upper = bound_global_probability(pool, truncation_mass=0.05)

        assert p_upper == 1.0

    def test_empty_pool_has_no_bounds(self, caplog):
        with caplog.at_level(logging.ERROR):
            with pytest.raises(BabEngineError, match="empty pool"):
                bound_global_probability(BranchPool())
        assert "empty pool" in caplog.text


class TestBranchModel:
    """Branch invariants."""

    def test_rejects_inverted_bounds(self):
        branch = make_branch(0, 10, 20)
        with pytest.raises(ValidationError, match="exceeds p_upper"):
            branch.model_validate({
                **branch.model_dump(),
                "p_lower": ProbEstimate(hits=30, sample_count=100),
                "lower_event": branch.lower_event,
                "upper_event": branch.upper_event,
            })

    def test_gap_requires_marked_split(self):
        branch = make_branch(0, 10, 20)
        with pytest.raises(ValidationError, match="no marked split"):
            branch.model_validate({
                **branch.model_dump(),
                "marked_split": None,
                "lower_event": branch.lower_event,
                "upper_event": branch.upper_event,
            })

    def test_zero_gap_forbids_marked_split(self):
        branch = make_branch(0, 10, 20)
        with pytest.raises(ValidationError, match="zero gap"):
            branch.model_validate({
                **branch.model_dump(),
                "p_upper": ProbEstimate(hits=10, sample_count=100),
                "lower_event": branch.lower_event,
                "upper_event": branch.upper_event,
            })


class TestSplitBranch:
    """Single splits driven through the engine."""

    @pytest.fixture
    def engine(self, split_problem, budget):
        return BabEngine(split_problem, StrategyName.ORDERED, budget, seed=0, tau=0.01)

    def test_root_branch_is_marked(self, engine):
        root = engine.root_branch()

        assert root.branch_id == 0
        assert root.has_gap
        assert root.marked_split.key == (1, 0)

    def test_children_carry_both_signs(self, engine):
        # Arrange
        root = engine.root_branch()

        # Act
        child_geq, child_lt = engine.split_branch(root)

        # Assert
        assert engine.splits == 1
        assert (child_geq.branch_id, child_lt.branch_id) == (1, 2)
        assert child_geq.constraints.sign_of(1, 0) is Sign.GEQ_ZERO
        assert child_lt.constraints.sign_of(1, 0) is Sign.LT_ZERO
        assert child_geq.depth == child_lt.depth == 1
        # x < 0 rules out f > 0 from below
        assert child_lt.p_lower.hits == 0
        assert child_lt.marked_split.key == (1, 1)

    def test_unmarked_branch_cannot_split(self, linear_problem, budget):
        engine = BabEngine(linear_problem, StrategyName.ORDERED, budget, seed=0, tau=0.01)
        root = engine.root_branch()

        assert not root.has_gap
        with pytest.raises(BabEngineError, match="no marked split"):
            engine.split_branch(root)


class TestVerify:
    """End-to-end runs on hand-checked problems."""

    def test_babsr_prob_decides_with_one_split(self, split_problem, budget):
        report = verify(split_problem, StrategyName.BABSR_PROB, budget, seed=0)

        assert report.verdict is Verdict.FALSE
        assert report.splits == 1
        assert report.P_upper < split_problem.eta
        assert report.stop_reason is StopReason.DECIDED
        assert report.confidence >= budget.confidence_target

    def test_ordered_needs_more_splits(self, split_problem, budget):
        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0)

        assert report.verdict is Verdict.FALSE
        assert report.splits == 3
        assert report.branches_final == 4

    def test_bounds_bracket_true_probability(self, split_problem, budget):
        report = verify(split_problem, StrategyName.BABSR_PROB, budget, seed=1)

        # P[X > 0.5] for X ~ N(0, 1)
        assert report.P_lower - 0.005 <= 0.3085 <= report.P_upper + 0.005

    def test_linear_problem_decided_at_root(self, linear_problem, budget):
        report = verify(linear_problem, StrategyName.BABSR_PROB, budget, seed=0)

        assert report.verdict is Verdict.TRUE
        assert report.splits == 0
        assert report.P_lower >= linear_problem.eta

    def test_deeper_split_per_pop(self, split_problem):
        budget = VerificationBudget(time_limit_s=60.0, n_samples=100_000, split_depth=2)

        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0)

        assert report.verdict is Verdict.FALSE
        assert report.splits == 3

    def test_batch_and_workers_keep_verdict(self, split_problem):
        budget = VerificationBudget(time_limit_s=60.0, n_samples=100_000, batch_size=2, workers=2)

        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0)

        assert report.verdict is Verdict.FALSE

    def test_report_independent_of_worker_count(self, split_problem):
        single = VerificationBudget(time_limit_s=60.0, n_samples=50_000, workers=1)
        threaded = VerificationBudget(time_limit_s=60.0, n_samples=50_000, workers=3)

        first = verify(split_problem, StrategyName.ORDERED, single, seed=4)
        second = verify(split_problem, StrategyName.ORDERED, threaded, seed=4)

        assert first.to_json(include_timing=False) == second.to_json(include_timing=False)

    def test_repeated_runs_are_identical(self, split_problem, budget):
        first = verify(split_problem, StrategyName.BABSR_PROB, budget, seed=3)
        second = verify(split_problem, StrategyName.BABSR_PROB, budget, seed=3)

        assert first.to_json(include_timing=False) == second.to_json(include_timing=False)

    def test_time_limit_stops_search(self, split_problem):
        budget = VerificationBudget(time_limit_s=1e-9, n_samples=10_000)

        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0)

        assert report.verdict is Verdict.TIMEOUT
        assert report.stop_reason is StopReason.TIME_LIMIT
        assert report.splits == 0

    def test_truncation_mass_leaves_exhausted_pool_undecided(self, linear_network, budget):
        # Box of two standard deviations: delta ~ 0.0455 straddles eta
        problem = ProblemInstance(
            network=linear_network, input_mean=[0.0], input_cov=[1.0], eta=0.5, truncation_z=2.0
        )

        report = verify(problem, StrategyName.BABSR_PROB, budget, seed=0)

        assert report.verdict is Verdict.TIMEOUT
        assert report.stop_reason is StopReason.EXHAUSTED
        assert report.P_lower < 0.5 <= report.P_upper
        assert report.truncation_delta == pytest.approx(0.0455, abs=1e-4)

    def test_trace_records_iterations(self, split_problem, budget):
        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0, record_trace=True)

        assert len(report.trace) == 4
        assert report.trace[0].iteration == 0
        assert report.trace[0].pool_size == 1
        assert all(r.p_lower <= r.p_upper for r in report.trace)
        assert "trace" not in report.to_dict()

    def test_rejects_unknown_strategy(self, split_problem, budget):
        with pytest.raises(BabEngineError, match="invalid run configuration"):
            verify(split_problem, "largest-first", budget)

    def test_rejects_negative_tau(self, split_problem, budget):
        with pytest.raises(BabEngineError, match="tau must be nonnegative"):
            verify(split_problem, StrategyName.BABSR_PROB, budget, tau=-0.1)


class TestConfidenceEscalation:
    """Sample doubling when the attached confidence is below target."""

    @pytest.fixture
    def close_problem(self, linear_network):
        # P[0 <= X <= 3] ~= 0.4987 against eta = 0.48
        return ProblemInstance(
            network=linear_network, input_mean=[0.0], input_cov=[1.0], eta=0.48, truncation_z=3.0
        )

    def test_escalation_doubles_samples_until_confident(self, close_problem):
        budget = VerificationBudget(time_limit_s=60.0, n_samples=4_000)

        report = verify(close_problem, StrategyName.BABSR_PROB, budget, seed=0)

        assert report.verdict is Verdict.TRUE
        assert report.confidence_escalations >= 1
        assert report.n_samples == 4_000 * 2 ** report.confidence_escalations
        assert report.confidence >= budget.confidence_target

    def test_escalation_cap_keeps_low_confidence_verdict(self, close_problem):
        budget = VerificationBudget(time_limit_s=60.0, n_samples=4_000, max_escalations=0)

        report = verify(close_problem, StrategyName.BABSR_PROB, budget, seed=0)

        assert report.verdict is Verdict.TRUE
        assert report.confidence_escalations == 0
        assert report.n_samples == 4_000


class TestNoSplitMode:
    """Root-only bounding."""

    def test_undecided_root_times_out_without_splits(self, split_problem, budget):
        report = verify_no_split(split_problem, budget, seed=0)

        assert report.verdict is Verdict.TIMEOUT
        assert report.stop_reason is StopReason.NO_SPLIT
        assert report.splits == 0
        assert report.mode == "no-split"

    def test_decided_root_is_reported(self, linear_problem, budget):
        report = verify_no_split(linear_problem, budget, seed=0)

        assert report.verdict is Verdict.TRUE
        assert report.stop_reason is StopReason.DECIDED


class _CountdownDeadline:
    """Deadline that reports expiry from the given call to expired() onwards."""

    elapsed = 0.0

    def __init__(self, expire_on: int):
        self.calls = 0
        self.expire_on = expire_on

    def expired(self) -> bool:
        self.calls += 1
        return self.calls >= self.expire_on


class TestTimeLimitWithinIteration:
    """Deadline checks between estimation batches."""

    @pytest.fixture
    def engine_with_children(self, split_problem, budget):
        engine = BabEngine(split_problem, StrategyName.ORDERED, budget, seed=0, tau=0.01)
        pool = BranchPool()
        for child in engine.split_branch(engine.root_branch()):
            pool.push(child)
        return engine, pool

    def test_expired_deadline_abandons_escalation(self, engine_with_children, budget):
        # Arrange
        engine, pool = engine_with_children
        before = {b.branch_id: b.p_upper.hits for b in pool.branches()}

        # Act
        escalated = engine._escalate(pool, _CountdownDeadline(expire_on=1))

        # Assert
        assert not escalated
        assert engine.n_samples == budget.n_samples
        assert engine.escalations == 0
        assert engine.sampling_round == 0
        assert {b.branch_id: b.p_upper.hits for b in pool.branches()} == before

    def test_expired_deadline_mid_wave_keeps_parent(self, split_problem, budget, monkeypatch):
        # the pre-wave check passes, the check between the two child estimates fails
        monkeypatch.setattr("app.services.bab.engine.Deadline", lambda limit_s: _CountdownDeadline(expire_on=2))

        report = verify(split_problem, StrategyName.ORDERED, budget, seed=0)

        assert report.verdict is Verdict.TIMEOUT
        assert report.stop_reason is StopReason.TIME_LIMIT
        assert report.splits == 0
        assert report.branches_final == 1
        assert report.P_lower - 0.005 <= 0.3085 <= report.P_upper + 0.005


class TestSelectorFollowsEscalation:
    """babsr-prob uncertainty sampling scales with the branch sample count."""

    def test_uncertainty_samples_double_with_escalation(self, split_problem, budget):
        # Arrange
        engine = BabEngine(split_problem, StrategyName.BABSR_PROB, budget, seed=0, tau=0.01)
        pool = BranchPool()
        pool.push(engine.root_branch())
        assert engine.selector.uncertainty_samples == 10_000

        # Act
        escalated = engine._escalate(pool, Deadline(None))

        # Assert
        assert escalated
        assert engine.n_samples == 200_000
        assert engine.selector.uncertainty_samples == 20_000


class TestRootBounds:
    """Root bounds are propagated once per run."""

    def test_root_bounds_computed_once(self, split_problem, budget, monkeypatch):
        # Arrange
        calls = []

        def counting(network, box, constraints):
            calls.append(constraints)
            return compute_linear_bounds(network, box, constraints)

        monkeypatch.setattr("app.services.bab.engine.compute_linear_bounds", counting)

        # Act
        report = verify_no_split(split_problem, budget, seed=0)

        # Assert
        assert report.stop_reason is StopReason.NO_SPLIT
        assert len(calls) == 1
        assert len(calls[0]) == 0
