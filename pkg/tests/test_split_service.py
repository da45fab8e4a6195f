"""
Unit tests for split selection strategies.
"""
import logging

import numpy as np
import pytest

from app.models.bounds import ConstraintSet, InputBox, Sign
from app.models.verification import StrategyName
from app.services.benchmark_service import generate_toy_network
from app.services.lirpa import compute_linear_bounds
from app.services.split_service import (
    SplitSelectionError,
    SplitSelector,
    babsr_scores,
    ranked_candidates,
    select_babsr_prob,
    select_ordered,
)


@pytest.fixture
def split_bounds(split_network, standard_domain):
    return compute_linear_bounds(split_network, standard_domain.box, ConstraintSet())


@pytest.fixture
def deep_bounds(deep_network, standard_domain):
    return compute_linear_bounds(deep_network, standard_domain.box, ConstraintSet())


class TestOrderedStrategy:
    """Lowest-index unstable neuron of the earliest layer."""

    def test_picks_first_unstable_neuron(self, split_bounds):
        choice = select_ordered(split_bounds, ConstraintSet())
        assert choice.key == (1, 0)
        assert choice.uncertainty == 0.0

    def test_skips_constrained_neurons(self, split_network, standard_domain):
        constraints = ConstraintSet(entries={(1, 0): Sign.LT_ZERO})
        bounds = compute_linear_bounds(split_network, standard_domain.box, constraints)

        assert select_ordered(bounds, constraints).key == (1, 1)

    def test_no_unstable_neuron(self, stable_network, caplog):
        bounds = compute_linear_bounds(stable_network, InputBox(lo=[-3.0], hi=[3.0]), ConstraintSet())
        with caplog.at_level(logging.ERROR):
            with pytest.raises(SplitSelectionError, match="no unstable neuron"):
                select_ordered(bounds, ConstraintSet())
        assert "no unstable neuron" in caplog.text

    def test_choice_rows_always_coincide(self):
        rng = np.random.default_rng(5)
        box = InputBox(lo=np.full(5, -1.0), hi=np.full(5, 1.0))
        for _ in range(30):
            network = generate_toy_network(rng)
            neuron = int(rng.integers(0, 10))
            constraints = ConstraintSet(entries={(1, neuron): Sign(rng.choice(["geq", "lt"]))})
            bounds = compute_linear_bounds(network, box, constraints)
            if not bounds.unstable_neurons():
                continue

            choice = select_ordered(bounds, constraints)

            assert bounds.bundle(choice.layer).rows_identical(choice.neuron)


class TestBabsrScores:
    """Intercept scores and their ranking."""

    def test_scores_weight_intercept_by_output_coefficient(self, split_bounds):
        scores = babsr_scores(split_bounds, ConstraintSet())

        assert scores[(1, 0)] == 0.0
        assert scores[(1, 1)] == pytest.approx(1.5)

    def test_ranking_breaks_ties_by_index(self):
        ranked = ranked_candidates({(2, 1): 1.0, (1, 3): 1.0, (1, 0): 0.5, (2, 0): 2.0})
        assert [key for key, _ in ranked] == [(2, 0), (1, 3), (2, 1), (1, 0)]

    def test_scores_unchanged_by_agreeing_later_constraints(self, toy_rng):
        # Arrange: a layer-2 constraint that agrees with an already-stable sign
        network = generate_toy_network(toy_rng)
        box = InputBox(lo=np.full(5, -1.0), hi=np.full(5, 1.0))
        root = compute_linear_bounds(network, box, ConstraintSet())
        stable = [
            (j, Sign.GEQ_ZERO if root.lower(2)[j] >= 0.0 else Sign.LT_ZERO)
            for j in range(10)
            if root.lower(2)[j] >= 0.0 or root.upper(2)[j] <= 0.0
        ]
        if not stable:
            pytest.skip("no stable layer-2 neuron in this draw")
        neuron, sign = stable[0]
        constraints = ConstraintSet(entries={(2, neuron): sign})

        # Act
        before = babsr_scores(root, ConstraintSet())
        after = babsr_scores(compute_linear_bounds(network, box, constraints), constraints)

        # Assert
        assert after == before


class TestBabsrProb:
    """Uncertainty-aware selection."""

    def test_zero_uncertainty_top_candidate_is_taken(self, split_bounds, split_network, standard_gaussian,
                                                     standard_domain):
        choice = select_babsr_prob(
            split_bounds, ConstraintSet(), split_network, standard_gaussian, standard_domain,
            threshold=0.01, n_samples=10_000, seed=0,
        )
        assert choice.key == (1, 1)
        assert choice.score == pytest.approx(1.5)

    def test_uncertain_candidate_skipped_below_threshold(self, deep_bounds, deep_network, standard_gaussian,
                                                          standard_domain):
        # (2, 0) scores highest but carries ~0.67 uncertainty
        choice = select_babsr_prob(
            deep_bounds, ConstraintSet(), deep_network, standard_gaussian, standard_domain,
            threshold=0.01, n_samples=10_000, seed=0,
        )
        assert choice.key == (1, 0)

    def test_uncertain_candidate_taken_with_loose_threshold(self, deep_bounds, deep_network, standard_gaussian,
                                                            standard_domain):
        choice = select_babsr_prob(
            deep_bounds, ConstraintSet(), deep_network, standard_gaussian, standard_domain,
            threshold=1.0, n_samples=10_000, seed=0,
        )
        assert choice.key == (2, 0)
        assert choice.uncertainty > 0.5

    def test_no_unstable_neuron(self, stable_network, standard_gaussian, standard_domain):
        bounds = compute_linear_bounds(stable_network, standard_domain.box, ConstraintSet())
        with pytest.raises(SplitSelectionError, match="no unstable neuron"):
            select_babsr_prob(
                bounds, ConstraintSet(), stable_network, standard_gaussian, standard_domain,
                threshold=0.01, n_samples=10_000, seed=0,
            )


class TestSplitSelector:
    """Strategy dispatch and sample sizing."""

    def test_uncertainty_sample_count_has_floor(self):
        assert SplitSelector.uncertainty_sample_count(1_000) == 10_000
        assert SplitSelector.uncertainty_sample_count(100_000) == 10_000
        assert SplitSelector.uncertainty_sample_count(1_000_000) == 100_000

    def test_dispatch_by_strategy(self, split_bounds, split_network, standard_gaussian, standard_domain):
        ordered = SplitSelector(
            StrategyName.ORDERED, split_network, standard_gaussian, standard_domain, 0.01, 100_000
        )
        babsr = SplitSelector(
            "babsr-prob", split_network, standard_gaussian, standard_domain, 0.01, 100_000
        )

        assert ordered.select(split_bounds, ConstraintSet(), seed=0).key == (1, 0)
        assert babsr.select(split_bounds, ConstraintSet(), seed=0).key == (1, 1)
