"""
Unit tests for problem generation and benchmark runs.
"""
import csv

import numpy as np
import pytest

from app.models.benchmark import ROW_COLUMNS, BenchmarkConfig, BenchmarkRow
from app.models.verification import RunMode, StrategyName, VerificationBudget
from app.services.benchmark_service import (
    BenchmarkError,
    ProblemGenerationError,
    corpus_files,
    generate_toy_corpus,
    generate_toy_network,
    make_robustness_problem,
    run_benchmark,
    summarize,
)
from app.services.model_service import model_service
from tests.conftest import build_network


@pytest.fixture
def classifier():
    """Two classes scoring x and -x."""
    return build_network([([[1.0], [-1.0]], [0.0, 0.0])])


@pytest.fixture
def corpus_dir(tmp_path, split_problem, linear_problem):
    model_service.save_problem(split_problem, tmp_path / "split.json")
    model_service.save_problem(linear_problem, tmp_path / "linear.json")
    return tmp_path


class TestRobustnessProblem:
    """Classifier-to-problem construction."""

    def test_isotropic_noise(self, classifier):
        problem = make_robustness_problem(classifier, [1.0], 0.5, target=0, attack=1, eta=0.9)

        assert problem.network.is_scalar
        assert model_service.forward(problem.network, [0.25]) == pytest.approx(0.5)
        assert problem.input_mean.tolist() == [1.0]
        assert problem.input_cov.tolist() == [0.25]

    def test_diagonal_and_full_covariance(self, classifier):
        diagonal = make_robustness_problem(classifier, [1.0], [0.3], target=0, attack=1, eta=0.9)
        full = make_robustness_problem(classifier, [1.0], [[0.2]], target=0, attack=1, eta=0.9)

        assert diagonal.is_diagonal
        assert diagonal.input_cov.tolist() == [0.3]
        assert not full.is_diagonal

    def test_rejects_misclassified_input(self, classifier):
        with pytest.raises(ProblemGenerationError, match="classified as 0"):
            make_robustness_problem(classifier, [1.0], 0.5, target=1, attack=0, eta=0.9)

    def test_rejects_equal_classes(self, classifier):
        with pytest.raises(ProblemGenerationError, match="distinct classes"):
            make_robustness_problem(classifier, [1.0], 0.5, target=0, attack=0, eta=0.9)

    def test_rejects_misshaped_noise(self, classifier):
        with pytest.raises(ProblemGenerationError, match="does not fit"):
            make_robustness_problem(classifier, [1.0], [0.1, 0.2], target=0, attack=1, eta=0.9)

    def test_rejects_negative_sigma(self, classifier):
        with pytest.raises(ProblemGenerationError, match="must be positive"):
            make_robustness_problem(classifier, [1.0], -0.5, target=0, attack=1, eta=0.9)


class TestToyGeneration:
    """Random toy networks and corpora."""

    def test_toy_network_is_positive_at_origin(self, toy_rng):
        network = generate_toy_network(toy_rng)

        assert network.layer_widths == [5, 10, 10, 1]
        assert model_service.forward(network, np.zeros(5)) > 0.0

    def test_toy_network_needs_scalar_output(self, toy_rng):
        with pytest.raises(ProblemGenerationError, match="scalar output"):
            generate_toy_network(toy_rng, widths=(5, 3, 2))

    def test_corpus_written_and_listed(self, tmp_path):
        problems = generate_toy_corpus(3, seed=1, out_dir=tmp_path)

        files = corpus_files(tmp_path)
        assert [f.name for f in files] == ["toy_00.json", "toy_01.json", "toy_02.json"]
        loaded = model_service.load_problem(files[1])
        assert loaded.eta == 0.95
        assert loaded.input_cov.tolist() == [0.1] * 5
        assert np.array_equal(loaded.network.layers[0].weights, problems[1].network.layers[0].weights)

    def test_corpus_is_reproducible(self):
        first = generate_toy_corpus(2, seed=9)
        second = generate_toy_corpus(2, seed=9)

        for a, b in zip(first, second):
            assert np.array_equal(a.network.layers[-1].weights, b.network.layers[-1].weights)

    def test_missing_corpus_directory(self, tmp_path):
        with pytest.raises(BenchmarkError, match="not found"):
            corpus_files(tmp_path / "absent")


class TestRunBenchmark:
    """Strategy comparison tables."""

    @pytest.fixture
    def small_budget(self):
        return VerificationBudget(time_limit_s=30.0, n_samples=20_000)

    def test_rows_per_instance_and_configuration(self, corpus_dir, small_budget):
        # Arrange
        configs = [
            BenchmarkConfig(strategy=StrategyName.ORDERED),
            BenchmarkConfig(strategy=StrategyName.BABSR_PROB),
            BenchmarkConfig(mode=RunMode.NO_SPLIT),
        ]

        # Act
        result = run_benchmark(corpus_dir, configs, small_budget, seed=0)

        # Assert
        assert [(r.instance, r.strategy) for r in result.rows] == [
            ("linear", "ordered"), ("linear", "babsr-prob"), ("linear", "no-split"),
            ("split", "ordered"), ("split", "babsr-prob"), ("split", "no-split"),
        ]
        verdicts = {(r.instance, r.strategy): r.verdict for r in result.rows}
        assert verdicts[("split", "ordered")] == "FALSE"
        assert verdicts[("split", "no-split")] == "TIMEOUT"
        assert verdicts[("linear", "no-split")] == "TRUE"
        assert result.summary_for("no-split").decided == 1
        assert result.summary_for("ordered").success_rate == 1.0

    def test_reference_column(self, corpus_dir, small_budget):
        result = run_benchmark(corpus_dir, [BenchmarkConfig(mode=RunMode.ORACLE)], small_budget)

        assert [r.verdict for r in result.rows] == ["TRUE", "FALSE"]
        assert result.rows[1].P_lower == pytest.approx(0.3085, abs=3e-3)

    def test_csv_table_and_summary(self, corpus_dir, small_budget, tmp_path):
        out = tmp_path / "results" / "table.csv"
        out.parent.mkdir()

        run_benchmark(corpus_dir, [BenchmarkConfig(strategy=StrategyName.ORDERED)], small_budget, out_path=out)

        with out.open() as handle:
            reader = csv.DictReader(handle)
            assert tuple(reader.fieldnames) == ROW_COLUMNS
            assert len(list(reader)) == 2
        assert (out.parent / "table.summary.csv").exists()

    def test_empty_corpus(self, tmp_path, small_budget):
        with pytest.raises(BenchmarkError, match="no problem files"):
            run_benchmark(tmp_path, [BenchmarkConfig()], small_budget)

    def test_summarize_counts_decided_rows(self):
        rows = [
            BenchmarkRow(instance="a", strategy="ordered", verdict="TRUE", P_lower=0.96, P_upper=0.97,
                         confidence=1.0, splits=4, time_s=1.0),
            BenchmarkRow(instance="b", strategy="ordered", verdict="TIMEOUT", P_lower=0.9, P_upper=0.99,
                         confidence=0.0, splits=10, time_s=3.0),
        ]

        (summary,) = summarize(rows, ["ordered"])

        assert summary.instances == 2
        assert summary.decided == 1
        assert summary.success_rate == 0.5
        assert summary.avg_time_s == pytest.approx(2.0)
        assert summary.avg_splits == pytest.approx(7.0)
