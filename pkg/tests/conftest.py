"""
Shared fixtures: small hand-checked networks and problems.
"""
from typing import List, Sequence, Tuple

import numpy as np
import pytest

from app.models.bounds import ConstraintSet, Sign
from app.models.network import AffineLayer, Network, ProblemInstance
from app.models.probability import GaussianInput, LinearEvent, ProbEstimate
from app.models.verification import Branch, SplitChoice, VerificationBudget
from app.services.probability.sampling import truncation_domain


def build_network(layers: Sequence[Tuple[list, list]]) -> Network:
    """Network from (weights, bias) pairs."""
    return Network(layers=[AffineLayer(weights=w, bias=b) for w, b in layers])


def make_branch(branch_id: int, lower_hits: int, upper_hits: int, n: int = 100) -> Branch:
    """Branch with placeholder events; marked iff it has a gap."""
    event = LinearEvent(P=np.zeros((1, 1)), q=[0.0])
    marked = SplitChoice(layer=1, neuron=0) if lower_hits < upper_hits else None
    return Branch(
        branch_id=branch_id,
        constraints=ConstraintSet(),
        p_lower=ProbEstimate(hits=lower_hits, sample_count=n),
        p_upper=ProbEstimate(hits=upper_hits, sample_count=n),
        lower_event=event,
        upper_event=event,
        marked_split=marked,
    )


def sign_pattern(preactivations: List[np.ndarray], keys) -> ConstraintSet:
    """Constraints agreeing with the signs of one point's preactivations."""
    entries = {
        (k, j): Sign.GEQ_ZERO if preactivations[k - 1][0, j] >= 0.0 else Sign.LT_ZERO
        for k, j in keys
    }
    return ConstraintSet(entries=entries)


@pytest.fixture
def linear_network():
    """f(x) = x, no ReLU layer."""
    return build_network([([[1.0]], [0.0])])


@pytest.fixture
def split_network():
    """
    f(x) = ReLU(x) - 0.5 through two copies of x; the first copy has output weight 0.

    Over [-3, 3] both ReLU neurons are unstable. Only neuron 1 reaches f, so
    its intercept score is 1.5 while neuron 0 scores 0.
    """
    return build_network([
        ([[1.0], [1.0]], [0.0, 0.0]),
        ([[0.0, 1.0]], [-0.5]),
    ])


@pytest.fixture
def deep_network():
    """
    f = ReLU(ReLU(x) - 0.5). The layer-2 neuron has the larger score but its
    lower and upper rows differ, so it carries positive uncertainty.
    """
    return build_network([
        ([[1.0]], [0.0]),
        ([[1.0]], [-0.5]),
        ([[1.0]], [0.0]),
    ])


@pytest.fixture
def stable_network():
    """Every ReLU neuron is active over [-3, 3]."""
    return build_network([
        ([[1.0], [-1.0]], [10.0, 10.0]),
        ([[2.0, 1.0]], [-1.0]),
    ])


@pytest.fixture
def standard_gaussian():
    return GaussianInput(mean=[0.0], cov=[1.0])


@pytest.fixture
def standard_domain(standard_gaussian):
    return truncation_domain(standard_gaussian, 3.0)


@pytest.fixture
def split_problem(split_network):
    """P[f(X) > 0] = P[X > 0.5] ~= 0.3085 for X ~ N(0, 1); eta = 0.35 makes it FALSE."""
    return ProblemInstance(
        network=split_network,
        input_mean=[0.0],
        input_cov=[1.0],
        eta=0.35,
        truncation_z=3.0,
        name="split",
    )


@pytest.fixture
def linear_problem(linear_network):
    return ProblemInstance(
        network=linear_network,
        input_mean=[0.0],
        input_cov=[1.0],
        eta=0.4,
        truncation_z=3.0,
        name="linear",
    )


@pytest.fixture
def budget():
    return VerificationBudget(time_limit_s=60.0, n_samples=100_000)


@pytest.fixture
def toy_rng():
    return np.random.default_rng(7)
