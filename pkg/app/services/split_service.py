"""
Split selection: the ordered strategy, BaBSR intercept scores and the
uncertainty-aware BaBSR-prob rule.
"""
import logging
from typing import Dict, List, Optional, Tuple

from app.config.settings import config_manager
from app.models.bounds import ConstraintSet, LinearBoundsSet, NeuronKey
from app.models.network import Network
from app.models.probability import GaussianInput, TruncationDomain
from app.models.verification import SplitChoice, StrategyName
from app.services.probability.events import uncertainty_level
from app.utils.seeding import UNCERTAINTY_STREAM, SeedDeriver

logger = logging.getLogger(__name__)


class SplitSelectionError(Exception):
    """Custom exception for split selection errors."""
    pass


def _unstable(bounds: LinearBoundsSet, constraints: ConstraintSet) -> List[NeuronKey]:
    return [key for key in bounds.unstable_neurons() if key not in constraints]


def select_ordered(bounds: LinearBoundsSet, constraints: ConstraintSet) -> SplitChoice:
    """
    Lowest-index unstable neuron of the earliest layer that has one.

    Every earlier layer is stable, so the chosen neuron's lower and upper
    rows coincide and its uncertainty level is 0.

    Raises:
        SplitSelectionError: If no neuron is unstable or the chosen rows differ
    """
    candidates = _unstable(bounds, constraints)
    if not candidates:
        error_msg = f"no unstable neuron under constraints {constraints.describe()}"
        logger.error(error_msg)
        raise SplitSelectionError(error_msg)

    layer, neuron = candidates[0]
    if not bounds.bundle(layer).rows_identical(neuron):
        error_msg = f"ordered choice ({layer}, {neuron}) has differing lower and upper rows"
        logger.error(error_msg)
        raise SplitSelectionError(error_msg)
    return SplitChoice(layer=layer, neuron=neuron, uncertainty=0.0, score=0.0)


def babsr_scores(
    bounds: LinearBoundsSet, constraints: ConstraintSet, network: Optional[Network] = None
) -> Dict[NeuronKey, float]:
    """
    Intercept score |lambda| * u * (-l) / (u - l) of every unstable neuron.

    lambda is the coefficient on ReLU(y_j^(k)) met in the lower-bound
    backward pass of f; stable neurons are absent from the result.
    """
    if network is not None and network.depth != bounds.depth:
        raise SplitSelectionError(f"bounds cover {bounds.depth} layers, network has {network.depth}")

    scores: Dict[NeuronKey, float] = {}
    for layer, neuron in _unstable(bounds, constraints):
        l = float(bounds.lower(layer)[neuron])
        u = float(bounds.upper(layer)[neuron])
        lam = float(bounds.output_lambdas[layer - 1][neuron])
        scores[(layer, neuron)] = abs(lam) * (u * -l) / (u - l)
    return scores


def ranked_candidates(scores: Dict[NeuronKey, float]) -> List[Tuple[NeuronKey, float]]:
    """Neurons by descending score, ties by (layer, neuron) ascending."""
    return sorted(scores.items(), key=lambda item: (-item[1], item[0][0], item[0][1]))


def select_babsr_prob(
    bounds: LinearBoundsSet,
    constraints: ConstraintSet,
    network: Optional[Network],
    gaussian: GaussianInput,
    domain: TruncationDomain,
    threshold: float,
    n_samples: int,
    seed: int,
) -> SplitChoice:
    """
    First neuron in score order whose uncertainty level is at most threshold.

    Uncertainty is estimated lazily, one candidate at a time, each with its
    own derived seed.

    Raises:
        SplitSelectionError: If no neuron is unstable
    """
    scores = babsr_scores(bounds, constraints, network)
    if not scores:
        error_msg = f"no unstable neuron under constraints {constraints.describe()}"
        logger.error(error_msg)
        raise SplitSelectionError(error_msg)

    for (layer, neuron), score in ranked_candidates(scores):
        estimate = uncertainty_level(
            bounds, layer, neuron, gaussian, domain, n_samples,
            SeedDeriver.derive(seed, UNCERTAINTY_STREAM, layer, neuron),
        )
        if estimate.value <= threshold:
            logger.debug(
                f"🎯 SPLIT: babsr-prob picked ({layer}, {neuron}) score={score:.4g} uncertainty={estimate.value:.4g}"
            )
            return SplitChoice(layer=layer, neuron=neuron, uncertainty=estimate.value, score=score)
        logger.debug(f"🎯 SPLIT: skip ({layer}, {neuron}) uncertainty={estimate.value:.4g} > {threshold}")

    logger.warning("No candidate met the uncertainty threshold; using the ordered choice")
    return select_ordered(bounds, constraints)


class SplitSelector:
    """Strategy-bound selector used by the branch-and-bound engine."""

    def __init__(
        self,
        strategy: StrategyName,
        network: Network,
        gaussian: GaussianInput,
        domain: TruncationDomain,
        tau: float,
        n_samples: int,
    ):
        self.strategy = StrategyName(strategy)
        self.network = network
        self.gaussian = gaussian
        self.domain = domain
        self.tau = tau
        self.uncertainty_samples = self.uncertainty_sample_count(n_samples)

    @staticmethod
    def uncertainty_sample_count(n_samples: int) -> int:
        """Reduced sample count for uncertainty estimates: max(floor, fraction * n_samples)."""
        settings = config_manager.settings
        return max(settings.uncertainty_min_samples, int(n_samples * settings.uncertainty_sample_fraction))

    def update_sample_count(self, n_samples: int) -> None:
        """Follow the engine's branch sample count after an escalation."""
        self.uncertainty_samples = self.uncertainty_sample_count(n_samples)

    def select(self, bounds: LinearBoundsSet, constraints: ConstraintSet, seed: int) -> SplitChoice:
        if self.strategy is StrategyName.ORDERED:
            return select_ordered(bounds, constraints)
        return select_babsr_prob(
            bounds, constraints, self.network, self.gaussian, self.domain,
            self.tau, self.uncertainty_samples, seed,
        )
