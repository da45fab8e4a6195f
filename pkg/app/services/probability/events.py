"""
Branch probability events built from linear bounds, and the uncertainty
level of a relaxed neuron.
"""
import logging
from typing import List, Tuple

import numpy as np

from app.models.bounds import BoundsError, ConstraintSet, LinearBoundsSet, Sign
from app.models.probability import GaussianInput, LinearEvent, ProbEstimate, TruncationDomain
from app.services.probability.sampling import count_hits, estimate_event_probability

logger = logging.getLogger(__name__)


def build_branch_events(bounds: LinearBoundsSet, constraints: ConstraintSet) -> Tuple[LinearEvent, LinearEvent]:
    """
    Events whose probabilities bound P[f(X) > 0 and constraints hold].

    Rows: the f row first, then one row per constraint in (layer, neuron) order.
    The lower event requires the lower bound of f to be nonnegative, lower
    bounds of GEQ neurons nonnegative and upper bounds of LT neurons
    nonpositive; the upper event swaps lower and upper bounds.

    Returns:
        (lower_event, upper_event)

    Raises:
        BoundsError: If a constraint has no bound row
    """
    f = bounds.f_bundle
    lower_P: List[np.ndarray] = [-f.lower_A[0]]
    lower_q: List[float] = [-f.lower_b[0]]
    upper_P: List[np.ndarray] = [-f.upper_A[0]]
    upper_q: List[float] = [-f.upper_b[0]]

    for (layer, neuron), sign in constraints.items_sorted():
        if not 1 <= layer < bounds.depth or not 0 <= neuron < bounds.bundle(layer).width:
            error_msg = f"constraint on ({layer}, {neuron}) has no bound row"
            logger.error(error_msg)
            raise BoundsError(error_msg)
        bundle = bounds.bundle(layer)
        if sign is Sign.GEQ_ZERO:
            lower_P.append(-bundle.lower_A[neuron])
            lower_q.append(-bundle.lower_b[neuron])
            upper_P.append(-bundle.upper_A[neuron])
            upper_q.append(-bundle.upper_b[neuron])
        else:
            lower_P.append(bundle.upper_A[neuron])
            lower_q.append(bundle.upper_b[neuron])
            upper_P.append(bundle.lower_A[neuron])
            upper_q.append(bundle.lower_b[neuron])

    lower_event = LinearEvent(P=np.vstack(lower_P), q=np.array(lower_q))
    upper_event = LinearEvent(P=np.vstack(upper_P), q=np.array(upper_q))
    return lower_event, upper_event


def estimate_branch(
    lower_event: LinearEvent,
    upper_event: LinearEvent,
    gaussian: GaussianInput,
    domain: TruncationDomain,
    n_samples: int,
    seed: int,
    charge_truncation: bool = False,
    chunk_size: int = 0,
) -> Tuple[ProbEstimate, ProbEstimate]:
    """
    Estimate both events on one sample stream.

    The upper count uses (upper or lower) so hits_lower <= hits_upper holds
    exactly regardless of rounding. Identical events reuse one count.

    Args:
        charge_truncation: Add the box complement mass delta to the upper estimate
    """
    if lower_event.same_as(upper_event):
        estimate = estimate_event_probability(lower_event, gaussian, domain, n_samples, seed, chunk_size)
        lower_hits = upper_hits = estimate.hits
    else:
        def masks(points):
            lower_mask = lower_event.holds(points)
            return lower_mask, upper_event.holds(points) | lower_mask

        lower_hits, upper_hits = count_hits(gaussian, domain, n_samples, seed, masks, chunk_size)

    p_lower = ProbEstimate(hits=lower_hits, sample_count=n_samples, rng_seed=seed)
    p_upper = ProbEstimate(
        hits=upper_hits,
        sample_count=n_samples,
        rng_seed=seed,
        truncation_mass=domain.delta if charge_truncation else 0.0,
    )
    return p_lower, p_upper


def bound_branch_probability(
    bounds: LinearBoundsSet,
    constraints: ConstraintSet,
    gaussian: GaussianInput,
    domain: TruncationDomain,
    n_samples: int,
    seed: int,
    charge_truncation: bool = True,
    chunk_size: int = 0,
) -> Tuple[ProbEstimate, ProbEstimate]:
    """
    Probability bounds (p_lower, p_upper) of one branch.

    Args:
        bounds: Linear bounds computed under exactly these constraints
        constraints: Constraints of the branch
        gaussian: Input distribution
        domain: Truncation box and its missing mass
        n_samples: Monte Carlo sample count shared by both bounds
        seed: Seed of the shared sample stream
        charge_truncation: Add delta to p_upper; the engine charges delta once globally instead

    Returns:
        (p_lower, p_upper) with p_lower.value <= p_upper.value
    """
    lower_event, upper_event = build_branch_events(bounds, constraints)
    return estimate_branch(
        lower_event, upper_event, gaussian, domain, n_samples, seed, charge_truncation, chunk_size
    )


def uncertainty_level(
    bounds: LinearBoundsSet,
    layer: int,
    neuron: int,
    gaussian: GaussianInput,
    domain: TruncationDomain,
    n_samples: int,
    seed: int,
    chunk_size: int = 0,
) -> ProbEstimate:
    """
    Estimate P[upper_y(X) >= 0, lower_y(X) < 0, X in D] for neuron (layer, neuron).

    Identical lower and upper rows give exactly 0 without sampling.

    Raises:
        BoundsError: If (layer, neuron) is not a ReLU neuron
    """
    if not 1 <= layer < bounds.depth or not 0 <= neuron < bounds.bundle(layer).width:
        error_msg = f"neuron ({layer}, {neuron}) is not a ReLU neuron of this network"
        logger.error(error_msg)
        raise BoundsError(error_msg)

    bundle = bounds.bundle(layer)
    if bundle.rows_identical(neuron):
        return ProbEstimate(hits=0, sample_count=n_samples, rng_seed=seed)

    event = LinearEvent(
        P=np.vstack([-bundle.upper_A[neuron], bundle.lower_A[neuron]]),
        q=np.array([-bundle.upper_b[neuron], bundle.lower_b[neuron]]),
    )
    return estimate_event_probability(event, gaussian, domain, n_samples, seed, chunk_size)
