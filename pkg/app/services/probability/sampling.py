"""
Gaussian sampling and Monte Carlo estimation of linear-event probabilities
restricted to the truncation box.
"""
import logging
from typing import Callable, Iterator, List, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from app.config.settings import config_manager
from app.models.bounds import InputBox
from app.models.probability import GaussianInput, LinearEvent, ProbEstimate, ProbabilityError, TruncationDomain
from app.utils.seeding import SeedDeriver

logger = logging.getLogger(__name__)

MaskFunction = Callable[[np.ndarray], Sequence[np.ndarray]]


def truncation_domain(gaussian: GaussianInput, z: float) -> TruncationDomain:
    """
    Box mean +/- z * sigma per dimension and its missing mass delta.

    The diagonal case uses the exact product 1 - (1 - 2 Phi(-z))^n; a full
    covariance gets the union bound min(1, 2 n Phi(-z)).

    Raises:
        ProbabilityError: If z is not positive
    """
    if not z > 0.0:
        raise ProbabilityError(f"truncation z must be positive, got {z}")
    half_width = z * gaussian.std
    box = InputBox(lo=gaussian.mean - half_width, hi=gaussian.mean + half_width)
    tail = 2.0 * float(norm.sf(z))
    n = gaussian.dim
    if gaussian.is_diagonal:
        delta = float(-np.expm1(n * np.log1p(-tail)))
    else:
        delta = min(1.0, n * tail)
    logger.debug(f"📦 TRUNCATION: z={z} over {n} dims, delta={delta:.3e}")
    return TruncationDomain(box=box, delta=delta, z=z)


def chunk_plan(n_samples: int, seed: int, chunk_size: int) -> List[Tuple[int, int]]:
    """
    Split n_samples into (size, chunk_seed) pieces.

    The plan depends only on (n_samples, seed, chunk_size), never on how
    many workers consume it.
    """
    if n_samples < 1:
        raise ProbabilityError(f"n_samples must be at least 1, got {n_samples}")
    chunks = -(-n_samples // chunk_size)
    seeds = SeedDeriver.chunk_seeds(seed, chunks)
    return [(min(chunk_size, n_samples - index * chunk_size), s) for index, s in enumerate(seeds)]


def draw_gaussian(gaussian: GaussianInput, size: int, seed: int) -> np.ndarray:
    """size draws of X ~ N(mean, cov) as mean + L z."""
    standard = SeedDeriver.rng(seed).standard_normal((size, gaussian.dim))
    return standard @ gaussian.cholesky_factor.T + gaussian.mean


def sample_chunks(
    gaussian: GaussianInput, n_samples: int, seed: int, chunk_size: int
) -> Iterator[np.ndarray]:
    """Yield n_samples draws of X ~ N(mean, cov) chunk by chunk."""
    for size, chunk_seed in chunk_plan(n_samples, seed, chunk_size):
        yield draw_gaussian(gaussian, size, chunk_seed)


def count_hits(
    gaussian: GaussianInput,
    domain: TruncationDomain,
    n_samples: int,
    seed: int,
    masks: MaskFunction,
    chunk_size: int = 0,
) -> Tuple[int, ...]:
    """
    Count samples inside the box for which each mask holds, on one shared sample stream.

    Args:
        masks: Maps a chunk of points to a sequence of boolean row masks

    Returns:
        Hit count per mask
    """
    chunk_size = chunk_size or config_manager.settings.sample_chunk_size
    totals = None
    for points in sample_chunks(gaussian, n_samples, seed, chunk_size):
        inside = domain.box.contains(points)
        counts = [int(np.count_nonzero(mask & inside)) for mask in masks(points)]
        totals = counts if totals is None else [t + c for t, c in zip(totals, counts)]
    return tuple(totals or ())


def estimate_event_probability(
    event: LinearEvent,
    gaussian: GaussianInput,
    domain: TruncationDomain,
    n_samples: int,
    seed: int,
    chunk_size: int = 0,
) -> ProbEstimate:
    """
    Fraction of samples with P x + q <= 0 that fall inside the box.

    Samples outside the box count against the event. An empty event
    estimates P[X in D].
    """
    (hits,) = count_hits(gaussian, domain, n_samples, seed, lambda pts: (event.holds(pts),), chunk_size)
    return ProbEstimate(hits=hits, sample_count=n_samples, rng_seed=seed)
