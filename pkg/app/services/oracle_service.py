"""
Ground-truth machinery for desk-scale instances: direct-sampling probability
oracle, reference verdicts and activation-pattern enumeration.

Nothing here touches linear bound propagation; preactivations are evaluated
exactly and pattern enumeration uses interval arithmetic.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from app.config.settings import config_manager
from app.models.bounds import ConstraintSet, InputBox, NeuronKey, Sign
from app.models.network import Network
from app.models.probability import GaussianInput, OracleEstimate
from app.models.verification import Verdict
from app.services.model_service import model_service
from app.services.probability.sampling import chunk_plan, draw_gaussian
from app.utils.seeding import HINT_STREAM, ORACLE_STREAM, SeedDeriver

logger = logging.getLogger(__name__)

MIN_ORACLE_SAMPLES = 10_000


class OracleError(Exception):
    """Custom exception for oracle errors."""
    pass


class PatternLimitError(OracleError):
    """Exception raised when pattern enumeration would exceed the cap."""
    pass


class OracleService:
    """Direct-sampling estimates of P[f(X) > 0, constraints hold] under the untruncated Gaussian."""

    def __init__(self):
        self.model_service = model_service

    def _count_chunk(
        self, network: Network, gaussian: GaussianInput, constraints: Optional[ConstraintSet], size: int, seed: int
    ) -> int:
        points = draw_gaussian(gaussian, size, seed)
        preactivations = self.model_service.preactivations_batch(network, points)
        hits = preactivations[-1][:, 0] > 0.0
        if constraints is not None:
            for (layer, neuron), sign in constraints.items_sorted():
                values = preactivations[layer - 1][:, neuron]
                hits &= (values >= 0.0) if sign is Sign.GEQ_ZERO else (values < 0.0)
        return int(np.count_nonzero(hits))

    def oracle_probability(
        self,
        network: Network,
        gaussian: GaussianInput,
        constraints: Optional[ConstraintSet] = None,
        n_samples: int = 1_000_000,
        seed: int = 0,
        workers: int = 1,
    ) -> OracleEstimate:
        """
        Estimate P[f(X) > 0 and constraints hold] by exact forward passes.

        Args:
            network: Folded scalar network
            gaussian: Input distribution, sampled without truncation
            constraints: Optional preactivation sign pattern
            n_samples: Number of samples, at least 10^4
            seed: Seed; the estimate does not depend on workers
            workers: Threads evaluating chunks

        Returns:
            OracleEstimate

        Raises:
            OracleError: If n_samples is too small or constraints name unknown neurons
        """
        if n_samples < MIN_ORACLE_SAMPLES:
            error_msg = f"oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_samples}"
            logger.error(error_msg)
            raise OracleError(error_msg)
        if constraints is not None:
            try:
                constraints.validate_for(network.hidden_widths)
            except Exception as e:
                raise OracleError(f"invalid constraints for oracle: {e}") from e

        plan = chunk_plan(n_samples, seed, config_manager.settings.sample_chunk_size)

        def count(piece: Tuple[int, int]) -> int:
            return self._count_chunk(network, gaussian, constraints, piece[0], piece[1])

        if workers > 1 and len(plan) > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                counts = list(executor.map(count, plan))
        else:
            counts = [count(piece) for piece in plan]

        estimate = OracleEstimate(value=sum(counts) / n_samples, n_samples=n_samples)
        logger.debug(f"🔮 ORACLE: P={estimate.value:.6f} +/- {estimate.std_error:.2e} over {n_samples} samples")
        return estimate

    def reference_verdict(
        self,
        network: Network,
        gaussian: GaussianInput,
        eta: float,
        seed: int = 0,
        workers: int = 1,
    ) -> Tuple[Verdict, OracleEstimate]:
        """
        Ground-truth verdict for P[f(X) > 0] >= eta.

        Uses the configured base sample size, and the larger near-threshold
        size when the first estimate lands within the configured margin of eta.
        """
        settings = config_manager.settings
        estimate = self.oracle_probability(
            network, gaussian, None, settings.oracle_samples,
            SeedDeriver.derive(seed, ORACLE_STREAM, 0), workers,
        )
        if abs(estimate.value - eta) < settings.oracle_near_threshold_margin:
            logger.info(
                f"🔮 ORACLE: P={estimate.value:.5f} within {settings.oracle_near_threshold_margin} of eta, "
                f"re-sampling with {settings.oracle_near_threshold_samples}"
            )
            estimate = self.oracle_probability(
                network, gaussian, None, settings.oracle_near_threshold_samples,
                SeedDeriver.derive(seed, ORACLE_STREAM, 1), workers,
            )
        verdict = Verdict.TRUE if estimate.value >= eta else Verdict.FALSE
        return verdict, estimate

    def interval_bounds(
        self, network: Network, box: InputBox, constraints: Optional[ConstraintSet] = None
    ) -> List[Tuple[np.ndarray, np.ndarray]]:
        """
        Interval bounds of every preactivation layer over a box.

        Constraints clamp the interval of their neuron before the ReLU.
        """
        lo, hi = box.lo.astype(np.float64), box.hi.astype(np.float64)
        bounds: List[Tuple[np.ndarray, np.ndarray]] = []
        for idx, layer in enumerate(network.layers):
            w_pos = np.clip(layer.weights, 0.0, None)
            w_neg = np.clip(layer.weights, None, 0.0)
            pre_lo = w_pos @ lo + w_neg @ hi + layer.bias
            pre_hi = w_pos @ hi + w_neg @ lo + layer.bias
            if constraints is not None and idx < network.depth - 1:
                for neuron, sign in constraints.layer_constraints(idx + 1).items():
                    if sign is Sign.GEQ_ZERO:
                        pre_lo[neuron] = max(pre_lo[neuron], 0.0)
                    else:
                        pre_hi[neuron] = min(pre_hi[neuron], 0.0)
            bounds.append((pre_lo, pre_hi))
            lo, hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
        return bounds

    def enumerate_patterns(
        self,
        network: Network,
        domain: InputBox,
        seed: int = 0,
        cap: Optional[int] = None,
        hint_samples: Optional[int] = None,
    ) -> List[Tuple[ConstraintSet, bool]]:
        """
        All full sign assignments over the neurons unstable at the root.

        Args:
            network: Folded scalar network
            domain: Input box
            seed: Seed of the uniform feasibility-hint samples
            cap: Maximum number of unstable neurons (settings default 22)
            hint_samples: Uniform box samples for the hint (settings default 10^5)

        Returns:
            List of (pattern, possibly_feasible); a pattern no sample realised is
            flagged False but still listed

        Raises:
            PatternLimitError: If more neurons are unstable than the cap allows
        """
        settings = config_manager.settings
        cap = settings.pattern_cap if cap is None else cap
        hint_samples = settings.pattern_hint_samples if hint_samples is None else hint_samples

        bounds = self.interval_bounds(network, domain)
        unstable: List[NeuronKey] = [
            (idx + 1, int(j))
            for idx, (lo, hi) in enumerate(bounds[:-1])
            for j in np.flatnonzero((lo < 0.0) & (hi > 0.0))
        ]
        if len(unstable) > cap:
            error_msg = f"{len(unstable)} unstable neurons exceed the enumeration cap of {cap}"
            logger.error(error_msg)
            raise PatternLimitError(error_msg)

        rng = SeedDeriver.rng(SeedDeriver.derive(seed, HINT_STREAM))
        points = rng.uniform(domain.lo, domain.hi, size=(hint_samples, domain.dim))
        preactivations = self.model_service.preactivations_batch(network, points)
        observed = {
            tuple(row)
            for row in np.stack(
                [preactivations[k - 1][:, j] >= 0.0 for k, j in unstable], axis=1
            ).tolist()
        } if unstable else {()}

        patterns: List[Tuple[ConstraintSet, bool]] = []
        for signs in itertools.product((True, False), repeat=len(unstable)):
            entries = {
                key: Sign.GEQ_ZERO if active else Sign.LT_ZERO for key, active in zip(unstable, signs)
            }
            patterns.append((ConstraintSet(entries=entries), tuple(signs) in observed))
        logger.info(f"🧮 PATTERNS: {len(patterns)} patterns over {len(unstable)} unstable neurons")
        return patterns


# Global service instance
oracle_service = OracleService()
