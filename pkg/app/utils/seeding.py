"""
Deterministic seed derivation for Monte Carlo estimation.
"""
from typing import Sequence

import numpy as np


class SeedDeriver:
    """Utility class deriving independent, reproducible seeds from a run seed."""

    @staticmethod
    def derive(run_seed: int, *path: int) -> int:
        """
        Derive a 32-bit seed from the run seed and an integer path.

        Args:
            run_seed: Seed of the whole run
            *path: Integers identifying the consumer (e.g. purpose tag, branch id, round)

        Returns:
            Derived seed, stable across processes and platforms
        """
        sequence = np.random.SeedSequence([int(run_seed), *[int(p) for p in path]])
        return int(sequence.generate_state(1)[0])

    @staticmethod
    def rng(seed: int) -> np.random.Generator:
        """Fresh PCG64 generator for a derived seed."""
        return np.random.default_rng(seed)

    @staticmethod
    def chunk_seeds(seed: int, chunks: int) -> Sequence[int]:
        """Per-chunk seeds so chunked sampling is independent of worker count."""
        return [SeedDeriver.derive(seed, index) for index in range(chunks)]


# Purpose tags keep seed streams of different consumers disjoint.
BRANCH_STREAM = 1
UNCERTAINTY_STREAM = 2
ORACLE_STREAM = 3
HINT_STREAM = 4
