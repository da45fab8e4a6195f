"""
Branch pool ordered by probability gap, and global bound aggregation.
"""
import heapq
import logging
import math
from typing import List, Optional, Tuple

from app.models.verification import Branch

logger = logging.getLogger(__name__)


class BabEngineError(Exception):
    """Custom exception for branch-and-bound engine errors."""
    pass


class BranchPool:
    """Max-gap priority pool; equal gaps pop the smaller branch_id first."""

    def __init__(self):
        self._heap: List[Tuple[float, int, Branch]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, branch: Branch) -> None:
        heapq.heappush(self._heap, (-branch.gap, branch.branch_id, branch))

    def pop(self) -> Branch:
        if not self._heap:
            raise BabEngineError("pop from an empty branch pool")
        return heapq.heappop(self._heap)[2]

    def peek_gap(self) -> Optional[float]:
        """Largest gap in the pool, None when empty."""
        return -self._heap[0][0] if self._heap else None

    def branches(self) -> List[Branch]:
        """All branches ordered by branch_id."""
        return sorted((entry[2] for entry in self._heap), key=lambda b: b.branch_id)

    def replace_all(self, branches: List[Branch]) -> None:
        self._heap = [(-b.gap, b.branch_id, b) for b in branches]
        heapq.heapify(self._heap)


def bound_global_probability(pool: BranchPool, truncation_mass: float = 0.0) -> Tuple[float, float]:
    """
    Global bounds (sum p_lower, min(1, sum p_upper + truncation_mass)).

    Branches are visited once each in branch_id order and summed with
    math.fsum, which is exactly rounded.

    Raises:
        BabEngineError: If the pool is empty
    """
    if len(pool) == 0:
        error_msg = "cannot aggregate bounds of an empty pool"
        logger.error(error_msg)
        raise BabEngineError(error_msg)
    branches = pool.branches()
    p_lower = math.fsum(b.p_lower.value for b in branches)
    p_upper = min(1.0, math.fsum(b.p_upper.value for b in branches) + truncation_mass)
    return p_lower, p_upper
