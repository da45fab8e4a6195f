"""
Linear relaxation of ReLU(y) over a preactivation interval [l, u].
"""
import logging
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from app.models.bounds import BoundsError, Sign

logger = logging.getLogger(__name__)

# Sign codes used in vectorized relaxation
NO_SIGN = 0
GEQ_CODE = 1
LT_CODE = -1


class ReluRelaxation(NamedTuple):
    """Per-neuron lines lower(y) = ls*y + li <= ReLU(y) <= us*y + ui = upper(y)."""
    lower_slope: np.ndarray
    lower_intercept: np.ndarray
    upper_slope: np.ndarray
    upper_intercept: np.ndarray


def relax_relu(l: float, u: float, constraint: Optional[Sign] = None) -> Tuple[float, float, float, float]:
    """
    Relax one ReLU.

    Args:
        l: Lower bound on the preactivation
        u: Upper bound on the preactivation
        constraint: Optional sign constraint carried by the neuron

    Returns:
        (lower_slope, lower_intercept, upper_slope, upper_intercept)

    Raises:
        BoundsError: If l > u on an unconstrained neuron
    """
    if constraint is Sign.GEQ_ZERO:
        return 1.0, 0.0, 1.0, 0.0
    if constraint is Sign.LT_ZERO:
        return 0.0, 0.0, 0.0, 0.0
    if l > u:
        raise BoundsError(f"relaxation interval is empty: l={l} > u={u}")
    if l >= 0.0:
        return 1.0, 0.0, 1.0, 0.0
    if u <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    width = u - l
    lower_slope = 1.0 if u >= -l else 0.0
    return lower_slope, 0.0, u / width, -u * l / width


def sign_codes(width: int, layer_constraints: Dict[int, Sign]) -> np.ndarray:
    """Vector of GEQ_CODE / LT_CODE / NO_SIGN for one layer."""
    codes = np.full(width, NO_SIGN, dtype=np.int8)
    for neuron, sign in layer_constraints.items():
        codes[neuron] = GEQ_CODE if sign is Sign.GEQ_ZERO else LT_CODE
    return codes


def relax_layer(lower: np.ndarray, upper: np.ndarray, codes: np.ndarray) -> ReluRelaxation:
    """
    Vectorized relax_relu over one ReLU layer.

    Neurons whose clamped bounds cross (lower > upper) come from infeasible
    constraint sets; they satisfy lower >= 0 or upper <= 0 and relax as stable.
    """
    active = (codes == GEQ_CODE) | ((codes == NO_SIGN) & (lower >= 0.0))
    inactive = ~active & ((codes == LT_CODE) | (upper <= 0.0))
    unstable = ~active & ~inactive

    lower_slope = np.where(active, 1.0, 0.0)
    upper_slope = np.where(active, 1.0, 0.0)
    lower_intercept = np.zeros_like(lower)
    upper_intercept = np.zeros_like(lower)

    if np.any(unstable):
        l, u = lower[unstable], upper[unstable]
        width = u - l
        upper_slope[unstable] = u / width
        upper_intercept[unstable] = -u * l / width
        lower_slope[unstable] = np.where(u >= -l, 1.0, 0.0)

    return ReluRelaxation(lower_slope, lower_intercept, upper_slope, upper_intercept)
