"""
Bernstein confidence attached to a declared verdict.
"""
import logging
import math
from typing import Sequence

from app.models.probability import BoundSide, ConfidenceError, ProbEstimate

logger = logging.getLogger(__name__)


def bernstein_confidence(
    estimates: Sequence[ProbEstimate],
    n_samples: int,
    eta: float,
    side: BoundSide,
    offset: float = 0.0,
) -> float:
    """
    Confidence that the true global bound lies on the declared side of eta.

    With P = offset + sum of estimates, eps = |P - eta| and the plug-in
    variance V = sum p (1 - p), returns 1 - exp(-N eps^2 / (2 V + 2 eps / 3)).

    Args:
        estimates: Per-branch estimates of the bound being certified
        n_samples: Samples per branch estimate
        eta: Probability threshold
        side: LOWER certifies P_lower >= eta, UPPER certifies P_upper < eta
        offset: Exactly known mass added to the sum (the truncation delta on the upper side)

    Returns:
        Confidence in [0, 1]; 0 when eps is 0

    Raises:
        ConfidenceError: If the estimates do not support the requested side
    """
    values = [e.value for e in estimates]
    total = offset + math.fsum(values)
    variance = math.fsum(p * (1.0 - p) for p in values)

    if side is BoundSide.LOWER:
        if total < eta:
            raise ConfidenceError(f"lower bound {total:.6f} is below eta {eta}; no TRUE verdict to certify")
        eps = total - eta
    else:
        if total >= eta:
            raise ConfidenceError(f"upper bound {total:.6f} is not below eta {eta}; no FALSE verdict to certify")
        eps = eta - total

    if eps == 0.0:
        return 0.0
    exponent = n_samples * eps * eps / (2.0 * variance + 2.0 * eps / 3.0)
    confidence = float(-math.expm1(-exponent))
    logger.debug(f"🔒 CONFIDENCE: side={side.value} eps={eps:.3e} V={variance:.3e} N={n_samples} -> {confidence:.6f}")
    return confidence
