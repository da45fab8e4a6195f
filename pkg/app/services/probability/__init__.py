"""
Probability package: truncation box, Monte Carlo estimation of linear
events, branch probability bounds and Bernstein confidence.
"""
from app.services.probability.sampling import (
    truncation_domain,
    chunk_plan,
    draw_gaussian,
    sample_chunks,
    count_hits,
    estimate_event_probability,
)
from app.services.probability.events import (
    build_branch_events,
    estimate_branch,
    bound_branch_probability,
    uncertainty_level,
)
from app.services.probability.confidence import bernstein_confidence

__all__ = [
    "truncation_domain",
    "chunk_plan",
    "draw_gaussian",
    "sample_chunks",
    "count_hits",
    "estimate_event_probability",
    "build_branch_events",
    "estimate_branch",
    "bound_branch_probability",
    "uncertainty_level",
    "bernstein_confidence",
]
