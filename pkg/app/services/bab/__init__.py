"""
Branch-and-bound package: branch pool, global bound aggregation and the
verification engine.
"""
from app.services.bab.pool import BabEngineError, BranchPool, bound_global_probability
from app.services.bab.engine import BabEngine, verify, verify_no_split

__all__ = [
    "BabEngineError",
    "BranchPool",
    "bound_global_probability",
    "BabEngine",
    "verify",
    "verify_no_split",
]
