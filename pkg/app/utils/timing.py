"""
Wall-clock helpers shared by the engine logs and the benchmark table.
"""
import time
from typing import Optional


def format_duration(seconds: float) -> str:
    """Render a duration as '12.34s' or '3m 7.5s'."""
    if seconds >= 60:
        minutes = int(seconds // 60)
        return f"{minutes}m {seconds % 60:.1f}s"
    return f"{seconds:.2f}s"


class Deadline:
    """Monotonic deadline; a limit of None never expires."""

    def __init__(self, limit_s: Optional[float]):
        self.start = time.monotonic()
        self.limit_s = limit_s

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def expired(self) -> bool:
        return self.limit_s is not None and self.elapsed >= self.limit_s
