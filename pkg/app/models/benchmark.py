"""
Benchmark table models: run configurations, per-instance rows and
per-configuration aggregates.
"""
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.models.verification import RunMode, StrategyName

ROW_COLUMNS = ("instance", "strategy", "verdict", "P_lower", "P_upper", "confidence", "splits", "time_s")
SUMMARY_COLUMNS = ("strategy", "instances", "decided", "success_rate", "avg_time_s", "avg_splits")


class BenchmarkConfig(BaseModel):
    """One column of a benchmark: a strategy in a run mode."""

    model_config = ConfigDict(frozen=True)

    strategy: StrategyName = StrategyName.BABSR_PROB
    mode: RunMode = RunMode.BAB

    @property
    def label(self) -> str:
        return self.mode.value if self.mode is not RunMode.BAB else self.strategy.value


class BenchmarkRow(BaseModel):
    """Outcome of one configuration on one instance."""

    instance: str
    strategy: str
    verdict: str
    P_lower: float
    P_upper: float
    confidence: float
    splits: int
    time_s: float


class BenchmarkSummary(BaseModel):
    """Aggregate over all instances of one configuration."""

    strategy: str
    instances: int = Field(ge=0)
    decided: int = Field(ge=0)
    success_rate: float = Field(ge=0.0, le=1.0)
    avg_time_s: float
    avg_splits: float


class BenchmarkResult(BaseModel):
    rows: List[BenchmarkRow] = Field(default_factory=list)
    summaries: List[BenchmarkSummary] = Field(default_factory=list)

    def summary_for(self, label: str) -> Optional[BenchmarkSummary]:
        return next((s for s in self.summaries if s.strategy == label), None)
