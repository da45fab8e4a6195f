"""
Branch-and-bound data models: split choices, branches, run budgets, run
configuration and the verification report.
"""
import json
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.bounds import ConstraintSet, NeuronKey
from app.models.probability import LinearEvent, ProbEstimate


class Verdict(str, Enum):
    """Answer to 'is P[f(X) > 0] >= eta'."""
    TRUE = "TRUE"
    FALSE = "FALSE"
    TIMEOUT = "TIMEOUT"


class StopReason(str, Enum):
    DECIDED = "decided"
    TIME_LIMIT = "time_limit"
    EXHAUSTED = "exhausted"
    NO_SPLIT = "no_split"


class StrategyName(str, Enum):
    ORDERED = "ordered"
    BABSR_PROB = "babsr-prob"


class RunMode(str, Enum):
    BAB = "bab"
    NO_SPLIT = "no-split"
    ORACLE = "oracle"


class SplitChoice(BaseModel):
    """Neuron selected for splitting."""

    model_config = ConfigDict(frozen=True)

    layer: int = Field(ge=1)
    neuron: int = Field(ge=0)
    uncertainty: float = Field(0.0, ge=0.0, le=1.0)
    score: float = 0.0

    @property
    def key(self) -> NeuronKey:
        return (self.layer, self.neuron)


class Branch(BaseModel):
    """
    A branch <p_lower, p_upper, C>. Probabilities are restricted to the
    truncation box; the box complement is charged once at the global level.
    The two probability events are kept so the branch can be re-estimated
    without recomputing its linear bounds.
    """

    model_config = ConfigDict(frozen=True)

    branch_id: int = Field(ge=0)
    constraints: ConstraintSet
    p_lower: ProbEstimate
    p_upper: ProbEstimate
    lower_event: LinearEvent
    upper_event: LinearEvent
    marked_split: Optional[SplitChoice] = None
    depth: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.p_lower.value > self.p_upper.value:
            raise ValueError(
                f"branch {self.branch_id}: p_lower {self.p_lower.value} exceeds p_upper {self.p_upper.value}"
            )
        if self.has_gap and self.marked_split is None:
            raise ValueError(f"branch {self.branch_id} has a positive gap but no marked split")
        if not self.has_gap and self.marked_split is not None:
            raise ValueError(f"branch {self.branch_id} has zero gap but carries a marked split")
        return self

    @property
    def gap(self) -> float:
        return self.p_upper.value - self.p_lower.value

    @property
    def has_gap(self) -> bool:
        return self.p_lower.value < self.p_upper.value


class VerificationBudget(BaseModel):
    """Resource limits and sampling parameters of one run."""

    model_config = ConfigDict(frozen=True)

    time_limit_s: Optional[float] = Field(120.0, gt=0.0)
    n_samples: int = Field(100_000, ge=1)
    split_depth: int = Field(1, ge=1)
    batch_size: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    confidence_target: float = Field(1.0 - 1e-4, gt=0.0, lt=1.0)
    max_escalations: int = Field(6, ge=0)
    sample_chunk_size: int = Field(200_000, ge=1)


class IterationRecord(BaseModel):
    """Global bounds observed at the top of one BaB iteration."""

    model_config = ConfigDict(frozen=True)

    iteration: int
    p_lower: float
    p_upper: float
    pool_size: int
    popped_gap: Optional[float] = None
    n_samples: int


_TIMING_FIELDS = {"wall_time"}


class VerificationReport(BaseModel):
    """Outcome of a verification run."""

    verdict: Verdict
    P_lower: float
    P_upper: float
    confidence: float
    splits: int
    branches_final: int
    wall_time: float
    seed: int
    strategy: str
    mode: str = RunMode.BAB.value
    eta: float
    n_samples: int
    confidence_escalations: int = 0
    truncation_delta: float = 0.0
    stop_reason: StopReason = StopReason.DECIDED
    instance: Optional[str] = None
    trace: List[IterationRecord] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _check_verdict(self):
        if self.verdict is Verdict.TRUE and self.P_lower < self.eta:
            raise ValueError(f"TRUE verdict with P_lower {self.P_lower} below eta {self.eta}")
        if self.verdict is Verdict.FALSE and self.P_upper >= self.eta:
            raise ValueError(f"FALSE verdict with P_upper {self.P_upper} not below eta {self.eta}")
        return self

    @property
    def decided(self) -> bool:
        return self.verdict is not Verdict.TIMEOUT

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        exclude = None if include_timing else _TIMING_FIELDS
        return self.model_dump(mode="json", exclude=exclude)

    def to_json(self, include_timing: bool = True, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(include_timing=include_timing), indent=indent, sort_keys=True)


class RunConfig(BaseModel):
    """Command-line run configuration."""

    problem_path: str
    strategy: StrategyName = StrategyName.BABSR_PROB
    eta: Optional[float] = Field(None, gt=0.0, le=1.0)
    tau: float = Field(0.01, ge=0.0)
    n_samples: int = Field(100_000, ge=1)
    split_depth: int = Field(1, ge=1)
    batch_size: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    time_limit_s: Optional[float] = Field(120.0, gt=0.0)
    seed: int = Field(0, ge=0)
    truncation_z: Optional[float] = Field(None, gt=0.0)
    mode: RunMode = RunMode.BAB

    def budget_overrides(self) -> Dict[str, Any]:
        return {
            "time_limit_s": self.time_limit_s,
            "n_samples": self.n_samples,
            "split_depth": self.split_depth,
            "batch_size": self.batch_size,
            "workers": self.workers,
        }
