# Data models package

# Network and problem models
from app.models.network import (
    AffineLayer,
    Network,
    HalfSpaceSpec,
    ProblemInstance,
    ModelError,
    ModelFormatError,
    ShapeMismatchError,
)

# Bound propagation models
from app.models.bounds import (
    NeuronKey,
    Sign,
    ConstraintSet,
    InputBox,
    LinearFunctionBundle,
    LinearBoundsSet,
    BoundsError,
)

# Probability models
from app.models.probability import (
    BoundSide,
    GaussianInput,
    TruncationDomain,
    LinearEvent,
    ProbEstimate,
    OracleEstimate,
    ProbabilityError,
    ConfidenceError,
)

# Branch and bound models
from app.models.verification import (
    Verdict,
    StopReason,
    StrategyName,
    RunMode,
    SplitChoice,
    Branch,
    VerificationBudget,
    IterationRecord,
    VerificationReport,
    RunConfig,
)

# Benchmark models
from app.models.benchmark import (
    BenchmarkConfig,
    BenchmarkRow,
    BenchmarkSummary,
    BenchmarkResult,
)

__all__ = [
    # Network models
    "AffineLayer",
    "Network",
    "HalfSpaceSpec",
    "ProblemInstance",
    "ModelError",
    "ModelFormatError",
    "ShapeMismatchError",
    # Bound models
    "NeuronKey",
    "Sign",
    "ConstraintSet",
    "InputBox",
    "LinearFunctionBundle",
    "LinearBoundsSet",
    "BoundsError",
    # Probability models
    "BoundSide",
    "GaussianInput",
    "TruncationDomain",
    "LinearEvent",
    "ProbEstimate",
    "OracleEstimate",
    "ProbabilityError",
    "ConfidenceError",
    # Verification models
    "Verdict",
    "StopReason",
    "StrategyName",
    "RunMode",
    "SplitChoice",
    "Branch",
    "VerificationBudget",
    "IterationRecord",
    "VerificationReport",
    "RunConfig",
    # Benchmark models
    "BenchmarkConfig",
    "BenchmarkRow",
    "BenchmarkSummary",
    "BenchmarkResult",
]
