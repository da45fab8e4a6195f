"""
Bound propagation data models: sign constraints on preactivations, input
boxes and the linear bounds produced for a branch.

Layer indices are 1-based (layer N is the network output f); neuron indices
are 0-based positions inside a layer.
"""
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

NeuronKey = Tuple[int, int]


# Bounds-specific exceptions
class BoundsError(Exception):
    """Exception raised for invalid constraints or malformed bounds."""
    pass


class Sign(str, Enum):
    """Sign constraint on a preactivation."""
    GEQ_ZERO = "geq"
    LT_ZERO = "lt"

    @property
    def symbol(self) -> str:
        return ">= 0" if self is Sign.GEQ_ZERO else "< 0"


class ConstraintSet(BaseModel):
    """Immutable set of per-neuron sign constraints defining a branch."""

    model_config = ConfigDict(frozen=True)

    entries: Dict[NeuronKey, Sign] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: NeuronKey) -> bool:
        return key in self.entries

    def sign_of(self, layer: int, neuron: int) -> Optional[Sign]:
        return self.entries.get((layer, neuron))

    def with_constraint(self, layer: int, neuron: int, sign: Sign) -> "ConstraintSet":
        """
        Return a new set with one more constraint.

        Raises:
            BoundsError: If the neuron already carries a constraint
        """
        if (layer, neuron) in self.entries:
            raise BoundsError(f"neuron ({layer}, {neuron}) is already constrained")
        entries = dict(self.entries)
        entries[(layer, neuron)] = sign
        return ConstraintSet(entries=entries)

    def items_sorted(self) -> List[Tuple[NeuronKey, Sign]]:
        """Constraints ordered by (layer, neuron)."""
        return sorted(self.entries.items(), key=lambda item: item[0])

    def layer_constraints(self, layer: int) -> Dict[int, Sign]:
        """Constraints C^(layer) as neuron -> sign."""
        return {j: sign for (k, j), sign in self.entries.items() if k == layer}

    def prefix(self, layer: int) -> "ConstraintSet":
        """Constraints on layers strictly before `layer`."""
        return ConstraintSet(entries={key: s for key, s in self.entries.items() if key[0] < layer})

    def layers(self) -> List[int]:
        return sorted({k for k, _ in self.entries})

    def validate_for(self, hidden_widths: List[int]) -> None:
        """
        Check every constraint names an existing ReLU neuron.

        Args:
            hidden_widths: Widths of ReLU layers 1 ... N-1

        Raises:
            BoundsError: If a constraint references a nonexistent neuron
        """
        for (k, j) in self.entries:
            if not 1 <= k <= len(hidden_widths):
                raise BoundsError(
                    f"constraint on layer {k} out of range; ReLU layers are 1..{len(hidden_widths)}"
                )
            if not 0 <= j < hidden_widths[k - 1]:
                raise BoundsError(
                    f"constraint on neuron {j} of layer {k} out of range; layer width is {hidden_widths[k - 1]}"
                )

    def to_list(self) -> List[List[Any]]:
        return [[k, j, sign.value] for (k, j), sign in self.items_sorted()]

    @classmethod
    def from_list(cls, items: List[List[Any]]) -> "ConstraintSet":
        return cls(entries={(int(k), int(j)): Sign(s) for k, j, s in items})

    def describe(self) -> str:
        if not self.entries:
            return "{}"
        return "{" + ", ".join(f"y{k}[{j}] {s.symbol}" for (k, j), s in self.items_sorted()) + "}"


def _finite_array(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, ndmin=ndim)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


class InputBox(BaseModel):
    """Axis-aligned input domain [lo, hi]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lo: np.ndarray
    hi: np.ndarray

    @field_validator("lo", "hi", mode="before")
    @classmethod
    def _validate_vector(cls, value, info):
        return _finite_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _check_order(self):
        if self.lo.shape != self.hi.shape:
            raise ValueError(f"lo shape {self.lo.shape} differs from hi shape {self.hi.shape}")
        if np.any(self.lo > self.hi):
            raise ValueError("box lower corner exceeds upper corner")
        return self

    @property
    def dim(self) -> int:
        return int(self.lo.shape[0])

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Row mask of points inside the closed box."""
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)


class LinearFunctionBundle(BaseModel):
    """Linear lower/upper envelopes A x + b for every neuron of one layer."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower_A: np.ndarray
    lower_b: np.ndarray
    upper_A: np.ndarray
    upper_b: np.ndarray

    @field_validator("lower_A", "upper_A", mode="before")
    @classmethod
    def _validate_matrix(cls, value, info):
        return _finite_array(value, 2, info.field_name)

    @field_validator("lower_b", "upper_b", mode="before")
    @classmethod
    def _validate_offset(cls, value, info):
        return _finite_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.lower_A.shape != self.upper_A.shape:
            raise ValueError(f"lower_A shape {self.lower_A.shape} differs from upper_A {self.upper_A.shape}")
        rows = self.lower_A.shape[0]
        if self.lower_b.shape != (rows,) or self.upper_b.shape != (rows,):
            raise ValueError(f"offset vectors must have length {rows}")
        return self

    @property
    def width(self) -> int:
        return int(self.lower_A.shape[0])

    def rows_identical(self, neuron: int) -> bool:
        """True when the lower and upper envelopes of `neuron` coincide bitwise."""
        return bool(
            np.array_equal(self.lower_A[neuron], self.upper_A[neuron])
            and self.lower_b[neuron] == self.upper_b[neuron]
        )

    def is_exact(self) -> bool:
        return bool(np.array_equal(self.lower_A, self.upper_A) and np.array_equal(self.lower_b, self.upper_b))

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Evaluate lower and upper envelopes at row points, shape (n, width)."""
        return points @ self.lower_A.T + self.lower_b, points @ self.upper_A.T + self.upper_b


class LinearBoundsSet(BaseModel):
    """
    Linear bounds for every preactivation layer and for f, computed over a box
    under a ConstraintSet.

    per_layer[k - 1] bounds y^(k); the last entry bounds f. output_lambdas[k - 1]
    holds the coefficients on ReLU(y^(k)) met in the lower-bound backward pass
    of f, for k = 1 ... N-1.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    per_layer: List[LinearFunctionBundle]
    concrete_lower: List[np.ndarray]
    concrete_upper: List[np.ndarray]
    output_lambdas: List[np.ndarray]
    constraints: ConstraintSet = ConstraintSet()

    @model_validator(mode="after")
    def _check_layers(self):
        n = len(self.per_layer)
        if len(self.concrete_lower) != n or len(self.concrete_upper) != n:
            raise ValueError("concrete bounds must be given for every layer")
        if len(self.output_lambdas) != n - 1:
            raise ValueError("output_lambdas must cover ReLU layers 1..N-1")
        return self

    @property
    def depth(self) -> int:
        return len(self.per_layer)

    def bundle(self, layer: int) -> LinearFunctionBundle:
        if not 1 <= layer <= self.depth:
            raise BoundsError(f"layer {layer} out of range 1..{self.depth}")
        return self.per_layer[layer - 1]

    @property
    def f_bundle(self) -> LinearFunctionBundle:
        return self.per_layer[-1]

    def lower(self, layer: int) -> np.ndarray:
        return self.concrete_lower[layer - 1]

    def upper(self, layer: int) -> np.ndarray:
        return self.concrete_upper[layer - 1]

    def is_unstable(self, layer: int, neuron: int) -> bool:
        """Unconstrained neuron whose concrete bounds straddle zero."""
        if (layer, neuron) in self.constraints:
            return False
        return bool(self.lower(layer)[neuron] < 0.0 < self.upper(layer)[neuron])

    def unstable_neurons(self) -> List[NeuronKey]:
        """Unstable ReLU neurons ordered by (layer, neuron)."""
        found: List[NeuronKey] = []
        for k in range(1, self.depth):
            lo, hi = self.lower(k), self.upper(k)
            for j in np.flatnonzero((lo < 0.0) & (hi > 0.0)):
                if (k, int(j)) not in self.constraints:
                    found.append((k, int(j)))
        return found

    def to_dict(self) -> Dict[str, Any]:
        """Debug dump used for test fixtures."""
        return {
            "constraints": self.constraints.to_list(),
            "layers": [
                {
                    "lower_A": b.lower_A.tolist(),
                    "lower_b": b.lower_b.tolist(),
                    "upper_A": b.upper_A.tolist(),
                    "upper_b": b.upper_b.tolist(),
                    "concrete_lower": lo.tolist(),
                    "concrete_upper": hi.tolist(),
                }
                for b, lo, hi in zip(self.per_layer, self.concrete_lower, self.concrete_upper)
            ],
            "output_lambdas": [lam.tolist() for lam in self.output_lambdas],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearBoundsSet":
        layers = data["layers"]
        return cls(
            per_layer=[
                LinearFunctionBundle(
                    lower_A=layer["lower_A"],
                    lower_b=layer["lower_b"],
                    upper_A=layer["upper_A"],
                    upper_b=layer["upper_b"],
                )
                for layer in layers
            ],
            concrete_lower=[np.array(layer["concrete_lower"], dtype=np.float64) for layer in layers],
            concrete_upper=[np.array(layer["concrete_upper"], dtype=np.float64) for layer in layers],
            output_lambdas=[np.array(lam, dtype=np.float64) for lam in data["output_lambdas"]],
            constraints=ConstraintSet.from_list(data["constraints"]),
        )
