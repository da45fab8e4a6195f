"""
Network data models: affine layers, feedforward ReLU networks, half-space
output specifications and verification problem instances.

These models hold validated, read-only numpy arrays. Evaluation lives in
app/services/model_service.py.
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


# Model-specific exceptions
class ModelError(Exception):
    """Base exception for network and problem model errors."""
    pass


class ModelFormatError(ModelError):
    """Exception raised when a model or problem file is malformed."""
    pass


class ShapeMismatchError(ModelError, ValueError):
    """Exception raised when array dimensions do not compose."""
    pass


def _as_readonly(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, ndmin=ndim)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


class AffineLayer(BaseModel):
    """Dense affine map y = W x + b."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    bias: np.ndarray

    @field_validator("weights", mode="before")
    @classmethod
    def _validate_weights(cls, value):
        return _as_readonly(value, 2, "weights")

    @field_validator("bias", mode="before")
    @classmethod
    def _validate_bias(cls, value):
        return _as_readonly(value, 1, "bias")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weights row count {self.weights.shape[0]}"
            )
        return self

    @property
    def in_features(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_features(self) -> int:
        return int(self.weights.shape[0])


class Network(BaseModel):
    """
    Feedforward network of affine layers with a ReLU between consecutive
    layers and none after the last one.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    layers: List[AffineLayer]

    @model_validator(mode="after")
    def _check_composition(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for idx in range(1, len(self.layers)):
            previous, current = self.layers[idx - 1], self.layers[idx]
            if current.in_features != previous.out_features:
                raise ValueError(
                    f"layer {idx}: expects {current.in_features} inputs but "
                    f"layer {idx - 1} produces {previous.out_features}"
                )
        return self

    @property
    def depth(self) -> int:
        """Number of affine layers N."""
        return len(self.layers)

    @property
    def layer_widths(self) -> List[int]:
        """Widths n_0 ... n_N."""
        return [self.layers[0].in_features] + [layer.out_features for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_features

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_features

    @property
    def is_scalar(self) -> bool:
        return self.output_dim == 1

    @property
    def hidden_widths(self) -> List[int]:
        """Widths of the ReLU layers 1 ... N-1."""
        return [layer.out_features for layer in self.layers[:-1]]


class HalfSpaceSpec(BaseModel):
    """Output specification c^T y + d > 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    c: np.ndarray
    d: float = 0.0

    @field_validator("c", mode="before")
    @classmethod
    def _validate_c(cls, value):
        array = _as_readonly(value, 1, "c")
        if not np.any(array != 0.0):
            raise ValueError("c needs at least one nonzero entry")
        return array


class ProblemInstance(BaseModel):
    """
    A folded verification problem: decide P[f(X) > 0] >= eta for
    X ~ N(input_mean, input_cov).

    input_cov is either a vector (diagonal covariance) or a full matrix.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    network: Network
    input_mean: np.ndarray
    input_cov: np.ndarray
    eta: float
    truncation_z: float = 3.0
    name: Optional[str] = None

    @field_validator("input_mean", mode="before")
    @classmethod
    def _validate_mean(cls, value):
        return _as_readonly(value, 1, "input_mean")

    @field_validator("input_cov", mode="before")
    @classmethod
    def _validate_cov(cls, value):
        array = np.array(value, dtype=np.float64)
        if array.ndim not in (1, 2):
            raise ValueError(f"input_cov must be a vector or a matrix, got shape {array.shape}")
        return _as_readonly(array, array.ndim, "input_cov")

    @field_validator("eta")
    @classmethod
    def _validate_eta(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {value}")
        return value

    @field_validator("truncation_z")
    @classmethod
    def _validate_z(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError(f"truncation_z must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check_problem(self):
        if not self.network.is_scalar:
            raise ValueError(
                f"problem network must have scalar output, got {self.network.output_dim}; fold the spec first"
            )
        n0 = self.network.input_dim
        if self.input_mean.shape[0] != n0:
            raise ValueError(f"input_mean has length {self.input_mean.shape[0]}, network expects {n0}")
        cov = self.input_cov
        if cov.ndim == 1:
            if cov.shape[0] != n0:
                raise ValueError(f"cov_diag has length {cov.shape[0]}, network expects {n0}")
            if np.any(cov <= 0.0):
                raise ValueError("diagonal covariance entries must be strictly positive")
        else:
            if cov.shape != (n0, n0):
                raise ValueError(f"cov_full has shape {cov.shape}, expected ({n0}, {n0})")
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise ValueError("full covariance must be symmetric")
            if np.any(np.diag(cov) <= 0.0):
                raise ValueError("covariance diagonal entries must be strictly positive")
            if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
                raise ValueError("full covariance must be positive semidefinite")
        return self

    @property
    def is_diagonal(self) -> bool:
        return self.input_cov.ndim == 1
