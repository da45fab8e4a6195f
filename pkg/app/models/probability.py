"""
Probability data models: the Gaussian input, its truncation box, linear
events {P x + q <= 0} and Monte Carlo estimates.
"""
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.bounds import InputBox


# Probability-specific exceptions
class ProbabilityError(Exception):
    """Base exception for probability estimation errors."""
    pass


class ConfidenceError(ProbabilityError, ValueError):
    """Exception raised when a certificate is requested for an undeclared verdict."""
    pass


class BoundSide(str, Enum):
    """Which global bound a confidence certificate refers to."""
    LOWER = "lower"
    UPPER = "upper"


class GaussianInput(BaseModel):
    """
    X ~ N(mean, cov) with cov given as a diagonal vector or a full PSD matrix.
    The lower-triangular factor L with L L^T = cov is derived on construction.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    cov: np.ndarray
    cholesky_factor: Optional[np.ndarray] = None

    @field_validator("mean", mode="before")
    @classmethod
    def _validate_mean(cls, value):
        array = np.array(value, dtype=np.float64, ndmin=1)
        if array.ndim != 1 or not np.all(np.isfinite(array)):
            raise ValueError("mean must be a finite vector")
        array.setflags(write=False)
        return array

    @field_validator("cov", mode="before")
    @classmethod
    def _validate_cov(cls, value):
        array = np.array(value, dtype=np.float64)
        if array.ndim not in (1, 2) or not np.all(np.isfinite(array)):
            raise ValueError("cov must be a finite vector or matrix")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _derive_factor(self):
        n = self.mean.shape[0]
        cov = self.cov
        if cov.ndim == 1:
            if cov.shape[0] != n:
                raise ValueError(f"cov_diag length {cov.shape[0]} differs from mean length {n}")
            if np.any(cov <= 0.0):
                raise ValueError("diagonal covariance entries must be strictly positive")
            factor = np.diag(np.sqrt(cov))
        else:
            if cov.shape != (n, n):
                raise ValueError(f"cov shape {cov.shape} does not match mean length {n}")
            factor = _lower_factor(cov)
        factor.setflags(write=False)
        object.__setattr__(self, "cholesky_factor", factor)
        return self

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def is_diagonal(self) -> bool:
        return self.cov.ndim == 1

    @property
    def std(self) -> np.ndarray:
        """Per-dimension standard deviations."""
        variances = self.cov if self.is_diagonal else np.diag(self.cov)
        return np.sqrt(variances)

    @property
    def full_cov(self) -> np.ndarray:
        return np.diag(self.cov) if self.is_diagonal else np.asarray(self.cov)


def _lower_factor(cov: np.ndarray) -> np.ndarray:
    """
    Lower-triangular L with L L^T = cov. Falls back to a QR of the symmetric
    square root when cov is only semidefinite.
    """
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(cov)
        if np.min(eigvals) < -1e-10 * max(1.0, float(np.max(np.abs(eigvals)))):
            raise ValueError("covariance is not positive semidefinite")
        root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        _, r = np.linalg.qr(root.T)
        lower = r.T
        signs = np.where(np.diag(lower) < 0.0, -1.0, 1.0)
        return lower * signs


class TruncationDomain(BaseModel):
    """Bounded box D carrying 1 - delta of the Gaussian mass."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    box: InputBox
    delta: float = Field(ge=0.0, le=1.0)
    z: float = Field(gt=0.0)


class LinearEvent(BaseModel):
    """The event {P X + q <= 0} with r rows."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    P: np.ndarray
    q: np.ndarray

    @field_validator("P", mode="before")
    @classmethod
    def _validate_P(cls, value):
        array = np.array(value, dtype=np.float64)
        if array.ndim != 2 or not np.all(np.isfinite(array)):
            raise ValueError("P must be a finite matrix")
        array.setflags(write=False)
        return array

    @field_validator("q", mode="before")
    @classmethod
    def _validate_q(cls, value):
        array = np.array(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(array)):
            raise ValueError("q must be a finite vector")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.P.shape[0] != self.q.shape[0]:
            raise ValueError(f"P has {self.P.shape[0]} rows but q has length {self.q.shape[0]}")
        return self

    @property
    def rows(self) -> int:
        return int(self.P.shape[0])

    def same_as(self, other: "LinearEvent") -> bool:
        return bool(np.array_equal(self.P, other.P) and np.array_equal(self.q, other.q))

    def holds(self, points: np.ndarray) -> np.ndarray:
        """Row mask of points satisfying every inequality; an empty event holds everywhere."""
        if self.rows == 0:
            return np.ones(points.shape[0], dtype=bool)
        return np.all(points @ self.P.T + self.q <= 0.0, axis=1)


class ProbEstimate(BaseModel):
    """
    Monte Carlo estimate hits / sample_count, optionally shifted by an exactly
    known truncation mass: value = min(1, hits / sample_count + truncation_mass).
    """

    model_config = ConfigDict(frozen=True)

    hits: int = Field(ge=0)
    sample_count: int = Field(ge=1)
    rng_seed: Optional[int] = None
    truncation_mass: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_hits(self):
        if self.hits > self.sample_count:
            raise ValueError(f"hits {self.hits} exceed sample_count {self.sample_count}")
        return self

    @property
    def fraction(self) -> float:
        return self.hits / self.sample_count

    @property
    def value(self) -> float:
        return min(1.0, self.fraction + self.truncation_mass)


class OracleEstimate(BaseModel):
    """Direct-sampling reference probability."""

    model_config = ConfigDict(frozen=True)

    value: float = Field(ge=0.0, le=1.0)
    n_samples: int = Field(ge=1)

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.value * (1.0 - self.value) / self.n_samples))
