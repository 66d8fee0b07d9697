"""Domain types shared by every module: series, windows, ensembles, hyperparameters."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, OutOfBounds

DEFAULT_CONTEXT_LENGTH = 115
DEFAULT_SUSPECT_LENGTH = 10
DEFAULT_THETA = 0.5


class Method(str, enum.Enum):
    DPE = "dpe"
    ICE = "ice"
    SPARSE_DPE = "sparse-dpe"
    SPARSE_ICE = "sparse-ice"
    FS = "fs"
    NAIVE = "naive"

    @property
    def is_gradient(self) -> bool:
        return self in GRADIENT_METHODS

    @property
    def is_sparse(self) -> bool:
        return self in (Method.SPARSE_DPE, Method.SPARSE_ICE)

    @property
    def uses_blur(self) -> bool:
        return self in (Method.DPE, Method.SPARSE_DPE)

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Method.DPE: "DPE",
    Method.ICE: "ICE",
    Method.SPARSE_DPE: "SparseDPE",
    Method.SPARSE_ICE: "SparseICE",
    Method.FS: "FS",
    Method.NAIVE: "Naive",
}

GRADIENT_METHODS = (Method.DPE, Method.ICE, Method.SPARSE_DPE, Method.SPARSE_ICE)
SAMPLING_METHODS = (Method.FS, Method.NAIVE)


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A T x D series with optional binary ground-truth labels."""

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "series"

    def __post_init__(self):
        values = _as_matrix(self.values, "values")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("a series needs T >= 1 and D >= 1")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(np.int8).ravel()
            if labels.shape[0] != values.shape[0]:
                raise ValueError("labels length must equal T")
            if not np.all((labels == 0) | (labels == 1)):
                raise ValueError("labels must be binary")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int, name: Optional[str] = None) -> "TimeSeries":
        labels = None if self.labels is None else self.labels[start:stop]
        return TimeSeries(self.values[start:stop], labels, name or self.name)


@dataclass(frozen=True, eq=False)
class Window:
    """Context rows followed by the suspect rows the detector scores.

    ``origin`` is ``(series name, suspect start index)`` in the source series.
    """

    context: np.ndarray
    suspect: np.ndarray
    origin: tuple = ("", 0)

    def __post_init__(self):
        suspect = _as_matrix(self.suspect, "suspect")
        context = np.asarray(self.context, dtype=float)
        if context.size == 0:
            context = np.zeros((0, suspect.shape[1]))
        context = _as_matrix(context, "context")
        if suspect.shape[0] < 1:
            raise ValueError("suspect must have S >= 1 rows")
        if context.shape[1] != suspect.shape[1]:
            raise ValueError("context and suspect dimensions disagree")
        object.__setattr__(self, "context", context)
        object.__setattr__(self, "suspect", suspect)
        object.__setattr__(self, "origin", tuple(self.origin))

    @property
    def S(self) -> int:
        return self.suspect.shape[0]

    @property
    def D(self) -> int:
        return self.suspect.shape[1]

    @property
    def L(self) -> int:
        return self.context.shape[0] + self.suspect.shape[0]

    @property
    def values(self) -> np.ndarray:
        """The full L x D window, context first."""
        return np.vstack([self.context, self.suspect])

    def with_suspect(self, suspect) -> "Window":
        return Window(self.context, suspect, self.origin)


@dataclass(frozen=True)
class DetectionRule:
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")


def make_window(series: TimeSeries, suspect_start: int, S: int = DEFAULT_SUSPECT_LENGTH,
                context_length: int = DEFAULT_CONTEXT_LENGTH) -> Window:
    if S < 1 or context_length < 0:
        raise OutOfBounds(f"invalid window sizes S={S}, context_length={context_length}")
    if suspect_start < context_length:
        raise OutOfBounds(
            f"suspect start {suspect_start} leaves fewer than {context_length} context rows")
    if suspect_start + S > series.T:
        raise OutOfBounds(f"suspect [{suspect_start}, {suspect_start + S}) exceeds T={series.T}")
    ctx = series.values[suspect_start - context_length:suspect_start]
    sus = series.values[suspect_start:suspect_start + S]
    return Window(ctx, sus, (series.name, int(suspect_start)))


def is_valid(scores, rule: DetectionRule) -> bool:
    """True iff every suspect score is strictly below the threshold."""
    scores = np.asarray(scores, dtype=float)
    return bool(np.all(scores < rule.theta))


@dataclass(frozen=True, eq=False)
class Member:
    suspect: np.ndarray
    scores: np.ndarray
    rank: int


@dataclass(eq=False)
class Ensemble:
    method: Method
    members: list = field(default_factory=list)

    def __post_init__(self):
        self.method = Method(self.method)
        ranks = [m.rank for m in self.members]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ValueError("ensemble ranks must be strictly increasing")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def failed(self) -> bool:
        return not self.members

    def stack(self) -> np.ndarray:
        """Members as an (n, S, D) array."""
        return np.stack([m.suspect for m in self.members]) if self.members else np.zeros((0, 0, 0))


@dataclass(frozen=True)
class HyperParams:
    lambda1: float = 0.01
    lambda2: float = 0.01
    lambdaT: float = 0.01
    sigma_max: float = 3.0
    learning_rate: float = 0.1
    iterations: int = 1000
    margin_c: float = 0.0
    max_ensemble: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambdaT", "sigma_max", "learning_rate", "margin_c"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite")
        for name in ("lambda1", "lambda2", "lambdaT", "sigma_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 <= self.margin_c <= 1.0:
            raise ConfigError("margin_c must lie in [0, 1]")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        if int(self.max_ensemble) != self.max_ensemble or self.max_ensemble < 1:
            raise ConfigError("max_ensemble must be a positive integer")

    @classmethod
    def defaults(cls, method, **overrides) -> "HyperParams":
        """Default configuration for a method; blur-based variants get the DPE row."""
        method = Method(method)
        if method.uses_blur:
            base = dict(lambda1=0.0, lambda2=0.1, lambdaT=0.01, sigma_max=3.0, learning_rate=0.01)
            if method is Method.SPARSE_DPE:
                # the dimension selector needs a non-zero l1 weight to be sparse
                base["lambda1"] = 0.01
        else:
            base = dict(lambda1=0.01, lambda2=0.01, lambdaT=0.01, learning_rate=0.1)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def replace(self, **changes) -> "HyperParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
