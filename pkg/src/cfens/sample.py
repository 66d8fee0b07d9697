"""Gradient-free explainers: forecasting samples and the naive interpolation baseline."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import DetectionRule, Ensemble, Member, Method, TimeSeries, Window, is_valid
from .detect import Detector
from .errors import EmptyContext, EmptySampleSet, InsufficientData

SIGMA_FLOOR = 1e-8
RIDGE = 1e-6
_COND_LIMIT = 1e12


class SingularDesignWarning(UserWarning):
    """The AR design matrix was singular; a ridge-regularized solution was used."""


@dataclass(frozen=True, eq=False)
class Forecaster:
    """Independent Gaussian AR(p) model per dimension.

    ``coef[d, j]`` multiplies lag ``j + 1`` of dimension ``d``.
    """

    coef: np.ndarray
    intercept: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        coef = np.atleast_2d(np.asarray(self.coef, dtype=float))
        intercept = np.asarray(self.intercept, dtype=float).reshape(-1)
        sigma = np.maximum(np.asarray(self.sigma, dtype=float).reshape(-1), SIGMA_FLOOR)
        if coef.shape[1] < 1:
            raise ValueError("AR order must be >= 1")
        if not coef.shape[0] == intercept.shape[0] == sigma.shape[0]:
            raise ValueError("coef, intercept and sigma disagree on D")
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.coef.shape[1]

    @property
    def D(self) -> int:
        return self.coef.shape[0]

    def predict_next(self, history) -> np.ndarray:
        """One-step mean given rows of history (last row most recent)."""
        history = np.asarray(history, dtype=float)
        lags = history[::-1][:self.p]          # p x D, lag 1 first
        return self.intercept + np.einsum("dj,jd->d", self.coef, lags)

    def forecast(self, context, S: int) -> np.ndarray:
        """Deterministic (noise-free) S-step forecast."""
        hist = list(np.asarray(context, dtype=float)[-self.p:])
        out = []
        for _ in range(S):
            nxt = self.predict_next(np.array(hist))
            out.append(nxt)
            hist = hist[1:] + [nxt]
        return np.array(out).reshape(S, self.D)

    def to_dict(self) -> dict:
        return {"kind": "ar", "p": self.p, "coef": self.coef.tolist(),
                "intercept": self.intercept.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Forecaster":
        return cls(np.asarray(doc["coef"]), np.asarray(doc["intercept"]), np.asarray(doc["sigma"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "Forecaster":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_forecaster(train: TimeSeries, p: int = 5) -> Forecaster:
    """Per-dimension OLS of ``x_t`` on ``(x_{t-1}, ..., x_{t-p}, 1)``."""
    if p < 1:
        raise ValueError("AR order must be >= 1")
    X = train.values
    T, D = X.shape
    if T <= p + 1:
        raise InsufficientData(f"need more than {p + 1} rows to fit AR({p}), got {T}")
    coef = np.zeros((D, p))
    intercept = np.zeros(D)
    sigma = np.zeros(D)
    n = T - p
    for d in range(D):
        x = X[:, d]
        design = np.column_stack([x[p - j - 1:T - j - 1] for j in range(p)] + [np.ones(n)])
        y = x[p:]
        gram = design.T @ design
        if np.linalg.cond(gram) > _COND_LIMIT:
            warnings.warn(f"singular AR design for dimension {d}; using ridge {RIDGE:g}",
                          SingularDesignWarning, stacklevel=2)
            beta = np.linalg.solve(gram + RIDGE * np.eye(p + 1), design.T @ y)
        else:
            beta = np.linalg.solve(gram, design.T @ y)
        coef[d] = beta[:p]
        intercept[d] = beta[p]
        sigma[d] = np.std(y - design @ beta)
    return Forecaster(coef, intercept, sigma)


def sample_paths(g: Forecaster, context, S: int, N: int, seed) -> np.ndarray:
    """Ancestral sampling of N paths of length S; returns an (N, S, D) array."""
    context = np.asarray(context, dtype=float)
    if context.shape[0] < g.p:
        raise InsufficientData(f"context of {context.shape[0]} rows is shorter than p={g.p}")
    rng = np.random.default_rng(seed)
    if N == 0:
        return np.zeros((0, S, g.D))
    lags = np.repeat(context[::-1][:g.p][None], N, axis=0)   # N x p x D, lag 1 first
    out = np.empty((N, S, g.D))
    for s in range(S):
        mean = g.intercept + np.einsum("dj,njd->nd", g.coef, lags)
        draw = mean + g.sigma * rng.standard_normal((N, g.D))
        out[:, s] = draw
        lags = np.concatenate([draw[:, None], lags[:, :-1]], axis=1)
    return out


def nll(g: Forecaster, context, suspect) -> float:
    """Mean teacher-forced one-step Gaussian NLL over the S*D suspect entries."""
    context = np.asarray(context, dtype=float)
    suspect = np.asarray(suspect, dtype=float)
    if context.shape[0] < g.p:
        raise InsufficientData(f"context of {context.shape[0]} rows is shorter than p={g.p}")
    full = np.vstack([context[-g.p:], suspect])
    total = 0.0
    for s in range(suspect.shape[0]):
        mean = g.predict_next(full[s:s + g.p])
        z = (suspect[s] - mean) / g.sigma
        total += np.sum(0.5 * np.log(2 * np.pi) + np.log(g.sigma) + 0.5 * z * z)
    return float(total / suspect.size)


class SampledExplanation(NamedTuple):
    ensemble: Ensemble
    rejection_rate: float
    samples: np.ndarray


def _filter(det: Detector, rule: DetectionRule, window: Window, samples, method: Method):
    members = []
    for i, sample in enumerate(samples):
        scores = det.score(window.with_suspect(sample))
        if is_valid(scores, rule):
            members.append(Member(np.array(sample), np.asarray(scores), i))
    N = len(samples)
    rejection = (N - len(members)) / N if N else 0.0
    return SampledExplanation(Ensemble(method, members), rejection, np.asarray(samples))


def explain_fs(det: Detector, rule: DetectionRule, g: Forecaster, window: Window, N: int = 100,
               seed=0) -> SampledExplanation:
    samples = sample_paths(g, window.context, window.S, N, seed)
    return _filter(det, rule, window, samples, Method.FS)


def naive_samples(window: Window, weights) -> np.ndarray:
    """Interpolates between the suspect and the repeated last context row, one per weight."""
    if window.context.shape[0] == 0:
        raise EmptyContext("the naive baseline needs the last context row")
    weights = np.asarray(weights, dtype=float).reshape(-1, 1, 1)
    last = np.broadcast_to(window.context[-1], window.suspect.shape)
    out = weights * window.suspect + (1.0 - weights) * last
    # exact endpoints regardless of rounding in the affine mix
    out[weights[:, 0, 0] == 1.0] = window.suspect
    out[weights[:, 0, 0] == 0.0] = last
    return out


def explain_naive(det: Detector, rule: DetectionRule, window: Window, N: int = 100,
                  seed=0) -> SampledExplanation:
    if window.context.shape[0] == 0:
        raise EmptyContext("the naive baseline needs the last context row")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.0, 1.0, size=N)
    return _filter(det, rule, window, naive_samples(window, weights), Method.NAIVE)


def median_reference(samples) -> np.ndarray:
    """Pointwise lower median over raw samples, shape (S, D)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] == 0:
        raise EmptySampleSet("median reference needs at least one sample")
    n = samples.shape[0]
    return np.sort(samples, axis=0)[(n - 1) // 2]
