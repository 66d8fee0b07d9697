"""Differentiable anomaly detectors.

A detector maps a :class:`~cfens.core.Window` to per-timestamp scores in
(0, 1) over the suspect rows, and exposes the vector-Jacobian product of those
scores with respect to the suspect rows. Explainers only rely on this pair.
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import DEFAULT_CONTEXT_LENGTH, DEFAULT_SUSPECT_LENGTH, TimeSeries, Window
from .errors import DegenerateBasis, EmptyContext, InsufficientData


class Detector(abc.ABC):
    """Scorer contract used by every explainer."""

    @abc.abstractmethod
    def score(self, window: Window) -> np.ndarray:
        """Length-S vector of anomaly scores."""

    @abc.abstractmethod
    def vjp(self, window: Window, cotangent) -> np.ndarray:
        """S x D matrix ``sum_s cotangent[s] * d score[s] / d suspect``."""

    def score_suspect(self, window: Window, suspect) -> np.ndarray:
        return self.score(window.with_suspect(suspect))

    def to_dict(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True)
class ZScoreDetector(Detector):
    """Contextual z-score detector squashed through a logistic.

    The raw score of a suspect row is its largest per-dimension absolute
    z-score against the context mean and standard deviation.
    """

    gain: float = 2.0
    k: float = 3.0
    eps: float = 1e-8

    def __post_init__(self):
        if self.gain <= 0 or self.k <= 0 or self.eps <= 0:
            raise ValueError("gain, k and eps must be > 0")

    def _stats(self, window: Window):
        if window.context.shape[0] == 0:
            raise EmptyContext("the z-score detector needs a non-empty context")
        mu = window.context.mean(axis=0)
        sd = window.context.std(axis=0) + self.eps
        return mu, sd

    def _raw(self, window: Window):
        mu, sd = self._stats(window)
        z = (window.suspect - mu) / sd
        arg = np.argmax(np.abs(z), axis=1)
        rows = np.arange(window.S)
        return z, arg, np.abs(z[rows, arg]), sd

    def score(self, window: Window) -> np.ndarray:
        _, _, raw, _ = self._raw(window)
        return expit(self.gain * (raw - self.k))

    def vjp(self, window: Window, cotangent) -> np.ndarray:
        cot = np.asarray(cotangent, dtype=float)
        z, arg, raw, sd = self._raw(window)
        s = expit(self.gain * (raw - self.k))
        rows = np.arange(window.S)
        out = np.zeros_like(z)
        # subgradient of the max: all mass on the first attaining dimension
        out[rows, arg] = cot * self.gain * s * (1.0 - s) * np.sign(z[rows, arg]) / sd[arg]
        return out

    def to_dict(self) -> dict:
        return {"kind": "zscore", "gain": self.gain, "k": self.k, "eps": self.eps}


@dataclass(frozen=True, eq=False)
class LinearReconDetector(Detector):
    """PCA reconstruction-error detector with a window-level score.

    Every suspect timestamp receives the same score
    ``logistic(gain * (e - b) / b)`` where ``e`` is the mean squared residual
    of the flattened, centered suspect after projection on ``basis``.
    """

    basis: np.ndarray
    mean: np.ndarray
    scale: float
    S: int
    D: int
    gain: float = 2.0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != self.S * self.D:
            raise ValueError("basis must have S*D rows")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(basis.shape[1]), atol=1e-8):
            raise ValueError("basis columns must be orthonormal")
        if self.scale <= 0 or self.gain <= 0:
            raise ValueError("scale and gain must be > 0")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))

    def _residual(self, suspect) -> np.ndarray:
        v = np.asarray(suspect, dtype=float).reshape(-1) - self.mean
        return v - self.basis @ (self.basis.T @ v)

    def error(self, suspect) -> float:
        r = self._residual(suspect)
        return float(r @ r) / (self.S * self.D)

    def _check(self, window: Window):
        if window.suspect.shape != (self.S, self.D):
            raise ValueError(f"detector fitted for suspect shape {(self.S, self.D)}, "
                             f"got {window.suspect.shape}")

    def score(self, window: Window) -> np.ndarray:
        self._check(window)
        e = self.error(window.suspect)
        return np.full(self.S, expit(self.gain * (e - self.scale) / self.scale))

    def vjp(self, window: Window, cotangent) -> np.ndarray:
        self._check(window)
        cot = np.asarray(cotangent, dtype=float)
        r = self._residual(window.suspect)
        e = float(r @ r) / (self.S * self.D)
        s = expit(self.gain * (e - self.scale) / self.scale)
        de = 2.0 * r / (self.S * self.D)
        coef = cot.sum() * self.gain / self.scale * s * (1.0 - s)
        return (coef * de).reshape(self.S, self.D)

    def to_dict(self) -> dict:
        return {
            "kind": "recon",
            "S": self.S,
            "D": self.D,
            "gain": self.gain,
            "scale": self.scale,
            "mean": self.mean.tolist(),
            "basis_shape": list(self.basis.shape),
            "basis": self.basis.ravel().tolist(),
        }


def training_windows(train: TimeSeries, S: int) -> np.ndarray:
    """All stride-1 length-S windows of ``train``, flattened row-major."""
    n = train.T - S + 1
    if n < 1:
        return np.zeros((0, S * train.D))
    idx = np.arange(S)[None, :] + np.arange(n)[:, None]
    return train.values[idx].reshape(n, S * train.D)


def fit_linear_recon(train: TimeSeries, S: int = DEFAULT_SUSPECT_LENGTH, h: int = 3,
                     q: float = 0.99, gain: float = 2.0) -> LinearReconDetector:
    D = train.D
    if not 1 <= h < S * D:
        raise InsufficientData(f"need 1 <= h < S*D = {S * D}, got h={h}")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    X = training_windows(train, S)
    if X.shape[0] < h + S:
        raise InsufficientData(f"need at least {h + S} training windows, got {X.shape[0]}")
    mean = X.mean(axis=0)
    Xc = X - mean
    if not np.any(np.abs(Xc) > 0):
        raise DegenerateBasis("training windows have zero variance")
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    basis = vt[:h].T
    resid = Xc - (Xc @ basis) @ basis.T
    errors = np.einsum("ij,ij->i", resid, resid) / (S * D)
    scale = float(np.quantile(errors, q))
    # an exactly reconstructible training set would give a zero scale
    scale = max(scale, 1e-12)
    return LinearReconDetector(basis=basis, mean=mean, scale=scale, S=S, D=D, gain=gain)


@dataclass(frozen=True, eq=False)
class FiniteDifferenceDetector(Detector):
    """Adapter giving any black-box window scorer a central-difference vjp."""

    scorer: Callable[[Window], np.ndarray]
    step: float = 1e-4
    calls: list = field(default_factory=lambda: [0], repr=False)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("finite-difference step must be > 0")

    def score(self, window: Window) -> np.ndarray:
        self.calls[0] += 1
        return np.asarray(self.scorer(window), dtype=float)

    def vjp(self, window: Window, cotangent) -> np.ndarray:
        cot = np.asarray(cotangent, dtype=float)
        out = np.zeros_like(window.suspect)
        if not np.any(cot):
            return out
        base = np.array(window.suspect)
        for s in range(window.S):
            for d in range(window.D):
                up = base.copy()
                up[s, d] += self.step
                down = base.copy()
                down[s, d] -= self.step
                diff = self.score(window.with_suspect(up)) - self.score(window.with_suspect(down))
                out[s, d] = cot @ diff / (2.0 * self.step)
        return out


def wrap_finite_difference(scorer, step: float = 1e-4) -> FiniteDifferenceDetector:
    return FiniteDifferenceDetector(scorer, step)


def detector_from_dict(doc: dict) -> Detector:
    kind = doc.get("kind")
    if kind == "zscore":
        return ZScoreDetector(gain=doc["gain"], k=doc["k"], eps=doc["eps"])
    if kind == "recon":
        basis = np.asarray(doc["basis"], dtype=float).reshape(doc["basis_shape"])
        return LinearReconDetector(basis=basis, mean=np.asarray(doc["mean"]), scale=doc["scale"],
                                   S=doc["S"], D=doc["D"], gain=doc["gain"])
    raise ValueError(f"unknown detector kind {kind!r}")


def save_detector(det: Detector, path) -> None:
    with open(path, "w") as fh:
        json.dump(det.to_dict(), fh, indent=2)


def load_detector(path) -> Detector:
    with open(path) as fh:
        return detector_from_dict(json.load(fh))


def score_series(det: Detector, series: TimeSeries, S: int = DEFAULT_SUSPECT_LENGTH,
                 context_length: int = DEFAULT_CONTEXT_LENGTH) -> np.ndarray:
    """Per-timestamp scores over a whole series.

    The score of timestamp ``t`` is the first suspect score of the window whose
    suspect starts at ``t``, so an event found in these scores is anomalous in
    the window :func:`~cfens.core.make_window` builds at its start. The last
    ``S - 1`` timestamps are read from the window aligned to the series end.
    Timestamps without a full context are NaN.
    """
    out = np.full(series.T, np.nan)
    last = series.T - S
    if last < context_length:
        return out
    for start in range(context_length, last + 1):
        ctx = series.values[start - context_length:start]
        win = Window(ctx, series.values[start:start + S], (series.name, start))
        scores = det.score(win)
        out[start] = scores[0]
        if start == last:
            out[start:] = scores
    return out
