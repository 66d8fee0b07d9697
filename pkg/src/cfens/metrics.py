"""Explainability metrics for counterfactual ensembles.

Per-member quantities (distance, implausibility 1-3) are pooled over every
member of every anomaly when aggregating, so each counterfactual counts once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .core import Ensemble, Method
from .errors import EmptyEnsemble, EmptySequence, NoGroundTruth
from .sample import Forecaster, nll

SELECTION_THRESHOLD = 0.5


def _points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def dtw(a, b) -> float:
    """Unconstrained DTW with Euclidean point costs."""
    a, b = _points(a), _points(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptySequence("dtw needs two non-empty sequences")
    if a.shape[1] != b.shape[1]:
        raise ValueError("sequences must share the point dimension")
    cost = cdist(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev = acc[i], acc[i - 1]
        c = cost[i - 1]
        for j in range(1, m + 1):
            row[j] = c[j - 1] + min(prev[j - 1], prev[j], row[j - 1])
    return float(acc[n, m])


def _mean_std(values) -> tuple:
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std())


def _require(ensemble: Ensemble):
    if ensemble.failed:
        raise EmptyEnsemble(f"{ensemble.method.label} ensemble is empty")


def member_distances(ensemble: Ensemble, target) -> np.ndarray:
    return np.array([dtw(m.suspect, target) for m in ensemble.members])


def distance_metric(ensemble: Ensemble, W_S) -> tuple:
    _require(ensemble)
    return _mean_std(member_distances(ensemble, W_S))


def implausibility1(ensemble: Ensemble, reference) -> tuple:
    _require(ensemble)
    return _mean_std(member_distances(ensemble, reference))


def temporal_variation(suspect) -> float:
    return float(np.abs(np.diff(_points(suspect), axis=0)).sum())


def implausibility2(ensemble: Ensemble) -> tuple:
    _require(ensemble)
    return _mean_std([temporal_variation(m.suspect) for m in ensemble.members])


def implausibility3(ensemble: Ensemble, g: Forecaster, context) -> tuple:
    _require(ensemble)
    return _mean_std([nll(g, context, m.suspect) for m in ensemble.members])


def diversity(ensemble: Ensemble) -> float:
    """Mean over (timestamp, dimension) cells of the population variance across members."""
    _require(ensemble)
    return float(ensemble.stack().var(axis=0).mean())


def sparsity_pr(perturbed_dims, true_dims) -> tuple:
    if true_dims is None or len(true_dims) == 0:
        raise NoGroundTruth("sparsity precision/recall needs ground-truth channels")
    perturbed, truth = set(perturbed_dims), set(true_dims)
    if not perturbed:
        return 0.0, 0.0
    hit = len(perturbed & truth)
    return hit / len(perturbed), hit / len(truth)


def selected_dims(w, threshold: float = SELECTION_THRESHOLD) -> set:
    return {int(d) for d in np.flatnonzero(np.asarray(w) > threshold)}


def failure_rate(outcomes, method) -> float:
    """``outcomes`` are ensembles (gradient methods) or rejection rates (sampling methods)."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("failure rate needs at least one anomaly")
    if Method(method).is_gradient:
        return sum(1 for e in outcomes if len(e) == 0) / len(outcomes)
    return float(np.mean([float(r) for r in outcomes]))


@dataclass
class AnomalyRow:
    """Per-anomaly metric values for one method, kept per member for pooling."""

    method: Method
    n_members: int
    rejection_rate: Optional[float] = None
    distance: list = field(default_factory=list)
    impl1: list = field(default_factory=list)
    impl2: list = field(default_factory=list)
    impl3: list = field(default_factory=list)
    diversity: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method.value, "n_members": self.n_members,
            "rejection_rate": self.rejection_rate, "distance": list(self.distance),
            "impl1": list(self.impl1), "impl2": list(self.impl2), "impl3": list(self.impl3),
            "diversity": self.diversity, "precision": self.precision, "recall": self.recall,
        }


def anomaly_row(method, ensemble: Ensemble, W_S, reference=None, forecaster=None, context=None,
                rejection_rate=None, w=None, true_dims=None) -> AnomalyRow:
    method = Method(method)
    row = AnomalyRow(method, len(ensemble), rejection_rate)
    if not ensemble.failed:
        row.distance = member_distances(ensemble, W_S).tolist()
        if reference is not None:
            row.impl1 = member_distances(ensemble, reference).tolist()
        row.impl2 = [temporal_variation(m.suspect) for m in ensemble.members]
        if forecaster is not None:
            row.impl3 = [nll(forecaster, context, m.suspect) for m in ensemble.members]
        row.diversity = diversity(ensemble)
    if w is not None and true_dims:
        row.precision, row.recall = sparsity_pr(selected_dims(w), true_dims)
    return row


@dataclass
class MetricReport:
    method: Method
    n_anomalies: int
    n_members: int
    failure_rate: float
    empty_fraction: float
    distance: Optional[tuple] = None
    implausibility1: Optional[tuple] = None
    implausibility2: Optional[tuple] = None
    implausibility3: Optional[tuple] = None
    diversity: Optional[float] = None
    sparsity: Optional[tuple] = None

    def to_dict(self) -> dict:
        def pair(v):
            return None if v is None else [float(v[0]), float(v[1])]
        return {
            "method": self.method.label,
            "n_anomalies": self.n_anomalies,
            "n_members": self.n_members,
            "failure_rate": self.failure_rate,
            "empty_fraction": self.empty_fraction,
            "distance": pair(self.distance),
            "implausibility1": pair(self.implausibility1),
            "implausibility2": pair(self.implausibility2),
            "implausibility3": pair(self.implausibility3),
            "diversity": self.diversity,
            "sparsity": pair(self.sparsity),
        }


def _pooled(rows, attr):
    values = [v for r in rows for v in getattr(r, attr)]
    return _mean_std(values) if values else None


def aggregate_report(rows) -> MetricReport:
    rows = list(rows)
    if not rows:
        raise ValueError("aggregate_report needs at least one row")
    method = rows[0].method
    if any(r.method is not method for r in rows):
        raise ValueError("rows mix several methods")
    empty = sum(1 for r in rows if r.n_members == 0) / len(rows)
    if method.is_gradient:
        failure = empty
    else:
        failure = float(np.mean([r.rejection_rate for r in rows]))
    divs = [r.diversity for r in rows if r.diversity is not None]
    pr = [(r.precision, r.recall) for r in rows if r.precision is not None]
    return MetricReport(
        method=method,
        n_anomalies=len(rows),
        n_members=sum(r.n_members for r in rows),
        failure_rate=failure,
        empty_fraction=empty,
        distance=_pooled(rows, "distance"),
        implausibility1=_pooled(rows, "impl1"),
        implausibility2=_pooled(rows, "impl2"),
        implausibility3=_pooled(rows, "impl3"),
        diversity=float(np.mean(divs)) if divs else None,
        sparsity=tuple(np.mean(pr, axis=0).tolist()) if pr else None,
    )


def _fmt(pair):
    if pair is None:
        return "-"
    return f"{pair[0]:.2f} ({pair[1]:.2f})"


def format_table(reports) -> str:
    """Plain-text table, one row per method, mean (std) per cell."""
    reports = list(reports)
    sparse = any(r.sparsity is not None for r in reports)
    header = ["Method", "Failures (%)"]
    if sparse:
        header.append("Precision / Recall")
    header += ["Distance", "Implausibility 1", "Implausibility 2", "Implausibility 3", "Diversity"]
    lines = [header]
    for r in reports:
        row = [r.method.label, f"{100 * r.failure_rate:.1f}"]
        if sparse:
            row.append("-" if r.sparsity is None else f"{r.sparsity[0]:.2f} / {r.sparsity[1]:.2f}")
        row += [_fmt(r.distance), _fmt(r.implausibility1), _fmt(r.implausibility2),
                _fmt(r.implausibility3), "-" if r.diversity is None else f"{r.diversity:.3f}"]
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    out = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in lines]
    out.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"

