"""Corpus-level protocol: explain every enumerated anomaly with each method and score it.

All randomness derives from one integer seed. Anomaly ``i`` gets its own
streams (``spawn_key=(i, stream)``), so results do not depend on worker count
or on which methods are selected.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (DEFAULT_CONTEXT_LENGTH, DEFAULT_SUSPECT_LENGTH, DetectionRule, Ensemble,
                   HyperParams, Method, TimeSeries, Window)
from .data import AnomalyWindows, enumerate_anomaly_windows, split, true_channels
from .detect import Detector, score_series
from .errors import NonFiniteLoss
from .metrics import aggregate_report, anomaly_row
from .optimize import Trace, explain, selected_variables
from .sample import Forecaster, explain_fs, explain_naive, median_reference, sample_paths

FS_STREAM = 0
NAIVE_STREAM = 1


def stream_seed(seed: int, index: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), int(stream)))


def worker_count() -> int:
    try:
        n = int(os.environ.get("CFENS_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, min(n, os.cpu_count() or 1))


@dataclass(eq=False)
class Explanation:
    method: Method
    window: Window
    ensemble: Ensemble
    hp: Optional[HyperParams] = None
    rejection_rate: Optional[float] = None
    trace: Optional[Trace] = None
    variables: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def final_selector(self):
        """Dimension selector ``w`` of the last valid iterate (sparse variants only)."""
        if self.trace is None or not self.trace.candidates:
            return None
        return self.trace.candidates[-1].variables.get("w")


def explain_window(det: Detector, rule: DetectionRule, window: Window, method,
                   hp: HyperParams, forecaster: Optional[Forecaster] = None,
                   seed: int = 0, index: int = 0) -> Explanation:
    """Run one method on one window. Divergent gradient runs count as failures."""
    method = Method(method)
    if method is Method.FS:
        if forecaster is None:
            raise ValueError("the forecasting-set method needs a fitted forecaster")
        res = explain_fs(det, rule, forecaster, window, hp.max_ensemble,
                         stream_seed(seed, index, FS_STREAM))
        return Explanation(method, window, res.ensemble, hp, res.rejection_rate)
    if method is Method.NAIVE:
        res = explain_naive(det, rule, window, hp.max_ensemble,
                            stream_seed(seed, index, NAIVE_STREAM))
        return Explanation(method, window, res.ensemble, hp, res.rejection_rate)
    try:
        ens, trace = explain(det, rule, window, method, hp)
    except NonFiniteLoss as exc:
        return Explanation(method, window, Ensemble(method), hp, trace=exc.trace,
                           error=str(exc))
    return Explanation(method, window, ens, hp, trace=trace,
                       variables=selected_variables(trace, ens))


def reference_for(forecaster: Optional[Forecaster], window: Window, N: int, seed: int,
                  index: int):
    """Median of the raw forecasting samples, drawn from the same stream the FS method uses."""
    if forecaster is None:
        return None
    samples = sample_paths(forecaster, window.context, window.S, N,
                           stream_seed(seed, index, FS_STREAM))
    return median_reference(samples)


@dataclass(eq=False)
class AnomalyOutcome:
    index: int
    window: Window
    reference: Optional[np.ndarray]
    explanations: dict
    rows: dict


def _run_one(args) -> AnomalyOutcome:
    (index, det, rule, window, methods, hps, forecaster, seed, events) = args
    n_ref = hps[Method.FS].max_ensemble if Method.FS in hps else HyperParams().max_ensemble
    reference = reference_for(forecaster, window, n_ref, seed, index)
    truth = true_channels(events, window) if events else None
    explanations, rows = {}, {}
    for method in methods:
        ex = explain_window(det, rule, window, method, hps[method], forecaster, seed, index)
        w = ex.final_selector if method.is_sparse else None
        rows[method] = anomaly_row(
            method, ex.ensemble, window.suspect, reference=reference, forecaster=forecaster,
            context=window.context, rejection_rate=ex.rejection_rate, w=w,
            true_dims=truth if method.is_sparse else None)
        explanations[method] = ex
    return AnomalyOutcome(index, window, reference, explanations, rows)


@dataclass(eq=False)
class CorpusResult:
    methods: list
    outcomes: list
    reports: dict

    def rows(self, method) -> list:
        return [o.rows[Method(method)] for o in self.outcomes]


def evaluate_windows(det: Detector, rule: DetectionRule, windows, methods, hps=None,
                     forecaster: Optional[Forecaster] = None, seed: int = 0, events=None,
                     workers: Optional[int] = None) -> CorpusResult:
    """Explain every window with every method (same windows for all) and aggregate metrics."""
    methods = [Method(m) for m in methods]
    hps = dict(hps or {})
    for m in methods:
        hps.setdefault(m, HyperParams.defaults(m))
    jobs = [(i, det, rule, w, methods, hps, forecaster, seed, events)
            for i, w in enumerate(windows)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    reports = {}
    if outcomes:
        for m in methods:
            reports[m] = aggregate_report([o.rows[m] for o in outcomes])
    return CorpusResult(methods, outcomes, reports)


def predicted_labels(det: Detector, series: TimeSeries, rule: DetectionRule,
                     S: int = DEFAULT_SUSPECT_LENGTH,
                     context_length: int = DEFAULT_CONTEXT_LENGTH, start: int = 0):
    """Scores and 0/1 predictions; a score equal to the threshold counts as anomalous."""
    scores = score_series(det, series, S, context_length)
    pred = (np.nan_to_num(scores, nan=0.0) >= rule.theta).astype(np.int8)
    pred[:start] = 0
    return scores, pred


def windows_in_test_split(det: Detector, series: TimeSeries, rule: DetectionRule, mode: str = "tp",
                 S: int = DEFAULT_SUSPECT_LENGTH,
                 context_length: int = DEFAULT_CONTEXT_LENGTH) -> AnomalyWindows:
    """Anomaly windows whose events start inside the test split (the last half of the series).

    Contexts may reach back into the validation rows; window origins stay in
    the coordinates of the full series.
    """
    _, _, test = split(series)
    _, pred = predicted_labels(det, series, rule, S, context_length, start=series.T - test.T)
    return enumerate_anomaly_windows(series, pred, mode, S, context_length)
