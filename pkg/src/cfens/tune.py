"""Hyperparameter grid search with a feasibility-then-smoothness selection rule.

Every configuration is scored on the same seeded subsample of anomalies. The
winner is the feasible configuration (failure rate within the threshold) with
the lowest mean Implausibility 2; when nothing is feasible, the lowest
failure rate wins instead.
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DetectionRule, HyperParams, Method
from .detect import Detector
from .errors import ConfigError, NoAnomalies
from .metrics import aggregate_report, anomaly_row
from .pipeline import explain_window, reference_for, worker_count


@dataclass(frozen=True)
class GridSpec:
    lambda_joint: tuple = (0.001, 0.01, 0.1, 1.0)
    lambdaT: tuple = (0.001, 0.01, 0.1, 1.0)
    sigma_max: tuple = (3.0, 5.0, 10.0)
    learning_rate: tuple = (0.01, 0.1, 1.0, 10.0, 1000.0, 10000.0)
    failure_threshold: float = 0.10
    sample_size: int = 100

    def __post_init__(self):
        for name in ("lambda_joint", "lambdaT", "sigma_max", "learning_rate"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ConfigError(f"grid axis {name} is empty")
            object.__setattr__(self, name, values)
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError("failure_threshold must lie in [0, 1]")
        if self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1")

    def configurations(self, method, base: Optional[HyperParams] = None) -> list:
        """Grid points in enumeration order; the blur width only varies for blur methods."""
        method = Method(method)
        base = base or HyperParams.defaults(method)
        sigmas = self.sigma_max if method.uses_blur else (base.sigma_max,)
        out = []
        for lam, lamT, sig, lr in itertools.product(self.lambda_joint, self.lambdaT, sigmas,
                                                    self.learning_rate):
            out.append(base.replace(lambda1=lam, lambda2=lam, lambdaT=lamT, sigma_max=sig,
                                    learning_rate=lr))
        return out


@dataclass(frozen=True)
class LeaderboardRow:
    index: int
    hp: HyperParams
    failure: float
    impl1: Optional[float]
    impl2: Optional[float]

    def to_dict(self) -> dict:
        return {"index": self.index, "lambda1": self.hp.lambda1, "lambda2": self.hp.lambda2,
                "lambdaT": self.hp.lambdaT, "sigma_max": self.hp.sigma_max,
                "learning_rate": self.hp.learning_rate, "failure": self.failure,
                "impl1": self.impl1, "impl2": self.impl2}


def _impl2_key(row: LeaderboardRow) -> float:
    return np.inf if row.impl2 is None else row.impl2


def select_best(leaderboard, failure_threshold: float) -> LeaderboardRow:
    """Pure selection over leaderboard rows; ties fall back to enumeration order."""
    rows = list(leaderboard)
    if not rows:
        raise ValueError("empty leaderboard")
    feasible = [r for r in rows if r.failure <= failure_threshold]
    if feasible:
        return min(feasible, key=lambda r: (_impl2_key(r), r.index))
    return min(rows, key=lambda r: (r.failure, _impl2_key(r), r.index))


def sample_anomalies(anomalies, size: int, seed: int) -> list:
    """Seeded uniform subsample without replacement, kept in corpus order."""
    anomalies = list(anomalies)
    if len(anomalies) <= size:
        return list(range(len(anomalies)))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0, 2)))
    return sorted(int(i) for i in rng.choice(len(anomalies), size=size, replace=False))


def _score_config(args) -> LeaderboardRow:
    index, det, rule, windows, method, hp, forecaster, seed, picks = args
    rows = []
    for i, window in zip(picks, windows):
        ex = explain_window(det, rule, window, method, hp, forecaster, seed, i)
        ref = reference_for(forecaster, window, hp.max_ensemble, seed, i)
        rows.append(anomaly_row(method, ex.ensemble, window.suspect, reference=ref,
                                rejection_rate=ex.rejection_rate))
    rep = aggregate_report(rows)
    impl1 = None if rep.implausibility1 is None else rep.implausibility1[0]
    impl2 = None if rep.implausibility2 is None else rep.implausibility2[0]
    return LeaderboardRow(index, hp, rep.failure_rate, impl1, impl2)


def grid_search(det: Detector, rule: DetectionRule, anomalies, variant, grid: GridSpec = None,
                seed: int = 0, base: Optional[HyperParams] = None, forecaster=None,
                workers: Optional[int] = None):
    """Returns ``(best HyperParams, leaderboard rows in grid order)``."""
    anomalies = list(anomalies)
    if not anomalies:
        raise NoAnomalies("grid search needs at least one anomaly window")
    method = Method(variant)
    grid = grid or GridSpec()
    picks = sample_anomalies(anomalies, grid.sample_size, seed)
    windows = [anomalies[i] for i in picks]
    configs = grid.configurations(method, base)
    jobs = [(k, det, rule, windows, method, hp, forecaster, seed, picks)
            for k, hp in enumerate(configs)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            board = list(pool.map(_score_config, jobs))
    else:
        board = [_score_config(j) for j in jobs]
    board.sort(key=lambda r: r.index)
    best = select_best(board, grid.failure_threshold)
    return best.hp, board


FIELDS = ("index", "lambda1", "lambda2", "lambdaT", "sigma_max", "learning_rate",
          "failure", "impl1", "impl2")


def save_leaderboard(board, csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in board:
            d = row.to_dict()
            writer.writerow({k: "" if d[k] is None else repr(d[k]) for k in FIELDS})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([r.to_dict() for r in board], fh, indent=2)


def load_leaderboard(json_path, base: Optional[HyperParams] = None) -> list:
    """Rebuilds leaderboard rows from JSON so selection can be re-run offline."""
    base = base or HyperParams()
    with open(json_path) as fh:
        docs = json.load(fh)
    return [LeaderboardRow(d["index"],
                           base.replace(lambda1=d["lambda1"], lambda2=d["lambda2"],
                                        lambdaT=d["lambdaT"], sigma_max=d["sigma_max"],
                                        learning_rate=d["learning_rate"]),
                           d["failure"], d["impl1"], d["impl2"]) for d in docs]
