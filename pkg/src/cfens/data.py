"""CSV ingestion, train/val/test splits, synthetic corpora and anomaly-window enumeration."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import DEFAULT_CONTEXT_LENGTH, DEFAULT_SUSPECT_LENGTH, TimeSeries, Window, make_window
from .errors import MissingLabels, NonFiniteValue, ParseError, SpecInfeasible, TooShort

log = logging.getLogger(__name__)

ANOMALY_KINDS = ("spike", "level_shift", "drift")
BASES = ("sine", "ar-noise", "mixed")


# -- CSV --------------------------------------------------------------------

def load_csv(path, name: Optional[str] = None) -> TimeSeries:
    """Read ``timestamp,dim_0,...,dim_{D-1}[,label]``; the timestamp column is ignored."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "timestamp":
            raise ParseError(f"{path}: row 1: header must start with 'timestamp'")
        has_label = header[-1] == "label"
        dims = header[1:-1] if has_label else header[1:]
        if not dims:
            raise ParseError(f"{path}: row 1: no value columns")
        for j, col in enumerate(dims):
            if col != f"dim_{j}":
                raise ParseError(f"{path}: row 1, column {j + 2}: expected 'dim_{j}', got {col!r}")
        values, labels = [], []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
            parsed = []
            for j, cell in enumerate(row[1:1 + len(dims)], start=2):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {r}, column {j}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise NonFiniteValue(f"{path}: row {r}, column {j}: non-finite value {cell!r}")
                parsed.append(v)
            values.append(parsed)
            if has_label:
                cell = row[-1].strip()
                if cell not in ("0", "1"):
                    raise ParseError(f"{path}: row {r}, column {len(header)}: label must be 0 or 1")
                labels.append(int(cell))
    if not values:
        raise ParseError(f"{path}: no data rows")
    return TimeSeries(np.array(values), np.array(labels) if has_label else None,
                      name or str(path))


def write_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["timestamp"] + [f"dim_{d}" for d in range(series.D)]
        if series.labels is not None:
            header.append("label")
        writer.writerow(header)
        for t in range(series.T):
            row = [str(t)] + [repr(float(v)) for v in series.values[t]]
            if series.labels is not None:
                row.append(str(int(series.labels[t])))
            writer.writerow(row)


def split(series: TimeSeries):
    """Contiguous 30 / 20 / 50 split by timestamp count."""
    if series.T < 10:
        raise TooShort(f"need T >= 10 to split, got {series.T}")
    a = int(math.floor(0.3 * series.T))
    b = a + int(math.floor(0.2 * series.T))
    return (series.slice(0, a, f"{series.name}:train"),
            series.slice(a, b, f"{series.name}:val"),
            series.slice(b, series.T, f"{series.name}:test"))


# -- synthetic corpus ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    T: int = 4000
    D: int = 1
    base: str = "sine"
    kinds: tuple = ("spike",)
    count: int = 10
    amplitude: tuple = (4.0, 5.0)
    channels: int = 1
    seed: int = 0
    S: int = DEFAULT_SUSPECT_LENGTH
    context_length: int = DEFAULT_CONTEXT_LENGTH
    period: float = 40.0
    noise: float = 0.05
    clean_fraction: float = 0.0

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"base must be one of {BASES}")
        bad = set(self.kinds) - set(ANOMALY_KINDS)
        if bad:
            raise ValueError(f"unknown anomaly kinds {sorted(bad)}")
        if self.count < 0 or self.T < 1 or self.D < 1:
            raise ValueError("T, D must be >= 1 and count >= 0")
        if self.count and not self.kinds:
            raise ValueError("anomalies requested but no kinds given")
        if not 1 <= self.channels <= self.D:
            raise ValueError("channels per event must lie in [1, D]")
        lo, hi = self.amplitude
        if not 0 <= lo <= hi:
            raise ValueError("amplitude range must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class Event:
    start: int
    length: int
    kind: str
    channels: tuple
    amplitude: float

    @property
    def stop(self) -> int:
        return self.start + self.length


class SyntheticCorpus(NamedTuple):
    series: TimeSeries
    events: list
    spec: SyntheticSpec

    def sidecar(self) -> dict:
        return {
            "spec": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.spec).items()},
            "events": [dict(asdict(e), channels=list(e.channels)) for e in self.events],
        }


def _base(spec: SyntheticSpec, rng) -> np.ndarray:
    t = np.arange(spec.T)[:, None]
    out = np.zeros((spec.T, spec.D))
    if spec.base in ("sine", "mixed"):
        periods = spec.period * rng.uniform(0.75, 1.25, size=spec.D)
        phases = rng.uniform(0, 2 * np.pi, size=spec.D)
        out += np.sin(2 * np.pi * t / periods + phases)
    if spec.base in ("ar-noise", "mixed"):
        e = rng.standard_normal((spec.T, spec.D)) * (0.3 if spec.base == "mixed" else 1.0)
        ar = np.zeros_like(e)
        ar[0] = e[0]
        for i in range(1, spec.T):
            ar[i] = 0.8 * ar[i - 1] + e[i]
        out += ar
    out += spec.noise * rng.standard_normal((spec.T, spec.D))
    return out


def _event_starts(spec: SyntheticSpec, rng) -> list:
    if spec.count == 0:
        return []
    spacing = spec.context_length + spec.S
    lo = max(spec.context_length, int(math.ceil(spec.clean_fraction * spec.T)))
    hi = spec.T - spec.S
    slot = (hi - lo + 1) // spec.count
    if hi < lo or slot < spacing:
        raise SpecInfeasible(
            f"cannot place {spec.count} events {spacing} apart in [{lo}, {hi}] (T={spec.T})")
    jitter = rng.integers(0, slot - spacing + 1, size=spec.count)
    return [lo + i * slot + int(j) for i, j in enumerate(jitter)]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Seeded base signal plus injected spikes, level shifts and drifts with ground truth."""
    rng = np.random.default_rng(spec.seed)
    values = _base(spec, rng)
    scale = values.std(axis=0)
    labels = np.zeros(spec.T, dtype=np.int8)
    events = []
    for start in _event_starts(spec, rng):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        amp = float(rng.uniform(*spec.amplitude))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        channels = tuple(sorted(int(c) for c in rng.choice(spec.D, size=spec.channels,
                                                             replace=False)))
        length = 1 if kind == "spike" else spec.S
        if kind == "drift":
            shape = np.linspace(1.0 / length, 1.0, length)
        else:
            shape = np.ones(length)
        for c in channels:
            values[start:start + length, c] += sign * amp * scale[c] * shape
        labels[start:start + length] = 1
        events.append(Event(start, length, kind, channels, sign * amp))
    series = TimeSeries(values, labels, f"synthetic-{spec.seed}")
    return SyntheticCorpus(series, events, spec)


def save_sidecar(corpus: SyntheticCorpus, path) -> None:
    with open(path, "w") as fh:
        json.dump(corpus.sidecar(), fh, indent=2)


def load_sidecar(path) -> list:
    with open(path) as fh:
        doc = json.load(fh)
    return [Event(e["start"], e["length"], e["kind"], tuple(e["channels"]), e["amplitude"])
            for e in doc["events"]]


def true_channels(events, window: Window) -> Optional[set]:
    """Ground-truth channels of the events overlapping a window's suspect rows."""
    start = window.origin[1]
    stop = start + window.S
    hits = [e for e in events if e.start < stop and start < e.stop]
    if not hits:
        return None
    return set().union(*(set(e.channels) for e in hits))


# -- anomaly windows ----------------------------------------------------------

class AnomalyWindows(list):
    """Enumerated windows plus the counts of events skipped or truncated."""

    def __init__(self, windows=(), skipped: int = 0, truncated: int = 0):
        super().__init__(windows)
        self.skipped = skipped
        self.truncated = truncated


def _runs(mask) -> list:
    mask = np.asarray(mask).astype(bool)
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def enumerate_anomaly_windows(series: TimeSeries, predicted_labels, mode: str = "tp",
                              S: int = DEFAULT_SUSPECT_LENGTH,
                              context_length: int = DEFAULT_CONTEXT_LENGTH) -> AnomalyWindows:
    """One suspect window per predicted event, starting at the event's first timestamp.

    ``mode`` is ``tp`` (events overlapping ground truth), ``fp`` (events
    disjoint from it) or ``all``.
    """
    mode = mode.lower()
    if mode not in ("tp", "fp", "all"):
        raise ValueError(f"unknown mode {mode!r}")
    pred = np.asarray(predicted_labels)
    if pred.shape != (series.T,):
        raise ValueError("predicted labels must have length T")
    if mode != "all" and series.labels is None:
        raise MissingLabels(f"mode {mode} needs ground-truth labels")
    out = AnomalyWindows()
    last_stop = -1
    for a, b in _runs(pred == 1):
        if mode != "all":
            overlaps = bool(series.labels[a:b].any())
            if overlaps != (mode == "tp"):
                continue
        if a < last_stop:
            continue
        if a < context_length or a + S > series.T:
            out.skipped += 1
            continue
        if b - a > S:
            out.truncated += 1
        out.append(make_window(series, a, S, context_length))
        last_stop = a + S
    if out.skipped or out.truncated:
        log.info("anomaly windows: %d kept, %d skipped near the series edges, %d truncated",
                 len(out), out.skipped, out.truncated)
    return out
