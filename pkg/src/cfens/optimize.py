"""Projected gradient descent over an explainer's variables.

Every iterate whose perturbed suspect is valid is stored as a candidate; the
final ensemble is a regular-grid subsample of the candidates by generation
rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DetectionRule, Ensemble, HyperParams, Member, Method, Window, is_valid
from .detect import Detector
from .errors import NonFiniteLoss
from .objective import (LossBreakdown, evaluate_dpe, evaluate_ice, evaluate_sparse_dpe,
                        evaluate_sparse_ice)
from .perturb import outer_map

# Starting value of the box-constrained variables (w, t, and the DPE map).
# At M = 0 the blur has zero bandwidth and its derivative vanishes, and at
# w = 0 the replacement values are masked out, so both are stationary points.
BOX_INIT = 0.5


def project_box(x):
    """Clamp to [0, 1]; works on scalars and arrays."""
    if np.ndim(x) == 0:
        return min(1.0, max(0.0, float(x)))
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Candidate:
    rank: int
    suspect: np.ndarray
    scores: np.ndarray
    variables: dict


@dataclass(eq=False)
class Trace:
    losses: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    def record(self, loss: LossBreakdown, valid: bool) -> None:
        self.losses.append(loss)
        self.valid.append(bool(valid))

    def to_dict(self) -> dict:
        keys = ("total", "pred", "closeness", "smoothness", "sparsity")
        return {
            "iterations": len(self.losses),
            "loss": {k: [getattr(l, k) for l in self.losses] for k in keys},
            "valid": list(self.valid),
            "candidate_ranks": [c.rank for c in self.candidates],
        }


def subsample_grid(candidates, N: int) -> list:
    """Regular grid over the generation rank, endpoints included."""
    if N < 1:
        raise ValueError("N must be >= 1")
    K = len(candidates)
    if K <= N:
        return list(candidates)
    if N == 1:
        idx = [0]
    else:
        idx = [int(np.floor(i * (K - 1) / (N - 1) + 0.5)) for i in range(N)]
    seen = []
    for i in idx:
        if not seen or seen[-1] != i:
            seen.append(i)
    return [candidates[i] for i in seen]


def _initial_state(method: Method, window: Window) -> dict:
    S, D = window.S, window.D
    if method is Method.ICE:
        return {"cand": np.array(window.suspect)}
    if method is Method.DPE:
        return {"M": np.full((S, D), BOX_INIT)}
    if method is Method.SPARSE_ICE:
        return {"w": np.full(D, BOX_INIT), "Z": np.array(window.suspect)}
    if method is Method.SPARSE_DPE:
        return {"w": np.full(D, BOX_INIT), "t": np.full(S, BOX_INIT)}
    raise ValueError(f"{method} is not a gradient-based method")


_BOXED = {"M", "w", "t"}


def _evaluate(method: Method, window, state, hp, det):
    if method is Method.ICE:
        return evaluate_ice(window, state["cand"], hp, det)
    if method is Method.DPE:
        return evaluate_dpe(window, state["M"], hp, det)
    if method is Method.SPARSE_ICE:
        return evaluate_sparse_ice(window, state["w"], state["Z"], hp, det)
    return evaluate_sparse_dpe(window, state["w"], state["t"], hp, det)


def _snapshot(method: Method, state: dict) -> dict:
    if method is Method.ICE:
        return {}
    snap = {k: np.array(v) for k, v in state.items()}
    if method is Method.SPARSE_DPE:
        snap["M"] = outer_map(state["w"], state["t"])
    return snap


def explain(det: Detector, rule: DetectionRule, window: Window, variant, hp: HyperParams):
    """Run one gradient-based explainer; returns ``(ensemble, trace)``.

    An empty ensemble means no valid iterate was found. A divergent run raises
    :class:`NonFiniteLoss` with the partial trace attached.
    """
    method = Method(variant)
    state = _initial_state(method, window)
    trace = Trace()
    lr = hp.learning_rate
    try:
        ev = _evaluate(method, window, state, hp, det)
        for it in range(1, hp.iterations + 1):
            for name, g in ev.grads.items():
                x = state[name] - lr * g
                state[name] = project_box(x) if name in _BOXED else x
            ev = _evaluate(method, window, state, hp, det)
            ok = is_valid(ev.scores, rule)
            trace.record(ev.loss, ok)
            if ok:
                trace.candidates.append(
                    Candidate(it, ev.candidate, np.array(ev.scores), _snapshot(method, state)))
    except NonFiniteLoss as exc:
        raise NonFiniteLoss(f"{exc} at iteration {len(trace.losses) + 1} "
                            f"(learning rate {lr:g} likely diverges)", trace) from None
    chosen = subsample_grid(trace.candidates, hp.max_ensemble)
    members = [Member(c.suspect, c.scores, c.rank) for c in chosen]
    return Ensemble(method, members), trace


def selected_variables(trace: Trace, ensemble: Ensemble) -> list:
    """Optimization variables (maps, selectors) of each ensemble member, in member order."""
    by_rank = {c.rank: c for c in trace.candidates}
    return [by_rank[m.rank].variables for m in ensemble.members]
