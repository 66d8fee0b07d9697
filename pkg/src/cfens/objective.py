"""Penalized counterfactual objectives and their gradients.

Four variants share the same hinge on the detector scores and differ in what
is optimized:

* ICE: the perturbed suspect itself.
* DPE: a blur map ``M`` in [0, 1]^{S x D}.
* sparse ICE: a dimension selector ``w`` and replacement values ``Z``.
* sparse DPE: a dimension selector ``w`` and a temporal profile ``t``.

All subgradients of ``|.|`` (l1, total variation, hinge) are 0 at the kink, and
the Frobenius term uses the unsquared norm with gradient 0 at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import HyperParams, Window
from .detect import Detector
from .errors import NonFiniteLoss
from .perturb import apply_map, mix_sparse, outer_map


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    pred: float
    closeness: float
    smoothness: float
    sparsity: float = 0.0

    def to_dict(self) -> dict:
        return {"total": self.total, "pred": self.pred, "closeness": self.closeness,
                "smoothness": self.smoothness, "sparsity": self.sparsity}


class Evaluation(NamedTuple):
    """Everything one objective evaluation produces; ``grads`` is keyed by variable name."""

    loss: LossBreakdown
    grads: dict
    candidate: np.ndarray
    scores: np.ndarray


def hinge_pred(scores, c: float):
    scores = np.asarray(scores, dtype=float)
    excess = scores - c
    return float(np.sum(np.maximum(excess, 0.0))), (excess > 0).astype(float)


def _tv(X, axis=0):
    """Total variation along ``axis`` and its subgradient."""
    X = np.asarray(X, dtype=float)
    diff = np.diff(X, axis=axis)
    sgn = np.sign(diff)
    grad = np.zeros_like(X)
    if X.shape[axis] > 1:
        head = [slice(None)] * X.ndim
        tail = [slice(None)] * X.ndim
        head[axis] = slice(None, -1)
        tail[axis] = slice(1, None)
        grad[tuple(head)] -= sgn
        grad[tuple(tail)] += sgn
    return float(np.abs(diff).sum()), grad


def _frob(diff):
    norm = float(np.sqrt(np.sum(diff * diff)))
    if norm == 0.0:
        return 0.0, np.zeros_like(diff)
    return norm, diff / norm


def _pred_terms(window: Window, det: Detector, cand, c: float):
    if not np.all(np.isfinite(cand)):
        raise NonFiniteLoss("perturbed suspect window is not finite")
    cand_window = window.with_suspect(cand)
    scores = det.score(cand_window)
    pred, dpred = hinge_pred(scores, c)
    if np.any(dpred):
        g = det.vjp(cand_window, dpred)
    else:
        g = np.zeros_like(cand_window.suspect)
    return scores, pred, g


def _finish(pred, closeness, smoothness, sparsity, grads, cand, scores):
    total = pred + closeness + smoothness + sparsity
    parts = (total, pred, closeness, smoothness, sparsity)
    if not all(np.isfinite(parts)) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NonFiniteLoss(f"non-finite objective: total={total!r}")
    return Evaluation(LossBreakdown(*parts), grads, cand, scores)


def _tv_weight(hp: HyperParams, S: int, D: int) -> float:
    # a single-row suspect has no temporal differences to penalize
    return hp.lambdaT / ((S - 1) * D) if S > 1 else 0.0


def evaluate_ice(window: Window, cand, hp: HyperParams, det: Detector) -> Evaluation:
    cand = np.asarray(cand, dtype=float)
    S, D = window.S, window.D
    scores, pred, grad = _pred_terms(window, det, cand, hp.margin_c)
    diff = cand - window.suspect
    a1 = hp.lambda1 / (S * np.sqrt(D))
    a2 = hp.lambda2 / (S * D)
    aT = _tv_weight(hp, S, D)
    norm, dnorm = _frob(diff)
    tv, dtv = _tv(cand)
    closeness = a1 * float(np.abs(diff).sum()) + a2 * norm
    grad = grad + a1 * np.sign(diff) + a2 * dnorm + aT * dtv
    return _finish(pred, closeness, aT * tv, 0.0, {"cand": grad}, cand, scores)


def evaluate_dpe(window: Window, M, hp: HyperParams, det: Detector) -> Evaluation:
    M = np.asarray(M, dtype=float)
    S, D = window.S, window.D
    cand, dcand = apply_map(window, M, hp.sigma_max, with_grad=True)
    scores, pred, g_cand = _pred_terms(window, det, cand, hp.margin_c)
    a1 = hp.lambda1 / (S * np.sqrt(D))
    a2 = hp.lambda2 / (S * D)
    aT = _tv_weight(hp, S, D)
    norm, dnorm = _frob(cand - window.suspect)
    tv, dtv = _tv(M)
    grad = (g_cand + a2 * dnorm) * dcand + a1 * np.sign(M) + aT * dtv
    return _finish(pred, a2 * norm, aT * tv, a1 * float(np.abs(M).sum()),
                   {"M": grad}, cand, scores)


def evaluate_sparse_ice(window: Window, w, Z, hp: HyperParams, det: Detector) -> Evaluation:
    w = np.asarray(w, dtype=float)
    Z = np.asarray(Z, dtype=float)
    S, D = window.S, window.D
    cand = mix_sparse(window.suspect, w, Z)
    scores, pred, g_cand = _pred_terms(window, det, cand, hp.margin_c)
    a1 = hp.lambda1 / np.sqrt(D)
    a2 = hp.lambda2 / (S * D)
    aT = _tv_weight(hp, S, D)
    norm, dnorm = _frob(cand - window.suspect)
    tv, dtv = _tv(Z)
    g_cand = g_cand + a2 * dnorm
    grad_Z = g_cand * w + aT * dtv
    grad_w = np.sum(g_cand * (Z - window.suspect), axis=0) + a1 * np.sign(w)
    return _finish(pred, a2 * norm, aT * tv, a1 * float(np.abs(w).sum()),
                   {"w": grad_w, "Z": grad_Z}, cand, scores)


def evaluate_sparse_dpe(window: Window, w, t, hp: HyperParams, det: Detector) -> Evaluation:
    w = np.asarray(w, dtype=float)
    t = np.asarray(t, dtype=float)
    S, D = window.S, window.D
    cand, dcand = apply_map(window, outer_map(w, t), hp.sigma_max, with_grad=True)
    scores, pred, g_cand = _pred_terms(window, det, cand, hp.margin_c)
    a1 = hp.lambda1 / np.sqrt(D)
    a2 = hp.lambda2 / (S * D)
    aT = hp.lambdaT / (S - 1) if S > 1 else 0.0
    norm, dnorm = _frob(cand - window.suspect)
    tv, dtv = _tv(t)
    g_M = (g_cand + a2 * dnorm) * dcand
    grad_w = g_M.T @ t + a1 * np.sign(w)
    grad_t = g_M @ w + aT * dtv
    return _finish(pred, a2 * norm, aT * tv, a1 * float(np.abs(w).sum()),
                   {"w": grad_w, "t": grad_t}, cand, scores)


def loss_ice(window: Window, cand, hp: HyperParams, det: Detector):
    ev = evaluate_ice(window, cand, hp, det)
    return ev.loss, ev.grads["cand"]


def loss_dpe(window: Window, M, hp: HyperParams, det: Detector):
    ev = evaluate_dpe(window, M, hp, det)
    return ev.loss, ev.grads["M"]


def loss_sparse_ice(window: Window, w, Z, hp: HyperParams, det: Detector):
    ev = evaluate_sparse_ice(window, w, Z, hp, det)
    return ev.loss, ev.grads["w"], ev.grads["Z"]


def loss_sparse_dpe(window: Window, w, t, hp: HyperParams, det: Detector):
    ev = evaluate_sparse_dpe(window, w, t, hp, det)
    return ev.loss, ev.grads["w"], ev.grads["t"]
