"""Gaussian-blur perturbation operator and the maps that drive it.

Indices are 0-based throughout: ``t`` addresses a row of the full window
(context rows first), so the suspect rows are ``L - S .. L - 1``.
"""

from __future__ import annotations

import numpy as np

from .core import Window


def _window_values(window) -> np.ndarray:
    if isinstance(window, Window):
        return window.values
    arr = np.asarray(window, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def gaussian_blur(window, t: int, i: int, m: float, sigma_max: float) -> float:
    """Kernel-weighted average of dimension ``i`` around row ``t``.

    The bandwidth is ``sigma_max * (1 - m)``; a zero bandwidth returns the
    original value (the delta-kernel limit).
    """
    values = _window_values(window)
    if not 0.0 <= m <= 1.0:
        raise ValueError("m must lie in [0, 1]")
    sigma = sigma_max * (1.0 - m)
    if sigma == 0.0:
        return float(values[t, i])
    d = np.arange(values.shape[0]) - t
    w = np.exp(-_scaled_d2((d * d).astype(float), sigma))
    return float(w @ values[:, i] / w.sum())


def _scaled_d2(d2, sigma):
    """``d2 / (2 sigma^2)``, kept at 0 on the diagonal even when ``sigma^2`` underflows."""
    denom = 2.0 * np.asarray(sigma, dtype=float) ** 2
    d2, denom = np.broadcast_arrays(d2, denom)
    out = np.full(d2.shape, np.inf)
    ok = denom > 0
    with np.errstate(over="ignore"):
        out[ok] = d2[ok] / denom[ok]
    out[d2 == 0] = 0.0
    return out


def blur_suspect(values: np.ndarray, S: int, sigma: np.ndarray, with_grad: bool = False):
    """Blur every suspect entry of an L x D window with its own bandwidth.

    ``sigma`` is S x D. Returns the blurred S x D suspect and, if requested,
    the derivative of each entry with respect to its own bandwidth.
    """
    L, D = values.shape
    sigma = np.asarray(sigma, dtype=float)
    pos = np.arange(L - S, L)
    d2 = ((pos[:, None] - np.arange(L)[None, :]) ** 2).astype(float)  # S x L
    out = values[L - S:].copy()
    grad = np.zeros_like(sigma)
    live = sigma > 0
    if np.any(live):
        s_idx, i_idx = np.nonzero(live)
        sg = sigma[s_idx, i_idx][:, None]
        dd = d2[s_idx]                       # n x L
        w = np.exp(-_scaled_d2(dd, sg))
        norm = w.sum(axis=1)
        x = values[:, i_idx].T               # n x L
        mean = (w * x).sum(axis=1) / norm
        out[s_idx, i_idx] = mean
        if with_grad:
            cov = (w * (x - mean[:, None]) * dd).sum(axis=1) / norm
            # a collapsed kernel has zero covariance; keep 0 rather than 0 / 0
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                g = cov / sg[:, 0] ** 3
            grad[s_idx, i_idx] = np.where(cov == 0, 0.0, g)
    return (out, grad) if with_grad else out


def apply_map(window: Window, M, sigma_max: float, with_grad: bool = False):
    """Perturbed suspect for a map ``M``: entry (s, i) is blurred with bandwidth ``sigma_max * M[s, i]``.

    ``M == 0`` reproduces the suspect exactly. With ``with_grad`` the
    entrywise derivative of the output with respect to ``M`` is returned too.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != window.suspect.shape:
        raise ValueError(f"map shape {M.shape} does not match suspect {window.suspect.shape}")
    if np.any(M < 0) or np.any(M > 1):
        raise ValueError("map entries must lie in [0, 1]")
    sigma = sigma_max * M
    if not with_grad:
        return blur_suspect(window.values, window.S, sigma)
    out, dsigma = blur_suspect(window.values, window.S, sigma, with_grad=True)
    return out, dsigma * sigma_max


def outer_map(w, t) -> np.ndarray:
    """``M[s, i] = t[s] * w[i]``."""
    return np.outer(np.asarray(t, dtype=float), np.asarray(w, dtype=float))


def mix_sparse(W_S, w, Z) -> np.ndarray:
    """Per-dimension convex mix: dimension ``i`` is ``w[i] * Z + (1 - w[i]) * W_S``."""
    W_S = np.asarray(W_S, dtype=float)
    w = np.asarray(w, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.shape != W_S.shape or w.shape != (W_S.shape[1],):
        raise ValueError("shape mismatch between W_S, w and Z")
    out = w * Z + (1.0 - w) * W_S
    # keep unselected dimensions bit-identical
    out[:, w == 0] = W_S[:, w == 0]
    return out
