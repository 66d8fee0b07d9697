"""SVG rendering of counterfactual ensembles and perturbation-map heat maps.

Output is built as plain strings with fixed number formatting, so identical
inputs give identical bytes.
"""

from __future__ import annotations

from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .core import DetectionRule, Ensemble, Window
from .errors import TooManyDims

MAX_PANELS = 8
WIDTH = 720
PANEL_H = 140
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 48, 120, 28, 22

# sequential scale, light yellow (score 0) to dark red (score theta)
_STOPS = np.array([
    [255, 237, 160],
    [254, 178, 76],
    [240, 59, 32],
    [128, 0, 38],
], dtype=float)


def score_color(score: float, theta: float) -> str:
    """Monotone map of a score in [0, theta] to a hex color; values outside are clipped."""
    x = 0.0 if theta <= 0 else float(np.clip(score / theta, 0.0, 1.0))
    pos = x * (len(_STOPS) - 1)
    lo = min(int(np.floor(pos)), len(_STOPS) - 2)
    frac = pos - lo
    rgb = _STOPS[lo] * (1 - frac) + _STOPS[lo + 1] * frac
    return "#" + "".join(f"{int(round(c)):02x}" for c in rgb)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _polyline(xs, ys, color: str, width: float = 1.5, opacity: float = 1.0) -> str:
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{_f(width)}" '
            f'stroke-opacity="{_f(opacity)}" points="{pts}"/>')


def _check_dims(D: int, dims) -> list:
    dims = list(range(D)) if dims is None else [int(d) for d in dims]
    bad = [d for d in dims if not 0 <= d < D]
    if bad:
        raise ValueError(f"dimensions {bad} out of range for D={D}")
    if len(dims) > MAX_PANELS:
        raise TooManyDims(f"{len(dims)} dimensions requested; at most {MAX_PANELS} per page")
    return dims


def render_svg(window: Window, ensemble: Ensemble, rule: DetectionRule,
               dims: Optional[list] = None, title: Optional[str] = None) -> str:
    """Original window as a reference line, members over the suspect span colored by max score."""
    dims = _check_dims(window.D, dims)
    L, S = window.L, window.S
    values = window.values
    members = [(float(np.max(m.scores)), m.suspect) for m in ensemble.members]
    height = MARGIN_T + len(dims) * PANEL_H + MARGIN_B
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    xs = MARGIN_L + np.arange(L) * (plot_w / max(L - 1, 1))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">',
           f'<rect width="{WIDTH}" height="{height}" fill="#ffffff"/>']
    head = title or f"{ensemble.method.label}: {len(ensemble)} counterfactual(s)"
    out.append(f'<text x="{MARGIN_L}" y="18" font-family="sans-serif" font-size="13">'
               f'{escape(head)}</text>')
    x0 = xs[L - S]
    for k, d in enumerate(dims):
        top = MARGIN_T + k * PANEL_H
        inner_top, inner_h = top + 6, PANEL_H - 16
        col = [values[:, d]] + [m[1][:, d] for m in members]
        lo = min(float(np.min(c)) for c in col)
        hi = max(float(np.max(c)) for c in col)
        if hi - lo < 1e-12:
            lo, hi = lo - 1.0, hi + 1.0

        def y(v, lo=lo, hi=hi, inner_top=inner_top, inner_h=inner_h):
            return inner_top + inner_h * (1.0 - (np.asarray(v) - lo) / (hi - lo))

        out.append(f'<rect x="{_f(x0)}" y="{_f(inner_top)}" width="{_f(xs[-1] - x0)}" '
                   f'height="{_f(inner_h)}" fill="#eeeeee"/>')
        out.append(f'<text x="4" y="{_f(inner_top + inner_h / 2)}" font-family="sans-serif" '
                   f'font-size="11">dim {d}</text>')
        out.append(_polyline(xs, y(values[:, d]), "#222222", 1.2))
        # highest scores first so the most normal members end up on top
        order = sorted(range(len(members)), key=lambda i: (-members[i][0], i))
        for i in order:
            score, suspect = members[i]
            seg_x = np.concatenate([[xs[L - S - 1]], xs[L - S:]]) if L > S else xs[L - S:]
            seg_v = np.concatenate([[values[L - S - 1, d]], suspect[:, d]]) if L > S \
                else suspect[:, d]
            out.append(_polyline(seg_x, y(seg_v), score_color(score, rule.theta), 1.5, 0.85))
        if not members:
            out.append(f'<text x="{_f(x0 + 4)}" y="{_f(inner_top + 14)}" font-family="sans-serif" '
                       f'font-size="12" fill="#b00020">no counterfactual found</text>')
    out.extend(_legend(rule.theta, WIDTH - MARGIN_R + 24, MARGIN_T + 6))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend(theta: float, x: float, y: float, steps: int = 10, h: float = 100.0) -> list:
    out = [f'<text x="{_f(x)}" y="{_f(y - 4)}" font-family="sans-serif" font-size="10">'
           f'max score</text>']
    cell = h / steps
    for k in range(steps):
        # top of the bar is theta, bottom is 0
        v = theta * (steps - k - 0.5) / steps
        out.append(f'<rect x="{_f(x)}" y="{_f(y + k * cell)}" width="14" height="{_f(cell)}" '
                   f'fill="{score_color(v, theta)}"/>')
    out.append(f'<text x="{_f(x + 18)}" y="{_f(y + 8)}" font-family="sans-serif" '
               f'font-size="10">{theta:g}</text>')
    out.append(f'<text x="{_f(x + 18)}" y="{_f(y + h)}" font-family="sans-serif" '
               f'font-size="10">0</text>')
    return out


def render_map_svg(M, title: str = "perturbation map", cell: int = 14) -> str:
    """Grey-scale heat map of a map in [0, 1]; rows are timestamps, columns dimensions."""
    M = np.clip(np.asarray(M, dtype=float), 0.0, 1.0)
    if M.ndim != 2:
        raise ValueError("perturbation map must be 2-D")
    S, D = M.shape
    w, h = 40 + D * cell + 10, 30 + S * cell + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="#ffffff"/>',
           f'<text x="4" y="16" font-family="sans-serif" font-size="11">{escape(title)}</text>']
    for s in range(S):
        for d in range(D):
            g = int(round(255 * (1.0 - M[s, d])))
            out.append(f'<rect x="{40 + d * cell}" y="{30 + s * cell}" width="{cell}" '
                       f'height="{cell}" fill="#{g:02x}{g:02x}{g:02x}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
