"""Oracles shared by the unit and acceptance tests."""

import itertools

import numpy as np

from cfens.core import TimeSeries, Window
from cfens.detect import ZScoreDetector, fit_linear_recon
from cfens.objective import evaluate_dpe, evaluate_ice, evaluate_sparse_dpe, evaluate_sparse_ice

FD_STEP = 1e-5
KINK = 1e-6


def central_difference(f, x, step=FD_STEP):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += step
        down[idx] -= step
        out[idx] = (f(up) - f(down)) / (2 * step)
    return out


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def brute_force_dtw(a, b) -> float:
    """Minimum over every monotone, continuous alignment path (exponential; tiny inputs only)."""
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    n, m = len(a), len(b)
    best = np.inf

    def walk(i, j, acc):
        nonlocal best
        acc += float(np.linalg.norm(a[i] - b[j]))
        if acc >= best:
            return
        if i == n - 1 and j == m - 1:
            best = acc
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, acc)

    walk(0, 0, 0.0)
    return best


def recon_detector(rng, D, S=10):
    """Linear reconstruction detector fitted on smooth random training data."""
    T = 400
    t = np.arange(T)[:, None]
    base = np.sin(2 * np.pi * t / 25.0 + rng.uniform(0, 6, size=D))
    train = TimeSeries(base + 0.3 * rng.normal(size=(T, D)))
    return fit_linear_recon(train, S=S, h=3, q=0.99), train


def detectors(rng, D, S=10):
    recon, train = recon_detector(rng, D, S)
    return {"zscore": ZScoreDetector(), "recon": recon}, train


def gradient_instance(rng, D, S=10, kind="zscore"):
    """Window whose suspect carries a moderate spike, so scores are neither 0 nor 1."""
    dets, train = detectors(rng, D, S)
    start = int(rng.integers(0, train.T - S - 40))
    ctx = np.array(train.values[start:start + 40])
    sus = np.array(train.values[start + 40:start + 40 + S])
    sus[int(rng.integers(S)), int(rng.integers(D))] += rng.uniform(1.0, 2.5) * rng.choice([-1, 1])
    return dets[kind], Window(ctx, sus)


def _kinky_ice(window, cand):
    diff = cand - window.suspect
    tv = np.diff(cand, axis=0)
    return np.any(np.abs(diff) < KINK) or np.any(np.abs(tv) < KINK)


def check_objective(variant, det, window, hp, rng):
    """Returns the relative errors of every analytic gradient of one random instance."""
    S, D = window.S, window.D
    if variant == "ice":
        x = window.suspect + rng.normal(scale=0.3, size=(S, D))
        ev = evaluate_ice(window, x, hp, det)
        fd = central_difference(lambda c: evaluate_ice(window, c, hp, det).loss.total, x)
        return [relative_error(ev.grads["cand"], fd)]
    if variant == "dpe":
        M = rng.uniform(0.05, 0.95, size=(S, D))
        ev = evaluate_dpe(window, M, hp, det)
        fd = central_difference(lambda m: evaluate_dpe(window, m, hp, det).loss.total, M)
        return [relative_error(ev.grads["M"], fd)]
    if variant == "sparse-ice":
        w = rng.uniform(0.05, 0.95, size=D)
        Z = window.suspect + rng.normal(scale=0.3, size=(S, D))
        ev = evaluate_sparse_ice(window, w, Z, hp, det)
        fw = central_difference(lambda v: evaluate_sparse_ice(window, v, Z, hp, det).loss.total, w)
        fz = central_difference(lambda z: evaluate_sparse_ice(window, w, z, hp, det).loss.total, Z)
        return [relative_error(ev.grads["w"], fw), relative_error(ev.grads["Z"], fz)]
    w = rng.uniform(0.05, 0.95, size=D)
    t = rng.uniform(0.05, 0.95, size=S)
    ev = evaluate_sparse_dpe(window, w, t, hp, det)
    fw = central_difference(lambda v: evaluate_sparse_dpe(window, v, t, hp, det).loss.total, w)
    ft = central_difference(lambda u: evaluate_sparse_dpe(window, w, u, hp, det).loss.total, t)
    return [relative_error(ev.grads["w"], fw), relative_error(ev.grads["t"], ft)]


def zscore_near_tie(det, window, suspect) -> bool:
    """True when the per-row max of |z| is within the kink tolerance of a tie or of zero."""
    mu = window.context.mean(axis=0)
    sd = window.context.std(axis=0) + det.eps
    z = np.abs((suspect - mu) / sd)
    if z.shape[1] > 1:
        top2 = np.sort(z, axis=1)[:, -2:]
        if np.any(top2[:, 1] - top2[:, 0] < KINK):
            return True
    return bool(np.any(z.max(axis=1) < KINK))


def all_pairs(n):
    return itertools.combinations(range(n), 2)
