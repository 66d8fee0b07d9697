"""``cfens`` command-line entry point.

Subcommands: synth, detect, explain, evaluate, tune, render. Every command
accepts ``--config PATH`` (a JSON object keyed by flag names); explicit flags
override the file. Module errors exit with status 1 and a single line
``error: <Kind>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import (DEFAULT_CONTEXT_LENGTH, DEFAULT_SUSPECT_LENGTH, DEFAULT_THETA, DetectionRule,
                   Ensemble, HyperParams, Member, Method, Window, make_window)
from .data import (ANOMALY_KINDS, BASES, SyntheticSpec, generate_synthetic, load_csv,
                   load_sidecar, save_sidecar, split, true_channels, write_csv)
from .detect import ZScoreDetector, fit_linear_recon, load_detector, save_detector
from .errors import CfensError, ConfigError
from .metrics import anomaly_row, format_table
from .pipeline import (evaluate_windows, explain_window, predicted_labels, reference_for,
                       windows_in_test_split)
from .render import render_map_svg, render_svg
from .sample import Forecaster, fit_forecaster
from .tune import GridSpec, grid_search, save_leaderboard

SCHEMA = "cfens.report/1"
ALL = "all"
AR_ORDER = 5

# flag dest -> (type, built-in default); config files may set any of these
COMMON = {
    "seed": (int, 0),
    "theta": (float, DEFAULT_THETA),
    "S": (int, DEFAULT_SUSPECT_LENGTH),
    "context": (int, DEFAULT_CONTEXT_LENGTH),
    "out": (str, "."),
}
MODEL = {
    "input": (str, None),
    "detector": (str, "zscore"),
    "detector_path": (str, None),
}
HP = {
    "N": (int, 100),
    "iterations": (int, None),
    "lambda1": (float, None),
    "lambda2": (float, None),
    "lambdaT": (float, None),
    "sigma_max": (float, None),
    "lr": (float, None),
    "margin": (float, None),
}
COMMANDS = {
    "synth": {**COMMON, "T": (int, 4000), "D": (int, 1), "base": (str, "sine"),
              "kinds": (str, "spike"), "count": (int, 10), "channels": (int, 1),
              "amplitude": (str, "4,5"), "clean_fraction": (float, 0.5), "noise": (float, 0.05)},
    "detect": {**COMMON, **MODEL},
    "explain": {**COMMON, **MODEL, **HP, "method": (str, "ice"), "mode": (str, "tp"),
                "start": (int, None), "limit": (int, None)},
    "evaluate": {**COMMON, **MODEL, **HP, "methods": (str, "dpe,ice,fs,naive"),
                 "mode": (str, "tp"), "events": (str, None)},
    "tune": {**COMMON, **MODEL, **HP, "method": (str, "ice"), "mode": (str, "tp"),
             "failure_threshold": (float, 0.10), "sample_size": (int, 100),
             "grid_lambda": (str, None), "grid_lambdaT": (str, None),
             "grid_sigma": (str, None), "grid_lr": (str, None)},
    "render": {**COMMON, "report": (str, None), "dims": (str, None)},
}
CHOICES = {
    "detector": ("zscore", "recon", "ext"),
    "mode": ("tp", "fp", "all"),
    "method": tuple(m.value for m in Method),
    "base": BASES,
}


def _flag(dest: str) -> str:
    return "--" + dest.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfens", description="Counterfactual ensembles for time-series anomaly detectors.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fields in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON file of flag values")
        for dest, (typ, default) in fields.items():
            kwargs = {"dest": dest, "type": typ, "default": None}
            if dest in CHOICES:
                kwargs["choices"] = CHOICES[dest]
            if dest == "method" and name == "explain":
                kwargs.pop("choices")
            flags = [_flag(dest)]
            if dest == "method" and name != "tune":
                flags.append("--methods")
                kwargs["dest"] = dest
            if dest == "methods":
                flags.append("--method")
            if dest == "lr":
                flags.append("--learning-rate")
            p.add_argument(*flags, **kwargs,
                           help=f"default: {default}" if default is not None else None)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merges built-in defaults, the config file and explicit flags, in that order."""
    fields = COMMANDS[args.command]
    cfg = {dest: default for dest, (_, default) in fields.items()}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in doc.items():
            dest = key.replace("-", "_")
            if dest not in fields:
                raise ConfigError(f"unknown config key {key!r} for command {args.command}")
            typ = fields[dest][0]
            try:
                cfg[dest] = None if value is None else typ(value)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r}: cannot convert {value!r}") from None
            if dest in CHOICES and cfg[dest] not in CHOICES[dest] + (ALL,):
                raise ConfigError(f"config key {key!r}: invalid choice {value!r}")
    for dest in fields:
        v = getattr(args, dest, None)
        if v is not None:
            cfg[dest] = v
    cfg["command"] = args.command
    return cfg


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text: str) -> list:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if ALL in names:
        return list(Method)
    try:
        return [Method(n) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def hyperparams(cfg: dict, method: Method) -> HyperParams:
    return HyperParams.defaults(
        method, iterations=cfg.get("iterations"), lambda1=cfg.get("lambda1"),
        lambda2=cfg.get("lambda2"), lambdaT=cfg.get("lambdaT"), sigma_max=cfg.get("sigma_max"),
        learning_rate=cfg.get("lr"), margin_c=cfg.get("margin"), max_ensemble=cfg.get("N"),
        seed=cfg.get("seed"))


def _require_input(cfg: dict):
    if not cfg.get("input"):
        raise ConfigError(f"{cfg['command']} needs --input CSV")
    return load_csv(cfg["input"])


def _detector(cfg: dict, train):
    kind = cfg["detector"]
    if kind == "zscore":
        return ZScoreDetector()
    if kind == "recon":
        return fit_linear_recon(train, S=cfg["S"])
    if not cfg.get("detector_path"):
        raise ConfigError("--detector ext needs --detector-path JSON")
    return load_detector(cfg["detector_path"])


def _events(cfg: dict, series_path):
    path = cfg.get("events")
    if path is None:
        guess = Path(series_path).with_suffix(".events.json")
        path = guess if guess.exists() else None
    return load_sidecar(path) if path else None


def _dump(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- report documents ---------------------------------------------------------

def window_doc(window: Window) -> dict:
    return {"origin": list(window.origin), "context": window.context.tolist(),
            "suspect": window.suspect.tolist()}


def window_from_doc(doc: dict) -> Window:
    origin = tuple(doc["origin"]) if doc.get("origin") else None
    return Window(np.asarray(doc["context"], dtype=float), np.asarray(doc["suspect"], dtype=float),
                  origin)


def ensemble_from_doc(doc: dict) -> Ensemble:
    method = Method(doc["method"])
    members = [Member(np.asarray(m["suspect"], dtype=float), np.asarray(m["scores"], dtype=float),
                      int(m["rank"])) for m in doc["members"]]
    return Ensemble(method, members)


def _row_doc(row) -> dict:
    return row.to_dict()


def explanation_doc(ex, det, rule, forecaster, seed: int, index: int, events=None) -> dict:
    """Self-contained report: window, members, trace, maps and the metrics computed from them."""
    method = ex.method
    reference = reference_for(forecaster, ex.window, ex.hp.max_ensemble, seed, index)
    truth = true_channels(events, ex.window) if events and method.is_sparse else None
    w = ex.final_selector if method.is_sparse else None
    row = anomaly_row(method, ex.ensemble, ex.window.suspect, reference=reference,
                      forecaster=forecaster, context=ex.window.context,
                      rejection_rate=ex.rejection_rate, w=w, true_dims=truth)
    doc = {
        "schema": SCHEMA,
        "kind": "explanation",
        "method": method.value,
        "index": index,
        "seed": seed,
        "theta": rule.theta,
        "detector": det.to_dict(),
        "hyperparameters": ex.hp.to_dict() if ex.hp else None,
        "window": window_doc(ex.window),
        "members": [{"rank": m.rank, "suspect": m.suspect.tolist(), "scores": m.scores.tolist()}
                    for m in ex.ensemble.members],
        "rejection_rate": ex.rejection_rate,
        "error": ex.error,
        "reference": None if reference is None else reference.tolist(),
        "forecaster": None if forecaster is None else forecaster.to_dict(),
        "true_dims": None if truth is None else sorted(truth),
        "metrics": _row_doc(row),
    }
    if ex.trace is not None:
        doc["trace"] = ex.trace.to_dict()
    if ex.variables:
        doc["variables"] = [{k: np.asarray(v).tolist() for k, v in sorted(var.items())}
                            for var in ex.variables]
        maps = [np.asarray(var["M"]).tolist() for var in ex.variables if "M" in var]
        doc["maps"] = maps or None
    return doc


def metrics_from_doc(doc: dict):
    """Recomputes a report's metrics from its stored ensemble."""
    window = window_from_doc(doc["window"])
    ensemble = ensemble_from_doc(doc)
    forecaster = Forecaster.from_dict(doc["forecaster"]) if doc.get("forecaster") else None
    reference = np.asarray(doc["reference"]) if doc.get("reference") is not None else None
    w = None
    if doc.get("variables") and doc.get("true_dims"):
        w = np.asarray(doc["variables"][-1]["w"])
    return anomaly_row(Method(doc["method"]), ensemble, window.suspect, reference=reference,
                       forecaster=forecaster, context=window.context,
                       rejection_rate=doc.get("rejection_rate"), w=w,
                       true_dims=set(doc["true_dims"]) if doc.get("true_dims") else None)


# -- commands -----------------------------------------------------------------

def _setup(cfg: dict):
    series = _require_input(cfg)
    train, _, _ = split(series)
    det = _detector(cfg, train)
    forecaster = fit_forecaster(train, AR_ORDER)
    rule = DetectionRule(cfg["theta"])
    return series, det, forecaster, rule


def cmd_synth(cfg: dict) -> int:
    lo_hi = _floats(cfg["amplitude"])
    if len(lo_hi) != 2:
        raise ConfigError("--amplitude takes two numbers LO,HI")
    kinds = tuple(k.strip() for k in cfg["kinds"].split(",") if k.strip())
    if set(kinds) - set(ANOMALY_KINDS):
        raise ConfigError(f"--kinds must be drawn from {ANOMALY_KINDS}")
    spec = SyntheticSpec(T=cfg["T"], D=cfg["D"], base=cfg["base"], kinds=kinds,
                         count=cfg["count"], amplitude=lo_hi, channels=cfg["channels"],
                         seed=cfg["seed"], S=cfg["S"], context_length=cfg["context"],
                         noise=cfg["noise"], clean_fraction=cfg["clean_fraction"])
    corpus = generate_synthetic(spec)
    out = _outdir(cfg)
    write_csv(corpus.series, out / "series.csv")
    save_sidecar(corpus, out / "series.events.json")
    print(f"wrote {out / 'series.csv'} ({corpus.series.T} x {corpus.series.D}, "
          f"{len(corpus.events)} events)")
    return 0


def cmd_detect(cfg: dict) -> int:
    series = _require_input(cfg)
    train, _, _ = split(series)
    det = _detector(cfg, train)
    rule = DetectionRule(cfg["theta"])
    scores, pred = predicted_labels(det, series, rule, cfg["S"], cfg["context"])
    out = _outdir(cfg)
    with open(out / "scores.csv", "w") as fh:
        fh.write("timestamp,score,label\n")
        for t, (s, p) in enumerate(zip(scores, pred)):
            fh.write(f"{t},{'' if np.isnan(s) else repr(float(s))},{int(p)}\n")
    save_detector(det, out / "detector.json")
    print(f"wrote {out / 'scores.csv'} ({int(pred.sum())} timestamps flagged)")
    return 0


def _windows(cfg: dict, series, det, rule) -> list:
    if cfg.get("start") is not None:
        return [make_window(series, cfg["start"], cfg["S"], cfg["context"])]
    windows = list(windows_in_test_split(det, series, rule, cfg["mode"], cfg["S"],
                                         cfg["context"]))
    if cfg.get("limit") is not None:
        windows = windows[:cfg["limit"]]
    return windows


def cmd_explain(cfg: dict) -> int:
    series, det, forecaster, rule = _setup(cfg)
    methods = _methods(cfg["method"])
    windows = _windows(cfg, series, det, rule)
    events = _events(cfg, cfg["input"])
    out = _outdir(cfg)
    for method in methods:
        hp = hyperparams(cfg, method)
        for i, window in enumerate(windows):
            ex = explain_window(det, rule, window, method, hp, forecaster, cfg["seed"], i)
            doc = explanation_doc(ex, det, rule, forecaster, cfg["seed"], i, events)
            path = out / f"explain_{method.value}_{i:03d}.json"
            _dump(doc, path)
            print(f"{path}: {len(ex.ensemble)} member(s)")
    if not windows:
        print("no anomaly windows found")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    series, det, forecaster, rule = _setup(cfg)
    methods = _methods(cfg["methods"])
    windows = _windows(cfg, series, det, rule)
    if not windows:
        from .errors import NoAnomalies
        raise NoAnomalies("no anomaly windows to evaluate")
    events = _events(cfg, cfg["input"])
    hps = {m: hyperparams(cfg, m) for m in methods}
    result = evaluate_windows(det, rule, windows, methods, hps, forecaster, cfg["seed"], events)
    out = _outdir(cfg)
    reports = [result.reports[m] for m in methods]
    doc = {
        "schema": SCHEMA,
        "kind": "evaluation",
        "seed": cfg["seed"],
        "theta": rule.theta,
        "detector": det.to_dict(),
        "n_anomalies": len(windows),
        "hyperparameters": {m.value: hps[m].to_dict() for m in methods},
        "reports": [r.to_dict() for r in reports],
        "anomalies": [{"index": o.index, "origin": list(o.window.origin),
                       "rows": {m.value: o.rows[m].to_dict() for m in methods}}
                      for o in result.outcomes],
    }
    _dump(doc, out / "report.json")
    table = format_table(reports)
    (out / "report.txt").write_text(table)
    first = result.outcomes[0]
    for m in methods:
        ex = first.explanations[m]
        (out / f"first_{m.value}.svg").write_text(render_svg(first.window, ex.ensemble, rule))
    sys.stdout.write(table)
    return 0


def cmd_tune(cfg: dict) -> int:
    series, det, forecaster, rule = _setup(cfg)
    method = Method(cfg["method"])
    windows = _windows(cfg, series, det, rule)
    axes = {}
    for key, field in (("grid_lambda", "lambda_joint"), ("grid_lambdaT", "lambdaT"),
                       ("grid_sigma", "sigma_max"), ("grid_lr", "learning_rate")):
        if cfg.get(key):
            axes[field] = _floats(cfg[key])
    grid = GridSpec(**axes, failure_threshold=cfg["failure_threshold"],
                    sample_size=cfg["sample_size"])
    best, board = grid_search(det, rule, windows, method, grid, cfg["seed"],
                              base=hyperparams(cfg, method), forecaster=forecaster)
    out = _outdir(cfg)
    save_leaderboard(board, out / "leaderboard.csv", out / "leaderboard.json")
    _dump({"schema": SCHEMA, "kind": "tuning", "method": method.value,
           "failure_threshold": grid.failure_threshold, "best": best.to_dict()},
          out / "best.json")
    print(f"best {method.label}: lambda1=lambda2={best.lambda1:g} lambdaT={best.lambdaT:g} "
          f"sigma_max={best.sigma_max:g} lr={best.learning_rate:g}")
    return 0


def cmd_render(cfg: dict) -> int:
    if not cfg.get("report"):
        raise ConfigError("render needs --report JSON from the explain command")
    with open(cfg["report"]) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "explanation":
        raise ConfigError("render expects an explanation report")
    window = window_from_doc(doc["window"])
    ensemble = ensemble_from_doc(doc)
    dims = [int(d) for d in _floats(cfg["dims"])] if cfg.get("dims") else None
    rule = DetectionRule(doc.get("theta", cfg["theta"]))
    out = _outdir(cfg)
    stem = Path(cfg["report"]).stem
    path = out / f"{stem}.svg"
    path.write_text(render_svg(window, ensemble, rule, dims))
    print(f"wrote {path}")
    if doc.get("maps"):
        mpath = out / f"{stem}_map.svg"
        mpath.write_text(render_map_svg(doc["maps"][-1], "perturbation map (last member)"))
        print(f"wrote {mpath}")
    return 0


HANDLERS = {
    "synth": cmd_synth, "detect": cmd_detect, "explain": cmd_explain,
    "evaluate": cmd_evaluate, "tune": cmd_tune, "render": cmd_render,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CFENS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return HANDLERS[args.command](cfg)
    except CfensError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {exc.kind}: {msg}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
