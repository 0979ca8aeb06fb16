"""Command-line front end.

Every flag writes one JSON path of the experiment configuration, so a
config file and the flags describe the same object; flags win over the
file. ``--set PATH=VALUE`` reaches any path without a dedicated flag.

Exit status: 0 on success, 1 for usage or configuration errors (the message
names the offending JSON path), 2 for experiment-level failures such as a
violated zoom gate or a degenerate limit.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, harness as hz
from . import limit_laws as ll
from .model_zoo import CurveSpec, DesignSpec, ModelSpec, SpecError
from .presets import default_config, default_model
from .reporting import write_csv, write_report
from .streams import derive_stream
from .two_stage import ExperimentError, TwoStageConfig

EXPERIMENTS = ("simulate", "rate", "allocate", "dist-check", "risk", "limits", "prop33",
               "asymmetry")

# Tolerances used for the PASS/FAIL word in the one-line summary.
RATE_TOL = 0.1
RISK_TOL = 0.15
KS_LIMIT = 0.08
ALLOC_TOL = 0.1 + 1e-9
PROP33_TOL = 0.10
SKEW_LIMIT = 0.1
ASYM_TOL = 0.01

P_GRID = [round(0.05 + 0.1 * i, 2) for i in range(10)]

# Experiment-specific top-level keys and their defaults.
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"reps": 100, "one_stage": False, "design": None, "timing": False},
    "rate": {"n_grid": list(hz.DEFAULT_N_GRID), "reps": 500, "one_stage": False,
             "design": None, "summary": "rmse"},
    "allocate": {"p_grid": P_GRID, "reps": 1000, "tau": None, "oracle_draws": 4000},
    "dist-check": {"reps": 2000, "oracle_draws": 2000, "scale_factor": 1.0},
    "risk": {"n_grid": list(hz.DEFAULT_N_GRID), "reps": 500, "design": None},
    "limits": {"draws": 10000, "drift": {"family": "abs", "c": 1.0, "sign": "min",
                                         "diffusion": 1.0},
               "grid": None},
    "prop33": {"h": 1.0, "n_grid": [2**12, 2**14, 2**16], "reps": 5000},
    "asymmetry": {"a1": 2.0, "a2": 1.0, "b": 0.1, "d0": 0.5, "sigma": 0.1,
                  "n_grid": [2**16], "reps": 500},
}
USES_MODEL = {"simulate", "rate", "allocate", "dist-check", "risk", "prop33"}
FORCED_PROBLEM = {"risk": "classification", "prop33": "changepoint"}
# two_stage.n defaults where the experiment runs at a single budget
SINGLE_N = {"simulate": 4096, "allocate": 2**14, "dist-check": 2**14}

# flag -> (JSON path, type)
FLAGS: dict[str, tuple[str, Any]] = {
    "problem": ("two_stage.problem", str),
    "n": ("two_stage.n", int),
    "p": ("two_stage.p", float),
    "gamma": ("two_stage.gamma", float),
    "K": ("two_stage.K", float),
    "b": ("two_stage.b", float),
    "second-stage-design": ("two_stage.second_stage_design", str),
    "density": ("two_stage.density", str),
    "density-rate": ("two_stage.density_rate", float),
    "xi": ("model.xi", float),
    "sigma": ("model.sigma", float),
    "c0": ("model.c0", float),
    "d0": ("model.d0", float),
    "noise": ("model.noise", str),
    "n-grid": ("n_grid", "ints"),
    "p-grid": ("p_grid", "floats"),
    "one-stage": ("one_stage", "flag"),
    "summary": ("summary", str),
    "tau": ("tau", float),
    "oracle-draws": ("oracle_draws", int),
    "scale-factor": ("scale_factor", float),
    "draws": ("draws", int),
    "drift": ("drift.family", str),
    "drift-c": ("drift.c", float),
    "sign": ("drift.sign", str),
    "diffusion": ("drift.diffusion", float),
    "grid-step": ("grid.step", float),
    "grid-range": ("grid.range", float),
    "h": ("h", float),
    "a1": ("a1", float),
    "a2": ("a2", float),
    "timing": ("timing", "flag"),
}
# asymmetry has its own top-level b, d0 and sigma
ASYMMETRY_FLAGS = {"b": "b", "d0": "d0", "sigma": "sigma"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit status 1, not argparse's 2
        raise UsageError(message)


def _parse_list(text: str, kind):
    try:
        return [kind(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multistage", description="Two-stage M-estimation experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, help="master seed (u64)")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--out", help="output prefix for .report.json and .data.csv")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="set any JSON path; VALUE is parsed as JSON when possible")
        for flag, (_, kind) in FLAGS.items():
            dest = "f_" + flag.replace("-", "_")
            if kind == "flag":
                sp.add_argument(f"--{flag}", dest=dest, action="store_const", const=True)
            elif kind == "ints":
                sp.add_argument(f"--{flag}", dest=dest, type=lambda t: _parse_list(t, int))
            elif kind == "floats":
                sp.add_argument(f"--{flag}", dest=dest, type=lambda t: _parse_list(t, float))
            else:
                sp.add_argument(f"--{flag}", dest=dest, type=kind)
    return parser


# ---------------------------------------------------------------------------
# Configuration assembly
# ---------------------------------------------------------------------------
def _set_path(doc: dict, path: str, value: Any) -> None:
    keys = path.split(".")
    cur = doc
    for i, k in enumerate(keys[:-1]):
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        if not isinstance(nxt, dict):
            raise SpecError(f"{'.'.join(keys[:i + 1])}: expected an object")
        cur = nxt
    cur[keys[-1]] = value


def _parse_set(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise UsageError(f"--set expects PATH=VALUE, got {item!r}")
    path, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip(), value


def raw_config(args: argparse.Namespace) -> dict[str, Any]:
    """File contents with the command-line overrides applied."""
    doc: dict[str, Any] = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"config: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise SpecError("config: expected a JSON object")
        if doc.get("experiment", args.experiment) != args.experiment:
            raise SpecError(f"experiment: config is for {doc['experiment']!r}, "
                            f"not {args.experiment!r}")
    doc = copy.deepcopy(doc)
    doc["experiment"] = args.experiment
    for key in ("seed", "reps", "out"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    for flag, (path, _) in FLAGS.items():
        value = getattr(args, "f_" + flag.replace("-", "_"))
        if value is None:
            continue
        if args.experiment == "asymmetry" and flag in ASYMMETRY_FLAGS:
            path = ASYMMETRY_FLAGS[flag]
        _set_path(doc, path, value)
    for item in args.set:
        _set_path(doc, *_parse_set(item))
    return doc


def _merge_model(base: dict, user: dict) -> dict:
    out = {**base, **user}
    bc, uc = base.get("curve"), user.get("curve")
    if isinstance(bc, dict) and isinstance(uc, dict):
        if uc.get("family", bc["family"]) == bc["family"]:
            out["curve"] = {"family": bc["family"],
                            "params": {**bc.get("params", {}), **uc.get("params", {})}}
    if out.get("kind") in ("monotone", "binary_monotone") and "d0" not in user \
            and isinstance(out.get("curve"), dict):
        out.pop("d0", None)  # recomputed from the curve below
    return out


def _check_int(value: Any, path: str, low: int, high: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecError(f"{path}: expected an integer")
    if value < low or (high is not None and value > high):
        raise SpecError(f"{path}: out of range")
    return value


def resolve_config(doc: dict[str, Any]) -> dict[str, Any]:
    """Validate ``doc`` and fill every default. The result is echoed in reports."""
    exp = doc["experiment"]
    allowed = {"experiment", "seed", "reps", "out", "model", "two_stage"} | set(EXPERIMENT_DEFAULTS[exp])
    if exp not in USES_MODEL:
        allowed -= {"model", "two_stage"}
    if exp == "limits":
        allowed.discard("reps")  # the sample size is ``draws``
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SpecError(f"{unknown[0]}: unknown field")
    cfg: dict[str, Any] = {"experiment": exp}
    cfg["seed"] = _check_int(doc.get("seed", 0), "seed", 0, 2**64 - 1)
    defaults = EXPERIMENT_DEFAULTS[exp]
    if "reps" in defaults:
        cfg["reps"] = _check_int(doc.get("reps", defaults["reps"]), "reps", 1)
    for key, default in defaults.items():
        if key == "reps":
            continue
        value = doc.get(key, default)
        if isinstance(default, dict) and isinstance(value, dict):
            extra = sorted(set(value) - set(default))
            if extra:
                raise SpecError(f"{key}.{extra[0]}: unknown field")
            value = {**default, **value}
        cfg[key] = copy.deepcopy(value)

    if exp in USES_MODEL:
        ts_user = doc.get("two_stage") or {}
        if not isinstance(ts_user, dict):
            raise SpecError("two_stage: expected an object")
        if "seed" in ts_user:
            raise SpecError("two_stage.seed: use the top-level seed")
        problem = FORCED_PROBLEM.get(exp, ts_user.get("problem", "changepoint"))
        if ts_user.get("problem", problem) != problem:
            raise SpecError(f"two_stage.problem: {exp} requires {problem!r}")
        try:
            base_cfg = default_config(problem)
            base_model = default_model(problem)
        except ValueError:
            raise SpecError(f"two_stage.problem: unknown problem {problem!r}") from None
        if exp == "prop33":
            base_model = ModelSpec.changepoint(d0=0.5, sigma=1.0, c0=1.0, xi=0.25)
            base_cfg = TwoStageConfig("changepoint", p=0.5, gamma=0.2, K=1.0)
        ts = {**base_cfg.to_dict(), "n": SINGLE_N.get(exp, base_cfg.n), **ts_user,
              "seed": cfg["seed"]}
        two_stage = TwoStageConfig.from_dict(ts)
        model_user = doc.get("model") or {}
        if not isinstance(model_user, dict):
            raise SpecError("model: expected an object")
        model_doc = _merge_model(base_model.to_dict(), model_user)
        if "d0" not in model_doc and isinstance(model_doc.get("curve"), dict):
            curve = CurveSpec.from_dict(model_doc["curve"], "model.curve")
            try:
                model_doc["d0"] = curve.inverse(model_doc.get("t0", 0.5))
            except SpecError as exc:
                raise SpecError(f"model.t0: {exc}") from None
        model = ModelSpec.from_dict(model_doc)
        cfg["model"] = model.to_dict()
        cfg["two_stage"] = two_stage.to_dict()
    if "design" in cfg and cfg["design"] is not None:
        DesignSpec.from_dict(cfg["design"])
    for key in ("n_grid",):
        if key in cfg:
            if not isinstance(cfg[key], list) or not cfg[key]:
                raise SpecError(f"{key}: expected a non-empty list")
            for i, v in enumerate(cfg[key]):
                _check_int(v, f"{key}[{i}]", 4)
    if "p_grid" in cfg:
        if not isinstance(cfg["p_grid"], list):
            raise SpecError("p_grid: expected a list")
        for i, v in enumerate(cfg["p_grid"]):
            if not isinstance(v, (int, float)) or not 0.0 < v < 1.0:
                raise SpecError(f"p_grid[{i}]: must lie in (0, 1)")
    cfg["out"] = doc.get("out") or default_prefix(cfg)
    return cfg


def default_prefix(cfg: dict[str, Any]) -> str:
    exp = cfg["experiment"]
    tag = cfg.get("two_stage", {}).get("problem")
    if exp == "limits":
        tag = cfg["drift"]["family"]
    parts = [exp.replace("-", "_")] + ([tag] if tag else []) + [f"seed{cfg['seed']}"]
    return "_".join(parts)


def experiment_id(cfg: dict[str, Any]) -> str:
    tag = cfg.get("two_stage", {}).get("problem", "")
    return f"{cfg['experiment']}/{tag}" if tag else cfg["experiment"]


# ---------------------------------------------------------------------------
# Runners: each returns (result dict, csv header, csv rows, summary dict)
# ---------------------------------------------------------------------------
def _verdict(ok: bool | None) -> str:
    return "" if ok is None else ("PASS" if ok else "FAIL")


def _objects(cfg):
    return ModelSpec.from_dict(cfg["model"]), TwoStageConfig.from_dict(cfg["two_stage"])


def run_simulate(cfg, jobs):
    model, ts = _objects(cfg)
    design = DesignSpec.from_dict(cfg["design"]) if cfg["design"] else None
    recs = hz.replicate(model, ts, f"{experiment_id(cfg)}/n={ts.n}", cfg["reps"],
                        one_stage=cfg["one_stage"], design=design, jobs=jobs)
    rows = []
    for i, r in enumerate(recs):
        rows.append({
            "rep": i, "d1_hat": r.d1_hat, "d2_hat": r.d2_hat, "error": r.d2_hat - model.d0,
            "window_lo": r.window[0], "window_hi": r.window[1], "alpha_hat": r.alpha_hat,
            "beta_hat": r.beta_hat, "clip": r.clip_flag, "vacuous": r.vacuous_flag,
            "covered": r.covered,
            "wall_ms": r.wall_time * 1e3 if cfg["timing"] else math.nan,
        })
    err = np.array([row["error"] for row in rows])
    rmse = float(np.sqrt(np.mean(err**2)))
    result = {"rmse": rmse, "n": ts.n, "flags": hz._flags(recs)}
    summary = {"statistic": "rmse", "value": rmse, "target": None, "verdict": ""}
    return result, list(rows[0]), rows, summary


def run_rate(cfg, jobs):
    model, ts = _objects(cfg)
    design = DesignSpec.from_dict(cfg["design"]) if cfg["design"] else None
    rep = hz.rate_experiment(model, ts, cfg["n_grid"], cfg["reps"], one_stage=cfg["one_stage"],
                             design=design, summary=cfg["summary"],
                             experiment_id=experiment_id(cfg), jobs=jobs)
    ok = abs(rep.slope - rep.target_slope) <= RATE_TOL and rep.valid
    summary = {"statistic": "slope", "value": rep.slope, "se": rep.slope_se,
               "target": rep.target_slope, "tolerance": RATE_TOL, "valid": rep.valid,
               "verdict": _verdict(ok)}
    rows = rep.rows()
    return rep.to_dict(), list(rows[0]), rows, summary


def run_allocate(cfg, jobs):
    model, ts = _objects(cfg)
    rep = hz.allocation_experiment(model, ts, cfg["p_grid"], ts.n, cfg["reps"], tau=cfg["tau"],
                                   oracle_draws=cfg["oracle_draws"],
                                   experiment_id=experiment_id(cfg), jobs=jobs)
    ok = abs(rep.empirical_argmin - rep.optimal_p) <= ALLOC_TOL and rep.valid
    summary = {"statistic": "argmin_p", "value": rep.empirical_argmin, "target": rep.optimal_p,
               "tolerance": ALLOC_TOL, "valid": rep.valid, "verdict": _verdict(ok)}
    rows = rep.rows()
    return rep.to_dict(), list(rows[0]), rows, summary


def run_dist_check(cfg, jobs):
    model, ts = _objects(cfg)
    rep = hz.dist_check(model, ts, ts.n, cfg["reps"], cfg["oracle_draws"],
                        scale_factor=cfg["scale_factor"], experiment_id=experiment_id(cfg),
                        jobs=jobs)
    oracle = hz.limit_sample(ts.problem, cfg["oracle_draws"], ts.seed, experiment_id(cfg))
    rows = [{"sample": "estimator", "index": i, "value": v}
            for i, v in enumerate(rep.scaled_errors)]
    rows += [{"sample": "oracle", "index": i, "value": float(v)} for i, v in enumerate(oracle)]
    summary = {"statistic": "ks", "value": rep.ks_stat, "target": KS_LIMIT,
               "verdict": _verdict(rep.ks_stat < KS_LIMIT)}
    return rep.to_dict(), ["sample", "index", "value"], rows, summary


def run_risk(cfg, jobs):
    model, ts = _objects(cfg)
    design = DesignSpec.from_dict(cfg["design"]) if cfg["design"] else None
    rep = hz.excess_risk_experiment(model, ts, cfg["n_grid"], cfg["reps"], design,
                                    experiment_id=experiment_id(cfg), jobs=jobs)
    beats = rep.two_stage_excess[-1] < rep.one_stage_excess[-1]
    ok = (abs(rep.two_stage_slope - rep.two_stage_target) <= RISK_TOL
          and abs(rep.one_stage_slope - rep.one_stage_target) <= RISK_TOL and beats)
    summary = {"statistic": "two_stage_slope", "value": rep.two_stage_slope,
               "target": rep.two_stage_target, "one_stage_slope": rep.one_stage_slope,
               "one_stage_target": rep.one_stage_target, "crossover_n": rep.crossover_n,
               "beats_at_largest_n": beats, "tolerance": RISK_TOL, "verdict": _verdict(ok)}
    rows = rep.rows()
    return rep.to_dict(), list(rows[0]), rows, summary


def run_limits(cfg, jobs):
    d = cfg["drift"]
    try:
        drift = ll.DriftSpec(d["family"], float(d["c"]), d["sign"], float(d["diffusion"]))
        grid = ll.DEFAULT_GRIDS[drift.family]
        if cfg["grid"] is not None:
            extra = sorted(set(cfg["grid"]) - {"step", "range"})
            if extra:
                raise SpecError(f"grid.{extra[0]}: unknown field")
            grid = ll.PathGrid(**{"step": grid.step, "range": grid.range, **cfg["grid"]})
    except (TypeError, ValueError) as exc:
        raise SpecError(f"drift: {exc}") from None
    cfg["grid"] = {"step": grid.step, "range": grid.range}
    draws = _check_int(cfg["draws"], "draws", 1)
    rng = derive_stream(cfg["seed"], f"limits/{drift.family}", 0)
    sample = ll.argext_batch(drift, grid, draws, rng)
    rows = [{"index": i, "value": float(v)} for i, v in enumerate(sample)]
    result = {"draws": draws, "mean": float(sample.mean()), "sd": float(sample.std(ddof=1)),
              "quantiles": {str(q): ll.empirical_quantile(sample, q)
                            for q in (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)},
              "rescale": drift.rescale}
    summary = {"statistic": "sd", "value": result["sd"], "target": None, "verdict": ""}
    return result, ["index", "value"], rows, summary


def run_prop33(cfg, jobs):
    model, ts = _objects(cfg)
    if cfg["h"] == 0:
        raise SpecError("h: must be nonzero")
    rep = hz.prop33_experiment(float(cfg["h"]), cfg["n_grid"], cfg["reps"], model, ts,
                               experiment_id=experiment_id(cfg), jobs=jobs)
    ratio = rep.variance[-1] / rep.target[-1]
    ok = abs(ratio - 1.0) <= PROP33_TOL and abs(rep.skewness[-1]) < SKEW_LIMIT
    summary = {"statistic": "variance_ratio", "value": ratio, "target": 1.0,
               "skewness": rep.skewness[-1], "tolerance": PROP33_TOL, "verdict": _verdict(ok)}
    rows = rep.rows()
    return rep.to_dict(), list(rows[0]), rows, summary


def run_asymmetry(cfg, jobs):
    for key in ("a1", "a2", "b", "d0", "sigma"):
        if not isinstance(cfg[key], (int, float)) or isinstance(cfg[key], bool):
            raise SpecError(f"{key}: expected a number")
    rep = hz.asymmetry_bias_experiment(cfg["a1"], cfg["a2"], cfg["b"], cfg["n_grid"],
                                       cfg["reps"], d0=cfg["d0"], sigma=cfg["sigma"],
                                       seed=cfg["seed"], experiment_id="asymmetry", jobs=jobs)
    gap = abs(rep.mean_d1[-1] - rep.d_star)
    summary = {"statistic": "abs_bias_to_d_star", "value": gap, "target": ASYM_TOL,
               "d_star": rep.d_star, "verdict": _verdict(gap < ASYM_TOL)}
    rows = rep.rows()
    return rep.to_dict(), list(rows[0]), rows, summary


RUNNERS = {
    "simulate": run_simulate, "rate": run_rate, "allocate": run_allocate,
    "dist-check": run_dist_check, "risk": run_risk, "limits": run_limits,
    "prop33": run_prop33, "asymmetry": run_asymmetry,
}


def summary_line(cfg: dict[str, Any], summary: dict[str, Any]) -> str:
    parts = [cfg["experiment"]]
    if "two_stage" in cfg:
        parts.append(cfg["two_stage"]["problem"])
    parts.append(f"{summary['statistic']}={summary['value']:.6g}")
    if summary.get("target") is not None:
        parts.append(f"target={summary['target']:.6g}")
    if summary.get("verdict"):
        parts.append(summary["verdict"])
    return " ".join(parts)


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        cfg = resolve_config(raw_config(args))
        result, header, rows, summary = RUNNERS[cfg["experiment"]](cfg, args.jobs)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 2
    except (SpecError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    prefix = Path(cfg["out"])
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    echoed = {k: v for k, v in cfg.items() if k != "out"}
    write_report(f"{prefix}.report.json", cfg["experiment"], echoed, result, summary)
    write_csv(f"{prefix}.data.csv", header, rows)
    print(summary_line(cfg, summary))
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
