"""Command-line front end: tune, resume, and benchmark experiments.

Experiments are described by a JSON file holding the hyper-dict reference,
the objective selector, the evaluation setting, and the tuner / design /
surrogate control blocks. Outputs land in one directory per run:
run_state.json, events.csv, results.csv, importance.csv, progress.csv,
parallel.csv plus one contour file per important parameter pair.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import importlib.resources
import json
import math
import os
import sys

import numpy as np

from . import analysis, evalharness, surrogate as sg, tuner as tn
from .design import DesignControl
from .evalharness import EvalResult, external_evaluate, make_toy_objective
from .searchspace import (
    ParamSpec, SearchSpace, gen_design_table, parse_hyper_dict, render_table,
    serialize_hyper_dict, table_to_csv,
)
from .toynet import HyperConfig, generate_dataset

SEED_ENV_VAR = "SPOTKIT_SEED"
IMPORTANCE_PAIR_THRESHOLD = 0.025


class ConfigError(ValueError):
    pass


# -- built-in synthetic objectives -------------------------------------------

def _sphere_space(dims: int) -> SearchSpace:
    return SearchSpace(tuple(
        ParamSpec(name=f"x{i}", kind="float", default=0.0, lower=-1.0, upper=1.0)
        for i in range(dims)
    ))


def _sphere_objective(config: dict) -> EvalResult:
    loss = sum(v * v for v in config.values())
    return EvalResult(loss=loss, metric=math.nan)


_MIXED4_TARGETS = (0.7321, 0.2468)
_MIXED4_LEVEL_PENALTY = {"a": 0.3, "b": 0.0, "c": 0.6, "d": 0.9}


def _mixed4_space() -> SearchSpace:
    return SearchSpace((
        ParamSpec(name="x1", kind="float", default=0.5, lower=0.0, upper=1.0),
        ParamSpec(name="x2", kind="float", default=0.5, lower=0.0, upper=1.0),
        ParamSpec(name="width", kind="int", default=3, transform="power_2_int",
                  lower=1.0, upper=6.0),
        ParamSpec(name="kind", kind="factor", default="a",
                  levels=("a", "b", "c", "d"), lower=0.0, upper=3.0),
    ))


def _mixed4_objective(config: dict) -> EvalResult:
    k = math.log2(config["width"])
    loss = (
        3.0 * (config["x1"] - _MIXED4_TARGETS[0]) ** 2
        + 2.0 * (config["x2"] - _MIXED4_TARGETS[1]) ** 2
        + 0.15 * (k - 4.0) ** 2
        + _MIXED4_LEVEL_PENALTY[config["kind"]]
    )
    return EvalResult(loss=loss, metric=math.nan)


BUILTIN_OBJECTIVES = {
    "sphere2": (lambda: _sphere_space(2), lambda cfg, seed: _sphere_objective),
    "sphere3": (lambda: _sphere_space(3), lambda cfg, seed: _sphere_objective),
    "mixed4": (_mixed4_space, lambda cfg, seed: _mixed4_objective),
}


# -- experiment configuration --------------------------------------------------

_DEFAULTS = {
    "objective": "toynet",
    "model": "ToyNet",
    "eval": "train_hold_out",
    "seed": 123,
    "data_seed": 7,
    "n_samples": 1000,
    "input_dim": 20,
    "shuffle": True,
    "x_start": "default",
}


def load_experiment(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"experiment config not found: {path}") from None
    except OSError as err:
        raise ConfigError(f"cannot read experiment config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"experiment config {path} is not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"experiment config {path} must be a JSON object")
    exp = dict(_DEFAULTS)
    exp.update(doc)
    exp.setdefault("out", "spotkit_run")
    exp["_config_dir"] = os.path.dirname(os.path.abspath(path))
    return exp


def build_space(exp: dict) -> SearchSpace:
    selector = exp["objective"]
    if selector.startswith("builtin:"):
        name = selector.split(":", 1)[1]
        if name not in BUILTIN_OBJECTIVES:
            raise ConfigError(
                f"unknown builtin objective {name!r} "
                f"(available: {sorted(BUILTIN_OBJECTIVES)})"
            )
        space = BUILTIN_OBJECTIVES[name][0]()
    else:
        source = exp.get("hyper_dict", "builtin:toynet")
        if source == "builtin:toynet":
            text = (importlib.resources.files("spotkit")
                    .joinpath("data/toynet_hyper_dict.json").read_text("utf-8"))
        else:
            path = source
            if not os.path.isabs(path):
                path = os.path.join(exp.get("_config_dir", ""), path)
            try:
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError:
                raise ConfigError(f"hyper-dict file not found: {source}") from None
        try:
            space = parse_hyper_dict(text, exp["model"])
        except ValueError as err:
            raise ConfigError(str(err)) from None
    return apply_modifications(space, exp.get("modify", {}))


def apply_modifications(space: SearchSpace, modify: dict) -> SearchSpace:
    try:
        for name, bounds in modify.get("bounds", {}).items():
            space = space.modify_bounds(name, bounds)
        for name, levels in modify.get("levels", {}).items():
            space = space.modify_levels(name, levels)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return space


def build_objective(exp: dict, seed: int):
    selector = exp["objective"]
    if selector == "toynet":
        return make_toy_objective(
            eval_setting=exp["eval"], data_seed=exp["data_seed"],
            eval_seed=exp.get("eval_seed", tn._child_seed(seed, 7)),
            n=exp["n_samples"], input_dim=exp["input_dim"],
            shuffle=exp["shuffle"],
        )
    if selector.startswith("builtin:"):
        name = selector.split(":", 1)[1]
        if name not in BUILTIN_OBJECTIVES:
            raise ConfigError(f"unknown builtin objective {name!r}")
        return BUILTIN_OBJECTIVES[name][1](exp, seed)
    if selector.startswith("external:"):
        command = selector.split(":", 1)[1]
        timeout = float(exp.get("external_timeout", 60.0))
        return lambda config: external_evaluate(command, config, timeout)
    raise ConfigError(f"unknown objective selector {selector!r}")


def _controls(exp: dict, space: SearchSpace, seed: int):
    try:
        tuner_kw = dict(exp.get("tuner", {}))
        if str(tuner_kw.get("fun_evals", "")).lower() in ("inf", "infinity"):
            tuner_kw["fun_evals"] = math.inf
        tuner_cfg = tn.TunerConfig(seed=seed, **tuner_kw)
        design_kw = dict(exp.get("design", {}))
        design_kw.setdefault("seed", tn._child_seed(seed, 5))
        design_cfg = DesignControl(**design_kw)
        surr_kw = dict(exp.get("surrogate", {}))
        surr_kw.setdefault("n_theta", space.n_active)
        surr_cfg = sg.SurrogateControl(**surr_kw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad control block: {err}") from None
    return tuner_cfg, design_cfg, surr_cfg


def _resolve_seed(exp: dict, flag_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return int(exp["seed"])


# -- artifact writing -----------------------------------------------------------

def write_artifacts(out_dir: str, space: SearchSpace, state: tn.RunState,
                    surr_cfg: sg.SurrogateControl, seed: int) -> list[dict]:
    """Refit the surrogate on the full history and write the analysis files."""
    os.makedirs(out_dir, exist_ok=True)
    X_active = np.asarray(state.X)[:, space.active_mask]
    model = None
    try:
        model = sg.fit(X_active, np.asarray(state.y), surr_cfg,
                       seed=tn._child_seed(seed, 1, len(state)))
    except (ValueError, sg.FitError):
        pass
    report = (analysis.importance(model, space) if model is not None
              else [{"name": p.name, "importance": 0.0, "stars": ""}
                    for p in space.params])

    rows = gen_design_table(space, state, report)
    tn.atomic_write(os.path.join(out_dir, "results.csv"), table_to_csv(rows))
    tn.atomic_write(os.path.join(out_dir, "progress.csv"),
                    analysis.rows_to_csv(analysis.export_progress(state)))
    tn.atomic_write(os.path.join(out_dir, "importance.csv"),
                    analysis.rows_to_csv(report, ["name", "importance", "stars"]))
    tn.atomic_write(os.path.join(out_dir, "parallel.csv"),
                    analysis.rows_to_csv(analysis.export_parallel(state, space)))
    if model is not None:
        best_config, _ = tn.best(state, space)
        for a, b in analysis.select_important_pairs(report, IMPORTANCE_PAIR_THRESHOLD):
            rows = analysis.export_contour(model, space, (a, b), grid=30,
                                           fixed_at=best_config)
            tn.atomic_write(os.path.join(out_dir, f"contour_{a}_{b}.csv"),
                            analysis.rows_to_csv(rows))
    return report


# -- commands -------------------------------------------------------------------

def cmd_tune(args) -> int:
    exp = load_experiment(args.config)
    seed = _resolve_seed(exp, args.seed)
    out_dir = args.out or exp["out"]
    if args.max_time is not None:
        exp.setdefault("tuner", {})["max_time"] = args.max_time
    if args.fun_evals is not None:
        exp.setdefault("tuner", {})["fun_evals"] = args.fun_evals
    space = build_space(exp)
    objective = build_objective(exp, seed)
    tuner_cfg, design_cfg, surr_cfg = _controls(exp, space, seed)

    print(render_table(gen_design_table(space)))
    meta = _meta(exp, space, seed)
    try:
        state = tn.run(objective, space, tuner_cfg, design_cfg, surr_cfg,
                       X_start=_x_start(exp, space), out_dir=out_dir, meta=meta)
        write_artifacts(out_dir, space, state, surr_cfg, seed)
        _report_best(state, space)
        if exp["objective"] == "toynet":
            _final_train_test(exp, space, state, out_dir, seed)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def cmd_resume(args) -> int:
    try:
        state = tn.load_run_state(args.out)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    meta = state.meta
    if "experiment" not in meta:
        print("error: run state has no embedded experiment", file=sys.stderr)
        return 1
    exp = dict(_DEFAULTS)
    exp.update(meta["experiment"])
    seed = int(meta["seed"])
    try:
        space = parse_hyper_dict(meta["space_json"], meta["model"])
        objective = build_objective(exp, seed)
        tuner_cfg, design_cfg, surr_cfg = _controls(exp, space, seed)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        state = tn.run(objective, space, tuner_cfg, design_cfg, surr_cfg,
                       X_start=_x_start(exp, space), out_dir=args.out,
                       state=state)
        write_artifacts(args.out, space, state, surr_cfg, seed)
        _report_best(state, space)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def cmd_bench(args) -> int:
    exp = load_experiment(args.config)
    seed = _resolve_seed(exp, args.seed)
    space = build_space(exp)
    _, design_cfg, surr_cfg = _controls(exp, space, seed)
    tuner_kw = dict(exp.get("tuner", {}))
    if not math.isfinite(float(tuner_kw.get("fun_evals", math.inf))):
        print("error: bench needs a finite tuner.fun_evals budget", file=sys.stderr)
        return 1
    budget = int(tuner_kw["fun_evals"])
    if design_cfg.init_size * design_cfg.repeats > budget:
        print("error: initial design exceeds the bench budget", file=sys.stderr)
        return 1

    spot_best, rand_best = [], []
    try:
        for rep in range(args.reps):
            rep_seed = tn._child_seed(seed, 100, rep)
            objective = build_objective(exp, rep_seed)
            tuner_cfg = tn.TunerConfig(**{**tuner_kw, "seed": rep_seed})
            design_rep = DesignControl(init_size=design_cfg.init_size,
                                       repeats=design_cfg.repeats,
                                       seed=tn._child_seed(rep_seed, 5))
            spot_state = tn.run(objective, space, tuner_cfg, design_rep, surr_cfg)
            rand_state = tn.random_search(objective, space, budget,
                                          seed=tn._child_seed(rep_seed, 6))
            assert len(spot_state) == budget and len(rand_state) == budget
            spot_best.append(spot_state.best_y)
            rand_best.append(rand_state.best_y)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    wins = sum(1 for s, r in zip(spot_best, rand_best) if s < r)
    rows = [
        _bench_row("spot", budget, spot_best, f"{wins}/{args.reps}"),
        _bench_row("random", budget, rand_best, ""),
    ]
    print(render_table(rows))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        tn.atomic_write(os.path.join(args.out, "bench.csv"), table_to_csv(rows))
    return 0


def _bench_row(method: str, evals: int, bests: list[float], wins: str) -> dict:
    arr = np.asarray(bests, dtype=float)
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return {
        "method": method, "evals": evals, "median_best": float(med),
        "iqr": float(q3 - q1), "min_best": float(arr.min()),
        "max_best": float(arr.max()), "wins": wins,
    }


# -- shared helpers ----------------------------------------------------------------

def _meta(exp: dict, space: SearchSpace, seed: int) -> dict:
    experiment = {k: v for k, v in exp.items() if not k.startswith("_")}
    return {
        "experiment": experiment,
        "space_json": serialize_hyper_dict(space, exp["model"]),
        "model": exp["model"],
        "seed": seed,
    }


def _x_start(exp: dict, space: SearchSpace):
    x0 = exp.get("x_start")
    if x0 is None:
        return None
    if x0 == "default":
        return space.default_config()
    if isinstance(x0, dict):
        return x0
    raise ConfigError(f"x_start must be null, \"default\" or a configuration, got {x0!r}")


def _report_best(state: tn.RunState, space: SearchSpace) -> None:
    config, loss = tn.best(state, space)
    print(f"\nbest loss {loss} after {len(state)} evaluations")
    print(f"best configuration: {json.dumps(config)}")


def _final_train_test(exp: dict, space: SearchSpace, state: tn.RunState,
                      out_dir: str, seed: int) -> None:
    """Retrain the winning configuration and score it on held-back data."""
    config, _ = tn.best(state, space)
    hp = HyperConfig.from_config(config)
    train, test = generate_dataset(exp["n_samples"], exp["input_dim"],
                                   exp["data_seed"])
    weights_path = os.path.join(out_dir, "tuned_model.json")
    train_res = evalharness.train_tuned(hp, train, seed=tn._child_seed(seed, 9),
                                        save_path=weights_path)
    if train_res.failed:
        print("final training failed", file=sys.stderr)
        return
    test_res = evalharness.test_tuned(hp, test, weights_path=weights_path)
    print(f"final hold-out loss {train_res.loss}, "
          f"test loss {test_res.loss}, test accuracy {test_res.metric}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spotkit", description="surrogate-guided hyperparameter tuning")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tune = sub.add_parser("tune", help="run a tuning experiment")
    p_tune.add_argument("--config", required=True, help="experiment JSON file")
    p_tune.add_argument("--out", help="output directory (overrides config)")
    p_tune.add_argument("--seed", type=int, help="seed (overrides env and config)")
    p_tune.add_argument("--max-time", type=float, dest="max_time",
                        help="wall-time budget in minutes")
    p_tune.add_argument("--fun-evals", type=int, dest="fun_evals",
                        help="evaluation budget")
    p_tune.set_defaults(func=cmd_tune)

    p_resume = sub.add_parser("resume", help="continue a persisted run")
    p_resume.add_argument("--out", required=True, help="run directory")
    p_resume.set_defaults(func=cmd_resume)

    p_bench = sub.add_parser("bench", help="compare against random search")
    p_bench.add_argument("--config", required=True, help="experiment JSON file")
    p_bench.add_argument("--reps", type=int, default=10, help="repetitions")
    p_bench.add_argument("--out", help="directory for bench.csv")
    p_bench.add_argument("--seed", type=int, help="seed override")
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
