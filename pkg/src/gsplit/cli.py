"""Command-line front end.

Subcommands:
    pilot        build and validate a level schedule adaptively
    run          collect conditioned samples, estimate the event probability
    diagnose     turn a saved run into bound curves on an n-grid
    compare-smc  replicate splitting and the SMC baseline at equal budgets
    lasso        the l1-regression application with sensible defaults

Configuration comes from (highest priority first) command-line flags, the
GSPLIT_OUTPUT_DIR environment variable (output directory only), a TOML
file given with --config, and built-in defaults.

Exit codes: 0 success; 1 bad usage or invalid configuration; 2 a runtime
failure, reported as a JSON object on stderr with the error type, the
message, and a machine-readable detail mapping.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics, engine, estimators, lasso, pilot, smc, tables, toy
from .errors import GsplitError

DEFAULT_OUTPUT_DIR = "gsplit-out"
OUTPUT_DIR_ENV = "GSPLIT_OUTPUT_DIR"
LEDGER_HEADER = ("trial_index", "size", "kernel_steps", "discarded_empty_trials")
DEFAULT_DIAGNOSE_GRID = (100, 1_000, 10_000, 100_000, 1_000_000)


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; this package reserves 2 for
    # runtime failures, so remap to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise UsageError(f"config file is not valid TOML: {err}") from None


def _resolve_output_dir(args, cfg: dict) -> Path:
    flag = getattr(args, "output_dir", None)
    if flag:
        chosen = flag
    elif os.environ.get(OUTPUT_DIR_ENV):
        chosen = os.environ[OUTPUT_DIR_ENV]
    elif cfg.get("output_dir"):
        chosen = cfg["output_dir"]
    else:
        chosen = DEFAULT_OUTPUT_DIR
    out = Path(chosen)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_seed(args, cfg: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in cfg:
        return int(cfg["seed"])
    return 0


def _build_model(args, cfg: dict):
    mcfg = cfg.get("model", {})
    kind = getattr(args, "model", None) or mcfg.get("kind", "toy")
    if kind == "toy":
        dim = getattr(args, "dim", None) or mcfg.get("dim", 1)
        model = toy.ToyNormalModel(dim=int(dim))
        meta = {"kind": "toy", "dim": int(dim)}
        names = [f"x{j}" for j in range(int(dim))]
        return model, meta, names, None
    if kind == "lasso":
        data_path = getattr(args, "data", None) or mcfg.get("data")
        model = lasso.lasso_posterior_model(data_path)
        meta = {"kind": "lasso", "dim": model.dim,
                "data": str(data_path) if data_path else "packaged"}
        return model, meta, list(model.state_names), model.ols_reference()
    raise UsageError(f"unknown model kind: {kind!r} (expected 'toy' or 'lasso')")


def _build_schedule(args, cfg: dict) -> engine.LevelSchedule:
    sj = getattr(args, "schedule_json", None)
    if sj:
        try:
            payload = json.loads(Path(sj).read_text())
        except FileNotFoundError:
            raise UsageError(f"schedule file not found: {sj}") from None
        except json.JSONDecodeError as err:
            raise UsageError(f"schedule file is not valid JSON: {err}") from None
        try:
            return engine.LevelSchedule(
                tuple(payload["levels"]), int(payload["split_factor"]),
                payload.get("direction", "at_least"),
            )
        except (KeyError, TypeError) as err:
            raise UsageError(f"schedule file is missing fields: {err}") from None
    scfg = cfg.get("schedule", {})
    levels = getattr(args, "levels", None)
    if levels is not None:
        try:
            levels = tuple(float(x) for x in levels.split(","))
        except ValueError:
            raise UsageError(f"--levels must be a comma-separated float list, got {levels!r}") from None
    else:
        levels = scfg.get("levels")
    if not levels:
        raise UsageError("no level schedule given: pass --levels, --schedule-json, "
                         "or a [schedule] config table")
    split = getattr(args, "split_factor", None) or scfg.get("split_factor")
    if split is None:
        raise UsageError("no splitting factor given: pass --split-factor or set it in [schedule]")
    direction = getattr(args, "direction", None) or scfg.get("direction", "at_least")
    return engine.LevelSchedule(tuple(levels), int(split), direction)


def _build_set_class(args, cfg: dict, dim: int) -> diagnostics.SetClassSpec:
    spec = getattr(args, "set_class", None)
    if spec is None:
        tab = cfg.get("set_class", {})
        spec = tab.get("kind")
        if spec == "custom":
            return diagnostics.SetClassSpec.custom(int(tab.get("v", 1)))
        if spec == "rectangles":
            return diagnostics.SetClassSpec.rectangles(int(tab.get("dim", dim)))
        if spec in ("one_sided_intervals", None):
            return diagnostics.SetClassSpec.one_sided_intervals(int(tab.get("dim", dim)))
        raise UsageError(f"unknown set_class kind: {spec!r}")
    if spec.startswith("custom:"):
        try:
            return diagnostics.SetClassSpec.custom(int(spec.split(":", 1)[1]))
        except ValueError:
            raise UsageError(f"custom set class needs an integer VC dimension, got {spec!r}") from None
    if spec == "rectangles":
        return diagnostics.SetClassSpec.rectangles(dim)
    if spec == "one_sided_intervals":
        return diagnostics.SetClassSpec.one_sided_intervals(dim)
    raise UsageError(f"unknown set class: {spec!r}")


def _stopping_rule(args, cfg: dict):
    n = getattr(args, "n", None)
    t = getattr(args, "t", None)
    if n is not None and t is not None:
        raise UsageError("give either --n or --t, not both")
    if n is None and t is None:
        strat = cfg.get("strategy", {})
        kind = strat.get("stopping", "fixed_n")
        if kind == "fixed_n":
            n = strat.get("n", 1000)
        elif kind == "until_t":
            t = strat.get("t")
            if t is None:
                raise UsageError("strategy 'until_t' needs a t value")
        else:
            raise UsageError(f"unknown stopping strategy: {kind!r}")
    return (int(n), None) if n is not None else (None, int(t))


def write_ledger_outputs(outdir: Path, ledger: engine.RunLedger, model_meta: dict,
                         names, ols_reference=None) -> None:
    """Persist one run: ledger.csv, ledger.json, estimate.json, marginals.csv."""
    rows = [
        (i, tr.size, tr.kernel_steps, tr.discarded_empty_trials)
        for i, tr in enumerate(ledger.trials)
    ]
    tables.write_csv(outdir / "ledger.csv", LEDGER_HEADER, rows)

    stopping = ledger.stopping_rule
    meta = {
        "model": model_meta,
        "schedule": {
            "levels": list(ledger.schedule.levels),
            "split_factor": ledger.schedule.split_factor,
            "direction": ledger.schedule.direction,
        },
        "stopping": ({"kind": "fixed_n", "n": stopping.n}
                     if isinstance(stopping, engine.FixedN)
                     else {"kind": "until_t", "t": stopping.t}),
        "seed": ledger.seed,
        "trial_count": ledger.trial_count,
        "total_kernel_steps": ledger.total_kernel_steps(),
        "total_raw_trials": ledger.total_raw_trials(),
        "coordinate_names": list(names),
    }
    tables.write_json(outdir / "ledger.json", meta)

    est = estimators.estimate_rare_event_probability_from_ledger(ledger)
    tables.write_json(outdir / "estimate.json", {
        "ell_hat": est.value,
        "relative_error": est.relative_error,
        "relative_error_defined": bool(np.isfinite(est.relative_error)),
        "raw_trials": est.trial_count,
        "raw_trial_mean_size": est.raw_trial_mean_size,
        "retained_states": int(ledger.sizes().sum()),
    })

    estimators.write_marginal_csv(outdir / "marginals.csv", ledger.pooled_states(),
                                  names, ols_reference)


def read_ledger_dir(path: Path) -> tuple[np.ndarray, dict]:
    """Sizes and metadata of a run previously written by ``run``."""
    csv_path = Path(path) / "ledger.csv"
    json_path = Path(path) / "ledger.json"
    if not csv_path.exists() or not json_path.exists():
        raise UsageError(f"no ledger.csv/ledger.json pair under {path}")
    lines = csv_path.read_text().strip().splitlines()
    if lines[0] != ",".join(LEDGER_HEADER):
        raise UsageError(f"unexpected ledger header in {csv_path}")
    sizes = np.array([int(line.split(",")[1]) for line in lines[1:]], dtype=np.int64)
    meta = json.loads(json_path.read_text())
    return sizes, meta


def _default_population(rho: float) -> int:
    # keep the per-stage survivor count P*rho around 50 so level placement
    # is a stable quantile, not an order statistic of a handful of points
    return max(1000, int(round(50.0 / rho)))


def _cmd_pilot(args) -> int:
    cfg = _load_config(args.config)
    outdir = _resolve_output_dir(args, cfg)
    seed = _resolve_seed(args, cfg)
    model, model_meta, _names, _ref = _build_model(args, cfg)
    pcfg = cfg.get("pilot", {})
    split = args.split_factor or cfg.get("schedule", {}).get("split_factor")
    if split is None:
        raise UsageError("pilot needs --split-factor (it becomes part of the schedule)")
    # default target_rho couples to the splitting factor: rho*s near 1 keeps
    # level populations stable instead of growing by rho*s per level
    rho = args.target_rho if args.target_rho is not None else pcfg.get("target_rho", 1.0 / int(split))
    config = pilot.PilotConfig(
        target_rho=rho,
        population=args.population if args.population is not None else pcfg.get("population", _default_population(rho)),
        max_levels=args.max_levels if args.max_levels is not None else pcfg.get("max_levels", 60),
        mixing_sweeps=args.mixing_sweeps if args.mixing_sweeps is not None else pcfg.get("mixing_sweeps", 10),
    )
    direction = args.direction or cfg.get("schedule", {}).get("direction", "at_least")

    report = pilot.pilot_levels(
        model, int(split), float(args.final_level),
        direction=direction, config=config, seed=seed,
    )
    payload = report.to_dict()
    payload["model"] = model_meta
    tables.write_json(outdir / "schedule.json", payload)
    tables.write_csv(outdir / "pilot.csv",
                     ("level_index", "level", "construction_rho", "validation_rho"),
                     report.rows())
    print(f"schedule with {report.schedule.tau} levels -> {outdir / 'schedule.json'}")
    for idx, level, con, val in report.rows():
        print(f"  level {idx}: {level:.6g}  rho {con:.4f} (validation {val:.4f})")
    return 0


def _run_and_write(model, model_meta, names, ols_ref, schedule, n, t, seed,
                   outdir, workers, retry_cap, memory_cap) -> int:
    if n is not None:
        ledger = engine.collect_fixed_n(
            model, schedule, n, seed, workers=workers,
            retry_cap=retry_cap, memory_cap=memory_cap,
        )
    else:
        if workers > 1:
            raise UsageError("--workers applies only to fixed-n runs; "
                             "an until-t run is sequential by definition")
        ledger = engine.collect_until_t(
            model, schedule, t, seed, retry_cap=retry_cap, memory_cap=memory_cap,
        )
    write_ledger_outputs(outdir, ledger, model_meta, names, ols_ref)
    est = estimators.estimate_rare_event_probability_from_ledger(ledger)
    re_text = f"{est.relative_error:.3%}" if np.isfinite(est.relative_error) else "undefined"
    print(f"{ledger.trial_count} trials, {int(ledger.sizes().sum())} states "
          f"-> {outdir}")
    print(f"ell_hat = {est.value:.6g} (relative error {re_text})")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    outdir = _resolve_output_dir(args, cfg)
    seed = _resolve_seed(args, cfg)
    model, model_meta, names, ols_ref = _build_model(args, cfg)
    schedule = _build_schedule(args, cfg)
    n, t = _stopping_rule(args, cfg)
    strat = cfg.get("strategy", {})
    workers = args.workers if args.workers is not None else int(strat.get("workers", 1))
    retry_cap = args.retry_cap if args.retry_cap is not None else int(strat.get("retry_cap", engine.DEFAULT_RETRY_CAP))
    memory_cap = int(strat.get("memory_cap", engine.DEFAULT_MEMORY_CAP))
    return _run_and_write(model, model_meta, names, ols_ref, schedule, n, t,
                          seed, outdir, workers, retry_cap, memory_cap)


def _cmd_diagnose(args) -> int:
    cfg = _load_config(args.config)
    outdir = _resolve_output_dir(args, cfg)
    sizes, meta = read_ledger_dir(Path(args.ledger))
    moments = diagnostics.estimate_moments(sizes)
    schedule = engine.LevelSchedule(
        tuple(meta["schedule"]["levels"]),
        int(meta["schedule"]["split_factor"]),
        meta["schedule"]["direction"],
    )
    dim = int(meta.get("model", {}).get("dim", 1))
    set_class = _build_set_class(args, cfg, dim)
    if args.points:
        try:
            grid = tuple(int(x) for x in args.points.split(","))
        except ValueError:
            raise UsageError(f"--points must be a comma-separated integer list, got {args.points!r}") from None
    else:
        grid = DEFAULT_DIAGNOSE_GRID
    if any(p < 2 for p in grid):
        raise UsageError("grid points must be >= 2")

    reports = [
        diagnostics.evaluate_bounds(
            moments, n=p, t=p * moments.m, set_class=set_class, schedule=schedule,
        )
        for p in grid
    ]
    diagnostics.write_bound_csv(outdir / "bounds.csv", reports)
    tables.write_json(outdir / "bounds.json", {
        "moments": {
            "m": moments.m, "se_m": moments.se_m,
            "m2": moments.m2, "se_m2": moments.se_m2,
            "m3": moments.m3, "se_m3": moments.se_m3,
            "m4": moments.m4, "se_m4": moments.se_m4,
            "m2logm": moments.m2logm, "se_m2logm": moments.se_m2logm,
            "var_m": moments.var_m, "se_var_m": moments.se_var_m,
            "m2_absdev": moments.m2_absdev, "se_m2_absdev": moments.se_m2_absdev,
            "r_hat": moments.r_hat,
            "sample_count": moments.sample_count,
        },
        "set_class": {"kind": set_class.kind, "v": set_class.v},
        "grid": list(grid),
        "reports": [rep.to_dict() for rep in reports],
    })
    print(f"bound curves on {len(grid)} grid points -> {outdir / 'bounds.csv'}")
    for rep in reports:
        b5 = rep.expected_tv_b5.value if rep.expected_tv_b5 else float("nan")
        print(f"  n={rep.n}: tv={rep.tv_fixed_n.value:.3e} "
              f"mae={rep.mae_fixed_n.value:.3e} expected_tv={b5:.3e}")
    return 0


def _cmd_compare_smc(args) -> int:
    cfg = _load_config(args.config)
    outdir = _resolve_output_dir(args, cfg)
    seed = _resolve_seed(args, cfg)
    model, model_meta, _names, _ref = _build_model(args, cfg)
    schedule = _build_schedule(args, cfg)
    if args.reps < 2:
        raise UsageError("--reps must be >= 2")
    if args.budget < 10:
        raise UsageError("--budget must be >= 10 work units")
    result = smc.compare_methods(
        model, schedule, int(args.budget), int(args.reps), seed,
        smc_moves=int(args.smc_moves),
    )
    smc.write_comparison_csv(outdir / "comparison.csv", result)
    payload = smc.comparison_dict(result)
    payload["model"] = model_meta
    payload["budget"] = int(args.budget)
    tables.write_json(outdir / "comparison.json", payload)
    print(f"comparison at budget {args.budget} x {args.reps} replications -> "
          f"{outdir / 'comparison.csv'}")
    for method, effort, ell, re in result.rows():
        re_text = f"{re:.3%}" if np.isfinite(re) else "undefined"
        print(f"  {method:10s} effort {effort:12.1f}  ell_hat {ell:.4e}  re {re_text}")
    if np.isfinite(result.re_ratio):
        print(f"  re ratio (smc/splitting): {result.re_ratio:.2f}")
    return 0


def _cmd_lasso(args) -> int:
    cfg = _load_config(args.config)
    outdir = _resolve_output_dir(args, cfg)
    seed = _resolve_seed(args, cfg)
    model = lasso.lasso_posterior_model(args.data)
    model_meta = {"kind": "lasso", "dim": model.dim,
                  "data": str(args.data) if args.data else "packaged"}
    gamma = float(args.gamma)
    split = int(args.split_factor)

    if args.pilot:
        rho = args.target_rho if args.target_rho is not None else 1.0 / split
        config = pilot.PilotConfig(
            target_rho=rho,
            population=args.population if args.population is not None else _default_population(rho),
            mixing_sweeps=args.mixing_sweeps if args.mixing_sweeps is not None else 10,
        )
        report = pilot.pilot_levels(model, split, gamma, direction="at_most",
                                    config=config, seed=seed)
        schedule = report.schedule
        payload = report.to_dict()
        payload["model"] = model_meta
        tables.write_json(outdir / "schedule.json", payload)
        tables.write_csv(outdir / "pilot.csv",
                         ("level_index", "level", "construction_rho", "validation_rho"),
                         report.rows())
        print(f"pilot schedule with {schedule.tau} levels -> {outdir / 'schedule.json'}")
    else:
        if gamma != lasso.DEFAULT_GAMMA or split != lasso.REFERENCE_SPLIT:
            raise UsageError("the built-in reference ladder only fits the default "
                             "gamma and splitting factor; pass --pilot to build "
                             "a schedule for other settings")
        schedule = engine.LevelSchedule(lasso.REFERENCE_LEVELS, split, "at_most")

    n = args.n if args.t is None else None
    t = args.t
    if args.n is not None and args.t is not None:
        raise UsageError("give either --n or --t, not both")
    if n is None and t is None:
        n = 10_000
    retry_cap = args.retry_cap if args.retry_cap is not None else engine.DEFAULT_RETRY_CAP
    return _run_and_write(model, model_meta, list(model.state_names),
                          model.ols_reference(), schedule, n, t, seed, outdir,
                          args.workers or 1, retry_cap, engine.DEFAULT_MEMORY_CAP)


def build_parser() -> _Parser:
    parser = _Parser(prog="gsplit",
                     description="Conditional sampling and rare-event estimation "
                                 "by generalized splitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seed=True):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--output-dir", help=f"output directory (or ${OUTPUT_DIR_ENV})")
        if with_seed:
            p.add_argument("--seed", type=int, help="root seed (default 0)")

    def model_flags(p):
        p.add_argument("--model", choices=["toy", "lasso"], help="model kind")
        p.add_argument("--dim", type=int, help="toy model dimension")
        p.add_argument("--data", help="CSV path for the lasso model")

    def schedule_flags(p):
        p.add_argument("--levels", help="comma-separated level values")
        p.add_argument("--split-factor", type=int, help="splitting factor s")
        p.add_argument("--direction", choices=["at_least", "at_most"])
        p.add_argument("--schedule-json", help="schedule.json written by 'pilot'")

    p = sub.add_parser("pilot", help="build a level schedule adaptively")
    common(p)
    model_flags(p)
    p.add_argument("--final-level", type=float, required=True,
                   help="event threshold the schedule must end at")
    p.add_argument("--split-factor", type=int, help="splitting factor s")
    p.add_argument("--direction", choices=["at_least", "at_most"])
    p.add_argument("--target-rho", type=float, help="per-level pass probability target")
    p.add_argument("--population", type=int, help="pilot population size")
    p.add_argument("--max-levels", type=int)
    p.add_argument("--mixing-sweeps", type=int)
    p.set_defaults(func=_cmd_pilot)

    p = sub.add_parser("run", help="collect conditioned samples and estimate")
    common(p)
    model_flags(p)
    schedule_flags(p)
    p.add_argument("--n", type=int, help="stop after n nonempty trials")
    p.add_argument("--t", type=int, help="stop once retained states exceed t")
    p.add_argument("--workers", type=int, help="parallel workers (fixed-n only)")
    p.add_argument("--retry-cap", type=int, help="max raw attempts per nonempty trial")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("diagnose", help="bound curves from a saved run")
    common(p, with_seed=False)
    p.add_argument("--ledger", required=True, help="directory written by 'run'")
    p.add_argument("--points", help="comma-separated n grid (default 1e2..1e6)")
    p.add_argument("--set-class",
                   help="one_sided_intervals | rectangles | custom:<v>")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("compare-smc", help="splitting vs SMC at matched budgets")
    common(p)
    model_flags(p)
    schedule_flags(p)
    p.add_argument("--budget", type=int, default=100_000,
                   help="work units per replication (default 100000)")
    p.add_argument("--reps", type=int, default=30, help="replications per method")
    p.add_argument("--smc-moves", type=int, default=1,
                   help="kernel moves per SMC level transition")
    p.set_defaults(func=_cmd_compare_smc)

    p = sub.add_parser("lasso", help="l1-regression posterior application")
    common(p)
    p.add_argument("--data", help="CSV path (default: packaged benchmark)")
    p.add_argument("--gamma", type=float, default=lasso.DEFAULT_GAMMA,
                   help="l1 threshold (default 1200 on the standardized scale)")
    p.add_argument("--pilot", action="store_true",
                   help="build the schedule adaptively instead of using the "
                        "built-in reference ladder")
    p.add_argument("--split-factor", type=int, default=lasso.REFERENCE_SPLIT)
    p.add_argument("--target-rho", type=float,
                   help="pilot pass-probability target (default 1/split_factor)")
    p.add_argument("--population", type=int,
                   help="pilot population (default sized from target rho)")
    p.add_argument("--mixing-sweeps", type=int)
    p.add_argument("--n", type=int, help="nonempty trials (default 10000)")
    p.add_argument("--t", type=int, help="until-t stopping instead of fixed n")
    p.add_argument("--workers", type=int)
    p.add_argument("--retry-cap", type=int)
    p.set_defaults(func=_cmd_lasso)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"gsplit: error: {err}", file=sys.stderr)
        return 1
    except GsplitError as err:
        payload = {"error": {
            "type": type(err).__name__,
            "message": str(err),
            "detail": err.detail,
        }}
        print(json.dumps(tables._jsonable(payload)), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
