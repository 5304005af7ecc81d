"""Command-line entry point.

Subcommands: generate | solve | verify | study | floors.  Configuration is
read from a JSON file and may be overridden with repeatable dotted-path
--set flags; unknown keys exit with code 2.  Numerical failures exit with
code 1 and print a single-line JSON diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .algorithms import algorithm_from_dict, run_algorithm, write_trace_csv, write_trace_meta
from .analysis import fedgd_limit_lsq, fedprox_limit_lsq, fixedpoint_residuals, lsq_optimum, reference_optimum
from .datagen import ensemble_from_dict, generate_problem
from .errors import ConfigError, FedoptLabError, NumericalError
from .harness import (
    DEFAULT_ROUND_CAP,
    STUDY_EPS,
    STUDY_ROUND_CAP,
    ExperimentConfig,
    run_conditioning_study,
    run_inexact_floor_experiment,
)
from .losses import read_problem_json, write_problem_json
from . import jsonio

_fmt = jsonio.format_float


def _fail_json(err: Exception) -> None:
    doc = {"error": type(err).__name__, "message": str(err)}
    for attr in ("round_index", "residual", "cost"):
        val = getattr(err, attr, None)
        if val is not None:
            doc[attr] = val
    print(json.dumps(doc), file=sys.stderr)


def _load_config(path) -> dict:
    if path is None:
        raise ConfigError("a --config file is required for this subcommand")
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return doc


def _apply_overrides(config: dict, sets) -> None:
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = config
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"--set path {key!r} does not match the config structure")
            node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {key!r} does not match the config structure")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node[parts[-1]] = value


def _expect_keys(doc: dict, ctx: str, required: set, optional: set) -> None:
    unknown = set(doc) - required - optional
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"{ctx}: missing required keys {sorted(missing)}")


def _ensemble_from_config(doc, seed_override=None, default_kappa=None):
    if not isinstance(doc, dict):
        raise ConfigError("ensemble must be a JSON object")
    doc = dict(doc)
    if seed_override is not None:
        doc["seed"] = int(seed_override)
    if default_kappa is not None and "kappa" not in doc:
        doc["kappa"] = default_kappa
    try:
        return ensemble_from_dict(doc)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def _outdir(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    config = _load_config(args.config)
    _apply_overrides(config, args.set)
    _expect_keys(config, "generate config", {"ensemble"}, {"seed"})
    seed = args.seed if args.seed is not None else config.get("seed")
    spec = _ensemble_from_config(config["ensemble"], seed_override=seed)
    problem = generate_problem(spec)
    out = _outdir(args)
    path = os.path.join(out, "problem.json")
    write_problem_json(problem, path)
    print(f"wrote {path} (kind={spec.kind}, m={problem.m}, d={problem.d}, seed={spec.seed})")
    return 0


def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    _apply_overrides(config, args.set)
    if args.seed is not None:
        raise ConfigError("solve does not take --seed; the problem file fixes the instance")
    _expect_keys(config, "solve config", {"problem", "algorithm"}, {"reference"})
    if not isinstance(config["algorithm"], dict):
        raise ConfigError("algorithm must be a JSON object")
    try:
        spec = algorithm_from_dict(config["algorithm"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    use_reference = config.get("reference", True)
    if not isinstance(use_reference, bool):
        raise ConfigError("reference must be true or false")
    problem = read_problem_json(config["problem"])
    x_ref = f_star = None
    if use_reference:
        ref = reference_optimum(problem)
        x_ref, f_star = ref.x_star, ref.F_star
    trace = run_algorithm(problem, spec, x_ref=x_ref, f_star=f_star)
    out = _outdir(args)
    write_trace_csv(trace, os.path.join(out, "trace.csv"))
    write_trace_meta(trace, os.path.join(out, "trace.json"))
    if f_star is not None:
        from .plotting import plot_gap_curves

        plot_gap_curves({spec.label(): trace}, os.path.join(out, "trace.png"))
    summary = [f"rounds={len(trace)}", f"cost={_fmt(trace.cost[-1])}",
               f"grad_norm={_fmt(trace.grad_norm[-1])}"]
    if f_star is not None:
        summary.append(f"gap={_fmt(trace.cost[-1] - f_star)}")
    print(f"wrote {out}/trace.csv ({', '.join(summary)})")
    return 0


def _cmd_verify(args) -> int:
    config = _load_config(args.config)
    _apply_overrides(config, args.set)
    if args.seed is not None:
        raise ConfigError("verify does not take --seed; the problem file fixes the instance")
    _expect_keys(config, "verify config", {"problem", "s", "epochs"}, set())
    s = float(config["s"])
    epochs = int(config["epochs"])
    if s <= 0 or epochs < 1:
        raise ConfigError(f"need s > 0 and epochs >= 1, got s={s}, epochs={epochs}")
    problem = read_problem_json(config["problem"])
    x_ls = lsq_optimum(problem)
    x_gd = fedgd_limit_lsq(problem, s, epochs)
    x_px = fedprox_limit_lsq(problem, s)
    points = {"lsq": x_ls, "fedgd_limit": x_gd, "fedprox_limit": x_px}
    residuals = {}
    for name, point in points.items():
        r = fixedpoint_residuals(problem, s, epochs, point)
        residuals[f"at_{name}"] = {
            "fedgd": r.fedgd, "fedprox": r.fedprox, "stationarity": r.stationarity,
        }
    report = {
        "instance": {"problem": config["problem"], "m": problem.m, "d": problem.d,
                     "s": s, "epochs": epochs},
        "oracle_points": {k: v.tolist() for k, v in points.items()},
        "residuals": residuals,
        "distances": {
            "fedgd_limit_to_lsq": float(np.linalg.norm(x_gd - x_ls)),
            "fedprox_limit_to_lsq": float(np.linalg.norm(x_px - x_ls)),
        },
    }
    out = _outdir(args)
    path = os.path.join(out, "verify.json")
    jsonio.dump(report, path)
    print(f"wrote {path} (fedgd limit offset={_fmt(report['distances']['fedgd_limit_to_lsq'])})")
    return 0


def _cmd_study(args) -> int:
    config = _load_config(args.config)
    _apply_overrides(config, args.set)
    _expect_keys(config, "study config", {"ensemble", "kappa_grid"},
                 {"eps_target", "seed", "round_cap"})
    grid = config["kappa_grid"]
    if not isinstance(grid, list):
        raise ConfigError("kappa_grid must be a list")
    round_cap = int(config.get("round_cap", STUDY_ROUND_CAP))
    seed = args.seed if args.seed is not None else config.get("seed")
    ensemble = _ensemble_from_config(config["ensemble"], seed_override=seed, default_kappa=1.0)
    if ensemble.kind != "conditioned_lsq":
        raise ConfigError("the conditioning study needs a conditioned_lsq ensemble")
    out = _outdir(args)
    exp = ExperimentConfig(ensemble=ensemble, kappa_grid=grid,
                           eps_target=float(config.get("eps_target", STUDY_EPS)),
                           output_dir=out, seed=ensemble.seed)
    report = run_conditioning_study(exp.ensemble, exp.kappa_grid, exp.eps_target,
                                    round_cap=round_cap, threads=args.threads,
                                    output_dir=exp.output_dir)
    lines = []
    for name, fit in report.fits.items():
        lines.append(f"{name} slope={_fmt(fit.slope)}")
    print(f"wrote {out}/report.json ({'; '.join(lines)})")
    return 0


def _cmd_floors(args) -> int:
    config = _load_config(args.config)
    _apply_overrides(config, args.set)
    _expect_keys(config, "floors config", {"ensemble"}, {"epochs_list", "rounds", "seed"})
    epochs_list = config.get("epochs_list", [1, 5, 10])
    if (not isinstance(epochs_list, list) or not epochs_list
            or any((not isinstance(e, int)) or e < 1 for e in epochs_list)):
        raise ConfigError("epochs_list must be a nonempty list of integers >= 1")
    rounds = int(config.get("rounds", 250))
    if rounds < 1 or rounds > DEFAULT_ROUND_CAP:
        raise ConfigError(f"need 1 <= rounds <= {DEFAULT_ROUND_CAP}, got {rounds}")
    seed = args.seed if args.seed is not None else config.get("seed")
    ensemble = _ensemble_from_config(config["ensemble"], seed_override=seed)
    out = _outdir(args)
    exp = ExperimentConfig(ensemble=ensemble, output_dir=out, seed=ensemble.seed)
    _, report = run_inexact_floor_experiment(
        exp.ensemble, epochs_list=tuple(epochs_list), rounds=rounds,
        output_dir=exp.output_dir
    )
    bbars = "; ".join(
        f"e={e}: b={_fmt(report['runs'][f'grad_e{e}']['max_residual'])}" for e in epochs_list
    )
    print(f"wrote {out}/floors.json ({bbars})")
    return 0


_SUBCOMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "study": _cmd_study,
    "floors": _cmd_floors,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedoptlab",
        description="Federated optimization laboratory: generators, solvers, "
                    "fixed-point verification and conditioning studies.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("generate", "write a problem JSON from an ensemble spec"),
        ("solve", "run one algorithm on a problem file and write a trace CSV"),
        ("verify", "evaluate fixed-point residuals at the closed-form oracle points"),
        ("study", "run the conditioning study over a kappa grid"),
        ("floors", "run the inexact proximal floor experiment"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--out", metavar="DIR", help="output directory (default: out)")
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override, repeatable")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads for independent cells (0 = auto)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 0:
        _fail_json(ConfigError("--threads must be >= 0"))
        return 2
    try:
        return _SUBCOMMANDS[args.subcommand](args)
    except ConfigError as err:
        _fail_json(err)
        return 2
    except (NumericalError, FedoptLabError) as err:
        _fail_json(err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
