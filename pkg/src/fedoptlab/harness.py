"""Experiment drivers: nonconvergence floors, conditioning study, inexact
proximal floors, and the logistic comparison.

Every driver is deterministic given its config: instance seeds derive from
the base seed, runs record in ascending client order, and reports are
written with pinned float formatting.  When an output directory is given,
each driver writes per-run CSV traces, a JSON report and a rendered figure
next to them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .algorithms import (
    Trace,
    default_stepsize,
    run_fedgd,
    run_fedprox,
    run_fedsplit,
    write_trace_csv,
    write_trace_meta,
)
from .analysis import (
    fedgd_limit_lsq,
    fedprox_limit_lsq,
    iteration_complexity,
    reference_optimum,
)
from .datagen import ConditionedLsqSpec, generate_problem
from .errors import ConfigError, DegenerateProblemError
from .prox import EXACT, ProxSolverSpec
from . import jsonio

STUDY_ROUND_CAP = 10**6
DEFAULT_ROUND_CAP = 10**4
#: tolerance used by the conditioning study, chosen as a modest target
STUDY_EPS = 1e-3
#: cost-gap level down to which a well-resolved inexact run must follow
#: the exact trace
TRACKING_GAP = 1e-6
FLOOR_SLACK = 1.1


@dataclass
class ExperimentConfig:
    """Parsed experiment description shared by the CLI entry points.

    `algorithms` may be None, meaning the driver's canonical set; an
    explicitly supplied list must be nonempty.
    """

    ensemble: object
    algorithms: Optional[list] = None
    eps_target: Optional[float] = None
    kappa_grid: Optional[list] = None
    output_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.algorithms is not None and not self.algorithms:
            raise ConfigError("algorithm list must be nonempty when present")
        if self.eps_target is not None and self.eps_target <= 0:
            raise ConfigError(f"need eps_target > 0, got {self.eps_target}")
        if self.kappa_grid is not None:
            if not self.kappa_grid:
                raise ConfigError("kappa_grid must be nonempty when present")
            if any(k < 1 for k in self.kappa_grid):
                raise ConfigError("every kappa in the grid must be >= 1")


def _ensure_outdir(output_dir):
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)


def _write_run(trace: Trace, output_dir, name: str):
    if output_dir is None:
        return
    write_trace_csv(trace, os.path.join(output_dir, f"trace_{name}.csv"))
    write_trace_meta(trace, os.path.join(output_dir, f"trace_{name}.json"))


# ---------------------------------------------------------------------------
# nonconvergence experiment
# ---------------------------------------------------------------------------

def run_nonconvergence_experiment(ensemble, *, epochs_list=(1, 10, 100), rounds=600,
                                  fedgd_s: float = None, fedprox_s: float = 1.0,
                                  fedsplit_s: float = None, output_dir=None):
    """Compare terminal cost gaps against the closed-form limit floors.

    Runs FedGD for each local epoch count, FedProx, and FedSplit with exact
    prox on one least squares instance.  For the algorithms with incorrect
    fixed points the terminal gap is compared to the predicted floor
    F(limit) - F* evaluated from the closed-form limit.

    Returns (traces, report); traces is a dict keyed by run label.
    """
    problem = generate_problem(ensemble)
    if not problem.is_quadratic():
        raise DegenerateProblemError("the nonconvergence experiment needs a least squares ensemble")
    _ensure_outdir(output_dir)
    ref = reference_optimum(problem)
    s_gd = default_stepsize(problem, "fedgd") if fedgd_s is None else fedgd_s
    common = dict(x_ref=ref.x_star, f_star=ref.F_star, record_iterates=False)

    traces = {}
    floors = {}
    for e in epochs_list:
        label = f"fedgd_e{e}"
        traces[label] = run_fedgd(problem, s=s_gd, epochs=e, rounds=rounds, **common)
        floors[label] = 0.0 if e == 1 else (
            problem.value(fedgd_limit_lsq(problem, s_gd, e)) - ref.F_star
        )
    traces["fedprox"] = run_fedprox(problem, s=fedprox_s, rounds=rounds, **common)
    floors["fedprox"] = problem.value(fedprox_limit_lsq(problem, fedprox_s)) - ref.F_star
    traces["fedsplit"] = run_fedsplit(problem, s=fedsplit_s, rounds=rounds, **common)
    floors["fedsplit"] = 0.0

    runs = {}
    for label, trace in traces.items():
        gap = float(trace.cost[-1] - ref.F_star)
        row = {"terminal_gap": gap, "predicted_floor": floors[label]}
        if floors[label] > 0.0:
            row["rel_floor_error"] = abs(gap - floors[label]) / floors[label]
        runs[label] = row
    report = {
        "ensemble": {"kind": ensemble.kind, "m": ensemble.m, "d": ensemble.d,
                     "n": ensemble.n, "seed": ensemble.seed},
        "rounds": int(rounds),
        "stepsizes": {"fedgd": float(s_gd), "fedprox": float(fedprox_s)},
        "f_star": float(ref.F_star),
        "runs": runs,
    }
    if output_dir is not None:
        for label, trace in traces.items():
            _write_run(trace, output_dir, label)
        jsonio.dump(report, os.path.join(output_dir, "nonconvergence.json"))
        from .plotting import plot_gap_curves

        plot_gap_curves(
            traces, os.path.join(output_dir, "nonconvergence.png"),
            floors={k: v for k, v in floors.items() if v > 0},
            title="terminal floors of federated procedures",
        )
    return traces, report


# ---------------------------------------------------------------------------
# conditioning study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    kappa: float
    algorithm: str
    t_hit: Optional[int]
    final_gap: float
    censored: bool


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual_stderr: float
    n_points: int


@dataclass
class StudyReport:
    """Per-(algorithm, kappa) first-hit rounds with fitted log-log slopes."""

    eps: float
    rows: list
    fits: dict

    def __post_init__(self):
        kappas = [r.kappa for r in self.rows]
        if kappas != sorted(kappas):
            raise ValueError("study rows must be sorted by kappa ascending")

    def t_hit(self, algorithm: str, kappa: float) -> Optional[int]:
        for r in self.rows:
            if r.algorithm == algorithm and r.kappa == kappa:
                return r.t_hit
        raise KeyError(f"no row for {algorithm} at kappa={kappa}")

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "rows": [
                {"kappa": r.kappa, "algorithm": r.algorithm, "T_hit": r.t_hit,
                 "final_gap": r.final_gap, "censored": r.censored}
                for r in self.rows
            ],
            "slopes": {
                name: {"slope": f.slope, "intercept": f.intercept,
                       "residual_stderr": f.residual_stderr, "n_points": f.n_points}
                for name, f in self.fits.items()
            },
        }


def _fit_loglog(kappas, t_hits) -> SlopeFit:
    """Ordinary least squares of log10 T on log10 kappa."""
    x = np.log10(np.asarray(kappas, dtype=float))
    y = np.log10(np.asarray(t_hits, dtype=float))
    n = x.size
    xbar, ybar = x.mean(), y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    stderr = float(np.sqrt(np.sum(resid**2) / (n - 2))) if n > 2 else 0.0
    return SlopeFit(slope=slope, intercept=intercept, residual_stderr=stderr, n_points=n)


def _study_cell(ensemble: ConditionedLsqSpec, kappa: float, index: int, eps: float,
                round_cap: int):
    spec = replace(ensemble, kappa=float(kappa), seed=ensemble.seed + index)
    problem = generate_problem(spec)
    ref = reference_optimum(problem)
    out = {}
    for name, runner in (("fedgd", _study_fedgd), ("fedsplit", _study_fedsplit)):
        trace = runner(problem, ref, eps, round_cap)
        t_hit = iteration_complexity(trace, ref.F_star, eps)
        out[name] = (trace, StudyRow(
            kappa=float(kappa), algorithm=name, t_hit=t_hit,
            final_gap=float(trace.cost[-1] - ref.F_star), censored=t_hit is None,
        ))
    return out


def _study_fedgd(problem, ref, eps, round_cap):
    return run_fedgd(problem, epochs=1, rounds=round_cap, f_star=ref.F_star,
                     stop_gap=eps, record_iterates=False)


def _study_fedsplit(problem, ref, eps, round_cap):
    return run_fedsplit(problem, rounds=round_cap, f_star=ref.F_star,
                        stop_gap=eps, record_iterates=False)


def run_conditioning_study(ensemble: ConditionedLsqSpec, kappa_grid, eps_target: float = STUDY_EPS,
                           *, round_cap: int = STUDY_ROUND_CAP, threads: int = 1,
                           output_dir=None) -> StudyReport:
    """First-hit rounds T(eps, kappa) for FedGD(e=1) and exact FedSplit.

    Generates one instance per kappa (seed = base seed + grid index), runs
    both algorithms until the cost gap falls below eps_target or the round
    cap, and fits log10 T against log10 kappa per algorithm.  Censored
    cells are excluded from the fit and flagged in the report.
    """
    if eps_target <= 0:
        raise ConfigError(f"need eps_target > 0, got {eps_target}")
    kappas = sorted(float(k) for k in kappa_grid)
    _ensure_outdir(output_dir)
    if threads == 0:
        threads = os.cpu_count() or 1
    cells = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_study_cell, ensemble, k, i, eps_target, round_cap)
                for i, k in enumerate(kappas)
            ]
            cells = [f.result() for f in futures]
    else:
        cells = [_study_cell(ensemble, k, i, eps_target, round_cap)
                 for i, k in enumerate(kappas)]

    rows = []
    for k, cell in zip(kappas, cells):
        for name in ("fedgd", "fedsplit"):
            trace, row = cell[name]
            rows.append(row)
            if output_dir is not None:
                _write_run(trace, output_dir, f"{name}_kappa{k:g}")
    fits = {}
    for name in ("fedgd", "fedsplit"):
        usable = [r for r in rows if r.algorithm == name and not r.censored]
        if len(usable) >= 2:
            fits[name] = _fit_loglog([r.kappa for r in usable], [r.t_hit for r in usable])
    report = StudyReport(eps=float(eps_target), rows=rows, fits=fits)
    if output_dir is not None:
        jsonio.dump(report.to_dict(), os.path.join(output_dir, "report.json"))
        from .plotting import plot_study

        plot_study(report, os.path.join(output_dir, "study.png"))
    return report


# ---------------------------------------------------------------------------
# inexact proximal floor experiment
# ---------------------------------------------------------------------------

def run_inexact_floor_experiment(ensemble, *, epochs_list=(1, 5, 10), rounds=250,
                                 output_dir=None):
    """Error floors of FedSplit under gradient-based inexact prox solves.

    Runs FedSplit with an exact solver and with gradient inner loops of
    each epoch count, measuring the per-round residual norm against the
    exact prox.  Reports the max observed residual b and the floor
    (sqrt(kappa) + 1) * b next to the terminal distance to the optimum.

    Returns (traces, report).
    """
    problem = generate_problem(ensemble)
    if not problem.is_quadratic():
        raise DegenerateProblemError("the floor experiment needs a least squares ensemble")
    _ensure_outdir(output_dir)
    ref = reference_optimum(problem)
    consts = problem.convexity_constants
    kappa = consts.kappa
    common = dict(rounds=rounds, x_ref=ref.x_star, f_star=ref.F_star,
                  record_iterates=False, measure_residuals=True)

    traces = {"exact": run_fedsplit(problem, prox_spec=EXACT, **common)}
    for e in epochs_list:
        spec = ProxSolverSpec(mode="gradient", epochs=e)
        traces[f"grad_e{e}"] = run_fedsplit(problem, prox_spec=spec, **common)

    exact_gap = traces["exact"].cost - ref.F_star
    runs = {
        "exact": {
            "terminal_dist": float(traces["exact"].dist_to_ref[-1]),
            "terminal_gap": float(exact_gap[-1]),
            "max_residual": float(np.max(traces["exact"].prox_residual)),
        }
    }
    for e in epochs_list:
        trace = traces[f"grad_e{e}"]
        b_bar = float(np.max(trace.prox_residual))
        floor = (math.sqrt(kappa) + 1.0) * b_bar
        gap = trace.cost - ref.F_star
        runs[f"grad_e{e}"] = {
            "epochs": int(e),
            "max_residual": b_bar,
            "floor_bound": floor,
            "terminal_dist": float(trace.dist_to_ref[-1]),
            "terminal_gap": float(gap[-1]),
            "floor_ok": bool(trace.dist_to_ref[-1] <= FLOOR_SLACK * floor),
            "min_gap": float(np.min(gap)),
            "tracks_exact": bool(
                np.min(gap) <= TRACKING_GAP
                and np.all(gap <= FLOOR_SLACK * np.maximum(exact_gap, 0.0) + TRACKING_GAP)
            ),
        }
    report = {
        "ensemble": {"kind": ensemble.kind, "m": ensemble.m, "d": ensemble.d,
                     "n": ensemble.n, "seed": ensemble.seed},
        "kappa": float(kappa),
        "rounds": int(rounds),
        "f_star": float(ref.F_star),
        "runs": runs,
    }
    if output_dir is not None:
        for label, trace in traces.items():
            _write_run(trace, output_dir, label)
        jsonio.dump(report, os.path.join(output_dir, "floors.json"))
        from .plotting import plot_gap_curves

        plot_gap_curves(
            traces, os.path.join(output_dir, "floors.png"),
            title="inexact proximal error floors",
        )
    return traces, report


# ---------------------------------------------------------------------------
# logistic regression experiment
# ---------------------------------------------------------------------------

def _local_curvature_stepsize(problem, x_star) -> float:
    """Splitting stepsize for problems that are not globally strongly convex.

    Uses the smallest per-client Hessian eigenvalue at the reference
    optimum as an effective strong convexity modulus.
    """
    L = problem.convexity_constants.L
    ell_loc = min(
        float(np.linalg.eigvalsh(f.hessian(x_star))[0]) for f in problem.clients
    )
    ell_loc = max(ell_loc, L * 1e-12)
    return 1.0 / math.sqrt(ell_loc * L)


def run_logistic_experiment(ensemble, *, epochs_list=(1, 5, 10), rounds=300,
                            newton_tol=1e-10, fedsplit_s: float = None,
                            output_dir=None):
    """FedGD(e=1) against FedSplit with Newton and gradient prox solvers.

    Gaps are computed against the centralized Newton reference.  Because
    logistic losses are not strongly convex, the default splitting stepsize
    comes from the local curvature at the reference optimum; pass
    fedsplit_s to override.

    Returns (traces, report).
    """
    problem = generate_problem(ensemble)
    if not problem.is_logistic():
        raise DegenerateProblemError("the logistic experiment needs a logistic ensemble")
    _ensure_outdir(output_dir)
    ref = reference_optimum(problem, tol=1e-12)
    s_split = fedsplit_s if fedsplit_s is not None else _local_curvature_stepsize(problem, ref.x_star)
    common = dict(rounds=rounds, x_ref=ref.x_star, f_star=ref.F_star, record_iterates=False)

    traces = {
        "fedgd_e1": run_fedgd(problem, epochs=1, **common),
        "fedsplit_newton": run_fedsplit(
            problem, s=s_split,
            prox_spec=ProxSolverSpec(mode="newton", tol=newton_tol, max_iter=200),
            **common,
        ),
    }
    for e in epochs_list:
        spec = ProxSolverSpec(mode="gradient", epochs=e)
        traces[f"fedsplit_grad_e{e}"] = run_fedsplit(problem, s=s_split, prox_spec=spec, **common)

    runs = {
        label: {"terminal_gap": float(t.cost[-1] - ref.F_star),
                "min_gap": float(np.min(t.cost - ref.F_star))}
        for label, t in traces.items()
    }
    report = {
        "ensemble": {"kind": ensemble.kind, "m": ensemble.m, "d": ensemble.d,
                     "n": ensemble.n, "seed": ensemble.seed},
        "rounds": int(rounds),
        "stepsizes": {"fedsplit": float(s_split)},
        "f_star": float(ref.F_star),
        "runs": runs,
    }
    if output_dir is not None:
        for label, trace in traces.items():
            _write_run(trace, output_dir, label)
        jsonio.dump(report, os.path.join(output_dir, "logistic.json"))
        from .plotting import plot_gap_curves

        plot_gap_curves(traces, os.path.join(output_dir, "logistic.png"),
                        title="logistic regression comparison")
    return traces, report
