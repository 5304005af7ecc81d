"""Round-based federated procedures: FedGD, FedProx and FedSplit.

All three iterate over per-client blocks with a server averaging barrier
per round and emit a Trace.  Defaults follow explicit rules so runs are
reproducible: FedSplit uses s = 1/sqrt(ell* L*), FedGD uses s = 1/L*, and
FedProx uses s = 1.  Runs execute exactly `rounds` rounds unless a
`stop_gap` target is supplied (used by the conditioning study).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blockvec import BlockVector, block_average, reflect_consensus
from .errors import DivergenceError, NonconvergenceError, StepsizeError
from .losses import FederatedProblem, ShiftedLoss
from .prox import EXACT, ProxSolverSpec, make_prox
from . import jsonio

_DIVERGENCE_FACTOR = 1e3


@dataclass
class Trace:
    """Per-round records of a federated run.

    Row t holds the server average produced by round t (t = 1, 2, ...),
    its cost F(x_t), the gradient norm ||sum_j grad f_j(x_t)||, and
    optionally the distance to a reference point and the measured proximal
    residual norm.  Metadata carries the algorithm spec, seed, stepsize
    and wall time.
    """

    rounds: np.ndarray
    cost: np.ndarray
    grad_norm: np.ndarray
    dist_to_ref: Optional[np.ndarray] = None
    prox_residual: Optional[np.ndarray] = None
    iterates: Optional[np.ndarray] = None
    blocks: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def final_x(self) -> np.ndarray:
        if self.iterates is None:
            raise ValueError("trace was recorded without iterates")
        return self.iterates[-1]

    def gap(self, f_star: float = None) -> np.ndarray:
        """cost - F*; F* from the argument or from metadata."""
        if f_star is None:
            f_star = self.metadata.get("f_star")
        if f_star is None:
            raise ValueError("no reference value F* available for gap computation")
        return self.cost - f_star


class _Recorder:
    def __init__(self, problem: FederatedProblem, x_ref, f_star,
                 record_iterates: bool, record_blocks: bool):
        self.problem = problem
        self.x_ref = None if x_ref is None else np.asarray(x_ref, dtype=float).reshape(-1)
        self.f_star = f_star
        self.rounds = []
        self.cost = []
        self.grad_norm = []
        self.dist = [] if self.x_ref is not None else None
        self.residual = None
        self.iterates = [] if record_iterates else None
        self.blocks = [] if record_blocks else None

    def enable_residuals(self):
        self.residual = []

    def record(self, t: int, x: np.ndarray, z: BlockVector = None, residual: float = None) -> float:
        cost = self.problem.value(x)
        self.rounds.append(t)
        self.cost.append(cost)
        self.grad_norm.append(float(np.linalg.norm(self.problem.gradient(x))))
        if self.dist is not None:
            self.dist.append(float(np.linalg.norm(x - self.x_ref)))
        if self.residual is not None:
            self.residual.append(0.0 if residual is None else residual)
        if self.iterates is not None:
            self.iterates.append(x.copy())
        if self.blocks is not None:
            self.blocks.append(z.data.copy())
        return cost

    def finish(self, metadata: dict) -> Trace:
        return Trace(
            rounds=np.asarray(self.rounds, dtype=int),
            cost=np.asarray(self.cost, dtype=float),
            grad_norm=np.asarray(self.grad_norm, dtype=float),
            dist_to_ref=None if self.dist is None else np.asarray(self.dist, dtype=float),
            prox_residual=None if self.residual is None else np.asarray(self.residual, dtype=float),
            iterates=None if self.iterates is None else np.asarray(self.iterates, dtype=float),
            blocks=None if self.blocks is None else np.asarray(self.blocks, dtype=float),
            metadata=metadata,
        )


def _resolve_init(problem: FederatedProblem, init) -> np.ndarray:
    if init is None or (isinstance(init, str) and init == "zero"):
        return np.zeros(problem.d)
    x = np.asarray(init, dtype=float).reshape(-1)
    if x.size != problem.d:
        raise ValueError(f"init has {x.size} entries, problem has d={problem.d}")
    return x


def _check_divergence(cost: float, limit: float, t: int):
    if not np.isfinite(cost) or cost > limit:
        raise DivergenceError(
            f"round {t}: cost {cost:.3e} exceeded the divergence threshold "
            f"{limit:.3e}; the stepsize is likely too large",
            round_index=t,
            cost=cost,
        )


def default_stepsize(problem: FederatedProblem, kind: str) -> float:
    c = problem.convexity_constants
    if kind == "fedsplit":
        if c.ell <= 0:
            raise StepsizeError(
                "the default FedSplit stepsize 1/sqrt(ell* L*) needs every client "
                "strongly convex; pass an explicit stepsize instead"
            )
        return 1.0 / np.sqrt(c.ell * c.L)
    if kind == "fedgd":
        return 1.0 / c.L
    if kind == "fedprox":
        return 1.0
    raise ValueError(f"no default stepsize rule for {kind!r}")


# ---------------------------------------------------------------------------
# step factories (single-round maps, reused by fixed-point searches)
# ---------------------------------------------------------------------------

def fedgd_step(problem: FederatedProblem, s: float, epochs: int):
    """x -> average_j of epochs local gradient steps started at x."""
    clients = problem.clients

    def step(x: np.ndarray) -> np.ndarray:
        acc = None
        for f in clients:
            u = x
            for _ in range(epochs):
                u = u - s * f.gradient(u)
            acc = u.copy() if acc is None else acc + u
        return acc / len(clients)

    return step


def fedprox_step(problem: FederatedProblem, s: float):
    """x -> average_j of exact per-client proximal updates at x."""
    solvers = [make_prox(f, s, EXACT) for f in problem.clients]

    def step(x: np.ndarray) -> np.ndarray:
        acc = None
        for solve in solvers:
            u = solve(x)
            acc = u if acc is None else acc + u
        return acc / len(solvers)

    return step


def fedsplit_step(problem: FederatedProblem, s: float = None,
                  prox_spec: ProxSolverSpec = EXACT):
    """z -> one Peaceman-Rachford round on the block state.

    Composition of the consensus reflection w_j = 2 zbar - z_j with the
    per-client reflected prox: z_j^+ = 2 prox_{s f_j}(w_j) - w_j.
    """
    if s is None:
        s = default_stepsize(problem, "fedsplit")
    consts = problem.convexity_constants
    solvers = [make_prox(f, s, prox_spec, consts) for f in problem.clients]

    def step(z: BlockVector) -> BlockVector:
        w = reflect_consensus(z)
        p = np.vstack([solvers[j](w.data[j]) for j in range(z.m)])
        return BlockVector(2.0 * p - w.data)

    return step


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

def run_fedgd(problem: FederatedProblem, s: float = None, epochs: int = 1,
              rounds: int = 100, init=None, *, x_ref=None, f_star=None,
              stop_gap=None, record_iterates: bool = True) -> Trace:
    """Federated gradient descent with `epochs` local steps per round."""
    if epochs < 1:
        raise ValueError(f"need epochs >= 1, got {epochs}")
    if rounds < 1:
        raise ValueError(f"need rounds >= 1, got {rounds}")
    if s is None:
        s = default_stepsize(problem, "fedgd")
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    if stop_gap is not None and f_star is None:
        raise ValueError("stop_gap requires f_star")
    t0 = time.perf_counter()
    x = _resolve_init(problem, init)
    rec = _Recorder(problem, x_ref, f_star, record_iterates, False)
    limit = _DIVERGENCE_FACTOR * (1.0 + problem.value(x))
    step = fedgd_step(problem, s, epochs)
    for t in range(1, rounds + 1):
        x = step(x)
        cost = rec.record(t, x)
        _check_divergence(cost, limit, t)
        if stop_gap is not None and cost - f_star <= stop_gap:
            break
    meta = {
        "algorithm": {"kind": "fedgd", "s": float(s), "epochs": int(epochs), "rounds": int(rounds)},
        "seed": problem.seed,
        "wall_ms": 1000.0 * (time.perf_counter() - t0),
    }
    if f_star is not None:
        meta["f_star"] = float(f_star)
    return rec.finish(meta)


def run_fedprox(problem: FederatedProblem, s: float = 1.0, rounds: int = 100,
                init=None, *, x_ref=None, f_star=None, stop_gap=None,
                record_iterates: bool = True) -> Trace:
    """Averaged exact proximal updates with a server averaging barrier."""
    if rounds < 1:
        raise ValueError(f"need rounds >= 1, got {rounds}")
    if s is None:
        s = default_stepsize(problem, "fedprox")
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    if stop_gap is not None and f_star is None:
        raise ValueError("stop_gap requires f_star")
    t0 = time.perf_counter()
    x = _resolve_init(problem, init)
    rec = _Recorder(problem, x_ref, f_star, record_iterates, False)
    limit = _DIVERGENCE_FACTOR * (1.0 + problem.value(x))
    step = fedprox_step(problem, s)
    for t in range(1, rounds + 1):
        x = step(x)
        cost = rec.record(t, x)
        _check_divergence(cost, limit, t)
        if stop_gap is not None and cost - f_star <= stop_gap:
            break
    meta = {
        "algorithm": {"kind": "fedprox", "s": float(s), "rounds": int(rounds)},
        "seed": problem.seed,
        "wall_ms": 1000.0 * (time.perf_counter() - t0),
    }
    if f_star is not None:
        meta["f_star"] = float(f_star)
    return rec.finish(meta)


def run_fedsplit(problem: FederatedProblem, s: float = None,
                 prox_spec: ProxSolverSpec = EXACT, rounds: int = 100, init=None, *,
                 x_ref=None, f_star=None, stop_gap=None, record_iterates: bool = True,
                 record_blocks: bool = False, measure_residuals: bool = False,
                 eval_problem: FederatedProblem = None) -> Trace:
    """Peaceman-Rachford splitting over the consensus reformulation.

    Per round and client: a prox step at 2 x - z_j, a local centering step,
    then the global average.  With `measure_residuals` and an available
    exact quadratic solver, records the stacked norm of the per-client
    deviation between the configured solver and the exact prox; with an
    exact solver the residuals are identically zero.

    `eval_problem` switches the objective used for trace metrics, e.g. to
    report the unregularized cost while iterating on a shifted problem.
    """
    if rounds < 1:
        raise ValueError(f"need rounds >= 1, got {rounds}")
    if s is None:
        s = default_stepsize(problem, "fedsplit")
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    if stop_gap is not None and f_star is None:
        raise ValueError("stop_gap requires f_star")
    t0 = time.perf_counter()
    metrics_problem = problem if eval_problem is None else eval_problem
    x = _resolve_init(problem, init)
    rec = _Recorder(metrics_problem, x_ref, f_star, record_iterates, record_blocks)
    consts = problem.convexity_constants
    solvers = [make_prox(f, s, prox_spec, consts) for f in problem.clients]
    exact_ref = None
    if measure_residuals:
        rec.enable_residuals()
        if prox_spec.mode != "exact":
            try:
                exact_ref = [make_prox(f, s, EXACT) for f in problem.clients]
            except TypeError:
                exact_ref = None  # no closed form available for comparison
    limit = _DIVERGENCE_FACTOR * (1.0 + metrics_problem.value(x))
    z = BlockVector.filled(problem.m, x)
    for t in range(1, rounds + 1):
        w = reflect_consensus(z)
        inner_init = None if prox_spec.warm_start else x
        try:
            p = np.vstack([solvers[j](w.data[j], init=inner_init) for j in range(z.m)])
        except NonconvergenceError as err:
            raise NonconvergenceError(f"round {t}: {err}", residual=err.residual) from err
        residual = None
        if exact_ref is not None:
            sq = 0.0
            for j in range(z.m):
                delta = p[j] - exact_ref[j](w.data[j])
                sq += float(delta @ delta)
            residual = float(np.sqrt(sq))
        z = BlockVector(2.0 * p - w.data)
        x = block_average(z)
        cost = rec.record(t, x, z=z, residual=residual)
        _check_divergence(cost, limit, t)
        if stop_gap is not None and cost - f_star <= stop_gap:
            break
    meta = {
        "algorithm": {
            "kind": "fedsplit",
            "s": float(s),
            "rounds": int(rounds),
            "prox": prox_spec_to_dict(prox_spec),
        },
        "seed": problem.seed,
        "wall_ms": 1000.0 * (time.perf_counter() - t0),
    }
    if f_star is not None:
        meta["f_star"] = float(f_star)
    return rec.finish(meta)


def admissible_regularization(eps: float, m: int, dist2: float) -> float:
    """Upper end of the admissible modulus interval, eps / (m * ||x1 - x*||^2)."""
    if eps <= 0 or m < 1 or dist2 <= 0:
        raise ValueError("need eps > 0, m >= 1 and a positive squared distance")
    return eps / (m * dist2)


def _estimate_distance_to_optimum(problem: FederatedProblem, x1: np.ndarray,
                                  tol: float = 1e-2, max_iter: int = 10**5) -> float:
    """Rough ||x1 - x*|| via centralized gradient descent to a loose tolerance."""
    total_L = sum(f.convexity_constants.L for f in problem.clients)
    alpha = 1.0 / total_L
    x = x1.copy()
    for _ in range(max_iter):
        g = problem.gradient(x)
        if float(np.linalg.norm(g)) <= tol:
            break
        x -= alpha * g
    return float(np.linalg.norm(x1 - x))


def run_fedsplit_regularized(problem: FederatedProblem, eps: float, rounds: int,
                             init=None, lambda_override: float = None, *,
                             prox_spec: ProxSolverSpec = EXACT, x_ref=None,
                             f_star=None, record_iterates: bool = True) -> Trace:
    """FedSplit on a strongly convexified copy of a merely convex problem.

    Each loss gains the shift (lam/2) ||x - x1||^2 around the start point,
    choosing lam = eps / (2 m est^2) with est a cheap estimate of
    ||x1 - x*|| unless overridden.  The run uses exact prox steps on the
    shifted losses with s = 1/sqrt(lam (L* + lam)); the shift folds into
    each proximal subproblem analytically.  Trace metrics report the
    original objective.
    """
    if eps <= 0:
        raise ValueError(f"need eps > 0, got {eps}")
    x1 = _resolve_init(problem, init)
    if lambda_override is not None:
        lam = float(lambda_override)
        if lam <= 0:
            raise ValueError(f"need a positive regularization modulus, got {lam}")
    else:
        est = max(_estimate_distance_to_optimum(problem, x1), 1e-8)
        lam = eps / (2.0 * problem.m * est * est)
    L_star = problem.convexity_constants.L
    s = 1.0 / np.sqrt(lam * (L_star + lam))
    shifted = FederatedProblem(
        [ShiftedLoss(f, lam, x1) for f in problem.clients], seed=problem.seed
    )
    trace = run_fedsplit(
        shifted, s=s, prox_spec=prox_spec, rounds=rounds, init=x1,
        x_ref=x_ref, f_star=f_star, record_iterates=record_iterates,
        eval_problem=problem,
    )
    trace.metadata["algorithm"] = {
        "kind": "fedsplit_regularized",
        "eps": float(eps),
        "lambda": float(lam),
        "s": float(s),
        "rounds": int(rounds),
        "prox": prox_spec_to_dict(prox_spec),
    }
    return trace


# ---------------------------------------------------------------------------
# algorithm specifications and dispatch
# ---------------------------------------------------------------------------

def prox_spec_to_dict(spec: ProxSolverSpec) -> dict:
    out = {"mode": spec.mode, "warm_start": spec.warm_start}
    if spec.mode == "gradient":
        out["epochs"] = spec.epochs
    if spec.mode == "newton":
        out["tol"] = spec.tol
        out["max_iter"] = spec.max_iter
    return out


def prox_spec_from_dict(doc: dict) -> ProxSolverSpec:
    allowed = {"mode", "epochs", "tol", "max_iter", "warm_start"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown prox config keys: {sorted(unknown)}")
    return ProxSolverSpec(**doc)


@dataclass
class AlgorithmSpec:
    """Declarative description of one run, as parsed from a config file."""

    kind: str
    rounds: int
    s: Optional[float] = None
    epochs: int = 1
    prox: ProxSolverSpec = EXACT
    eps: Optional[float] = None
    lambda_override: Optional[float] = None
    init: object = None

    _KINDS = ("fedgd", "fedprox", "fedsplit", "fedsplit_regularized")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown algorithm kind {self.kind!r}")
        if self.rounds < 1:
            raise ValueError(f"need rounds >= 1, got {self.rounds}")
        if self.s is not None and self.s <= 0:
            raise ValueError(f"need stepsize s > 0, got {self.s}")
        if self.epochs < 1:
            raise ValueError(f"need epochs >= 1, got {self.epochs}")
        if self.kind == "fedsplit_regularized" and (self.eps is None or self.eps <= 0):
            raise ValueError("fedsplit_regularized needs eps > 0")

    def label(self) -> str:
        if self.kind == "fedgd":
            return f"fedgd_e{self.epochs}"
        if self.kind == "fedsplit" and self.prox.mode == "gradient":
            return f"fedsplit_grad_e{self.prox.epochs}"
        if self.kind == "fedsplit" and self.prox.mode == "newton":
            return "fedsplit_newton"
        return self.kind


def algorithm_from_dict(doc: dict) -> AlgorithmSpec:
    allowed = {"kind", "rounds", "s", "epochs", "prox", "eps", "lambda_override", "init"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown algorithm config keys: {sorted(unknown)}")
    doc = dict(doc)
    prox_doc = doc.pop("prox", None)
    prox = EXACT if prox_doc is None else prox_spec_from_dict(prox_doc)
    try:
        return AlgorithmSpec(prox=prox, **doc)
    except TypeError as err:
        raise ValueError(f"bad algorithm config: {err}") from err


def run_algorithm(problem: FederatedProblem, spec: AlgorithmSpec, *, x_ref=None,
                  f_star=None, stop_gap=None, record_iterates: bool = True,
                  measure_residuals: bool = False) -> Trace:
    common = dict(x_ref=x_ref, f_star=f_star, record_iterates=record_iterates)
    if spec.kind == "fedgd":
        return run_fedgd(problem, s=spec.s, epochs=spec.epochs, rounds=spec.rounds,
                         init=spec.init, stop_gap=stop_gap, **common)
    if spec.kind == "fedprox":
        s = 1.0 if spec.s is None else spec.s
        return run_fedprox(problem, s=s, rounds=spec.rounds, init=spec.init,
                           stop_gap=stop_gap, **common)
    if spec.kind == "fedsplit":
        return run_fedsplit(problem, s=spec.s, prox_spec=spec.prox, rounds=spec.rounds,
                            init=spec.init, stop_gap=stop_gap,
                            measure_residuals=measure_residuals, **common)
    return run_fedsplit_regularized(problem, eps=spec.eps, rounds=spec.rounds,
                                    init=spec.init, lambda_override=spec.lambda_override,
                                    prox_spec=spec.prox, **common)


# ---------------------------------------------------------------------------
# trace output: CSV plus a JSON metadata sidecar
# ---------------------------------------------------------------------------

CSV_HEADER = "t,cost,gap,grad_norm,dist_to_ref,prox_residual"


def write_trace_csv(trace: Trace, path) -> None:
    """One row per round; empty fields where a column was not recorded."""
    f_star = trace.metadata.get("f_star")
    gaps = None if f_star is None else trace.cost - f_star
    fmt = jsonio.format_float
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for i, t in enumerate(trace.rounds):
            row = [
                str(int(t)),
                fmt(trace.cost[i]),
                "" if gaps is None else fmt(gaps[i]),
                fmt(trace.grad_norm[i]),
                "" if trace.dist_to_ref is None else fmt(trace.dist_to_ref[i]),
                "" if trace.prox_residual is None else fmt(trace.prox_residual[i]),
            ]
            fh.write(",".join(row) + "\n")


def write_trace_meta(trace: Trace, path) -> None:
    """Metadata sidecar; wall time is excluded to keep files byte-stable."""
    meta = {k: v for k, v in trace.metadata.items() if k != "wall_ms"}
    meta["rounds_recorded"] = int(len(trace))
    jsonio.dump(meta, path)
