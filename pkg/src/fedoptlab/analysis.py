"""Closed-form oracles, fixed-point residual checks and rate measurement.

For distributed least squares the three algorithms have explicit limits:
the true optimum solves (sum_j A_j^T A_j) x = sum_j A_j^T b_j, while the
multi-epoch gradient method and the averaged proximal method converge to
different points whose closed forms are evaluated here and used as oracles
against the iterative runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DegenerateProblemError, NonconvergenceError, StepsizeError
from .losses import FederatedProblem
from .prox import prox_exact
from . import losses

#: consecutive-iterate tolerance defining an empirical fixed point
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAX_ROUNDS = 10**6


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """A certified optimum: point, value, producing method and gradient residual."""

    x_star: np.ndarray
    F_star: float
    method: str  # "direct-solve" | "newton"
    residual: float

    def __post_init__(self):
        bound = 1e-10 * (1.0 + float(np.linalg.norm(self.x_star)))
        if self.residual > bound:
            raise NonconvergenceError(
                f"reference solution residual {self.residual:.3e} exceeds {bound:.3e}",
                residual=self.residual,
            )


def _quadratic_only(problem: FederatedProblem, what: str):
    if not problem.is_quadratic():
        raise DegenerateProblemError(f"{what} requires quadratic client losses")


def _spd_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Cholesky solve with one step of iterative refinement."""
    try:
        factor = cho_factor(mat, lower=True)
    except LinAlgError as err:
        raise DegenerateProblemError(f"{what}: matrix is singular or indefinite") from err
    x = cho_solve(factor, rhs)
    x += cho_solve(factor, rhs - mat @ x)
    return x


def lsq_optimum(problem: FederatedProblem) -> np.ndarray:
    """Unique least squares solution (sum_j A_j^T A_j)^{-1} sum_j A_j^T b_j.

    Raises DegenerateProblemError when the pooled Gram matrix is singular.
    """
    _quadratic_only(problem, "least squares optimum")
    gram = problem.total_gram()
    rhs = problem.clients[0].atb.copy()
    for f in problem.clients[1:]:
        rhs += f.atb
    return _spd_solve(gram, rhs, "least squares optimum")


def _check_spectral_condition(problem: FederatedProblem, s: float):
    """Every client must satisfy ||I - s A_j^T A_j|| < 1."""
    for j, f in enumerate(problem.clients):
        w = np.linalg.eigvalsh(f.gram)
        lo, hi = float(w[0]), float(w[-1])
        if max(abs(1.0 - s * lo), abs(1.0 - s * hi)) >= 1.0:
            raise StepsizeError(
                f"client {j}: ||I - s A^T A|| >= 1 for s={s:g} "
                f"(eigenvalue range [{lo:.3e}, {hi:.3e}])"
            )


def _geometric_sum(gram: np.ndarray, s: float, epochs: int) -> np.ndarray:
    """sum_{k=0}^{epochs-1} (I - s G)^k accumulated term by term.

    Explicit accumulation avoids inverting ill-conditioned Gram matrices;
    the equivalent inverse identity is checked in tests, not used here.
    """
    d = gram.shape[0]
    eye = np.eye(d)
    step = eye - s * gram
    term = eye.copy()
    total = eye.copy()
    for _ in range(1, epochs):
        term = term @ step
        total += term
    return total


def fedgd_limit_lsq(problem: FederatedProblem, s: float, epochs: int) -> np.ndarray:
    """Closed-form limit of the multi-epoch federated gradient recursion.

    With S_j = sum_{k<epochs} (I - s A_j^T A_j)^k, the limit solves

        ( sum_j A_j^T A_j S_j ) x = sum_j S_j A_j^T b_j.

    For epochs = 1 this reduces to the least squares optimum.
    """
    _quadratic_only(problem, "federated gradient limit")
    if epochs < 1:
        raise ValueError(f"need epochs >= 1, got {epochs}")
    _check_spectral_condition(problem, s)
    d = problem.d
    lhs = np.zeros((d, d))
    rhs = np.zeros(d)
    for f in problem.clients:
        S = _geometric_sum(f.gram, s, epochs)
        lhs += f.gram @ S
        rhs += S @ f.atb
    return _spd_solve(lhs, rhs, "federated gradient limit")


def fedprox_limit_lsq(problem: FederatedProblem, s: float) -> np.ndarray:
    """Closed-form limit of the averaged proximal recursion on least squares:

        [ sum_j (I - (I + s A_j^T A_j)^{-1}) ]^{-1}
            [ sum_j (A_j^T A_j + (1/s) I)^{-1} A_j^T b_j ].
    """
    _quadratic_only(problem, "federated proximal limit")
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    d = problem.d
    eye = np.eye(d)
    lhs = np.zeros((d, d))
    rhs = np.zeros(d)
    for f in problem.clients:
        resolvent = np.linalg.solve(eye + s * f.gram, eye)
        lhs += eye - resolvent
        rhs += _spd_solve(f.gram + eye / s, f.atb, "federated proximal limit")
    return _spd_solve(lhs, rhs, "federated proximal limit")


@dataclass(frozen=True)
class FixedPointResiduals:
    """Norms of the three stationarity conditions at a given point."""

    fedgd: float
    fedprox: float
    stationarity: float


def fixedpoint_residuals(problem: FederatedProblem, s: float, epochs: int, point) -> FixedPointResiduals:
    """Evaluate all three fixed-point residuals at `point`.

    fedgd:        || sum_{i<=epochs} sum_j grad f_j(G_j^{i-1}(x)) || where
                  G_j(x) = x - s grad f_j(x)
    fedprox:      || sum_j grad M_{s f_j}(x) || via exact prox evaluations
    stationarity: || sum_j grad f_j(x) ||
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    x = np.asarray(point, dtype=float).reshape(-1)
    gd_acc = np.zeros(problem.d)
    for f in problem.clients:
        u = x.copy()
        for _ in range(epochs):
            g = f.gradient(u)
            gd_acc += g
            u -= s * g
    prox_acc = np.zeros(problem.d)
    for f in problem.clients:
        prox_acc += losses.moreau_gradient(f, s, x, prox_exact)
    return FixedPointResiduals(
        fedgd=float(np.linalg.norm(gd_acc)),
        fedprox=float(np.linalg.norm(prox_acc)),
        stationarity=float(np.linalg.norm(problem.gradient(x))),
    )


def _newton_minimize(problem: FederatedProblem, x0: np.ndarray, tol: float, max_iter: int = 200):
    """Centralized damped Newton on F; returns (x, grad_norm)."""
    x = x0.copy()
    grad = problem.gradient(x)
    gnorm = float(np.linalg.norm(grad))
    for _ in range(max_iter):
        if gnorm <= tol:
            return x, gnorm
        hess = problem.hessian(x)
        ridge = 0.0
        while True:
            try:
                factor = cho_factor(hess + ridge * np.eye(problem.d), lower=True)
                break
            except LinAlgError:
                ridge = 1e-10 if ridge == 0.0 else ridge * 10.0
                if ridge > 1e6:
                    raise NonconvergenceError(
                        "Newton reference solve: Hessian factorization failed",
                        residual=gnorm,
                    ) from None
        step = cho_solve(factor, -grad)
        f0 = problem.value(x)
        slope = float(grad @ step)
        noise = 10.0 * np.finfo(float).eps * (1.0 + abs(f0))
        t = 1.0
        for _ in range(60):
            if problem.value(x + t * step) <= f0 + 0.25 * t * slope + noise:
                break
            t *= 0.5
        x = x + t * step
        grad = problem.gradient(x)
        gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return x, gnorm
    raise NonconvergenceError(
        f"Newton reference solve stalled at residual {gnorm:.3e} (tol {tol:g})",
        residual=gnorm,
    )


def reference_optimum(problem: FederatedProblem, tol: float = 1e-12) -> ReferenceSolution:
    """Certified reference optimum and value F*.

    Quadratic problems use the direct least squares solve; others run a
    centralized damped Newton method until ||grad F|| <= tol.
    """
    if problem.is_quadratic():
        x = lsq_optimum(problem)
        res = float(np.linalg.norm(problem.gradient(x)))
        return ReferenceSolution(x_star=x, F_star=problem.value(x), method="direct-solve", residual=res)
    target = min(tol, 1e-10)
    x0 = np.zeros(problem.d)
    x, res = _newton_minimize(problem, x0, target)
    return ReferenceSolution(x_star=x, F_star=problem.value(x), method="newton", residual=res)


def contraction_rate(ell_star: float, L_star: float) -> float:
    """Per-round factor 1 - 2/(sqrt(kappa) + 1) with kappa = L*/ell*."""
    if not (0.0 < ell_star <= L_star):
        raise ValueError(f"need 0 < ell_star <= L_star, got {ell_star}, {L_star}")
    kappa = L_star / ell_star
    return 1.0 - 2.0 / (np.sqrt(kappa) + 1.0)


def iteration_complexity(trace, F_star: float, eps: float):
    """Smallest recorded round t with F(x_t) - F_star <= eps, or None."""
    if len(trace.rounds) == 0:
        raise ValueError("empty trace")
    gaps = trace.cost - F_star
    hits = np.nonzero(gaps <= eps)[0]
    if hits.size == 0:
        return None
    return int(trace.rounds[hits[0]])


def fixed_point_iterate(step, x0, tol: float = FIXED_POINT_TOL,
                        max_rounds: int = FIXED_POINT_MAX_ROUNDS):
    """Iterate x <- step(x) until the consecutive change is below
    tol * (1 + ||x||), or the round cap is reached.

    Works on plain vectors and on BlockVector states.  Returns
    (x, rounds_used, converged).
    """
    x = x0
    for t in range(1, max_rounds + 1):
        x_new = step(x)
        diff = x_new - x
        nrm = diff.norm() if hasattr(diff, "norm") else float(np.linalg.norm(diff))
        scale = x_new.norm() if hasattr(x_new, "norm") else float(np.linalg.norm(x_new))
        x = x_new
        if nrm <= tol * (1.0 + scale):
            return x, t, True
    return x, max_rounds, False
