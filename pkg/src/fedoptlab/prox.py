"""Proximal solvers and reflected resolvents.

prox_{s f}(z) = argmin_u { s f(u) + 0.5 ||u - z||^2 }.

Exact evaluation uses the closed form for quadratics (an SPD solve) and a
damped Newton method for logistic losses.  The inexact variant runs a fixed
number of gradient descent steps on the proximal subproblem
h(u) = s f(u) + 0.5 ||u - z||^2 with the stepsize
alpha = (1 + s (ell* + L*)/2)^{-1}, which is the optimal constant step for
a (1 + s ell*)-strongly convex, (1 + s L*)-smooth objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonconvergenceError
from .losses import ConvexityConstants, LogisticLoss, QuadraticLoss, ShiftedLoss

#: line search parameters for the damped Newton solver (Armijo)
_ARMIJO_SLOPE = 0.25
_BACKTRACK_FACTOR = 0.5
_MAX_BACKTRACKS = 60

#: tolerance used when a logistic prox must act as "exact"
EXACT_NEWTON_TOL = 1e-10
EXACT_NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class ProxSolverSpec:
    """How each client evaluates its proximal operator.

    mode is one of:
      "exact"    closed form for quadratics, tight Newton for logistic
      "gradient" `epochs` steps of gradient descent on the subproblem
      "newton"   damped Newton to tolerance `tol`, at most `max_iter` steps

    warm_start True initializes inner solves at the prox argument itself;
    False lets the caller supply a different start (the round iterate).
    """

    mode: str = "exact"
    epochs: int = 10
    tol: float = EXACT_NEWTON_TOL
    max_iter: int = EXACT_NEWTON_MAX_ITER
    warm_start: bool = True

    def __post_init__(self):
        if self.mode not in ("exact", "gradient", "newton"):
            raise ValueError(f"unknown prox mode {self.mode!r}")
        if self.epochs < 1:
            raise ValueError(f"need epochs >= 1, got {self.epochs}")
        if self.tol <= 0:
            raise ValueError(f"need tol > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"need max_iter >= 1, got {self.max_iter}")


EXACT = ProxSolverSpec(mode="exact")


def _quadratic_system(f, s: float):
    """Matrix and affine part of the quadratic prox system.

    Plain quadratic:  (I + s A^T A) u = z + s A^T b.
    Ridge-shifted quadratic with modulus lam and center c:
    ((1 + s lam) I + s A^T A) u = z + s (A^T b + lam c).
    """
    if isinstance(f, QuadraticLoss):
        lhs = s * f.gram + np.eye(f.d)
        rhs_const = s * f.atb
    elif isinstance(f, ShiftedLoss) and isinstance(f.base, QuadraticLoss):
        lhs = s * f.base.gram + (1.0 + s * f.lam) * np.eye(f.d)
        rhs_const = s * (f.base.atb + f.lam * f.center)
    else:
        raise TypeError(f"no closed-form prox for loss of type {type(f)!r}")
    return lhs, rhs_const


def prox_exact_quadratic(f, s: float, z) -> np.ndarray:
    """Closed-form prox of a quadratic loss via a Cholesky solve.

    The system matrix I + s A^T A is positive definite for every s > 0, so
    the factorization cannot fail on a well-formed input.
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    z = np.asarray(z, dtype=float).reshape(-1)
    lhs, rhs_const = _quadratic_system(f, s)
    factor = cho_factor(lhs, lower=True)
    return cho_solve(factor, z + rhs_const)


def inner_stepsize(s: float, constants: ConvexityConstants) -> float:
    """Gradient stepsize alpha = (1 + s (ell + L)/2)^{-1} for the subproblem."""
    return 1.0 / (1.0 + s * (constants.ell + constants.L) / 2.0)


def prox_inexact_gradient(f, s: float, z, epochs: int, constants: ConvexityConstants, init=None) -> np.ndarray:
    """Approximate prox: `epochs` gradient steps on h(u) = s f(u) + 0.5||u - z||^2.

    Starts at u = z unless `init` is given.  The error after e steps decays
    geometrically like (1 - 1/(sqrt(kappa) + 1))^e times the initial
    distance to the true prox point.
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    if epochs < 1:
        raise ValueError(f"need epochs >= 1, got {epochs}")
    z = np.asarray(z, dtype=float).reshape(-1)
    u = z.copy() if init is None else np.asarray(init, dtype=float).reshape(-1).copy()
    alpha = inner_stepsize(s, constants)
    for _ in range(epochs):
        u -= alpha * (s * f.gradient(u) + u - z)
    return u


def prox_newton(f, s: float, z, tol: float = EXACT_NEWTON_TOL,
                max_iter: int = EXACT_NEWTON_MAX_ITER, init=None) -> np.ndarray:
    """Damped Newton minimization of h(u) = s f(u) + 0.5 ||u - z||^2.

    h is 1-strongly convex, so the Newton system is always positive
    definite.  Backtracking line search halves the step until the Armijo
    condition with slope 0.25 holds.  Terminates once
    ||grad h(u)|| <= tol * (1 + ||z||); if the argument already satisfies
    this, it is returned unchanged without any iteration.

    Raises NonconvergenceError (carrying the final residual) when max_iter
    is exceeded.
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    z = np.asarray(z, dtype=float).reshape(-1)
    u = z if init is None else np.asarray(init, dtype=float).reshape(-1)
    threshold = tol * (1.0 + float(np.linalg.norm(z)))

    def h_val(v):
        diff = v - z
        return s * f.value(v) + 0.5 * float(diff @ diff)

    grad = s * f.gradient(u) + (u - z)
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= threshold:
        return u

    u = u.copy()
    for _ in range(max_iter):
        hess = s * f.hessian(u) + np.eye(u.size)
        step = cho_solve(cho_factor(hess, lower=True), -grad)
        slope = float(grad @ step)
        h0 = h_val(u)
        # slack keeps the Armijo test meaningful once decrements reach
        # the rounding noise of the objective evaluation
        noise = 10.0 * np.finfo(float).eps * (1.0 + abs(h0))
        t = 1.0
        for _ in range(_MAX_BACKTRACKS):
            cand = u + t * step
            if h_val(cand) <= h0 + _ARMIJO_SLOPE * t * slope + noise:
                break
            t *= _BACKTRACK_FACTOR
        u = u + t * step
        grad = s * f.gradient(u) + (u - z)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= threshold:
            return u
    raise NonconvergenceError(
        f"prox Newton solver did not reach tolerance {tol:g} within {max_iter} iterations "
        f"(residual {gnorm:.3e})",
        residual=gnorm,
    )


def prox_logistic_newton(f: LogisticLoss, s: float, z, tol: float = EXACT_NEWTON_TOL,
                         max_iter: int = EXACT_NEWTON_MAX_ITER, init=None) -> np.ndarray:
    """Exact-to-tolerance prox of a logistic loss (damped Newton)."""
    return prox_newton(f, s, z, tol=tol, max_iter=max_iter, init=init)


def _has_quadratic_form(f) -> bool:
    return isinstance(f, QuadraticLoss) or (
        isinstance(f, ShiftedLoss) and isinstance(f.base, QuadraticLoss)
    )


def prox_exact(f, s: float, z) -> np.ndarray:
    """Exact prox dispatch: closed form when quadratic, tight Newton otherwise."""
    if _has_quadratic_form(f):
        return prox_exact_quadratic(f, s, z)
    return prox_newton(f, s, z, tol=EXACT_NEWTON_TOL, max_iter=EXACT_NEWTON_MAX_ITER)


def make_prox(f, s: float, spec: ProxSolverSpec, constants: ConvexityConstants = None):
    """Bind a loss, stepsize and solver spec into a callable prox(v, init=None).

    For exact quadratic solves the SPD factorization is computed once here
    and reused every round.
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    if spec.mode == "exact" and _has_quadratic_form(f):
        lhs, rhs_const = _quadratic_system(f, s)
        factor = cho_factor(lhs, lower=True)

        def solve_exact(v, init=None):
            return cho_solve(factor, np.asarray(v, dtype=float) + rhs_const)

        return solve_exact
    if spec.mode == "exact":
        def solve_newton_tight(v, init=None):
            return prox_newton(f, s, v, tol=EXACT_NEWTON_TOL,
                               max_iter=EXACT_NEWTON_MAX_ITER, init=init)

        return solve_newton_tight
    if spec.mode == "newton":
        def solve_newton(v, init=None):
            return prox_newton(f, s, v, tol=spec.tol, max_iter=spec.max_iter, init=init)

        return solve_newton
    # gradient mode
    consts = constants if constants is not None else f.convexity_constants

    def solve_gradient(v, init=None):
        return prox_inexact_gradient(f, s, v, spec.epochs, consts, init=init)

    return solve_gradient


def reflected_prox(f, s: float, z, spec: ProxSolverSpec = EXACT,
                   constants: ConvexityConstants = None) -> np.ndarray:
    """Reflected resolvent 2 prox_{s f}(z) - z with the given solver.

    On an ell-strongly convex, L-smooth loss with s = 1/sqrt(ell L) and an
    exact solver, this map is a contraction with factor
    1 - 2/(sqrt(L/ell) + 1).
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    p = make_prox(f, s, spec, constants)(z)
    return 2.0 * p - z
