"""Local client objectives: quadratic and logistic losses.

A loss object is immutable and exposes value, gradient, Hessian and its
convexity constants (strong convexity modulus ell and smoothness L).  A
FederatedProblem bundles m losses of common dimension d; its objective is
the plain sum F(x) = sum_j f_j(x), accumulated in ascending client order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import DegenerateProblemError
from . import jsonio


@dataclass(frozen=True, eq=False)
class ConvexityConstants:
    """Strong convexity modulus ell and smoothness modulus L, 0 <= ell <= L."""

    ell: float
    L: float

    def __post_init__(self):
        if not (0.0 <= self.ell <= self.L) or self.L <= 0.0:
            raise ValueError(f"need 0 <= ell <= L and L > 0, got ell={self.ell}, L={self.L}")

    @property
    def kappa(self) -> float:
        """Condition number L/ell; inf when ell == 0."""
        return self.L / self.ell if self.ell > 0 else math.inf


def _lock(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True, order="C")
    a.flags.writeable = False
    return a


class QuadraticLoss:
    """f(x) = 0.5 * ||A x - b||^2 for an (n, d) design A and response b.

    Full column rank is not required by the type; operations that need it
    (closed-form optima, geometric-sum limits) check their own precondition.
    """

    kind = "quadratic"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        if A.shape[0] < 1:
            raise ValueError("need at least one observation row")
        self.A = _lock(A)
        self.b = _lock(b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """A^T A, cached; reused by gradients and proximal solves."""
        return _lock(self.A.T @ self.A)

    @cached_property
    def atb(self) -> np.ndarray:
        """A^T b, cached."""
        return _lock(self.A.T @ self.b)

    def value(self, x) -> float:
        r = self.A @ np.asarray(x, dtype=float) - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x) -> np.ndarray:
        return self.gram @ np.asarray(x, dtype=float) - self.atb

    def hessian(self, x=None) -> np.ndarray:
        return self.gram

    @cached_property
    def convexity_constants(self) -> ConvexityConstants:
        """ell = lambda_min(A^T A), L = lambda_max(A^T A), dense symmetric eigensolve."""
        w = np.linalg.eigvalsh(self.gram)
        ell = max(float(w[0]), 0.0)
        return ConvexityConstants(ell=ell, L=float(w[-1]))


class LogisticLoss:
    """f(x) = sum_i log(1 + exp(-b_i * a_i^T x)) with labels b_i in {-1, +1}.

    Values use the overflow-safe softplus form log1p(exp(-|t|)) + max(-t, 0)
    via logaddexp, so large margins do not overflow.
    """

    kind = "logistic"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        if not np.all(np.abs(b) == 1.0):
            raise ValueError("logistic labels must be exactly -1 or +1")
        self.A = _lock(A)
        self.b = _lock(b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return _lock(self.A.T @ self.A)

    def _margins(self, x) -> np.ndarray:
        return self.b * (self.A @ np.asarray(x, dtype=float))

    def value(self, x) -> float:
        t = self._margins(x)
        return float(np.sum(np.logaddexp(0.0, -t)))

    def gradient(self, x) -> np.ndarray:
        t = self._margins(x)
        # d/dx sum log(1+e^{-t}) = -A^T (b * sigma(-t))
        return -self.A.T @ (self.b * expit(-t))

    def hessian(self, x) -> np.ndarray:
        t = self._margins(x)
        w = expit(t) * expit(-t)
        return (self.A * w[:, None]).T @ self.A

    @cached_property
    def convexity_constants(self) -> ConvexityConstants:
        """ell = 0; L = lambda_max(A^T A) / 4, the uniform logistic Hessian bound."""
        w = np.linalg.eigvalsh(self.gram)
        return ConvexityConstants(ell=0.0, L=float(w[-1]) / 4.0)


class ShiftedLoss:
    """base(x) + (lam/2) * ||x - center||^2, a Tikhonov shift of another loss.

    Used to run the splitting method on a strongly convexified copy of a
    merely convex problem; the shift folds into every proximal subproblem.
    """

    kind = "shifted"

    def __init__(self, base, lam: float, center):
        if lam < 0:
            raise ValueError(f"need lam >= 0, got {lam}")
        center = np.asarray(center, dtype=float).reshape(-1)
        if center.size != base.d:
            raise ValueError(f"center has {center.size} entries, base loss has d={base.d}")
        self.base = base
        self.lam = float(lam)
        self.center = _lock(center)

    @property
    def d(self) -> int:
        return self.base.d

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        diff = x - self.center
        return self.base.value(x) + 0.5 * self.lam * float(diff @ diff)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.gradient(x) + self.lam * (x - self.center)

    def hessian(self, x) -> np.ndarray:
        return self.base.hessian(x) + self.lam * np.eye(self.d)

    @cached_property
    def convexity_constants(self) -> ConvexityConstants:
        c = self.base.convexity_constants
        return ConvexityConstants(ell=c.ell + self.lam, L=c.L + self.lam)


def loss_value(f, x) -> float:
    return f.value(x)


def loss_gradient(f, x) -> np.ndarray:
    return f.gradient(x)


def convexity_constants(f) -> ConvexityConstants:
    return f.convexity_constants


def moreau_gradient(f, s: float, x, prox) -> np.ndarray:
    """Gradient of the Moreau envelope of f at x: (1/s) * (x - prox_{s f}(x)).

    `prox` is a solver callable (f, s, x) -> vector; its accuracy determines
    the accuracy of the returned gradient.
    """
    if s <= 0:
        raise ValueError(f"need stepsize s > 0, got {s}")
    x = np.asarray(x, dtype=float)
    return (x - prox(f, s, x)) / s


class FederatedProblem:
    """m local losses of common dimension d, plus optional generator metadata."""

    def __init__(self, clients, x_true=None, seed=None):
        clients = tuple(clients)
        if not clients:
            raise ValueError("need at least one client loss")
        d = clients[0].d
        for j, f in enumerate(clients):
            if f.d != d:
                raise ValueError(f"client {j} has dimension {f.d}, expected {d}")
        self.clients = clients
        self.x_true = None if x_true is None else _lock(x_true)
        self.seed = seed

    @property
    def m(self) -> int:
        return len(self.clients)

    @property
    def d(self) -> int:
        return self.clients[0].d

    def value(self, x) -> float:
        """F(x) = sum_j f_j(x), summed in ascending client order."""
        total = self.clients[0].value(x)
        for f in self.clients[1:]:
            total += f.value(x)
        return total

    def gradient(self, x) -> np.ndarray:
        acc = self.clients[0].gradient(x).copy()
        for f in self.clients[1:]:
            acc += f.gradient(x)
        return acc

    def hessian(self, x) -> np.ndarray:
        acc = self.clients[0].hessian(x).copy()
        for f in self.clients[1:]:
            acc += f.hessian(x)
        return acc

    @cached_property
    def convexity_constants(self) -> ConvexityConstants:
        """Problem-level constants: ell* = min_j ell_j, L* = max_j L_j."""
        consts = [f.convexity_constants for f in self.clients]
        return ConvexityConstants(
            ell=min(c.ell for c in consts), L=max(c.L for c in consts)
        )

    def is_quadratic(self) -> bool:
        return all(isinstance(f, QuadraticLoss) for f in self.clients)

    def is_logistic(self) -> bool:
        return all(isinstance(f, LogisticLoss) for f in self.clients)

    def total_gram(self) -> np.ndarray:
        """sum_j A_j^T A_j for quadratic problems."""
        if not self.is_quadratic():
            raise DegenerateProblemError("total Gram matrix requires quadratic clients")
        acc = self.clients[0].gram.copy()
        for f in self.clients[1:]:
            acc += f.gram
        return acc


# ---------------------------------------------------------------------------
# problem file (JSON) serialization
# ---------------------------------------------------------------------------

_KIND_TO_CLASS = {"quadratic": QuadraticLoss, "logistic": LogisticLoss}


def problem_to_dict(problem: FederatedProblem) -> dict:
    doc = {
        "d": problem.d,
        "m": problem.m,
        "clients": [
            {"kind": f.kind, "A": f.A.tolist(), "b": f.b.tolist()}
            for f in problem.clients
        ],
    }
    if problem.x_true is not None:
        doc["x_true"] = problem.x_true.tolist()
    if problem.seed is not None:
        doc["seed"] = int(problem.seed)
    return doc


def write_problem_json(problem: FederatedProblem, path) -> None:
    """Write the problem file; floats carry 17 significant digits."""
    jsonio.dump(problem_to_dict(problem), path)


def problem_from_dict(doc: dict) -> FederatedProblem:
    try:
        d, m = int(doc["d"]), int(doc["m"])
        raw_clients = doc["clients"]
    except (KeyError, TypeError) as err:
        raise ValueError(f"malformed problem document: {err}") from err
    if len(raw_clients) != m:
        raise ValueError(f"declared m={m} but found {len(raw_clients)} clients")
    clients = []
    for j, c in enumerate(raw_clients):
        kind = c.get("kind")
        if kind not in _KIND_TO_CLASS:
            raise ValueError(f"client {j}: unknown loss kind {kind!r}")
        loss = _KIND_TO_CLASS[kind](c["A"], c["b"])
        if loss.d != d:
            raise ValueError(f"client {j}: dimension {loss.d} does not match d={d}")
        clients.append(loss)
    x_true = doc.get("x_true")
    seed = doc.get("seed")
    return FederatedProblem(clients, x_true=x_true, seed=seed)


def read_problem_json(path) -> FederatedProblem:
    return problem_from_dict(jsonio.load(path))
