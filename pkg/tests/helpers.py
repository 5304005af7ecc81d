"""Shared instance builders and independent oracles for the test suite.

The oracles here are deliberately crude (plain gradient loops, central
finite differences) so they stay independent of the library code paths
they are used to check.
"""

import numpy as np

import fedoptlab as fl


def two_client_scalar_problem():
    """d=1 instance with A1=[2], b1=[2], A2=[1], b2=[-1].

    Worked-out reference values:
      least squares optimum   (4+1)^{-1} (4-1)      = 3/5
      fedgd limit, s=.1, e=2  4.5/8.3
      fedprox limit, s=.1     (15/77) / (29/77)     = 15/29
    """
    return fl.FederatedProblem(
        [fl.QuadraticLoss([[2.0]], [2.0]), fl.QuadraticLoss([[1.0]], [-1.0])]
    )


def random_quadratic_loss(rng, d=4, n=10, scale=1.0):
    A = scale * rng.normal(size=(n, d))
    b = rng.normal(size=n)
    return fl.QuadraticLoss(A, b)


def random_logistic_loss(rng, d=3, n=12):
    A = rng.normal(size=(n, d))
    b = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return fl.LogisticLoss(A, b)


def random_quadratic_problem(rng, m=3, d=4, n=10, noise=0.5):
    """Well-posed least squares problem (n > d so each Gram is PD a.s.)."""
    x0 = rng.normal(size=d)
    clients = []
    for _ in range(m):
        A = rng.normal(size=(n, d))
        clients.append(fl.QuadraticLoss(A, A @ x0 + noise * rng.normal(size=n)))
    return fl.FederatedProblem(clients)


def asymmetric_quadratic_problem(seed, m=3, d=4, n=8):
    """Clients with geometrically growing design scales, so that the
    multi-epoch gradient and averaged proximal fixed points sit visibly
    away from the least squares optimum."""
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=d)
    clients = []
    for j in range(m):
        A = (2.0**j) * rng.normal(size=(n, d))
        b = A @ x0 + rng.normal(size=n)
        clients.append(fl.QuadraticLoss(A, b))
    return fl.FederatedProblem(clients)


def gd_minimize(grad, x0, alpha, max_iter, stop=1e-16):
    """Plain gradient descent oracle; stops early once steps stall."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        g = grad(x)
        x_new = x - alpha * g
        if np.linalg.norm(x_new - x) <= stop * (1.0 + np.linalg.norm(x_new)):
            return x_new
        x = x_new
    return x


def fd_gradient(func, x, h=None):
    """Central finite differences with step 1e-6 * (1 + ||x||)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(x))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return g
