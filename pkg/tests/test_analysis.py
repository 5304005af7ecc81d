import math

import numpy as np
import pytest

import fedoptlab as fl
from fedoptlab.algorithms import Trace, default_stepsize, fedgd_step, fedprox_step
from fedoptlab.analysis import (
    contraction_rate,
    fedgd_limit_lsq,
    fedprox_limit_lsq,
    fixed_point_iterate,
    fixedpoint_residuals,
    iteration_complexity,
    lsq_optimum,
    reference_optimum,
)
from fedoptlab.datagen import LogisticGaussSpec, generate_problem
from fedoptlab.errors import DegenerateProblemError, StepsizeError

from helpers import random_quadratic_problem, two_client_scalar_problem


# ---------------------------------------------------------------------------
# least squares optimum
# ---------------------------------------------------------------------------

def test_lsq_scalar_instance():
    p = two_client_scalar_problem()
    assert np.allclose(lsq_optimum(p), [3.0 / 5.0], rtol=1e-14)


def test_lsq_identity_designs_average_responses():
    rng = np.random.default_rng(30)
    bs = [rng.normal(size=3) for _ in range(4)]
    p = fl.FederatedProblem([fl.QuadraticLoss(np.eye(3), b) for b in bs])
    assert np.allclose(lsq_optimum(p), np.mean(bs, axis=0), rtol=1e-12)


def test_lsq_single_invertible_client():
    rng = np.random.default_rng(31)
    A = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
    b = rng.normal(size=3)
    p = fl.FederatedProblem([fl.QuadraticLoss(A, b)])
    assert np.allclose(lsq_optimum(p), np.linalg.solve(A, b), rtol=1e-9)


def test_lsq_singular_gram_raises():
    p = fl.FederatedProblem([fl.QuadraticLoss([[1.0, 0.0]], [1.0])])
    with pytest.raises(DegenerateProblemError):
        lsq_optimum(p)


# ---------------------------------------------------------------------------
# fedgd limit
# ---------------------------------------------------------------------------

def test_fedgd_limit_reduces_to_lsq_for_single_epoch():
    rng = np.random.default_rng(32)
    for _ in range(10):
        p = random_quadratic_problem(rng, m=3, d=4, n=9)
        s = default_stepsize(p, "fedgd")
        assert np.allclose(fedgd_limit_lsq(p, s, 1), lsq_optimum(p), rtol=0, atol=1e-12)


def test_fedgd_limit_scalar_example():
    p = two_client_scalar_problem()
    lim = fedgd_limit_lsq(p, 0.1, 2)
    assert np.allclose(lim, [4.5 / 8.3], rtol=1e-14)
    assert abs(lim[0] - 0.5421687) < 5e-8


def test_fedgd_limit_single_client_matches_lsq_any_epochs():
    rng = np.random.default_rng(33)
    p = random_quadratic_problem(rng, m=1, d=3, n=8)
    s = default_stepsize(p, "fedgd")
    for e in (1, 2, 5, 17):
        assert np.allclose(fedgd_limit_lsq(p, s, e), lsq_optimum(p), rtol=0, atol=1e-10)


def test_fedgd_limit_rejects_spectral_violation():
    p = two_client_scalar_problem()  # eigenvalues 4 and 1
    with pytest.raises(StepsizeError):
        fedgd_limit_lsq(p, 0.6, 2)  # |1 - 0.6*4| = 1.4 >= 1


def test_geometric_sum_matches_inverse_identity():
    # sum_{k<e} (I-sG)^k == (sG)^{-1} (I - (I-sG)^e) on random PD instances
    rng = np.random.default_rng(34)
    for _ in range(10):
        p = random_quadratic_problem(rng, m=2, d=3, n=7)
        s = default_stepsize(p, "fedgd")
        for e in (1, 2, 3, 6):
            for f in p.clients:
                from fedoptlab.analysis import _geometric_sum

                S = _geometric_sum(f.gram, s, e)
                M = np.eye(3) - s * f.gram
                closed = np.linalg.solve(s * f.gram, np.eye(3) - np.linalg.matrix_power(M, e))
                assert np.allclose(S, closed, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# fedprox limit
# ---------------------------------------------------------------------------

def test_fedprox_limit_scalar_example():
    p = two_client_scalar_problem()
    lim = fedprox_limit_lsq(p, 0.1)
    assert np.allclose(lim, [15.0 / 29.0], rtol=1e-14)
    assert abs(lim[0] - 0.5172414) < 5e-8


def test_fedprox_limit_small_stepsize_approaches_lsq():
    p = two_client_scalar_problem()
    lim = fedprox_limit_lsq(p, 1e-6)
    assert np.linalg.norm(lim - lsq_optimum(p)) <= 1e-3


def test_fedprox_limit_identical_clients_is_lsq():
    rng = np.random.default_rng(35)
    A = rng.normal(size=(8, 3))
    b = rng.normal(size=8)
    p = fl.FederatedProblem([fl.QuadraticLoss(A, b) for _ in range(3)])
    assert np.allclose(fedprox_limit_lsq(p, 0.7), lsq_optimum(p), rtol=0, atol=1e-10)


# ---------------------------------------------------------------------------
# fixed-point residuals
# ---------------------------------------------------------------------------

def test_residuals_all_vanish_on_symmetric_instance():
    rng = np.random.default_rng(36)
    A = rng.normal(size=(9, 3))
    b = rng.normal(size=9)
    p = fl.FederatedProblem([fl.QuadraticLoss(A, b), fl.QuadraticLoss(A, b)])
    x = lsq_optimum(p)
    r = fixedpoint_residuals(p, 0.05, 3, x)
    assert r.fedgd <= 1e-10 and r.fedprox <= 1e-10 and r.stationarity <= 1e-10


def test_residuals_at_fedgd_limit():
    p = two_client_scalar_problem()
    x = fedgd_limit_lsq(p, 0.1, 2)
    r = fixedpoint_residuals(p, 0.1, 2, x)
    assert r.fedgd <= 1e-9
    assert r.stationarity > 1e-3


def test_residuals_at_fedprox_limit():
    p = two_client_scalar_problem()
    x = fedprox_limit_lsq(p, 0.1)
    r = fixedpoint_residuals(p, 0.1, 1, x)
    assert r.fedprox <= 1e-9
    assert r.stationarity > 1e-3


# ---------------------------------------------------------------------------
# reference optimum
# ---------------------------------------------------------------------------

def test_reference_quadratic_bit_equals_lsq():
    rng = np.random.default_rng(37)
    p = random_quadratic_problem(rng, m=3, d=4, n=9)
    ref = reference_optimum(p)
    assert ref.method == "direct-solve"
    assert np.array_equal(ref.x_star, lsq_optimum(p))
    assert ref.residual <= 1e-10 * (1.0 + np.linalg.norm(ref.x_star))


def test_reference_trivial_logistic_all_zero_rows():
    n = 6
    f = fl.LogisticLoss(np.zeros((n, 2)), np.ones(n))
    p = fl.FederatedProblem([f])
    ref = reference_optimum(p)
    assert ref.method == "newton"
    assert np.isclose(ref.F_star, n * math.log(2.0), rtol=1e-14)
    assert ref.residual == 0.0


def test_reference_logistic_no_worse_than_fedsplit_regularized():
    p = generate_problem(LogisticGaussSpec(m=3, d=5, n=40, seed=38))
    ref = reference_optimum(p, tol=1e-12)
    trace = fl.run_fedsplit_regularized(p, eps=1e-2, rounds=400)
    assert ref.F_star <= p.value(trace.final_x) + 1e-9


# ---------------------------------------------------------------------------
# rates and complexity
# ---------------------------------------------------------------------------

def test_contraction_rate_values():
    assert contraction_rate(1.0, 1.0) == 0.0
    assert np.isclose(contraction_rate(1.0, 4.0), 1.0 / 3.0)
    assert np.isclose(contraction_rate(1.0, 1e4), 1.0 - 2.0 / 101.0)
    assert abs(contraction_rate(1.0, 1e4) - 0.980198) < 1e-6


def test_contraction_rate_monotone_and_bounded():
    kappas = np.logspace(0, 6, 25)
    rhos = [contraction_rate(1.0, k) for k in kappas]
    assert all(0.0 <= r < 1.0 for r in rhos)
    assert all(a < b for a, b in zip(rhos, rhos[1:]))


def test_contraction_rate_domain():
    with pytest.raises(ValueError):
        contraction_rate(0.0, 1.0)
    with pytest.raises(ValueError):
        contraction_rate(2.0, 1.0)


def _synthetic_trace(costs):
    costs = np.asarray(costs, dtype=float)
    t = np.arange(1, costs.size + 1)
    return Trace(rounds=t, cost=costs, grad_norm=np.zeros_like(costs))


def test_iteration_complexity_immediate_hit():
    tr = _synthetic_trace([0.0, 0.0])
    assert iteration_complexity(tr, 0.0, 1e-3) == 1


def test_iteration_complexity_geometric_inversion():
    g, rho, eps = 10.0, 0.5, 1e-4
    costs = [g * rho ** (t - 1) for t in range(1, 40)]
    tr = _synthetic_trace(costs)
    expected = math.ceil(1.0 + math.log(eps / g) / math.log(rho))
    assert iteration_complexity(tr, 0.0, eps) == expected


def test_iteration_complexity_not_reached():
    tr = _synthetic_trace([1.0, 0.9, 0.8])
    assert iteration_complexity(tr, 0.0, 1e-6) is None


# ---------------------------------------------------------------------------
# oracle/recursion agreement
# ---------------------------------------------------------------------------

def test_fedgd_recursion_agrees_with_oracle():
    rng = np.random.default_rng(39)
    for trial in range(6):
        m = int(rng.integers(2, 5))
        d = int(rng.integers(2, 6))
        p = random_quadratic_problem(rng, m=m, d=d, n=d + 6)
        s = default_stepsize(p, "fedgd")
        for e in (1, 2, 3):
            x, _, converged = fixed_point_iterate(fedgd_step(p, s, e), np.zeros(d), tol=1e-14)
            assert converged
            assert np.linalg.norm(x - fedgd_limit_lsq(p, s, e)) <= 1e-8


def test_fedprox_recursion_agrees_with_oracle():
    rng = np.random.default_rng(40)
    for trial in range(6):
        m = int(rng.integers(2, 5))
        d = int(rng.integers(2, 6))
        p = random_quadratic_problem(rng, m=m, d=d, n=d + 6)
        s = float(rng.uniform(0.2, 1.5))
        x, _, converged = fixed_point_iterate(fedprox_step(p, s), np.zeros(d), tol=1e-14)
        assert converged
        assert np.linalg.norm(x - fedprox_limit_lsq(p, s)) <= 1e-8
