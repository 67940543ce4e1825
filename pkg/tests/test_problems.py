import math

import numpy as np
import pytest
from scipy.optimize import brentq

from accelcert.cli import build_problem
from accelcert.exceptions import ParameterDomainError, ReferenceSolveError, UnsupportedOperationError
from accelcert.problems import (
    composite_lasso, composite_problem, gradient_mapping, logistic_problem, prox_apply,
    quadratic_problem, reference_optimum,
)


def test_quadratic_zero_minimiser(quad12):
    assert np.array_equal(quad12.x_star, [0, 0])
    assert quad12.f_star == 0 and quad12.mu == 1 and quad12.L == 2


def test_quadratic_shifted():
    q = quadratic_problem(np.array([1.0, 2.0]), np.array([2.0, 2.0]))
    assert np.allclose(q.x_star, [2, 1])
    assert q.f_star == -3.0
    assert q.value(q.x_star) == -3.0
    assert reference_optimum(q)[1] == -3.0


def test_quadratic_condition_number():
    assert quadratic_problem(np.array([1.0, 50.0]), np.zeros(2)).kappa == 50


def test_quadratic_uniform_rejected():
    with pytest.raises(ParameterDomainError):
        quadratic_problem(np.array([2.0, 2.0]), np.zeros(2))
    with pytest.raises(ParameterDomainError):
        quadratic_problem(np.array([0.0, 2.0]), np.zeros(2))


def test_singular_quadratic_allowed_on_request():
    q = quadratic_problem(np.array([0.0, 2.0]), np.array([0.0, 4.0]), allow_singular=True)
    assert q.mu == 0 and np.array_equal(q.x_star, [0.0, 2.0])


def test_logistic_zero_features():
    lg = logistic_problem(np.zeros((4, 3)), np.array([1, -1, 1, -1.0]), 0.5)
    assert np.allclose(lg.x_star, 0)
    assert lg.f_star == pytest.approx(math.log(2), rel=1e-15)


def test_logistic_single_sample_root():
    lg = logistic_problem(np.array([[1.0]]), np.array([1.0]), 1.0)
    root = brentq(lambda x: -math.exp(-x) / (1 + math.exp(-x)) + x, 0.0, 1.0, xtol=1e-15)
    assert lg.x_star[0] == pytest.approx(root, abs=1e-12)


def test_logistic_empty_data():
    with pytest.raises(ParameterDomainError):
        logistic_problem(np.zeros((0, 2)), np.zeros(0), 1.0)


def _finite_difference(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", ["quadratic", "logistic", "lasso"])
def test_gradient_matches_finite_differences(kind):
    p = build_problem(kind, 20.0, 1.0, 10, 3)
    smooth = p.smooth
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=p.dim)
        g = smooth.gradient(x)
        fd = _finite_difference(smooth.value, x)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_lasso_without_l1_matches_normal_equations(rng):
    A = rng.normal(size=(30, 10))
    b = rng.normal(size=30)
    o = composite_lasso(A, b, 0.3, 0.0)
    x = np.linalg.solve(A.T @ A + 0.3 * np.eye(10), A.T @ b)
    assert np.allclose(o.x_star, x, atol=1e-10, rtol=0)


def test_lasso_scalar_subgradient():
    o = composite_lasso(np.eye(1), np.array([3.0]), 1.0, 1.0)
    assert o.x_star[0] == pytest.approx(1.0, abs=1e-12)


def test_lasso_constants(rng):
    A = rng.normal(size=(20, 8))
    o = composite_lasso(A, rng.normal(size=20), 0.1, 0.2)
    sv = np.linalg.svd(A, compute_uv=False)
    assert o.mu == pytest.approx(0.1 + sv[-1] ** 2, rel=1e-10)
    assert o.L == pytest.approx(0.1 + sv[0] ** 2, rel=1e-10)


def test_prox_examples(quad12):
    l1 = composite_problem(quad12, "l1", 1.0)
    assert np.allclose(prox_apply(l1, 0.25, np.array([1.5, -0.1])), [1.25, 0.0])
    assert prox_apply(composite_problem(quad12, "l1", 1.0), 0.5, np.array([0.3])) == 0
    zero = composite_problem(quad12, "zero", 0.0)
    y = np.array([0.7, -3.0])
    assert np.array_equal(prox_apply(zero, 0.3, y), y)
    nn = composite_problem(quadratic_problem(np.array([1.0, 2.0]), np.array([1.0, 1.0])),
                           "nonneg", 1.0)
    assert np.array_equal(prox_apply(nn, 1.0, np.array([-1.0, 2.0])), [0.0, 2.0])


def test_prox_is_argmin(quad12, rng):
    o = composite_problem(quad12, "l1", 0.7)
    s = 0.3
    for _ in range(50):
        y = rng.normal(size=2) * 2
        p = prox_apply(o, s, y)
        obj = lambda x: o.nonsmooth_value(x) + np.sum((x - y) ** 2) / (2 * s)  # noqa: E731
        for _ in range(20):
            z = p + rng.normal(size=2) * 0.1
            assert obj(p) <= obj(z) + 1e-14


def test_unsupported_prox(quad12):
    with pytest.raises(UnsupportedOperationError):
        composite_problem(quad12, "l2", 1.0)


def test_gradient_mapping_examples(quad12):
    y = np.array([0.3, -1.2])
    assert np.array_equal(gradient_mapping(quad12, 0.25, y), quad12.gradient(y))
    zero = composite_problem(quad12, "zero", 0.0)
    assert np.array_equal(gradient_mapping(zero, 0.25, y), quad12.gradient(y))
    l1 = composite_problem(quad12, "l1", 1.0)
    assert np.allclose(gradient_mapping(l1, 0.25, np.array([2.0, 0.0])), [3.0, 0.0])


def test_gradient_mapping_vanishes_at_optimum():
    o = build_problem("lasso", 10.0, 1.0, 20, 1)
    assert np.linalg.norm(gradient_mapping(o, 1 / o.L, o.x_star)) <= 1e-10


def test_reference_solve_failure_reports_residual():
    lg = logistic_problem(np.array([[1.0, 2.0], [0.5, -1.0]]), np.array([1.0, -1.0]), 0.01)
    bare = type(lg)(lg.value, lg.gradient, lg.mu, lg.L, None, None, lg.dim)
    with pytest.raises(ReferenceSolveError) as err:
        reference_optimum(bare, max_iter=3)
    assert err.value.residual > 0


PROBLEMS = ["quadratic", "logistic", "lasso"]


@pytest.mark.parametrize("kind", PROBLEMS)
@pytest.mark.parametrize("frac", [0.5, 1.0])
def test_descent_lemma_on_random_pairs(kind, frac):
    """f(y - s g) <= F(x) + g^T(y - x) - (s - L s^2/2)||g||^2 - mu/2 ||y - x||^2."""
    p = build_problem(kind, 30.0, 1.0, 8, 11)
    s = frac / p.L
    rng = np.random.default_rng(7)
    n = 10_000
    X = p.x_star + rng.normal(size=(n, p.dim)) * 3
    Y = p.x_star + rng.normal(size=(n, p.dim)) * 3
    G = gradient_mapping(p, s, Y)
    lhs = p.objective(Y - s * G)
    Fx = p.objective(X)
    rhs = Fx + np.einsum("ij,ij->i", G, Y - X) - (s - p.L * s * s / 2) * np.einsum("ij,ij->i", G, G) \
        - p.mu / 2 * np.einsum("ij,ij->i", Y - X, Y - X)
    assert np.all(lhs <= rhs + 1e-9 * (1 + np.abs(Fx)))


@pytest.mark.parametrize("kind", ["quadratic", "logistic"])
def test_strong_convexity_sandwich(kind):
    p = build_problem(kind, 30.0, 1.0, 8, 5)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5000, p.dim)) * 3
    Y = rng.normal(size=(5000, p.dim)) * 3
    fx, fy = p.value(X), p.value(Y)
    lin = fx + np.einsum("ij,ij->i", p.gradient(X), Y - X)
    d2 = np.einsum("ij,ij->i", Y - X, Y - X)
    slack = 1e-9 * (1 + np.abs(fx))
    assert np.all(fy >= lin + p.mu / 2 * d2 - slack)
    assert np.all(fy <= lin + p.L / 2 * d2 + slack)
