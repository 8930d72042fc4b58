import numpy as np
import pytest

from cavitypl.errors import DomainError
from cavitypl.lm import levenberg_marquardt


def make_exponential_problem(noise=0.0, seed=0):
    """y = a * exp(-b * t): smooth two-parameter test problem."""
    t = np.linspace(0.0, 4.0, 60)
    truth = np.array([3.0, 0.7])
    rng = np.random.default_rng(seed)
    y = truth[0] * np.exp(-truth[1] * t) + noise * rng.standard_normal(t.size)

    def residual(p):
        return p[0] * np.exp(-p[1] * t) - y

    def jacobian(p):
        jac = np.empty((t.size, 2))
        jac[:, 0] = np.exp(-p[1] * t)
        jac[:, 1] = -p[0] * t * np.exp(-p[1] * t)
        return jac

    return residual, jacobian, truth


def test_converges_on_noiseless_problem():
    residual, jacobian, truth = make_exponential_problem()
    res = levenberg_marquardt(residual, jacobian, np.array([1.0, 1.5]))
    assert res.converged
    assert np.allclose(res.params, truth, rtol=1e-9)
    assert res.cost < 1e-18


def test_accepted_costs_are_monotone():
    residual, jacobian, _ = make_exponential_problem(noise=0.05, seed=3)
    res = levenberg_marquardt(residual, jacobian, np.array([10.0, 3.0]))
    history = np.array(res.cost_history)
    assert np.all(np.diff(history) <= 0)


def test_bounds_are_respected():
    residual, jacobian, _ = make_exponential_problem()
    res = levenberg_marquardt(
        residual,
        jacobian,
        np.array([1.0, 1.5]),
        lower=np.array([0.0, 1.0]),
        upper=np.array([10.0, 5.0]),
    )
    # true b = 0.7 lies outside the box, so the fit must stop at the bound
    assert res.params[1] == 1.0


def test_fixed_parameter_is_bit_identical_and_has_zero_covariance():
    residual, jacobian, truth = make_exponential_problem(noise=0.01, seed=7)
    fixed_value = 2.9137418361204
    res = levenberg_marquardt(
        residual,
        jacobian,
        np.array([fixed_value, 1.5]),
        fixed_mask=np.array([True, False]),
    )
    assert res.converged
    assert res.params[0] == fixed_value  # bit identical
    assert np.all(res.covariance[0, :] == 0.0)
    assert np.all(res.covariance[:, 0] == 0.0)
    assert res.covariance[1, 1] > 0.0


def test_covariance_matches_linear_regression_formula():
    # linear model: residual = X @ p - y; covariance = s2 * inv(X'X)
    rng = np.random.default_rng(11)
    x = np.linspace(0, 1, 40)
    design = np.stack([np.ones_like(x), x], axis=1)
    y = 2.0 + 3.0 * x + 0.1 * rng.standard_normal(x.size)

    res = levenberg_marquardt(
        lambda p: design @ p - y, lambda p: design, np.array([0.0, 0.0])
    )
    assert res.converged
    r = design @ res.params - y
    s2 = (r @ r) / (x.size - 2)
    expected = s2 * np.linalg.inv(design.T @ design)
    assert np.allclose(res.covariance, expected, rtol=1e-6)


def test_iteration_budget_returns_best_so_far():
    residual, jacobian, _ = make_exponential_problem()
    res = levenberg_marquardt(residual, jacobian, np.array([20.0, 4.0]), max_iterations=2)
    assert not res.converged
    assert np.isfinite(res.cost)
    assert res.iterations == 2


def test_validation_errors():
    residual, jacobian, _ = make_exponential_problem()
    with pytest.raises(DomainError):
        levenberg_marquardt(residual, jacobian, np.array([1.0, 1.0]), max_iterations=0)
    with pytest.raises(DomainError):
        levenberg_marquardt(residual, jacobian, np.array([1.0, 1.0]), rel_tolerance=0.0)
    with pytest.raises(DomainError):
        levenberg_marquardt(
            residual, jacobian, np.array([1.0, 1.0]),
            lower=np.array([2.0, 0.0]), upper=np.array([1.0, 5.0]),
        )


def test_start_at_optimum_converges_immediately():
    residual, jacobian, truth = make_exponential_problem()
    res = levenberg_marquardt(residual, jacobian, truth)
    assert res.converged
    assert np.array_equal(res.params, truth)
