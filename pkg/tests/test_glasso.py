import numpy as np
import pytest

from kroncov.estimators import EstimatorConfig
from kroncov.estimators._glasso import graphical_lasso, kkt_residual

from oracles import glasso_kkt_gap, glasso_objective, spd

TIGHT = EstimatorConfig(tol=1e-8, max_iter=2000)


def solve(s, lam, cfg=TIGHT):
    fit = graphical_lasso(np.asarray(s, dtype=float), lam, cfg)
    return fit.model.materialize(), fit


# analytic solutions -------------------------------------------------------------


def test_scalar_unpenalized_diagonal():
    omega, fit = solve([[4.0]], 0.7)
    assert abs(omega[0, 0] - 0.25) < 1e-7
    assert fit.converged


def test_scalar_penalized_diagonal():
    cfg = EstimatorConfig(tol=1e-8, max_iter=2000, penalize_diagonal=True)
    omega, _ = solve([[4.0]], 0.5, cfg)
    assert abs(omega[0, 0] - 1.0 / 4.5) < 1e-7


def test_diagonal_covariance_recovers_reciprocal():
    s = np.diag([1.0, 4.0, 0.25])
    omega, fit = solve(s, 0.3)
    np.testing.assert_allclose(omega, np.diag([1.0, 0.25, 4.0]), atol=1e-7)
    assert fit.converged


def test_two_by_two_below_threshold_is_diagonal():
    s = np.array([[2.0, 0.3], [0.3, 1.0]])
    omega, _ = solve(s, 0.31)
    assert omega[0, 1] == 0.0
    np.testing.assert_allclose(np.diag(omega), [0.5, 1.0], atol=1e-7)


def test_two_by_two_above_threshold_shrinks_covariance():
    # with an active off-diagonal the covariance side is S with the
    # off-diagonal pulled toward zero by exactly lam
    s = np.array([[2.0, 0.8], [0.8, 1.0]])
    lam = 0.3
    omega, fit = solve(s, lam)
    expect_w = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(omega, np.linalg.inv(expect_w), atol=1e-6)
    np.testing.assert_allclose(fit.meta["covariance"], expect_w, atol=1e-6)


def test_zero_penalty_inverts_covariance():
    rng = np.random.default_rng(0)
    s = spd(rng, 5)
    omega, _ = solve(s, 0.0)
    np.testing.assert_allclose(omega, np.linalg.inv(s), atol=1e-6)


def test_huge_penalty_gives_diagonal():
    rng = np.random.default_rng(1)
    s = spd(rng, 4)
    omega, _ = solve(s, 1e3)
    off = omega - np.diag(np.diag(omega))
    assert not off.any()
    np.testing.assert_allclose(np.diag(omega), 1.0 / np.diag(s), atol=1e-7)


# oracle checks -------------------------------------------------------------------


def test_kkt_gap_at_solution():
    rng = np.random.default_rng(2)
    for _ in range(8):
        d = int(rng.integers(2, 7))
        s = spd(rng, d)
        lam = float(rng.uniform(0.05, 0.5))
        omega, fit = solve(s, lam)
        assert fit.converged
        assert glasso_kkt_gap(s, omega, lam) <= 1e-6


def test_objective_trace_monotone_and_consistent():
    rng = np.random.default_rng(3)
    for _ in range(5):
        d = int(rng.integers(2, 8))
        s = spd(rng, d)
        lam = float(rng.uniform(0.05, 0.4))
        omega, fit = solve(s, lam)
        trace = np.asarray(fit.objective_trace)
        assert np.all(np.diff(trace) <= 1e-9)
        assert abs(trace[-1] - glasso_objective(s, omega, lam)) < 1e-8


def test_internal_kkt_matches_oracle():
    rng = np.random.default_rng(4)
    s = spd(rng, 5)
    omega = np.linalg.inv(s) + 0.05 * np.eye(5)
    w = np.linalg.inv(omega)
    lam = 0.2
    ours = kkt_residual(
        np.asfortranarray(s), np.asfortranarray(omega), np.asfortranarray(w), lam
    )
    assert abs(ours - glasso_kkt_gap(s, omega, lam)) < 1e-10


def test_matches_sklearn_objective():
    sklearn_cov = pytest.importorskip("sklearn.covariance")
    rng = np.random.default_rng(5)
    for _ in range(3):
        d = 6
        x = rng.standard_normal((40, d))
        s = x.T @ x / 40
        lam = 0.15
        _, theirs = sklearn_cov.graphical_lasso(s, alpha=lam)
        omega, _ = solve(s, lam)
        ours_obj = glasso_objective(s, omega, lam)
        their_obj = glasso_objective(s, theirs, lam)
        assert ours_obj <= their_obj + 1e-5
        assert np.abs(omega - theirs).max() < 5e-3


# solver behavior ------------------------------------------------------------------


def test_warm_start_resumes_near_solution():
    rng = np.random.default_rng(6)
    s = spd(rng, 6)
    omega, first = solve(s, 0.2)
    cfg = EstimatorConfig(tol=1e-8, max_iter=2000, init=omega)
    omega2, second = solve(s, 0.2, cfg)
    assert second.iterations <= max(2, first.iterations // 4)
    np.testing.assert_allclose(omega2, omega, atol=1e-6)


def test_diagonal_init():
    rng = np.random.default_rng(7)
    s = spd(rng, 4)
    cfg = EstimatorConfig(tol=1e-8, max_iter=2000, init="diagonal")
    omega, fit = solve(s, 0.2, cfg)
    assert fit.converged
    assert glasso_kkt_gap(s, omega, 0.2) <= 1e-6


def test_meta_covariance_is_inverse_of_estimate():
    rng = np.random.default_rng(8)
    s = spd(rng, 5)
    omega, fit = solve(s, 0.1)
    np.testing.assert_allclose(
        fit.meta["covariance"], np.linalg.inv(omega), atol=1e-8
    )


def test_iteration_cap_reports_not_converged():
    rng = np.random.default_rng(9)
    s = spd(rng, 12, jitter=0.05)
    cfg = EstimatorConfig(tol=1e-12, max_iter=2)
    _, fit = solve(s, 0.05, cfg)
    assert not fit.converged
    assert fit.iterations <= 2


def test_input_validation():
    with pytest.raises(ValueError):
        graphical_lasso(np.array([[1.0, 0.5], [0.4, 1.0]]), 0.1)
    with pytest.raises(ValueError):
        graphical_lasso(np.eye(2), -0.1)
    with pytest.raises(ValueError):
        graphical_lasso(np.eye(2), 0.1, EstimatorConfig(init="random"))
    with pytest.raises(ValueError):
        graphical_lasso(np.eye(3), 0.1, EstimatorConfig(init=np.eye(2)))
    with pytest.raises(ValueError):
        graphical_lasso(np.zeros((2, 3)), 0.1)
