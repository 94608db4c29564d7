import numpy as np
import pytest

from kroncov.estimators import EstimatorConfig, SGPalm, objective, smooth_gradients
from kroncov.estimators._sgpalm import sylvester_palm
from kroncov.generators import sample_gaussian
from kroncov.structured import FactorSet, StructuredMatrix

from oracles import fd_directional, kron_sum_dense, partial_trace_loops, spd, sym


def pd_factor(rng, n):
    return sym(rng, n) + (1.0 + 2.0 * np.sqrt(n)) * np.eye(n)


def sq_data(rng, dims, n, seed):
    facs = [pd_factor(rng, dk) for dk in dims]
    prec = StructuredMatrix.squared_kron_sum(facs)
    return sample_gaussian(prec, n, seed=seed), prec


def dense_smooth(facs, s):
    """Quadratic-plus-diagonal-logdet objective via full materialization."""
    q = kron_sum_dense(facs)
    grid = np.zeros(1)
    for f in facs:
        grid = np.add.outer(np.diag(f), grid).reshape(-1)
    assert grid.min() > 0
    return float(np.trace(s @ q @ q)) - float(np.log(grid).sum())


def test_gradient_matches_dense_oracle():
    # quadratic part: grad_k = partial_trace_k(S Q + Q S) for symmetric
    # factors; logdet part touches only the diagonal
    rng = np.random.default_rng(0)
    dims = (3, 2)
    for _ in range(10):
        s = spd(rng, 6)
        facs = [pd_factor(rng, 3), pd_factor(rng, 2)]
        value, grads = smooth_gradients("sg_palm", facs, s, dims=dims)
        assert value == pytest.approx(dense_smooth(facs, s), rel=1e-10)
        q = kron_sum_dense(facs)
        b = s @ q + q @ s
        diags = [np.diag(f) for f in facs]
        for k in range(2):
            expect = partial_trace_loops(b, k, dims)
            other = diags[1 - k]
            m = (1.0 / np.add.outer(diags[k], other)).sum(axis=1)
            expect = expect - np.diag(m)
            err = np.max(np.abs(grads[k] - expect)) / np.max(np.abs(expect))
            assert err <= 1e-10, err


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    dims = (3, 2)
    for _ in range(10):
        s = spd(rng, 6)
        facs = [pd_factor(rng, 3), pd_factor(rng, 2)]
        _, grads = smooth_gradients("sg_palm", facs, s, dims=dims)
        vs = [sym(rng, dk) for dk in dims]
        fd = fd_directional(
            lambda fs: smooth_gradients("sg_palm", fs, s, dims=dims)[0],
            facs,
            vs,
            step=1e-5,
        )
        analytic = sum(float(np.sum(g * v)) for g, v in zip(grads, vs))
        assert abs(fd - analytic) <= 1e-6 * max(1.0, abs(analytic))


def test_scalar_instance_analytic_optimum():
    # dims (1, 1): minimize s (a+b)^2 - log(a+b) over the scalar sum
    # c = a + b, optimal at c = 1 / sqrt(2 s) with s the centered second
    # moment of the samples
    x = np.array([2.1, -0.4, 0.9])
    fit = sylvester_palm(
        x.reshape(-1, 1),
        [0.0, 0.0],
        EstimatorConfig(tol=1e-12, max_iter=2000),
        dims=(1, 1),
    )
    svalue = float(np.mean((x - x.mean()) ** 2))
    c = sum(float(f[0, 0]) for f in fit.factors.factors)
    assert c == pytest.approx(1.0 / np.sqrt(2 * svalue), rel=1e-6)


def test_objective_trace_monotone():
    rng = np.random.default_rng(2)
    for trial in range(5):
        dims = tuple(int(rng.integers(2, 5)) for _ in range(2))
        data, _ = sq_data(rng, dims, int(rng.integers(6, 25)), seed=trial)
        lam = float(10 ** rng.uniform(-3, 0.5))
        fit = sylvester_palm(data, [lam, lam], EstimatorConfig(max_iter=60))
        t = np.asarray(fit.objective_trace)
        assert len(t) >= 2
        rises = np.diff(t)
        assert np.all(rises <= 1e-9 * np.maximum(1.0, np.abs(t[:-1]))), rises.max()


def test_recorded_objective_matches_cross_check():
    rng = np.random.default_rng(3)
    data, _ = sq_data(rng, (3, 4), 40, seed=0)
    lam = 0.05
    fit = sylvester_palm(data, [lam, lam], EstimatorConfig(tol=1e-8))
    recorded = fit.objective_trace[-1]
    independent = objective("sg_palm", fit.factors, data, [lam, lam])
    assert recorded == pytest.approx(independent, rel=1e-8)


def test_matched_truth_recovery():
    rng = np.random.default_rng(4)
    band = np.diag(np.full(4, 2.0)) + np.diag(np.full(3, -0.5), 1) + np.diag(
        np.full(3, -0.5), -1
    )
    facs = [band[:3, :3].copy(), band.copy()]
    prec = StructuredMatrix.squared_kron_sum(facs)
    data = sample_gaussian(prec, 400, seed=9)
    fit = sylvester_palm(data, [1e-3, 1e-3], EstimatorConfig(tol=1e-9))
    est = fit.model.materialize()
    truth = prec.materialize()
    rel = np.linalg.norm(est - truth) / np.linalg.norm(truth)
    assert rel < 0.25, rel
    assert fit.converged


def test_large_penalty_gives_diagonal_factors():
    rng = np.random.default_rng(5)
    data, _ = sq_data(rng, (3, 4), 40, seed=1)
    fit = sylvester_palm(data, [50.0, 50.0], EstimatorConfig(tol=1e-8))
    for f in fit.factors.factors:
        off = f - np.diag(np.diag(f))
        assert np.all(off == 0.0)
    assert fit.converged


def test_warm_start_resumes_at_solution():
    rng = np.random.default_rng(6)
    data, _ = sq_data(rng, (3, 3), 25, seed=2)
    first = sylvester_palm(data, [0.05, 0.05], EstimatorConfig(tol=1e-9))
    cfg = EstimatorConfig(tol=1e-9, init=first.factors)
    second = sylvester_palm(data, [0.05, 0.05], cfg)
    assert second.objective_trace[0] == pytest.approx(
        first.objective_trace[-1], rel=1e-10
    )
    assert second.iterations <= 3
    a = first.model.materialize()
    b = second.model.materialize()
    assert np.max(np.abs(a - b)) <= 1e-4 * np.max(np.abs(a))


def test_diagonal_floor_rejected_at_init():
    rng = np.random.default_rng(7)
    data, _ = sq_data(rng, (3, 2), 10, seed=3)
    bad = FactorSet([np.zeros((3, 3)), np.eye(2)])
    with pytest.raises(ValueError, match="floor"):
        sylvester_palm(data, [0.1, 0.1], EstimatorConfig(init=bad))


def test_validation_errors():
    rng = np.random.default_rng(8)
    data, _ = sq_data(rng, (3, 2), 10, seed=4)
    with pytest.raises(ValueError, match="penalties"):
        sylvester_palm(data, [-0.1, 0.1])
    with pytest.raises(ValueError, match="two tensor modes"):
        sylvester_palm(rng.standard_normal((10, 4)), 0.1, dims=(4,))
    with pytest.warns(UserWarning, match="single sample"):
        sylvester_palm(
            rng.standard_normal((1, 6)), 0.1,
            EstimatorConfig(max_iter=2), dims=(3, 2),
        )


def test_three_mode_fit():
    rng = np.random.default_rng(9)
    data, _ = sq_data(rng, (2, 3, 2), 30, seed=5)
    fit = sylvester_palm(data, [0.05, 0.05, 0.05], EstimatorConfig(tol=1e-7))
    assert [f.shape[0] for f in fit.factors.factors] == [2, 3, 2]
    assert fit.model.kind == "squared_kron_sum"
    t = np.asarray(fit.objective_trace)
    assert np.all(np.diff(t) <= 1e-9 * np.maximum(1.0, np.abs(t[:-1])))


def test_estimator_wrapper():
    rng = np.random.default_rng(10)
    data, _ = sq_data(rng, (3, 4), 30, seed=6)
    est = SGPalm(lam=0.05, tol=1e-7).fit(
        np.stack([t.values.reshape(3, 4, order="F") for t in data])
    )
    assert est.precision_.kind == "squared_kron_sum"
    assert est.factors_.factors[1].shape == (4, 4)
    assert len(est.objective_trace_) == est.n_iter_ + 1
