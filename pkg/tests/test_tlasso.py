import numpy as np
import pytest

from kroncov.estimators import EstimatorConfig
from kroncov.estimators._tlasso import tensor_lasso
from kroncov.generators import sample_gaussian
from kroncov.multiway import MultiwayTensor
from kroncov.structured import StructuredMatrix

from oracles import kron_product_dense, spd


def unpenalized_objective(fit, data):
    """Gauge-free negative log-likelihood of the standardized samples.

    With zero penalty the recorded objective depends only on the factor
    product, so it can be recomputed from the returned (re-gauged,
    scale-folded) factors.
    """
    dims = fit.meta["dims"]
    scale = fit.meta["scale"]
    x = np.stack([np.asarray(t.values, dtype=float) for t in data])
    x = x - x.mean(axis=0)
    x = x / np.sqrt(scale)
    factors = [f.copy() for f in fit.factors.factors]
    factors[-1] = factors[-1] * scale
    d = int(np.prod(dims))
    big = kron_product_dense(factors)
    val = float(np.mean(np.einsum("ni,ij,nj->n", x, big, x)))
    for k, f in enumerate(factors):
        sign, logdet = np.linalg.slogdet(f)
        assert sign > 0
        val -= (d / dims[k]) * logdet
    return val


def kp_data(rng, dims, n, seed):
    facs = [spd(rng, dk) for dk in dims]
    prec = StructuredMatrix.kron_product(facs)
    return sample_gaussian(prec, n, seed=seed), prec


def test_matched_truth_recovery():
    rng = np.random.default_rng(0)
    data, prec = kp_data(rng, (3, 4), 400, seed=1)
    fit = tensor_lasso(data, [1e-4, 1e-4], EstimatorConfig(tol=1e-8))
    est = fit.model.materialize()
    truth = prec.materialize()
    rel = np.linalg.norm(est - truth) / np.linalg.norm(truth)
    assert rel < 0.25, rel
    assert fit.converged


def test_objective_trace_monotone():
    rng = np.random.default_rng(1)
    for trial in range(5):
        dims = tuple(int(rng.integers(2, 5)) for _ in range(2))
        data, _ = kp_data(rng, dims, int(rng.integers(5, 25)), seed=trial)
        lam = float(10 ** rng.uniform(-3, 0.5))
        fit = tensor_lasso(data, [lam, lam], EstimatorConfig(max_iter=50))
        assert np.all(np.diff(fit.objective_trace) <= 1e-9)


def test_final_objective_matches_oracle():
    rng = np.random.default_rng(2)
    data, _ = kp_data(rng, (3, 3), 20, seed=5)
    fit = tensor_lasso(data, [0.0, 0.0], EstimatorConfig(tol=1e-8, max_iter=60))
    expect = unpenalized_objective(fit, data)
    assert abs(fit.objective_trace[-1] - expect) < 1e-6 * max(1, abs(expect))


def test_initial_objective_is_total_dimension():
    # identity init on standardized samples: the quadratic term is exactly d
    # and both logdet and penalty vanish
    rng = np.random.default_rng(11)
    data, _ = kp_data(rng, (3, 4), 12, seed=10)
    fit = tensor_lasso(data, [0.3, 0.3], EstimatorConfig(max_iter=1))
    assert abs(fit.objective_trace[0] - 12.0) < 1e-9


def test_scale_equivariance_is_exact():
    rng = np.random.default_rng(3)
    data, _ = kp_data(rng, (2, 3), 15, seed=9)
    scaled = [MultiwayTensor(t.dims, 10.0 * t.values) for t in data]
    fit = tensor_lasso(data, [0.05, 0.05])
    fit_scaled = tensor_lasso(scaled, [0.05, 0.05])
    np.testing.assert_allclose(
        fit_scaled.model.materialize(),
        fit.model.materialize() / 100.0,
        rtol=1e-12,
    )


def test_three_mode_fit():
    rng = np.random.default_rng(4)
    data, prec = kp_data(rng, (2, 3, 2), 200, seed=2)
    fit = tensor_lasso(data, [1e-4] * 3, EstimatorConfig(tol=1e-8))
    est = fit.model.materialize()
    truth = prec.materialize()
    assert np.linalg.norm(est - truth) / np.linalg.norm(truth) < 0.35
    assert len(fit.factors.factors) == 3


def test_returned_gauge_is_trace_normalized():
    rng = np.random.default_rng(5)
    data, _ = kp_data(rng, (3, 4), 30, seed=3)
    fit = tensor_lasso(data, [0.1, 0.1])
    assert fit.factors.normalization == "trace"
    for f in fit.factors.factors[:-1]:
        assert abs(np.trace(f) - f.shape[0]) < 1e-10


def test_large_penalty_diagonalizes_factors():
    rng = np.random.default_rng(6)
    data, _ = kp_data(rng, (3, 3), 25, seed=4)
    fit = tensor_lasso(data, [50.0, 50.0], EstimatorConfig(max_iter=50))
    for f in fit.factors.factors:
        off = f - np.diag(np.diag(f))
        assert not off.any()


def test_single_sample_warns_and_fits():
    rng = np.random.default_rng(7)
    data, _ = kp_data(rng, (2, 2), 1, seed=8)
    with pytest.warns(UserWarning, match="single sample"):
        fit = tensor_lasso(data, [0.5, 0.5], EstimatorConfig(max_iter=20))
    assert fit.model.materialize().shape == (4, 4)


def test_validation_errors():
    rng = np.random.default_rng(8)
    data, _ = kp_data(rng, (2, 3), 5, seed=6)
    with pytest.raises(ValueError):
        tensor_lasso(data, [-0.1, 0.1])
    flat = [MultiwayTensor((6,), t.values) for t in data]
    with pytest.raises(ValueError):
        tensor_lasso(flat, [0.1])
    zero = [MultiwayTensor((2, 3), np.zeros(6)) for _ in range(3)]
    with pytest.raises(ValueError):
        tensor_lasso(zero, [0.1, 0.1])


def test_warm_start_from_factor_set():
    rng = np.random.default_rng(9)
    data, _ = kp_data(rng, (3, 3), 20, seed=7)
    first = tensor_lasso(data, [0.05, 0.05], EstimatorConfig(tol=1e-8))
    # init is interpreted in data units, so a previous fit resumes in place:
    # the restart objective starts near the found optimum instead of at the
    # identity-init value d, and lands on the same model
    cfg = EstimatorConfig(tol=1e-8, init=first.factors)
    second = tensor_lasso(data, [0.05, 0.05], cfg)
    assert second.converged
    d = first.objective_trace[0]
    gap_cold = d - first.objective_trace[-1]
    gap_warm = second.objective_trace[0] - first.objective_trace[-1]
    # the exit gauge differs from the in-loop gauge, so allow a sliver of
    # the descent to be re-done, but most of it must carry over
    assert gap_warm < 0.2 * gap_cold, (gap_warm, gap_cold)
    assert second.iterations <= first.iterations + 5
    a = first.model.materialize()
    b = second.model.materialize()
    assert np.max(np.abs(a - b)) <= 1e-4 * np.max(np.abs(a))
