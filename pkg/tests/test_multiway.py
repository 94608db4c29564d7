import numpy as np
import pytest

from kroncov.multiway import (
    MultiwayTensor,
    mode_gram,
    mode_k_product,
    refold,
    sample_covariance,
    unfold,
    unvec,
    vec_tensor,
)

from oracles import (
    colex_indices,
    kron_product_dense,
    mode_product_loops,
    spd,
    unfold_loops,
    vec_colex,
)


def random_dims(rng, max_modes=4, max_size=5):
    k = int(rng.integers(1, max_modes + 1))
    return tuple(int(rng.integers(1, max_size + 1)) for _ in range(k))


def test_vec_matches_index_loops():
    rng = np.random.default_rng(0)
    for _ in range(30):
        dims = random_dims(rng)
        arr = rng.standard_normal(dims)
        np.testing.assert_array_equal(vec_tensor(arr), vec_colex(arr))


def test_vec_first_index_fastest():
    arr = np.arange(6.0).reshape(2, 3, order="F")
    # walking the flat vector steps through the first mode before the second
    np.testing.assert_array_equal(vec_tensor(arr), np.arange(6.0))


def test_unvec_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(30):
        dims = random_dims(rng)
        arr = rng.standard_normal(dims)
        np.testing.assert_array_equal(unvec(vec_tensor(arr), dims), arr)


def test_unvec_size_mismatch():
    with pytest.raises(ValueError):
        unvec(np.zeros(5), (2, 3))


def test_unfold_matches_index_loops():
    rng = np.random.default_rng(2)
    for _ in range(30):
        dims = random_dims(rng, max_modes=3)
        arr = rng.standard_normal(dims)
        for mode in range(len(dims)):
            np.testing.assert_array_equal(
                unfold(arr, mode), unfold_loops(arr, mode)
            )


def test_refold_inverts_unfold():
    rng = np.random.default_rng(3)
    for _ in range(30):
        dims = random_dims(rng, max_modes=3)
        arr = rng.standard_normal(dims)
        for mode in range(len(dims)):
            np.testing.assert_array_equal(
                refold(unfold(arr, mode), mode, dims), arr
            )


def test_mode_product_matches_index_loops():
    rng = np.random.default_rng(4)
    for _ in range(20):
        dims = random_dims(rng, max_modes=3, max_size=4)
        arr = rng.standard_normal(dims)
        for mode in range(len(dims)):
            rows = int(rng.integers(1, 5))
            m = rng.standard_normal((rows, dims[mode]))
            np.testing.assert_allclose(
                mode_k_product(arr, m, mode),
                mode_product_loops(arr, m, mode),
                rtol=0,
                atol=1e-12,
            )


def test_mode_product_is_kron_action():
    # multiplying every mode equals applying the mode-paired Kronecker
    # product to the colexicographic vec
    rng = np.random.default_rng(5)
    for _ in range(10):
        dims = random_dims(rng, max_modes=3, max_size=4)
        arr = rng.standard_normal(dims)
        factors = [rng.standard_normal((d, d)) for d in dims]
        out = arr
        for mode, f in enumerate(factors):
            out = mode_k_product(out, f, mode)
        big = kron_product_dense(factors)
        np.testing.assert_allclose(
            vec_tensor(out), big @ vec_tensor(arr), atol=1e-10
        )


def test_mode_product_shape_mismatch():
    with pytest.raises(ValueError):
        mode_k_product(np.zeros((2, 3)), np.zeros((4, 4)), 0)


def test_multiway_tensor_validates_size():
    with pytest.raises(ValueError):
        MultiwayTensor((2, 3), np.zeros(5))


def test_multiway_tensor_round_trip():
    rng = np.random.default_rng(6)
    arr = rng.standard_normal((3, 2, 4))
    t = MultiwayTensor.from_array(arr)
    assert t.dims == (3, 2, 4)
    np.testing.assert_array_equal(t.values, vec_colex(arr))
    np.testing.assert_array_equal(t.array, arr)


def test_sample_covariance_matches_definition():
    rng = np.random.default_rng(7)
    for _ in range(10):
        dims = random_dims(rng, max_modes=3, max_size=4)
        n = int(rng.integers(2, 8))
        data = [rng.standard_normal(dims) for _ in range(n)]
        vecs = np.stack([vec_colex(x) for x in data])
        centered = vecs - vecs.mean(axis=0)
        expect = centered.T @ centered / n
        np.testing.assert_allclose(sample_covariance(data), expect, atol=1e-12)


def test_sample_covariance_single_sample_warns():
    with pytest.warns(UserWarning):
        s = sample_covariance([np.ones((2, 2))])
    # mean subtraction is disabled, otherwise S would be identically zero
    assert np.abs(s).max() > 0


def sqrtm_eigh(m):
    w, u = np.linalg.eigh(m)
    return (u * np.sqrt(w)) @ u.T


def test_mode_gram_definition():
    # per-mode Gram of unfoldings, co-modes multiplied by the symmetric
    # square roots of their whiteners, d_k/(N d) scaled
    rng = np.random.default_rng(8)
    dims = (3, 2, 4)
    d = int(np.prod(dims))
    n = 5
    data = [rng.standard_normal(dims) for _ in range(n)]
    whiteners = [None, spd(rng, 2), spd(rng, 4)]
    got = mode_gram(data, 0, whiteners=whiteners)

    mean = np.mean([x for x in data], axis=0)
    acc = np.zeros((3, 3))
    for x in data:
        y = x - mean
        for mode in (1, 2):
            y = mode_k_product(y, sqrtm_eigh(whiteners[mode]), mode)
        v = unfold(y, 0)
        acc += v @ v.T
    expect = acc * dims[0] / (n * d)
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_mode_gram_identity_whiteners():
    rng = np.random.default_rng(9)
    dims = (2, 3)
    data = [rng.standard_normal(dims) for _ in range(4)]
    np.testing.assert_allclose(
        mode_gram(data, 1),
        mode_gram(data, 1, whiteners=[np.eye(2), None]),
        atol=1e-12,
    )
