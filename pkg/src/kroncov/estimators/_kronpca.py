"""Covariance approximation through the Kronecker rearrangement.

Both estimators operate on R(S), the (d1^2, d2^2) rearrangement of a
(d1 d2, d1 d2) covariance, whose singular structure enumerates Kronecker-
product components: the best Frobenius rank-1 approximation of R(S) is the
nearest single Kronecker product, and soft-thresholding the spectrum gives a
low-separation-rank covariance.

d1 is the size of the slow (left) Kronecker block. When the covariance comes
from vec'd 2-way tensors, the slow block is the *last* tensor mode; callers
pass dims accordingly (the factor lists returned here are mode-ordered,
fast block first, ready for mode-paired StructuredMatrix use).
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from ..multiway import sample_covariance
from ..structured import StructuredMatrix, rearrange, rearrange_inverse
from ..validation import as_float_array
from ._config import EstimatorConfig, FitResult
from ._data import stack_dataset


def _sign_fix(a, b):
    """Resolve the joint sign so the first (fast) factor has nonnegative trace."""
    t = np.trace(a)
    if t < 0 or (t == 0 and a.ravel()[np.argmax(np.abs(a))] < 0):
        return -a, -b
    return a, b


def _symmetrize_inplace(m, chunk=256):
    """Blockwise (m + m.T) / 2 without a full-size temporary."""
    d = m.shape[0]
    for i0 in range(0, d, chunk):
        i1 = min(i0 + chunk, d)
        blk = m[i0:i1, i0:i1]
        m[i0:i1, i0:i1] = (blk + blk.T) / 2.0
        for j0 in range(0, i0, chunk):
            j1 = min(j0 + chunk, d)
            avg = (m[i0:i1, j0:j1] + m[j0:j1, i0:i1].T) / 2.0
            m[i0:i1, j0:j1] = avg
            m[j0:j1, i0:i1] = avg.T
    return m


def nearest_kron_product(s, d1, d2, cfg=None):
    """Best single-Kronecker-product fit to a covariance, by leading SVD pair.

    Returns a FitResult whose model is the mode-paired Kronecker product and
    whose factors are [fast (d2), slow (d1)]; the scale rides on the slow
    factor. meta records the Frobenius residual, which equals the energy in
    the trailing singular values of R(S).
    """
    t0 = time.perf_counter()
    s = as_float_array(s, "covariance")
    m = rearrange(s, d1, d2)
    u, sig, vt = np.linalg.svd(m, full_matrices=False)
    slow = (sig[0] * u[:, 0]).reshape(d1, d1, order="F")
    fast = vt[0].reshape(d2, d2, order="F")
    fast, slow = _sign_fix(fast, slow)
    # symmetrize away roundoff; the exact-KP case stays exact
    slow = (slow + slow.T) / 2.0
    fast = (fast + fast.T) / 2.0
    residual = float(np.sqrt(np.sum(sig[1:] ** 2)))
    model = StructuredMatrix.kron_product([fast, slow])
    return FitResult(
        model=model,
        factors=model.factors,
        objective_trace=[residual],
        iterations=1,
        converged=True,
        wall_time_seconds=time.perf_counter() - t0,
        meta={"residual_fro": residual, "spectrum": sig},
    )


def kron_pca(s, d1, d2, lam, cfg=None):
    """Low-separation-rank covariance via spectral soft-thresholding.

    Every singular value of R(S) is shrunk by lam/2 and clamped at zero; the

    surviving pairs rebuild the covariance estimate. lam = 0 reproduces S
    exactly. The model is the dense covariance-side estimate; meta carries
    the per-component factor pairs (mode-ordered) and the shrunk spectrum.
    """
    t0 = time.perf_counter()
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    s = as_float_array(s, "covariance")
    m = rearrange(s, d1, d2)
    del s
    # svd of the transpose view avoids an internal Fortran copy of the wide
    # rearrangement at large d
    ut_t, sig, vt_t = scipy.linalg.svd(
        m.T, full_matrices=False, overwrite_a=True, lapack_driver="gesdd"
    )
    del m
    shrunk = np.maximum(sig - lam / 2.0, 0.0)
    # singular values are sorted, so the survivors are a prefix; the relative
    # floor keeps numerically-rank-deficient inputs from reporting dust
    # components as structure
    rank = int(np.count_nonzero(shrunk > shrunk[0] * 1e-12))
    pairs = []
    for l in range(min(rank, 16)):
        slow = (shrunk[l] * vt_t[l]).reshape(d1, d1, order="F")
        fast = ut_t[:, l].reshape(d2, d2, order="F")
        fast, slow = _sign_fix(fast, slow)
        pairs.append((fast, slow))
    if rank == 0:
        est = np.zeros((d1 * d2, d1 * d2))
    else:
        low = (vt_t[:rank].T * shrunk[:rank]) @ ut_t[:, :rank].T
        del ut_t
        est = rearrange_inverse(low, d1, d2)
        del low
    _symmetrize_inplace(est)
    objective = 0.5 * float(np.sum((sig - shrunk) ** 2)) + lam * float(
        shrunk.sum()
    )
    model = StructuredMatrix("dense", dense=est, _copy=False)
    return FitResult(
        model=model,
        factors=None,
        objective_trace=[objective],
        iterations=1,
        converged=True,
        wall_time_seconds=time.perf_counter() - t0,
        meta={
            "separation_rank": rank,
            "spectrum": sig,
            "shrunk_spectrum": shrunk,
            "pairs": pairs,
        },
    )


def _blocks_from_dims(dims):
    """(slow block size, fast block size): the last mode is the slow block."""
    if len(dims) < 2:
        raise ValueError("rearrangement methods need at least two modes")
    d1 = int(dims[-1])
    d2 = 1
    for dk in dims[:-1]:
        d2 *= int(dk)
    return d1, d2


class NearestKroneckerProduct(BaseEstimator):
    """Single-Kronecker-product covariance fit to sample data.

    fit expects samples stacked on the leading axis; the covariance is
    formed internally and approximated by its nearest Kronecker product.
    """

    def __init__(self, dims=None, mean_subtract=True):
        self.dims = dims
        self.mean_subtract = mean_subtract

    def fit(self, X, y=None):
        vecs, dims = stack_dataset(X, self.dims)
        d1, d2 = _blocks_from_dims(dims)
        s = sample_covariance(vecs, mean_subtract=self.mean_subtract)
        res = nearest_kron_product(s, d1, d2)
        self.factors_ = res.factors
        self.covariance_ = res.model
        self.residual_ = res.meta["residual_fro"]
        self.fit_result_ = res
        return self


class KroneckerPCA(BaseEstimator):
    """Low-separation-rank covariance estimator.

    fit expects samples stacked on the leading axis; lam is the nuclear-norm
    penalty on the rearranged covariance spectrum.
    """

    def __init__(self, lam=0.1, dims=None, mean_subtract=True):
        self.lam = lam
        self.dims = dims
        self.mean_subtract = mean_subtract

    def fit(self, X, y=None):
        vecs, dims = stack_dataset(X, self.dims)
        d1, d2 = _blocks_from_dims(dims)
        res = kron_pca(
            sample_covariance(vecs, mean_subtract=self.mean_subtract),
            d1,
            d2,
            self.lam,
        )
        self.covariance_ = res.model.dense
        self.separation_rank_ = res.meta["separation_rank"]
        self.fit_result_ = res
        return self
