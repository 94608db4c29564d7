"""Exact penalized objective values for every estimator, for cross-checks.

These evaluate the mathematical objective each solver minimizes, on exactly
the inputs given (no internal centering-scale adjustments): the traces the
solvers record can be checked against these functions. Note tensor_lasso
standardizes its input once on entry, so its recorded trace corresponds to
the standardized dataset and the pre-rescaled factors (see its meta fields).

Log-determinants use the structure: factor log-dets for Kronecker products,
the eigenvalue tuple-sum grid for Kronecker sums, diagonal grids for the
squared-Kronecker-sum pseudolikelihood. Nothing d x d is materialized except
for the dense graphical lasso and the rearrangement objective.
"""

from __future__ import annotations

import numpy as np

from ..multiway import mode_k_product, unfold
from ..structured import (
    FactorSet,
    StructuredMatrix,
    eig_kron_sum,
    partial_trace,
    rearrange,
)
from ..validation import as_float_array
from ._config import FitResult
from ._data import stack_dataset
from ._sgpalm import _diag_grids, _diag_logdet
from ._teralasso import _cosum_grids, _ks_logdet

METHOD_KEYS = ("glasso", "kp_ls", "kpca", "tlasso", "teralasso", "sg_palm")


def canonical_method(name):
    """Normalize a method name (CLI spelling uses hyphens)."""
    key = str(name).strip().lower().replace("-", "_")
    if key not in METHOD_KEYS:
        raise ValueError(f"unknown method {name!r}; known: {METHOD_KEYS}")
    return key


def _extract(model):
    """(FactorSet or None, dense ndarray or None) from any fitted form."""
    if isinstance(model, FitResult):
        if model.factors is not None:
            return model.factors, None
        model = model.model
    if isinstance(model, StructuredMatrix):
        if model.kind == "dense":
            return None, model.dense
        return model.factors, None
    if isinstance(model, FactorSet):
        return model, None
    if isinstance(model, (list, tuple)):
        return FactorSet(list(model)), None
    return None, as_float_array(model, "model")


def _cov_or_vecs(s_or_data, d, dims):
    """Classify the data argument: ('cov', S) or ('vecs', centered rows)."""
    if isinstance(s_or_data, np.ndarray) and s_or_data.shape == (d, d):
        return "cov", as_float_array(s_or_data, "covariance")
    vecs, vdims = stack_dataset(s_or_data, dims)
    if vecs.shape[1] != d:
        raise ValueError(
            f"data has {vecs.shape[1]} entries per sample, model needs {d}"
        )
    if vecs.shape[0] > 1:
        vecs = vecs - vecs.mean(axis=0)
    return "vecs", vecs


def _penalty(factors, lams, penalize_diagonal, weights=None):
    tot = 0.0
    for k, f in enumerate(factors):
        pen = float(np.abs(f).sum())
        if not penalize_diagonal:
            pen -= float(np.abs(np.diag(f)).sum())
        tot += (1.0 if weights is None else weights[k]) * lams[k] * pen
    return tot


def _quad_kron_product(kind, payload, dims, factors):
    """tr(S (kron factors)) from either a covariance or centered samples."""
    if kind == "cov":
        sm = StructuredMatrix.kron_product(factors)
        return float(np.sum(payload * sm.materialize()))
    total = 0.0
    for row in payload:
        x = row.reshape(dims, order="F")
        y = x
        for k, f in enumerate(factors):
            y = mode_k_product(y, f, k)
        total += float(np.sum(x * y))
    return total / payload.shape[0]


def objective(method, model, s_or_data, lams, penalize_diagonal=False, dims=None):
    """Penalized objective of ``method`` at ``model`` given data or covariance.

    model may be a FitResult, StructuredMatrix, FactorSet, factor list, or a
    dense matrix, as appropriate for the method. lams is scalar for glasso
    and kpca, per-mode for the rest.
    """
    method = canonical_method(method)
    factors, dense = _extract(model)

    if method == "glasso":
        if dense is None:
            dense = StructuredMatrix.kron_product(factors).materialize()
        d = dense.shape[0]
        kind, payload = _cov_or_vecs(s_or_data, d, dims)
        s = payload if kind == "cov" else (payload.T @ payload) / payload.shape[0]
        sign, ld = np.linalg.slogdet(dense)
        if sign <= 0:
            raise np.linalg.LinAlgError("precision is not positive definite")
        lam = float(np.ravel(lams)[0])
        pen = float(np.abs(dense).sum())
        if not penalize_diagonal:
            pen -= float(np.abs(np.diag(dense)).sum())
        return float(np.sum(s * dense)) - ld + lam * pen

    if method in ("kp_ls", "kpca"):
        if dense is None:
            dense = StructuredMatrix.kron_product(factors).materialize()
        if dims is None or len(dims) != 2:
            raise ValueError("kpca objective needs dims=(d_fast, d_slow)")
        d = int(np.prod(dims))
        kind, payload = _cov_or_vecs(s_or_data, d, dims)
        s = payload if kind == "cov" else (payload.T @ payload) / payload.shape[0]
        lam = float(np.ravel(lams)[0])
        # slow (left) block size is the last mode
        sig = np.linalg.svd(rearrange(dense, dims[1], dims[0]), compute_uv=False)
        return 0.5 * float(np.sum((dense - s) ** 2)) + lam * float(sig.sum())

    if factors is None:
        raise ValueError(f"{method} objective needs per-mode factors")
    fs = list(factors.factors if isinstance(factors, FactorSet) else factors)
    fdims = tuple(f.shape[0] for f in fs)
    if dims is not None and tuple(dims) != fdims:
        raise ValueError(f"dims {dims} disagree with factor sizes {fdims}")
    dims = fdims
    d = int(np.prod(dims))
    kk = len(dims)
    lams = [float(l) for l in np.broadcast_to(lams, (kk,))]
    kind, payload = _cov_or_vecs(s_or_data, d, dims)

    if method == "tlasso":
        val = _quad_kron_product(kind, payload, dims, fs)
        weights = [d / dk for dk in dims]
        for k, f in enumerate(fs):
            sign, ld = np.linalg.slogdet(f)
            if sign <= 0:
                raise np.linalg.LinAlgError(f"factor {k} is not PD")
            val -= weights[k] * ld
        return val + _penalty(fs, lams, penalize_diagonal, weights)

    if method == "teralasso":
        if kind == "cov":
            ts = [partial_trace(payload, k, dims) for k in range(kk)]
        else:
            n = payload.shape[0]
            ts = []
            for k in range(kk):
                t = np.zeros((dims[k], dims[k]))
                for row in payload:
                    v = unfold(row.reshape(dims, order="F"), k)
                    t += v @ v.T
                ts.append(t / n)
        val = sum(float(np.sum(t * f)) for t, f in zip(ts, fs))
        val -= eig_kron_sum(fs).logdet()
        return val + _penalty(fs, lams, penalize_diagonal)

    # sg_palm: quadratic term through the Kronecker-sum apply
    if kind == "cov":
        q = StructuredMatrix.kron_sum(fs).materialize()
        val = float(np.trace(payload @ q @ q))
    else:
        total = 0.0
        for row in payload:
            x = row.reshape(dims, order="F")
            y = np.zeros_like(x)
            for k, f in enumerate(fs):
                y += mode_k_product(x, f, k)
            total += float(np.sum(y * y))
        val = total / payload.shape[0]
    grid = np.zeros(1)
    for f in fs:
        grid = np.add.outer(np.diag(f), grid).reshape(-1)
    if grid.min() <= 0:
        raise np.linalg.LinAlgError("diagonal Kronecker sum is not PD")
    val -= float(np.log(grid).sum())
    return val + _penalty(fs, lams, penalize_diagonal)


def _factor_list(factors):
    fs, dense = _extract(factors)
    if fs is None:
        raise ValueError("per-mode factors are required")
    return [np.array(f, dtype=float) for f in fs.factors]


def smooth_gradients(method, factors, s_or_data, dims=None):
    """Value and per-factor gradients of a method's smooth objective part.

    Supported methods are the two proximal solvers: "teralasso" (linear
    term minus Kronecker-sum logdet) and "sg_palm" (squared-Kronecker-sum
    quadratic minus the diagonal-grid logdet). The l1 penalty is excluded;
    it is handled by soft-thresholding, not differentiation. Returns
    (value, grads) with grads[k] shaped like factor k; gradients are exact
    along symmetric perturbation directions, which is how the solvers move.

    s_or_data is a dense (d, d) sample covariance or a tensor dataset. The
    same building blocks as the solvers are used (partial traces for
    teralasso, mode unfoldings for sg_palm on samples), so finite-difference
    agreement here validates the steps the solvers actually take.
    """
    method = canonical_method(method)
    fs = _factor_list(factors)
    fdims = tuple(f.shape[0] for f in fs)
    if dims is not None and tuple(dims) != fdims:
        raise ValueError(f"dims {dims} disagree with factor sizes {fdims}")
    dims = fdims
    d = int(np.prod(dims))
    kk = len(dims)
    kind, payload = _cov_or_vecs(s_or_data, d, dims)

    if method == "teralasso":
        if kind == "cov":
            ts = [partial_trace(payload, k, dims) for k in range(kk)]
        else:
            n = payload.shape[0]
            ts = []
            for k in range(kk):
                t = np.zeros((dims[k], dims[k]))
                for row in payload:
                    v = unfold(row.reshape(dims, order="F"), k)
                    t += v @ v.T
                ts.append(t / n)
        vals, vecs = [], []
        for f in fs:
            w, u = np.linalg.eigh((f + f.T) / 2.0)
            vals.append(w)
            vecs.append(u)
        ld = _ks_logdet(vals)
        if ld is None:
            raise np.linalg.LinAlgError("Kronecker sum is not PD")
        value = sum(float(np.sum(t * f)) for t, f in zip(ts, fs)) - ld
        grids = _cosum_grids(vals)
        grads = []
        for k in range(kk):
            m = (1.0 / (vals[k][:, None] + grids[k][None, :])).sum(axis=1)
            grads.append(ts[k] - (vecs[k] * m) @ vecs[k].T)
        return value, grads

    if method != "sg_palm":
        raise ValueError(f"no smooth part defined for {method!r}")

    diags = [np.diag(f).copy() for f in fs]
    ld = _diag_logdet(diags)
    if ld is None:
        raise np.linalg.LinAlgError("diagonal Kronecker sum is not PD")
    if kind == "vecs":
        n = payload.shape[0]
        xs = np.moveaxis(
            payload.T.reshape(tuple(dims) + (n,), order="F"), -1, 0
        )
        ys = np.zeros_like(xs)
        for k, f in enumerate(fs):
            ys += mode_k_product(xs, f, k + 1)
        value = float(np.sum(ys * ys)) / n - ld
        grads = []
        for k in range(kk):
            ux = unfold(xs, k + 1)
            uy = unfold(ys, k + 1)
            g = (ux @ uy.T + uy @ ux.T) / n
            cosums = _diag_grids(diags, k)
            m = (1.0 / (diags[k][:, None] + cosums[None, :])).sum(axis=1)
            g[np.diag_indices_from(g)] -= m
            grads.append(g)
        return value, grads

    q = StructuredMatrix.kron_sum(fs).materialize()
    value = float(np.trace(payload @ q @ q)) - ld
    b = payload @ q + q @ payload
    grads = []
    for k in range(kk):
        g = partial_trace(b, k, dims)
        cosums = _diag_grids(diags, k)
        m = (1.0 / (diags[k][:, None] + cosums[None, :])).sum(axis=1)
        g[np.diag_indices_from(g)] -= m
        grads.append(g)
    return value, grads
