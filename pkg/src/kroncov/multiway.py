"""Dense multiway tensors and the mode-wise operations built on them.

Conventions used throughout the package:

* ``vec`` is colexicographic: the first (mode-1) index varies fastest.
  For an ndarray ``a`` of shape ``dims`` this is ``a.flatten(order="F")``.
* ``unfold(x, k)`` arranges mode-k fibers as columns; the columns run over
  the co-mode indices with the lowest remaining mode varying fastest.
* mode indices are 0-based in code.
"""

from __future__ import annotations

import warnings

import numpy as np

from .validation import as_float_array, check_dims, check_mode, check_square


class MultiwayTensor:
    """A dense order-K tensor stored flat in colexicographic order.

    Parameters
    ----------
    dims : tuple of int
        Mode sizes (d_1, ..., d_K).
    values : ndarray, shape (prod(dims),)
        Flat storage, first index fastest.
    """

    __slots__ = ("dims", "values")

    def __init__(self, dims, values):
        self.dims = check_dims(dims)
        values = as_float_array(values, "values").ravel()
        if values.size != int(np.prod(self.dims)):
            raise ValueError(
                f"flat storage has {values.size} entries, dims {self.dims} "
                f"require {int(np.prod(self.dims))}"
            )
        self.values = values

    @classmethod
    def from_array(cls, arr):
        arr = as_float_array(arr, "tensor")
        return cls(arr.shape, arr.flatten(order="F"))

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def size(self):
        return self.values.size

    @property
    def array(self):
        """The tensor as an ndarray of shape ``dims``."""
        return self.values.reshape(self.dims, order="F")

    def reshape(self, dims):
        """Reinterpret the same flat storage under new mode sizes."""
        dims = check_dims(dims)
        if int(np.prod(dims)) != self.size:
            raise ValueError(f"cannot reshape {self.dims} into {dims}")
        return MultiwayTensor(dims, self.values)

    def __repr__(self):
        return f"MultiwayTensor(dims={self.dims})"


def _as_mode_array(x):
    """Return (ndarray of shape dims, dims) from a tensor or ndarray."""
    if isinstance(x, MultiwayTensor):
        return x.array, x.dims
    arr = as_float_array(x, "tensor")
    return arr, arr.shape


def vec_tensor(x):
    """Colexicographic vectorization, first index fastest."""
    arr, _ = _as_mode_array(x)
    return arr.flatten(order="F")


def unvec(v, dims):
    """Inverse of :func:`vec_tensor`."""
    dims = check_dims(dims)
    v = as_float_array(v, "vector").ravel()
    if v.size != int(np.prod(dims)):
        raise ValueError(f"vector of length {v.size} does not match dims {dims}")
    return v.reshape(dims, order="F")


def unfold(x, mode):
    """Mode-k matricization with mode-k fibers as columns.

    Returns an array of shape (d_k, prod of the other dims); column j
    enumerates the co-mode multi-indices with the lowest co-mode fastest.
    """
    arr, dims = _as_mode_array(x)
    mode = check_mode(mode, len(dims))
    return np.moveaxis(arr, mode, 0).reshape(dims[mode], -1, order="F")


def refold(m, mode, dims):
    """Inverse of :func:`unfold` for a matrix of shape (d_k, d/d_k)."""
    dims = check_dims(dims)
    mode = check_mode(mode, len(dims))
    rest = tuple(d for i, d in enumerate(dims) if i != mode)
    arr = np.asarray(m).reshape((dims[mode],) + rest, order="F")
    return np.moveaxis(arr, 0, mode)


def mode_k_product(x, m, mode):
    """Multiply mode ``mode`` of the tensor by the matrix ``m``.

    The result has d_k replaced by m.shape[0]; all other modes keep their
    size and ordering.
    """
    arr, dims = _as_mode_array(x)
    mode = check_mode(mode, len(dims))
    m = as_float_array(m, "factor")
    if m.ndim != 2 or m.shape[1] != dims[mode]:
        raise ValueError(
            f"factor shape {m.shape} does not act on mode {mode} of size "
            f"{dims[mode]}"
        )
    out_dims = list(dims)
    out_dims[mode] = m.shape[0]
    y = m @ unfold(arr, mode)
    return refold(y, mode, tuple(out_dims))


def _stack_vecs(data):
    """Coerce a dataset to (vecs of shape (N, d), dims).

    Accepts a list of MultiwayTensor, a list/array of ndarrays whose shape is
    the tensor dims, or an ndarray of shape (N, *dims).
    """
    if isinstance(data, np.ndarray):
        data = as_float_array(data, "data")
        if data.ndim < 2:
            raise ValueError("dataset must have a leading sample axis")
        dims = data.shape[1:]
        # per-sample colexicographic flatten: reverse the mode axes, then the
        # C-order reshape makes mode 1 the fastest index
        axes = (0,) + tuple(range(data.ndim - 1, 0, -1))
        vecs = data.transpose(axes).reshape(data.shape[0], -1)
        return vecs, check_dims(dims)
    seq = list(data)
    if not seq:
        raise ValueError("dataset is empty")
    first = seq[0]
    if isinstance(first, MultiwayTensor):
        dims = first.dims
        for t in seq:
            if t.dims != dims:
                raise ValueError("all tensors in a dataset must share dims")
        return np.stack([t.values for t in seq]), dims
    arrs = [as_float_array(a, "sample") for a in seq]
    dims = arrs[0].shape
    for a in arrs:
        if a.shape != dims:
            raise ValueError("all tensors in a dataset must share dims")
    return np.stack([a.flatten(order="F") for a in arrs]), check_dims(dims)


def sample_covariance(data, mean_subtract=True):
    """Dense sample covariance of vectorized tensors, 1/N normalized.

    With a single sample, mean subtraction would return the zero matrix, so
    it is disabled with a warning.
    """
    vecs, _ = _stack_vecs(data)
    n = vecs.shape[0]
    if mean_subtract and n == 1:
        warnings.warn(
            "single-sample dataset: mean subtraction disabled to avoid a "
            "zero covariance",
            stacklevel=2,
        )
        mean_subtract = False
    if mean_subtract:
        vecs = vecs - vecs.mean(axis=0)
    return (vecs.T @ vecs) / n


def spd_sqrt(m, floor=0.0, name="whitener"):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below zero are clamped to ``floor``; values below -1e-10
    relative to the largest magnitude raise, since the input is then not a
    usable whitener.
    """
    m = check_square(m, name)
    m = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(m)
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    if vals.min() < -1e-10 * scale:
        raise ValueError(
            f"{name} has negative eigenvalue {vals.min():.3e}, not PSD"
        )
    vals = np.clip(vals, floor, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def mode_gram(data, mode, whiteners=None, mean_subtract=True):
    """Whitened mode-k Gram matrix of a tensor dataset.

    Every co-mode j is multiplied by ``spd_sqrt(whiteners[j])`` before the
    mode-k unfolding V_n is formed; the Gram is

        S_k = d_k / (N * d) * sum_n V_n V_n^T.

    ``whiteners`` is a per-mode list (entry ``mode`` is ignored; None means
    identity). With identity whiteners this reduces to the scaled unfolding
    covariance.
    """
    vecs, dims = _stack_vecs(data)
    mode = check_mode(mode, len(dims))
    n, d = vecs.shape
    if mean_subtract and n == 1:
        warnings.warn(
            "single-sample dataset: mean subtraction disabled to avoid a "
            "zero mode Gram",
            stacklevel=2,
        )
        mean_subtract = False
    if mean_subtract:
        vecs = vecs - vecs.mean(axis=0)

    roots = [None] * len(dims)
    if whiteners is not None:
        if len(whiteners) != len(dims):
            raise ValueError("one whitener per mode expected (None allowed)")
        for j, w in enumerate(whiteners):
            if j == mode or w is None:
                continue
            w = check_square(w, f"whitener[{j}]")
            if w.shape[0] != dims[j]:
                raise ValueError(
                    f"whitener[{j}] has size {w.shape[0]}, mode needs {dims[j]}"
                )
            roots[j] = spd_sqrt(w, name=f"whitener[{j}]")

    dk = dims[mode]
    gram = np.zeros((dk, dk))
    for row in vecs:
        x = row.reshape(dims, order="F")
        for j, r in enumerate(roots):
            if r is not None:
                x = mode_k_product(x, r, j)
        v = unfold(x, mode)
        gram += v @ v.T
    gram *= dk / (n * d)
    return (gram + gram.T) / 2.0
