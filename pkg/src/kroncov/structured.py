"""Structured symmetric matrices built from per-mode factors.

A :class:`FactorSet` lists one square symmetric factor per tensor mode,
mode 1 first. Factor k acts on mode k of a tensor stored in colexicographic
vec order, so the flat-matrix realization places the mode-1 factor as the
fastest (rightmost) Kronecker block:

    materialize([F1, ..., FK]) = kron(FK, ..., kron(F2, F1))

All dense reference computations in the test-suite use the same realization.
Matrix-vector products never materialize anything; they run as mode-k
products on the reshaped operand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .multiway import mode_k_product, unvec, vec_tensor
from .validation import as_float_array, check_dims, check_mode, check_symmetric

# materialize() refuses to build dense matrices beyond this side length;
# structured applications stay available at any size
DENSE_CAP = 4096

KINDS = ("kron_product", "kron_sum", "squared_kron_sum", "dense")

NORMALIZATIONS = ("none", "trace", "frobenius")


@dataclass
class FactorSet:
    """Ordered per-mode square symmetric factors plus a normalization flag.

    normalization records which gauge the factors are reported in:
    ``trace`` fixes trace(F_k) = d_k for every mode but the last,
    ``frobenius`` fixes ||F_k||_F = sqrt(d_k) likewise, and the residual
    scale is absorbed by the last factor. ``none`` makes no promise.
    """

    factors: list = field(default_factory=list)
    normalization: str = "none"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(
                f"normalization must be one of {NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        self.factors = [
            check_symmetric(f, name=f"factor[{k}]")
            for k, f in enumerate(self.factors)
        ]
        if not self.factors:
            raise ValueError("FactorSet needs at least one factor")

    @property
    def dims(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def d(self):
        return int(np.prod(self.dims))

    @property
    def n_modes(self):
        return len(self.factors)

    def copy(self):
        return FactorSet([f.copy() for f in self.factors], self.normalization)

    def normalized(self, normalization="trace"):
        """Return a gauge-fixed copy; the product of scales is preserved.

        For ``trace`` the Kronecker-product realization is unchanged; the
        per-factor scale is moved into the last factor. Degenerate factors
        (zero trace or norm) raise.
        """
        if normalization == "none":
            return self.copy()
        if normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {normalization!r}")
        out = [f.copy() for f in self.factors]
        carry = 1.0
        for k in range(len(out) - 1):
            dk = out[k].shape[0]
            if normalization == "trace":
                scale = np.trace(out[k]) / dk
            else:
                scale = np.linalg.norm(out[k]) / np.sqrt(dk)
            if abs(scale) < 1e-300:
                raise ValueError(f"factor[{k}] has degenerate scale")
            out[k] /= scale
            carry *= scale
        out[-1] *= carry
        return FactorSet(out, normalization)


@dataclass
class EigKronSum:
    """Eigendecomposition of a Kronecker sum, held factor-wise.

    eigvals[k], eigvecs[k] diagonalize factor k; the spectrum of the sum is
    the grid of tuple sums, enumerated in colexicographic tuple order
    (mode-1 eigenindex fastest) to match vec ordering.
    """

    eigvals: list
    eigvecs: list

    @property
    def dims(self):
        return tuple(len(v) for v in self.eigvals)

    def spectrum(self):
        """All tuple sums as a flat vector of length prod(dims)."""
        grid = np.asarray(self.eigvals[0], dtype=float)
        for vals in self.eigvals[1:]:
            grid = np.add.outer(np.asarray(vals, dtype=float), grid)
            # outer(new, old) puts the new (slower) mode first; flatten with
            # the old modes fastest
            grid = grid.reshape(-1)
        return grid

    def logdet(self):
        s = self.spectrum()
        if s.min() <= 0:
            raise np.linalg.LinAlgError(
                f"Kronecker sum is not PD: min eigenvalue {s.min():.3e}"
            )
        return float(np.log(s).sum())

    def apply_spectral(self, fn, v):
        """Apply f(KS) v using the factor eigenbases and the tuple-sum grid."""
        dims = self.dims
        x = unvec(np.asarray(v, dtype=float), dims)
        for k, u in enumerate(self.eigvecs):
            x = mode_k_product(x, u.T, k)
        weights = fn(self.spectrum())
        x = x * unvec(weights, dims)
        for k, u in enumerate(self.eigvecs):
            x = mode_k_product(x, u, k)
        return vec_tensor(x)


def eig_kron_sum(factors):
    """Per-factor symmetric eigendecomposition of a Kronecker sum."""
    if isinstance(factors, FactorSet):
        factors = factors.factors
    vals, vecs = [], []
    for k, f in enumerate(factors):
        f = check_symmetric(f, name=f"factor[{k}]")
        w, u = np.linalg.eigh(f)
        vals.append(w)
        vecs.append(u)
    return EigKronSum(vals, vecs)


def _embed_dense(factor, mode, dims):
    """Dense I x ... x factor x ... x I with factor at the given mode."""
    mats = [np.eye(d) for d in dims]
    mats[mode] = factor
    # rightmost kron block is mode 1
    return reduce(np.kron, reversed(mats))


class StructuredMatrix:
    """A symmetric d x d operator in one of four representations.

    kinds: ``kron_product`` (product over modes), ``kron_sum`` (sum of
    identity embeddings), ``squared_kron_sum`` (the square of the latter),
    and ``dense``. Construction symmetrizes inputs and rejects asymmetry
    beyond 1e-12 relative.
    """

    def __init__(self, kind, factors=None, dense=None, _copy=True):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        self.kind = kind
        if kind == "dense":
            if dense is None:
                raise ValueError("dense kind requires a matrix")
            dense = as_float_array(dense, "dense")
            if _copy:
                dense = check_symmetric(dense, name="dense")
            self.dense = dense
            self.factors = None
        else:
            if factors is None:
                raise ValueError(f"{kind} requires factors")
            if not isinstance(factors, FactorSet):
                factors = FactorSet(list(factors))
            self.factors = factors
            self.dense = None

    # constructors -------------------------------------------------------

    @classmethod
    def kron_product(cls, factors):
        return cls("kron_product", factors=factors)

    @classmethod
    def kron_sum(cls, factors):
        return cls("kron_sum", factors=factors)

    @classmethod
    def squared_kron_sum(cls, factors):
        return cls("squared_kron_sum", factors=factors)

    @classmethod
    def from_dense(cls, m):
        return cls("dense", dense=m)

    # shape --------------------------------------------------------------

    @property
    def dims(self):
        if self.kind == "dense":
            return (self.dense.shape[0],)
        return self.factors.dims

    @property
    def d(self):
        if self.kind == "dense":
            return self.dense.shape[0]
        return self.factors.d

    @property
    def shape(self):
        return (self.d, self.d)

    # operations ---------------------------------------------------------

    def apply(self, v):
        """Matrix-vector (or matrix-matrix, column-wise) product."""
        v = as_float_array(v, "operand")
        single = v.ndim == 1
        if single:
            v = v[:, None]
        if v.shape[0] != self.d:
            raise ValueError(
                f"operand has leading size {v.shape[0]}, operator is d={self.d}"
            )
        if self.kind == "dense":
            out = self.dense @ v
        else:
            cols = [self._apply_vec(v[:, j]) for j in range(v.shape[1])]
            out = np.stack(cols, axis=1)
        return out[:, 0] if single else out

    def _apply_vec(self, v):
        dims = self.dims
        fs = self.factors.factors
        if self.kind == "kron_product":
            x = unvec(v, dims)
            for k, f in enumerate(fs):
                x = mode_k_product(x, f, k)
            return vec_tensor(x)
        if self.kind == "kron_sum":
            x = unvec(v, dims)
            acc = np.zeros_like(x)
            for k, f in enumerate(fs):
                acc += mode_k_product(x, f, k)
            return vec_tensor(acc)
        # squared kron sum: apply the sum twice
        inner = StructuredMatrix("kron_sum", factors=self.factors)
        return inner._apply_vec(inner._apply_vec(v))

    def materialize(self):
        """Dense realization; refuses sides beyond DENSE_CAP."""
        if self.kind == "dense":
            return self.dense.copy()
        if self.d > DENSE_CAP:
            raise ValueError(
                f"refusing to materialize d={self.d} > dense cap {DENSE_CAP}; "
                "use apply() for structured operations"
            )
        dims = self.dims
        fs = self.factors.factors
        if self.kind == "kron_product":
            return reduce(np.kron, reversed(fs))
        ks = np.zeros((self.d, self.d))
        for k, f in enumerate(fs):
            ks += _embed_dense(f, k, dims)
        if self.kind == "kron_sum":
            return ks
        return ks @ ks

    def diagonal_factors(self):
        """FactorSet of the factor diagonals (as diagonal matrices)."""
        if self.kind == "dense":
            raise ValueError("dense operators have no factor diagonals")
        return FactorSet(
            [np.diag(np.diag(f)) for f in self.factors.factors],
            self.factors.normalization,
        )

    def __repr__(self):
        if self.kind == "dense":
            return f"StructuredMatrix(dense, d={self.d})"
        return f"StructuredMatrix({self.kind}, dims={self.dims})"


def apply(structured, v):
    """Functional alias for :meth:`StructuredMatrix.apply`."""
    return structured.apply(v)


def partial_trace(m, mode, dims):
    """Contract all modes but one out of a d x d matrix.

    For M acting on vec'd tensors with the given dims, returns the d_k x d_k
    matrix P with P[a, b] = sum over co-indices of M at mode-k positions
    (a, b). It is the adjoint of the identity embedding:
    <partial_trace(M, k), A> = <M, I x ... x A x ... x I>.
    """
    dims = check_dims(dims)
    mode = check_mode(mode, len(dims))
    d = int(np.prod(dims))
    m = as_float_array(m, "matrix")
    if m.shape != (d, d):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
    kk = len(dims)
    t = m.reshape(dims + dims, order="F")
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * kk + 2 > len(letters):
        raise ValueError("too many modes")
    row = list(letters[:kk])
    col = list(letters[:kk])
    row[mode] = "y"
    col[mode] = "z"
    spec = "".join(row) + "".join(col) + "->yz"
    return np.einsum(spec, t)


def rearrange(s, d1, d2):
    """Kronecker rearrangement of a (d1*d2) x (d1*d2) matrix.

    d1 is the size of the slow (leftmost) Kronecker block. The result R(S)
    has shape (d1^2, d2^2) and satisfies R(kron(A, B)) = vec(A) vec(B)^T
    with column-major vecs; it is a linear isometry in Frobenius norm.
    """
    d1, d2 = int(d1), int(d2)
    s = as_float_array(s, "matrix")
    if s.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"matrix shape {s.shape} incompatible with ({d1},{d2})")
    t = s.reshape(d1, d2, d1, d2)
    # rows ordered (j slow, i fast) = vec of the slow factor, likewise columns
    return t.transpose(2, 0, 3, 1).reshape(d1 * d1, d2 * d2)


def rearrange_inverse(m, d1, d2):
    """Inverse of :func:`rearrange`."""
    d1, d2 = int(d1), int(d2)
    m = as_float_array(m, "matrix")
    if m.shape != (d1 * d1, d2 * d2):
        raise ValueError(f"matrix shape {m.shape} incompatible with ({d1},{d2})")
    t = m.reshape(d1, d1, d2, d2)
    return t.transpose(1, 3, 0, 2).reshape(d1 * d2, d1 * d2)
