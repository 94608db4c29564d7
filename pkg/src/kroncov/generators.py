"""Synthetic processes with known sparse structure.

Each builder assembles the sparse linear operator L of a discretized
physical process under homogeneous Dirichlet boundaries. Data are driven by
white noise W: solving L u = vec(W) per replicate yields one multiway sample,
and the implied precision of vec(U) is sigma_w^{-2} L^T L.

All Kronecker embeddings are mode-paired (factor k acts on tensor mode k,
mode 1 fastest in vec order); the time mode is always last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .multiway import MultiwayTensor
from .structured import StructuredMatrix, eig_kron_sum

# explicit sparse precision (and support pattern) is only assembled up to this
# total dimension; beyond it GroundTruth keeps the operator alone
PRECISION_CAP = 20000

PROCESS_NAMES = ("poisson2d", "poisson_ar1", "convection_diffusion")


def laplacian_1d(n):
    """Negated 1-D Dirichlet Laplacian: tridiagonal (-1, 2, -1). PD."""
    if n < 1:
        raise ValueError("n must be positive")
    return sp.diags_array(
        [-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)],
        offsets=[-1, 0, 1],
        format="csr",
    )


def difference_1d(n):
    """Backward-difference operator: lower bidiagonal (1 diag, -1 sub)."""
    if n < 1:
        raise ValueError("n must be positive")
    return sp.diags_array(
        [-np.ones(n - 1), np.ones(n)], offsets=[-1, 0], format="csr"
    )


def ar1_bidiagonal(n, a):
    """AR(1) innovation operator: upper bidiagonal (1 diag, -a super).

    Requires |a| < 1 so the recursion z_t = a z_{t-1} + w_t is stable.
    """
    if n < 1:
        raise ValueError("n must be positive")
    a = float(a)
    if abs(a) >= 1:
        raise ValueError(f"AR(1) coefficient must satisfy |a| < 1, got {a}")
    return sp.diags_array(
        [np.ones(n), -a * np.ones(n - 1)], offsets=[0, 1], format="csr"
    )


def _embed(matrix, mode, dims):
    """Sparse identity embedding of a factor at one mode (mode 1 fastest)."""
    out = sp.csr_array(matrix)
    for j in range(mode):
        out = sp.kron(out, sp.eye_array(dims[j]), format="csr")
    for j in range(mode + 1, len(dims)):
        out = sp.kron(sp.eye_array(dims[j]), out, format="csr")
    return out


@dataclass
class ProcessSpec:
    """Parameters selecting and sizing one synthetic process."""

    name: str
    dims: tuple = (8, 8)
    n_steps: int = 50
    ar_coeff: float = -0.5
    diffusion: float = 0.05
    convection: float = 0.01
    dt: float = 1.0
    h: float = 1.0
    sigma_w: float = 0.1

    def __post_init__(self):
        if self.name not in PROCESS_NAMES:
            raise ValueError(
                f"unknown process {self.name!r}, expected one of {PROCESS_NAMES}"
            )
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 2 or any(d < 1 for d in self.dims):
            raise ValueError("dims must be two positive spatial sizes")
        if self.sigma_w <= 0:
            raise ValueError("sigma_w must be positive")


@dataclass
class GroundTruth:
    """Operator, implied precision, and support of one synthetic process."""

    spec: ProcessSpec
    dims: tuple
    operator: sp.spmatrix
    precision: sp.spmatrix | None = None
    support: sp.spmatrix | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d(self):
        return int(np.prod(self.dims))


def _finish(spec, dims, operator, meta=None):
    operator = sp.csr_array(operator)
    d = operator.shape[0]
    precision = support = None
    if d <= PRECISION_CAP:
        precision = (operator.T @ operator).tocsr() / spec.sigma_w**2
        pattern = abs(operator).T @ abs(operator)  # structural, no cancellation
        support = (pattern > 0).tocsr()
    return GroundTruth(
        spec=spec,
        dims=dims,
        operator=operator,
        precision=precision,
        support=support,
        meta=meta or {},
    )


def build_poisson_2d(spec):
    """Steady 2-D Poisson operator: Kronecker sum of 1-D Laplacians."""
    d1, d2 = spec.dims
    dims = (d1, d2)
    op = _embed(laplacian_1d(d1), 0, dims) + _embed(laplacian_1d(d2), 1, dims)
    return _finish(spec, dims, op)


def build_poisson_ar1(spec):
    """Poisson source field evolving as an AR(1) in time.

    Per frame the spatial operator maps state to source; across frames the
    sources follow z_t = a z_{t-1} + w_t, giving the operator
    kron(B^T, spatial) with the time mode slowest.
    """
    d1, d2 = spec.dims
    t = spec.n_steps
    if t < 1:
        raise ValueError("n_steps must be positive")
    sdims = (d1, d2)
    spatial = _embed(laplacian_1d(d1), 0, sdims) + _embed(
        laplacian_1d(d2), 1, sdims
    )
    b = ar1_bidiagonal(t, spec.ar_coeff)
    op = sp.kron(b.T, spatial, format="csr")
    return _finish(spec, (d1, d2, t), op)


def build_convection_diffusion(spec):
    """Implicit-Euler convection-diffusion operator on a space-time grid.

    L = (1/dt) (time backward difference)
      + (diffusion/h^2) (1-D Laplacians on both spatial modes)
      + (convection/(2h)) (backward differences on both spatial modes)

    with zero initial history built into the first time row.
    """
    d1, d2 = spec.dims
    t = spec.n_steps
    if t < 1:
        raise ValueError("n_steps must be positive")
    dims = (d1, d2, t)
    op = _embed(difference_1d(t) / spec.dt, 2, dims)
    op = op + _embed(laplacian_1d(d1) * (spec.diffusion / spec.h**2), 0, dims)
    op = op + _embed(laplacian_1d(d2) * (spec.diffusion / spec.h**2), 1, dims)
    op = op + _embed(
        difference_1d(d1) * (spec.convection / (2 * spec.h)), 0, dims
    )
    op = op + _embed(
        difference_1d(d2) * (spec.convection / (2 * spec.h)), 1, dims
    )
    return _finish(spec, dims, op)


_BUILDERS = {
    "poisson2d": build_poisson_2d,
    "poisson_ar1": build_poisson_ar1,
    "convection_diffusion": build_convection_diffusion,
}


def build_process(spec):
    """Dispatch to the named builder."""
    return _BUILDERS[spec.name](spec)


def _replicate_rng(seed, index):
    # counter-based generator keyed by (seed, replicate): substreams are
    # independent and order-insensitive
    return np.random.Generator(np.random.Philox(key=[int(seed), int(index)]))


def sample_process(truth, n, seed):
    """Draw n replicates by solving L u = w per replicate.

    w has iid N(0, sigma_w^2) entries from a per-replicate counter-based
    substream. The sparse solve is checked against a 1e-10 relative residual.
    Returns a list of MultiwayTensor with the truth's dims.
    """
    if n < 1:
        raise ValueError("need at least one replicate")
    lu = spla.splu(truth.operator.tocsc())
    d = truth.operator.shape[0]
    out = []
    for i in range(n):
        rng = _replicate_rng(seed, i)
        w = truth.spec.sigma_w * rng.standard_normal(d)
        u = lu.solve(w)
        resid = np.linalg.norm(truth.operator @ u - w)
        if resid > 1e-10 * max(np.linalg.norm(w), 1e-300):
            raise RuntimeError(
                f"sparse solve residual {resid:.3e} exceeds tolerance for "
                f"replicate {i}"
            )
        out.append(MultiwayTensor(truth.dims, u))
    return out


def sample_gaussian(precision, n, seed, dims=None):
    """Draw n samples from N(0, precision^{-1}) for a structured precision.

    Used by matched-model experiments where the truth is exactly a Kronecker
    product, Kronecker sum, or squared Kronecker sum. Returns a list of
    MultiwayTensor (dims default to the factor dims).
    """
    if not isinstance(precision, StructuredMatrix):
        raise TypeError("precision must be a StructuredMatrix")
    if n < 1:
        raise ValueError("need at least one sample")
    tdims = tuple(dims) if dims is not None else precision.dims
    d = precision.d

    if precision.kind == "dense":
        vals, vecs = np.linalg.eigh(precision.dense)
        if vals.min() <= 0:
            raise np.linalg.LinAlgError("precision is not PD")
        half = vecs * (1.0 / np.sqrt(vals))

        def draw(z):
            return half @ (vecs.T @ z)
    elif precision.kind == "kron_product":
        roots = []
        for f in precision.factors.factors:
            vals, vecs = np.linalg.eigh(f)
            if vals.min() <= 0:
                raise np.linalg.LinAlgError("factor is not PD")
            roots.append((vecs * (1.0 / np.sqrt(vals))) @ vecs.T)
        prod = StructuredMatrix.kron_product(roots)

        def draw(z):
            return prod.apply(z)
    else:
        eig = eig_kron_sum(precision.factors)
        spectrum = eig.spectrum()
        if spectrum.min() <= 0:
            raise np.linalg.LinAlgError("Kronecker sum is not PD")
        power = -0.5 if precision.kind == "kron_sum" else -1.0

        def draw(z):
            return eig.apply_spectral(lambda s: s**power, z)

    out = []
    for i in range(n):
        rng = _replicate_rng(seed, i)
        z = rng.standard_normal(d)
        out.append(MultiwayTensor(tdims, draw(z)))
    return out
