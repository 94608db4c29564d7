"""Metrics, support extraction, and precision-driven linear prediction.

The forward predictor reads a fitted pq x pq precision over p frames of
dimension q and predicts the last frame from the p-1 before it:

    y_hat = -omega_22^{-1} omega_21 @ history,

the Gaussian conditional mean under that precision. Frames must occupy
contiguous index blocks with the frame index slowest (time-major vec order).
Tensors whose time mode is first (fastest) are handled by an explicit index
permutation before partitioning; see predictor_blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structured import StructuredMatrix
from .validation import as_float_array, check_square

SUPPORT_THRESHOLD = 1e-6
FROB_ERROR_FLOOR = -30.0


def _dense_of(m):
    if isinstance(m, StructuredMatrix):
        return m.materialize()
    return as_float_array(m, "matrix")


def frob_error(est, truth):
    """Natural log of the normalized Frobenius error ||est - truth|| / ||truth||.

    Exact recovery is clamped at -30 so result tables stay finite.
    """
    est = _dense_of(est)
    truth = as_float_array(truth, "truth")
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValueError("truth has zero Frobenius norm")
    rel = float(np.linalg.norm(est - truth)) / denom
    if rel <= np.exp(FROB_ERROR_FLOOR):
        return FROB_ERROR_FLOOR
    return float(np.log(rel))


@dataclass(frozen=True)
class SupportPattern:
    """Off-diagonal sparsity pattern of a symmetric matrix.

    Pairs are stored ordered, (i, j) and (j, i) both present, so counts over
    the d(d-1) ordered off-diagonal slots are direct.
    """

    dim: int
    offdiag_nonzeros: frozenset
    threshold: float

    def __post_init__(self):
        for i, j in self.offdiag_nonzeros:
            if i == j:
                raise ValueError("support pairs must be off-diagonal")
            if (j, i) not in self.offdiag_nonzeros:
                raise ValueError("support pattern must be symmetric")


def extract_support(m, threshold=SUPPORT_THRESHOLD):
    """Entries with |m_ij| > threshold off the diagonal, symmetrized by union."""
    m = _dense_of(m)
    m = check_square(m, "matrix")
    mask = np.abs(m) > threshold
    mask |= mask.T
    np.fill_diagonal(mask, False)
    pairs = frozenset(zip(*np.nonzero(mask)))
    return SupportPattern(m.shape[0], frozenset((int(i), int(j)) for i, j in pairs),
                          float(threshold))


def mcc(est_support, true_support):
    """Matthews correlation of off-diagonal support recovery, in [-1, 1].

    Counts run over ordered off-diagonal index pairs. Degenerate marginals
    (the denominator vanishes, e.g. an all-zero or all-dense prediction)
    return 0.0 rather than raising.
    """
    if est_support.dim != true_support.dim:
        raise ValueError("support patterns have different dims")
    d = est_support.dim
    total = d * (d - 1)
    est = est_support.offdiag_nonzeros
    true = true_support.offdiag_nonzeros
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    tn = total - tp - fp - fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return float((tp * tn - fp * fn) / np.sqrt(float(denom)))


def nrmse(pred, truth):
    """Root mean squared error normalized by the range of the truth."""
    pred = as_float_array(pred, "pred").ravel()
    truth = as_float_array(truth, "truth").ravel()
    if pred.size != truth.size:
        raise ValueError("pred and truth have different lengths")
    span = float(truth.max() - truth.min())
    if span == 0.0:
        raise ValueError("truth is constant; range normalization undefined")
    return float(np.sqrt(np.mean((pred - truth) ** 2)) / span)


# forward prediction --------------------------------------------------------


@dataclass
class PredictorBlocks:
    """Partition of a pq x pq precision for last-frame prediction."""

    omega_21: np.ndarray
    omega_22: np.ndarray
    p: int
    q: int


def _time_major_perm(p, q, time_axis):
    """Index order putting the frame index slowest.

    time_axis "last" means vec order is already frame-major (within-frame
    index fastest); "first" means the frame index is fastest and position
    (t, s) sits at flat index t + p s, so frame-major order visits t + p s
    for s within t.
    """
    if time_axis == "last":
        return None
    if time_axis != "first":
        raise ValueError("time_axis must be 'first' or 'last'")
    t = np.repeat(np.arange(p), q)
    s = np.tile(np.arange(q), p)
    return t + p * s


def predictor_blocks(omega, p, q, time_axis="last"):
    """Extract (omega_21, omega_22) for predicting frame p from frames < p."""
    p, q = int(p), int(q)
    if p < 2 or q < 1:
        raise ValueError("need p >= 2 frames of dimension q >= 1")
    om = _dense_of(omega)
    om = check_square(om, "omega")
    if om.shape[0] != p * q:
        raise ValueError(f"omega side {om.shape[0]} != p*q = {p * q}")
    perm = _time_major_perm(p, q, time_axis)
    if perm is not None:
        om = om[np.ix_(perm, perm)]
    cut = (p - 1) * q
    return PredictorBlocks(
        omega_21=om[cut:, :cut].copy(),
        omega_22=om[cut:, cut:].copy(),
        p=p,
        q=q,
    )


def forward_predict(omega, history, q=None, time_axis="last"):
    """Conditional-mean forecast of the next frame from stacked history.

    omega is the fitted pq x pq precision (or ready PredictorBlocks);
    history holds the p-1 past frames. q defaults to what the sizes imply.
    The linear system is solved, never inverted, and the solve residual is
    checked against 1e-10.
    """
    history = as_float_array(history, "history").ravel()
    if isinstance(omega, PredictorBlocks):
        blocks = omega
    else:
        om = _dense_of(omega)
        om = check_square(om, "omega")
        d = om.shape[0]
        if q is None:
            q = d - history.size
        q = int(q)
        if q < 1 or d % q != 0:
            raise ValueError(f"cannot partition side {d} into frames of {q}")
        blocks = predictor_blocks(om, d // q, q, time_axis)
    if history.size != (blocks.p - 1) * blocks.q:
        raise ValueError(
            f"history has {history.size} entries, expected "
            f"{(blocks.p - 1) * blocks.q}"
        )
    rhs = blocks.omega_21 @ history
    pred = -np.linalg.solve(blocks.omega_22, rhs)
    resid = np.linalg.norm(blocks.omega_22 @ pred + rhs)
    scale = max(1.0, float(np.linalg.norm(rhs)))
    if not np.isfinite(resid) or resid > 1e-10 * scale:
        raise np.linalg.LinAlgError(
            f"prediction solve residual {resid:.3e} exceeds tolerance"
        )
    return pred


# l1-regression baseline ----------------------------------------------------


@dataclass
class LinearPredictor:
    """Per-output linear map fitted by ind_lasso."""

    coef: np.ndarray  # (q, m)

    def predict(self, history):
        h = as_float_array(history, "history")
        if h.ndim == 1:
            return self.coef @ h
        return h @ self.coef.T


def _lasso_kkt(x, resid, w, lam, n):
    g = x.T @ resid / n
    viol = np.where(
        w != 0.0, np.abs(g - lam * np.sign(w)), np.maximum(np.abs(g) - lam, 0.0)
    )
    return float(viol.max()) if viol.size else 0.0


def ind_lasso(train_histories, train_targets, lam, tol=1e-6, max_passes=2000):
    """Independent l1-penalized regressions, one per output coordinate.

    Minimizes (1/2N)||y - X w||^2 + lam ||w||_1 for each target column by
    cyclic coordinate descent, to KKT residual <= tol. No intercept is fit;
    center the data upstream when means matter. Zero-variance features get
    zero coefficients.
    """
    x = as_float_array(train_histories, "train_histories")
    y = as_float_array(train_targets, "train_targets")
    if x.ndim != 2:
        raise ValueError("train_histories must be (n_samples, m)")
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.shape[0]:
        raise ValueError("history and target sample counts differ")
    n, m = x.shape
    if n < 2:
        raise ValueError("need at least 2 training samples")
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")

    col_sq = (x * x).sum(axis=0) / n
    coef = np.zeros((y.shape[1], m))
    for out in range(y.shape[1]):
        w = coef[out]
        resid = y[:, out] - x @ w
        for _ in range(max_passes):
            for j in range(m):
                if col_sq[j] == 0.0:
                    continue
                old = w[j]
                rho = (x[:, j] @ resid) / n + col_sq[j] * old
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
                if new != old:
                    resid += x[:, j] * (old - new)
                    w[j] = new
            if _lasso_kkt(x, resid, w, lam, n) <= tol:
                break
    return LinearPredictor(coef=coef)
