"""Covariance and precision estimators with a uniform fitting surface.

Functional entry points follow the naming used across the comparison
literature (glasso, kp_ls, kpca, tlasso, teralasso, sg_palm); each also has
an estimator-style class. METHODS maps canonical names to adapters with the
uniform signature fit(data, dims, lams, cfg) -> FitResult, which is what the
benchmark harness and the CLI drive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..multiway import sample_covariance
from ._config import EstimatorConfig, FitResult
from ._data import stack_dataset
from ._glasso import GraphicalLasso, graphical_lasso
from ._kronpca import (
    KroneckerPCA,
    NearestKroneckerProduct,
    _blocks_from_dims,
    kron_pca,
    nearest_kron_product,
)
from ._objectives import (
    METHOD_KEYS,
    canonical_method,
    objective,
    smooth_gradients,
)
from ._rates import RATE_RULES, lambda_from_rate
from ._sgpalm import SGPalm, sylvester_palm
from ._teralasso import TeraLasso, tera_lasso
from ._tlasso import TensorLasso, tensor_lasso

__all__ = [
    "EstimatorConfig",
    "FitResult",
    "GraphicalLasso",
    "KroneckerPCA",
    "MethodSpec",
    "METHODS",
    "METHOD_KEYS",
    "NearestKroneckerProduct",
    "RATE_RULES",
    "SGPalm",
    "TensorLasso",
    "TeraLasso",
    "canonical_method",
    "glasso",
    "graphical_lasso",
    "kp_ls",
    "kpca",
    "kron_pca",
    "lambda_from_rate",
    "nearest_kron_product",
    "objective",
    "sg_palm",
    "smooth_gradients",
    "sylvester_palm",
    "tensor_lasso",
    "tera_lasso",
    "teralasso",
    "tlasso",
]


# spec'd operation spellings ----------------------------------------------


def glasso(s, lam, cfg=None):
    """Dense graphical lasso; see :func:`graphical_lasso`."""
    return graphical_lasso(s, lam, cfg)


def kp_ls(s, d1, d2, cfg=None):
    """Nearest single Kronecker product; see :func:`nearest_kron_product`."""
    return nearest_kron_product(s, d1, d2, cfg)


def kpca(s, d1, d2, lam, cfg=None):
    """Low-separation-rank covariance; see :func:`kron_pca`."""
    return kron_pca(s, d1, d2, lam, cfg)


def tlasso(data, dims, lams, cfg=None):
    """Kronecker-product precision flip-flop; see :func:`tensor_lasso`."""
    return tensor_lasso(data, lams, cfg, dims=dims)


def teralasso(s_or_data, dims, lams, cfg=None):
    """Kronecker-sum precision; see :func:`tera_lasso`."""
    return tera_lasso(s_or_data, lams, cfg, dims=dims)


def sg_palm(data, dims, lams, cfg=None):
    """Squared-Kronecker-sum precision; see :func:`sylvester_palm`."""
    return sylvester_palm(data, lams, cfg, dims=dims)


# uniform harness adapters -------------------------------------------------


def _scalar_lam(lams):
    return float(np.ravel(lams)[0])


def _fit_glasso(data, dims, lams, cfg):
    return graphical_lasso(sample_covariance(data), _scalar_lam(lams), cfg)


def _fit_kp_ls(data, dims, lams, cfg):
    vecs, dims = stack_dataset(data, dims)
    d1, d2 = _blocks_from_dims(dims)
    return nearest_kron_product(sample_covariance(vecs), d1, d2, cfg)


def _fit_kpca(data, dims, lams, cfg):
    vecs, dims = stack_dataset(data, dims)
    d1, d2 = _blocks_from_dims(dims)
    return kron_pca(sample_covariance(vecs), d1, d2, _scalar_lam(lams), cfg)


def _fit_tlasso(data, dims, lams, cfg):
    return tensor_lasso(data, lams, cfg, dims=dims)


def _fit_teralasso(data, dims, lams, cfg):
    return tera_lasso(data, lams, cfg, dims=dims)


def _fit_sg_palm(data, dims, lams, cfg):
    return sylvester_palm(data, lams, cfg, dims=dims)


@dataclass(frozen=True)
class MethodSpec:
    """How the harness drives one estimator.

    estimates says which side of the model the fit targets, so evaluation
    compares against the right ground truth; supports_mcc is False for
    covariance-side methods whose output carries no sparsity pattern.
    """

    name: str
    fit: object
    estimates: str  # "precision" or "covariance"
    rate_rule: str = None
    supports_mcc: bool = True


METHODS = {
    "glasso": MethodSpec("glasso", _fit_glasso, "precision", "glasso"),
    "kp_ls": MethodSpec("kp_ls", _fit_kp_ls, "covariance", None, False),
    "kpca": MethodSpec("kpca", _fit_kpca, "covariance", "kpca", False),
    "tlasso": MethodSpec("tlasso", _fit_tlasso, "precision", "tlasso"),
    "teralasso": MethodSpec(
        "teralasso", _fit_teralasso, "precision", "teralasso"
    ),
    "sg_palm": MethodSpec("sg_palm", _fit_sg_palm, "precision", "sg_palm"),
}
