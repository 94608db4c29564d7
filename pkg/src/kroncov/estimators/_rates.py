"""Sample-size-driven regularization schedules.

Each rule maps (dims, n) to per-mode penalty levels up to a user constant C,
following the high-dimensional consistency scalings of the respective
estimators. d denotes prod(dims).
"""

from __future__ import annotations

import math

from ..validation import check_dims

RATE_RULES = ("glasso", "kpca", "tlasso", "teralasso", "sg_palm")


def lambda_from_rate(method, dims, n, c=1.0):
    """Per-mode penalties lambda_k = c * rate_k(dims, n).

    Rules:
      glasso, kpca   sqrt(log d / n), one shared value
      tlasso         sqrt(log d_k / (n d))
      teralasso      sqrt(log d / (n * prod_{j != k} d_j))
      sg_palm        sqrt(d_k log d / n)

    Returns a list with one value per mode (a single-element list for the
    unstructured rules so calling code can stay uniform).
    """
    dims = check_dims(dims)
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    c = float(c)
    d = 1
    for dk in dims:
        d *= dk
    logd = math.log(d)
    if method in ("glasso", "kpca"):
        return [c * math.sqrt(logd / n)]
    if method == "tlasso":
        return [c * math.sqrt(math.log(dk) / (n * d)) for dk in dims]
    if method == "teralasso":
        return [c * math.sqrt(logd * dk / (n * d)) for dk in dims]
    if method == "sg_palm":
        return [c * math.sqrt(dk * logd / n) for dk in dims]
    raise ValueError(f"unknown rate rule {method!r}, expected {RATE_RULES}")
