"""Dataset coercion shared by the multiway estimators."""

from __future__ import annotations

import numpy as np

from ..multiway import _stack_vecs
from ..validation import check_dims


def stack_dataset(data, dims=None):
    """Coerce a dataset to (vecs (N, d), dims), honoring explicit dims.

    When dims is given it must agree with the data: shaped inputs (tensor
    lists, (N, *dims) arrays) must carry the same mode sizes, while flat
    (N, d) arrays are reinterpreted under dims.
    """
    vecs, inferred = _stack_vecs(data)
    if dims is None:
        return vecs, inferred
    dims = check_dims(dims)
    if int(np.prod(dims)) != vecs.shape[1]:
        raise ValueError(
            f"dims {dims} require {int(np.prod(dims))} entries per sample, "
            f"data has {vecs.shape[1]}"
        )
    if len(inferred) > 1 and tuple(inferred) != tuple(dims):
        raise ValueError(
            f"data is shaped with dims {inferred} but dims={dims} was passed"
        )
    return vecs, dims
