"""On-disk formats: MWT1 tensor files, triplet sidecars, PGM heatmaps.

MWT1 is a little-endian binary layout for one dense multiway tensor:

    bytes 0:4   magic ``MWT1``
    byte  4     K, the tensor order (uint8)
    next 8K     mode sizes, uint64
    rest        prod(dims) float64 values in colexicographic order

The triplet sidecar is line-oriented text for a sparse matrix: a header
``rows cols nnz`` followed by one ``i j value`` line per entry, 0-based.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .multiway import MultiwayTensor

MAGIC = b"MWT1"


def write_mwt(path, tensor):
    """Write a MultiwayTensor (or ndarray) as an MWT1 file."""
    if not isinstance(tensor, MultiwayTensor):
        tensor = MultiwayTensor.from_array(np.asarray(tensor, dtype=float))
    dims = np.asarray(tensor.dims, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint8(len(dims)).tobytes())
        fh.write(dims.tobytes())
        fh.write(tensor.values.astype("<f8").tobytes())


def read_mwt(path):
    """Read an MWT1 file, validating magic, order, and length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 5 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an MWT1 file (bad magic)")
    order = raw[4]
    if order < 1:
        raise ValueError(f"{path}: tensor order must be >= 1")
    head = 5 + 8 * order
    if len(raw) < head:
        raise ValueError(f"{path}: truncated MWT1 header")
    dims = np.frombuffer(raw[5:head], dtype="<u8")
    count = int(np.prod(dims))
    expected = head + 8 * count
    if len(raw) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes for dims "
            f"{tuple(int(d) for d in dims)}, found {len(raw)}"
        )
    values = np.frombuffer(raw[head:], dtype="<f8").astype(np.float64)
    return MultiwayTensor(tuple(int(d) for d in dims), values)


def write_triplets(path, matrix):
    """Write a sparse (or dense) matrix as a 0-based triplet text file."""
    coo = matrix.tocoo() if sp.issparse(matrix) else sp.coo_array(np.asarray(matrix, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


def read_triplets(path):
    """Read a triplet text file into a CSR matrix."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad triplet header")
        rows, cols, nnz = (int(x) for x in header)
        i = np.empty(nnz, dtype=np.int64)
        j = np.empty(nnz, dtype=np.int64)
        v = np.empty(nnz, dtype=np.float64)
        for n in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ValueError(f"{path}: truncated at entry {n}")
            i[n], j[n], v[n] = int(parts[0]), int(parts[1]), float(parts[2])
    return sp.coo_array((v, (i, j)), shape=(rows, cols)).tocsr()


def write_pgm(path, matrix, zero_is_white=True, threshold=None):
    """Render matrix magnitudes as a binary (P5) PGM image.

    With ``zero_is_white`` exact zeros map to white (255) and nonzero
    magnitudes are scaled linearly over their own range onto [254, 0], so
    white is reserved for zeros and the largest magnitude is black. A single
    repeated nonzero magnitude renders black. Without ``zero_is_white`` the
    plain ramp 0 -> white, max -> black is used for all entries.
    ``threshold`` zeroes magnitudes <= threshold first.
    """
    m = np.abs(np.asarray(matrix, dtype=float))
    if m.ndim != 2:
        raise ValueError("heatmap input must be a matrix")
    if threshold is not None:
        m = np.where(m <= threshold, 0.0, m)
    gray = np.full(m.shape, 255, dtype=np.uint8)
    nz = m > 0
    if nz.any():
        lo = m[nz].min()
        hi = m[nz].max()
        if zero_is_white:
            if hi == lo:
                gray[nz] = 0
            else:
                ramp = 254.0 * (hi - m[nz]) / (hi - lo)
                gray[nz] = np.clip(np.rint(ramp), 0, 254).astype(np.uint8)
        else:
            ramp = 255.0 * (1.0 - m / hi)
            gray = np.clip(np.rint(ramp), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode())
        fh.write(gray.tobytes())
