import pathlib
import struct

import numpy as np
import pytest
import scipy.sparse as sp

from kroncov.formats import (
    read_mwt,
    read_triplets,
    write_mwt,
    write_pgm,
    write_triplets,
)
from kroncov.multiway import MultiwayTensor

GOLDEN = pathlib.Path(__file__).parent / "golden"


# MWT1 -------------------------------------------------------------------------


def test_mwt_round_trip_random(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(20):
        k = int(rng.integers(1, 5))
        dims = tuple(int(rng.integers(1, 6)) for _ in range(k))
        values = rng.standard_normal(int(np.prod(dims)))
        t = MultiwayTensor(dims, values)
        path = tmp_path / f"t{i}.mwt"
        write_mwt(path, t)
        back = read_mwt(path)
        assert back.dims == dims
        np.testing.assert_array_equal(back.values, values)


def test_mwt_accepts_plain_arrays(tmp_path):
    x = np.arange(12, dtype=float).reshape(3, 4)
    path = tmp_path / "a.mwt"
    write_mwt(path, x)
    back = read_mwt(path)
    assert back.dims == (3, 4)
    np.testing.assert_array_equal(back.array, x)


def test_mwt_golden_bytes(tmp_path):
    golden = (GOLDEN / "tensor_2x3.mwt").read_bytes()
    values = np.array([0.0, 1.5, -2.25, 3.0, 1e-3, 42.0])
    t = MultiwayTensor((2, 3), values)
    path = tmp_path / "out.mwt"
    write_mwt(path, t)
    assert path.read_bytes() == golden
    back = read_mwt(GOLDEN / "tensor_2x3.mwt")
    assert back.dims == (2, 3)
    np.testing.assert_array_equal(back.values, values)


def test_mwt_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mwt"
    path.write_bytes(b"XWT1" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        read_mwt(path)


def test_mwt_rejects_zero_order(tmp_path):
    path = tmp_path / "bad.mwt"
    path.write_bytes(b"MWT1" + struct.pack("<B", 0))
    with pytest.raises(ValueError, match="order"):
        read_mwt(path)


def test_mwt_rejects_truncated_header(tmp_path):
    path = tmp_path / "bad.mwt"
    path.write_bytes(b"MWT1" + struct.pack("<B", 3) + bytes(8))
    with pytest.raises(ValueError, match="truncated"):
        read_mwt(path)


def test_mwt_rejects_length_mismatch(tmp_path):
    path = tmp_path / "bad.mwt"
    buf = b"MWT1" + struct.pack("<B", 1) + struct.pack("<Q", 3)
    buf += struct.pack("<2d", 1.0, 2.0)  # promises 3 values, carries 2
    path.write_bytes(buf)
    with pytest.raises(ValueError, match="expected"):
        read_mwt(path)


# triplet sidecars ----------------------------------------------------------------


def test_triplet_round_trip_sparse(tmp_path):
    rng = np.random.default_rng(1)
    for i in range(10):
        n = int(rng.integers(1, 8))
        dense = rng.standard_normal((n, n))
        dense[rng.random((n, n)) < 0.6] = 0.0
        path = tmp_path / f"m{i}.txt"
        write_triplets(path, sp.csr_array(dense))
        back = read_triplets(path)
        np.testing.assert_array_equal(back.toarray(), dense)


def test_triplet_values_survive_exactly(tmp_path):
    # repr-based formatting must reproduce doubles bit for bit
    vals = np.array([[1 / 3, -1e-17], [2249.9999999999995, np.pi]])
    path = tmp_path / "v.txt"
    write_triplets(path, vals)
    back = read_triplets(path).toarray()
    np.testing.assert_array_equal(back, vals)


def test_triplet_header_and_order(tmp_path):
    m = np.array([[0.0, 2.0], [3.0, 0.0]])
    path = tmp_path / "m.txt"
    write_triplets(path, m)
    lines = path.read_text().splitlines()
    assert lines[0] == "2 2 2"
    assert lines[1].startswith("0 1 ")  # row-major entry order
    assert lines[2].startswith("1 0 ")


def test_triplet_empty_matrix(tmp_path):
    path = tmp_path / "z.txt"
    write_triplets(path, np.zeros((3, 2)))
    back = read_triplets(path)
    assert back.shape == (3, 2)
    assert back.nnz == 0


def test_triplet_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 3\n")
    with pytest.raises(ValueError, match="header"):
        read_triplets(path)


def test_triplet_rejects_truncation(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2 2\n0 0 1.0\n")
    with pytest.raises(ValueError, match="truncated"):
        read_triplets(path)


# PGM heatmaps ---------------------------------------------------------------------


def test_pgm_identity_golden(tmp_path):
    path = tmp_path / "eye.pgm"
    write_pgm(path, np.eye(3))
    assert path.read_bytes() == (GOLDEN / "eye3.pgm").read_bytes()


def test_pgm_ramp_golden(tmp_path):
    path = tmp_path / "ramp.pgm"
    write_pgm(path, np.array([[0.0, 1.0], [2.0, 4.0]]))
    assert path.read_bytes() == (GOLDEN / "ramp2x2.pgm").read_bytes()


def test_pgm_reserves_white_for_zeros(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.0, 1e-9], [5.0, -5.0]]))
    body = path.read_bytes().split(b"255\n", 1)[1]
    assert body[0] == 255       # exact zero
    assert body[1] == 254       # smallest magnitude: light but not white
    assert body[2] == 0         # largest magnitude
    assert body[3] == 0         # sign is ignored


def test_pgm_plain_ramp_mode(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.0, 1.0], [2.0, 4.0]]), zero_is_white=False)
    body = path.read_bytes().split(b"255\n", 1)[1]
    assert list(body) == [255, 191, 128, 0]


def test_pgm_threshold_zeroes_small_entries(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.05, 1.0]]), threshold=0.1)
    body = path.read_bytes().split(b"255\n", 1)[1]
    assert list(body) == [255, 0]


def test_pgm_all_zero_matrix(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.zeros((2, 3)))
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    assert set(raw.split(b"255\n", 1)[1]) == {255}


def test_pgm_rejects_non_matrix(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros(4))
