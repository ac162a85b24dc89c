"""Binary container, JSON and CSV helpers."""

import struct

import numpy as np
import pytest

from podgpr.io import MAGIC, array_digest, read_container, read_csv, read_json, write_container, write_csv, write_json


def test_container_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((7, 3))
    p = tmp_path / "u.bin"
    write_container(p, a, dt=0.005, meta={"mu": [1.0, 2.0]})
    b, dt, meta = read_container(p)
    assert np.array_equal(a, b) and dt == 0.005 and meta["mu"] == [1.0, 2.0]
    assert (tmp_path / "u.bin.json").exists()


def test_container_layout_is_column_major(tmp_path):
    a = np.arange(6.0).reshape(2, 3)
    p = tmp_path / "m.bin"
    write_container(p, a)
    raw = p.read_bytes()
    magic, nr, nc, dt = struct.unpack("<8sQQd", raw[:32])
    assert (magic, nr, nc, dt) == (MAGIC, 2, 3, 0.0)
    np.testing.assert_array_equal(np.frombuffer(raw[32:], "<f8"), a.T.ravel())


def test_container_rejects_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTMAGIC" + bytes(24))
    with pytest.raises(ValueError):
        read_container(p)


def test_json_and_csv(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.float64(0.1), "a": np.arange(2)})
    assert read_json(tmp_path / "a.json") == {"a": [0, 1], "b": 0.1}
    write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1], [1 / 3, 2]])
    header, rows = read_csv(tmp_path / "a.csv")
    assert header == ["x", "y"] and float(rows[1][0]) == 1 / 3


def test_array_digest_sensitive():
    a = np.zeros(3)
    assert array_digest(a) == array_digest(a.copy())
    assert array_digest(a) != array_digest(np.zeros((3, 1)))
