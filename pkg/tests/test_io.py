"""Binary and CSV ensemble containers."""

import csv
import struct

import numpy as np
import pytest

from kdvlab.ensemble_io import MAGIC, read_ensemble, write_ensemble, write_ensemble_csv
from kdvlab.errors import IoFailure
from kdvlab.field import GridField, TorusGrid
from kdvlab.samplers import WeightedEnsemble


@pytest.fixture
def ensemble():
    rng = np.random.default_rng(0)
    return WeightedEnsemble(GridField(TorusGrid(16), rng.standard_normal((5, 16))),
                            rng.standard_normal(5), "p04_importance", 42)


def test_round_trip_is_exact(ensemble, tmp_path):
    path = tmp_path / "e.bin"
    write_ensemble(ensemble, path)
    back = read_ensemble(path)
    np.testing.assert_array_equal(back.values, ensemble.values)
    np.testing.assert_array_equal(back.log_weights, ensemble.log_weights)
    assert (back.measure, back.master_seed, back.n) == ("p04_importance", 42, 16)


def test_layout(ensemble, tmp_path):
    path = tmp_path / "e.bin"
    write_ensemble(ensemble, path)
    data = path.read_bytes()
    assert data[:8] == MAGIC
    n, count, seed, name_len = struct.unpack_from("<IQQH", data, 8)
    assert (n, count, seed, name_len) == (16, 5, 42, len("p04_importance"))
    assert len(data) == 8 + 22 + name_len + 5 * 17 * 8
    first = np.frombuffer(data, "<f8", count=17, offset=30 + name_len)
    np.testing.assert_array_equal(first[:16], ensemble.values[0])
    assert first[16] == ensemble.log_weights[0]


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTANENS" + bytes(40))
    with pytest.raises(IoFailure, match="magic"):
        read_ensemble(path)


def test_truncated(ensemble, tmp_path):
    path = tmp_path / "e.bin"
    write_ensemble(ensemble, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(IoFailure):
        read_ensemble(path)


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        read_ensemble(tmp_path / "absent.bin")


def test_unwritable(ensemble, tmp_path):
    with pytest.raises(IoFailure):
        write_ensemble(ensemble, tmp_path / "no" / "such" / "dir.bin")


def test_csv(ensemble, tmp_path):
    path = tmp_path / "e.csv"
    write_ensemble_csv(ensemble, path)
    rows = list(csv.reader(path.open()))
    assert rows[0][:3] == ["member", "log_weight", "x_0"] and len(rows) == 6
    assert float(rows[3][1]) == ensemble.log_weights[2]
    np.testing.assert_array_equal(np.array(rows[1][2:], dtype=float), ensemble.values[0])
