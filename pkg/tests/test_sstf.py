import numpy as np
import pytest

from cookstate.errors import IOFailure
from cookstate.sstf import read_tensors, write_tensors


def test_round_trip_bit_identical(tmp_path):
    gen = np.random.default_rng(0)
    tensors = {
        "conv/weight": gen.normal(size=(4, 3, 3, 3)).astype(np.float32),
        "conv/bias": gen.normal(size=4).astype(np.float32),
        "bn/moving_var": gen.normal(size=7).astype(np.float64),
        "scalarish": np.array([3.0], dtype=np.float32),
    }
    path = tmp_path / "weights.sstf"
    write_tensors(path, tensors)
    back = read_tensors(path)
    assert set(back) == set(tensors)
    for name, arr in tensors.items():
        assert back[name].dtype == arr.dtype
        np.testing.assert_array_equal(back[name], arr)
        assert back[name].tobytes() == arr.tobytes()


def test_write_order_is_name_sorted(tmp_path):
    a = {"b": np.ones(2, dtype=np.float32), "a": np.zeros(3, dtype=np.float32)}
    b = {"a": np.zeros(3, dtype=np.float32), "b": np.ones(2, dtype=np.float32)}
    write_tensors(tmp_path / "x.sstf", a)
    write_tensors(tmp_path / "y.sstf", b)
    assert (tmp_path / "x.sstf").read_bytes() == (tmp_path / "y.sstf").read_bytes()


def test_header_layout(tmp_path):
    path = tmp_path / "one.sstf"
    write_tensors(path, {"t": np.zeros((2, 3), dtype=np.float32)})
    blob = path.read_bytes()
    assert blob[:4] == (1).to_bytes(4, "little")  # name length
    assert blob[4:5] == b"t"
    assert blob[5:9] == b"SSTF"
    assert blob[9:11] == (1).to_bytes(2, "little")  # version
    assert blob[11] == 0  # dtype f32
    assert blob[12] == 2  # rank
    assert blob[13:21] == (2).to_bytes(8, "little")
    assert blob[21:29] == (3).to_bytes(8, "little")
    assert len(blob) == 29 + 2 * 3 * 4


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(IOFailure):
        write_tensors(tmp_path / "bad.sstf", {"x": np.zeros(3, dtype=np.int32)})


def test_truncated_file(tmp_path):
    path = tmp_path / "t.sstf"
    write_tensors(path, {"x": np.ones(5, dtype=np.float32)})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(IOFailure):
        read_tensors(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.sstf"
    write_tensors(path, {"x": np.ones(1, dtype=np.float32)})
    blob = bytearray(path.read_bytes())
    blob[5:9] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(IOFailure):
        read_tensors(path)


def test_missing_file():
    with pytest.raises(IOFailure):
        read_tensors("/nonexistent/nowhere.sstf")
