"""Checkpoint binary format: round trips and corruption handling."""

import numpy as np
import pytest

from nailtrace.checkpoint import MAGIC, load_checkpoint, save_checkpoint


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "scalar": np.float32(3.25),
        "vec": rng.standard_normal(7).astype(np.float32),
        "conv.weight": rng.standard_normal((8, 3, 3, 3)).astype(np.float32),
        "bn.running_mean": rng.standard_normal(8).astype(np.float32),
    }
    path = tmp_path / "m.ntck"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(tensors)
    for name in tensors:
        got = loaded[name]
        want = np.asarray(tensors[name], dtype=np.float32)
        assert got.shape == want.shape
        assert got.tobytes() == want.tobytes()


def test_float64_input_stored_as_float32(tmp_path):
    path = tmp_path / "m.ntck"
    save_checkpoint(path, {"x": np.array([1.0, 2.5], dtype=np.float64)})
    out = load_checkpoint(path)["x"]
    assert out.dtype == np.float32
    np.testing.assert_array_equal(out, [1.0, 2.5])


def test_bad_magic_raises(tmp_path):
    path = tmp_path / "bad.ntck"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(IOError, match="magic"):
        load_checkpoint(path)


def test_bad_version_raises(tmp_path):
    path = tmp_path / "bad.ntck"
    path.write_bytes(MAGIC + (99).to_bytes(4, "little") + (0).to_bytes(4, "little"))
    with pytest.raises(IOError, match="version"):
        load_checkpoint(path)


def test_truncated_payload_raises(tmp_path):
    path = tmp_path / "m.ntck"
    save_checkpoint(path, {"w": np.zeros((4, 4), dtype=np.float32)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(IOError, match="truncated"):
        load_checkpoint(path)
