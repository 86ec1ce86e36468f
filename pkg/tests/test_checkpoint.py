import struct

import numpy as np
import pytest

from mrealgan.checkpoint import (
    CheckpointError,
    checkpoint_bytes,
    list_checkpoints,
    load_checkpoint,
    save_checkpoint,
)


def sample_tensors():
    rng = np.random.default_rng(0)
    return {
        "gen.fc.weight": rng.standard_normal((4, 3)).astype(np.float32),
        "gen.fc.bias": rng.standard_normal(4).astype(np.float32),
        "opt_d.acc": rng.standard_normal((2, 2, 2)).astype(np.float32),
    }


def test_round_trip(tmp_path):
    tensors = sample_tensors()
    state = {"step": 3, "rng": {"x": 2**100}}  # big ints must survive JSON
    save_checkpoint(tmp_path / "ck", tensors, state)
    loaded, meta = load_checkpoint(tmp_path / "ck")
    assert meta == state
    assert set(loaded) == set(tensors)
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])
        assert loaded[name].dtype == np.float32


def test_manifest_format_and_offsets(tmp_path):
    save_checkpoint(tmp_path / "ck", sample_tensors(), {})
    lines = (tmp_path / "ck" / "manifest.txt").read_text().splitlines()
    names = [line.split(" ")[0] for line in lines]
    assert names == sorted(names)
    offset = 0
    for line in lines:
        name, shape, dtype, off = line.split(" ")
        assert dtype == "f32"
        assert int(off) == offset
        offset += 4 * int(np.prod([int(d) for d in shape.split(",")]))
    assert offset == (tmp_path / "ck" / "tensors.bin").stat().st_size


def test_payload_is_little_endian_f32(tmp_path):
    save_checkpoint(tmp_path / "ck", {"x": np.array([1.5, -2.0], dtype=np.float32)}, {})
    payload = (tmp_path / "ck" / "tensors.bin").read_bytes()
    assert struct.unpack("<2f", payload) == (1.5, -2.0)


def test_identical_state_writes_identical_bytes(tmp_path):
    tensors = sample_tensors()
    save_checkpoint(tmp_path / "a", tensors, {"step": 1})
    save_checkpoint(tmp_path / "b", tensors, {"step": 1})
    assert checkpoint_bytes(tmp_path / "a") == checkpoint_bytes(tmp_path / "b")


def test_corrupt_checkpoints_rejected(tmp_path):
    with pytest.raises(CheckpointError, match="missing"):
        load_checkpoint(tmp_path / "nope")
    save_checkpoint(tmp_path / "ck", sample_tensors(), {})
    manifest = tmp_path / "ck" / "manifest.txt"
    good = manifest.read_text()
    manifest.write_text(good.replace("f32", "f64", 1))
    with pytest.raises(CheckpointError, match="dtype"):
        load_checkpoint(tmp_path / "ck")
    manifest.write_text(good)
    (tmp_path / "ck" / "tensors.bin").write_bytes(b"\x00" * 4)
    with pytest.raises(CheckpointError, match="out of range"):
        load_checkpoint(tmp_path / "ck")
    (tmp_path / "ck" / "state.json").write_text("{broken")
    with pytest.raises(CheckpointError, match="state.json"):
        load_checkpoint(tmp_path / "ck")


def test_list_checkpoints_sorted_by_step(tmp_path):
    for step in (10, 2, 30):
        save_checkpoint(tmp_path / f"ckpt_{step:08d}", {}, {"step": step})
    (tmp_path / "not_a_ckpt").mkdir()
    found = list_checkpoints(tmp_path)
    assert [p.name for p in found] == ["ckpt_00000002", "ckpt_00000010", "ckpt_00000030"]
    assert list_checkpoints(tmp_path / "missing") == []
