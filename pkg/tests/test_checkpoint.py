import numpy as np
import pytest

from mfsb.core.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from mfsb.utils.errors import CheckpointError


@pytest.fixture
def tensors(rng):
    return {"head.pair": rng.normal(size=(4, 4)), "prefix.obj": rng.normal(size=(3, 4))}


def test_round_trip(tmp_path, tensors):
    path = save_checkpoint(tmp_path / "model.ckpt", tensors, "abc123")
    stored_hash, loaded = load_checkpoint(path, expected_hash="abc123")
    assert stored_hash == "abc123"
    assert set(loaded) == set(tensors)
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])


def test_bytes_independent_of_insertion_order(tmp_path, tensors):
    a = save_checkpoint(tmp_path / "a.ckpt", tensors, "h")
    b = save_checkpoint(tmp_path / "b.ckpt", dict(reversed(list(tensors.items()))), "h")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().startswith(MAGIC)


def test_hash_mismatch(tmp_path, tensors):
    path = save_checkpoint(tmp_path / "model.ckpt", tensors, "abc123")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_hash="other")


def test_shape_mismatch(tmp_path, tensors):
    path = save_checkpoint(tmp_path / "model.ckpt", tensors, "h")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_shapes={"head.pair": (4, 4), "prefix.obj": (2, 4)})


def test_truncated(tmp_path, tensors):
    path = save_checkpoint(tmp_path / "model.ckpt", tensors, "h")
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_undecodable_hash_text(tmp_path, tensors):
    path = save_checkpoint(tmp_path / "model.ckpt", tensors, "h")
    raw = bytearray(path.read_bytes())
    # magic, version and hash length precede the hash text
    raw[16] = 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"PK\x03\x04 not ours")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_unwritable_path(tmp_path, tensors):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(CheckpointError) as info:
        save_checkpoint(blocker / "model.ckpt", tensors, "h")
    assert isinstance(info.value, OSError)
