"""
Checkpoint Codec
Self-describing little-endian container of named float64 tensors
"""

import struct
from pathlib import Path
from typing import BinaryIO, Dict, Mapping, Optional, Tuple

import numpy as np

from mfsb.utils.errors import CheckpointError

MAGIC = b"MFSBCKPT"
VERSION = 1


def _write_str(handle: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    handle.write(struct.pack("<I", len(raw)))
    handle.write(raw)


def _read_exact(handle: BinaryIO, size: int, path: Path) -> bytes:
    raw = handle.read(size)
    if len(raw) != size:
        raise CheckpointError(f"Truncated checkpoint: {path}", path=str(path))
    return raw


def _read_u32(handle: BinaryIO, path: Path) -> int:
    return struct.unpack("<I", _read_exact(handle, 4, path))[0]


def _read_str(handle: BinaryIO, path: Path) -> str:
    return _read_exact(handle, _read_u32(handle, path), path).decode("utf-8")


def save_checkpoint(path: Path, tensors: Mapping[str, np.ndarray], config_hash: str) -> Path:
    """
    Write tensors sorted by name, so equal parameters give equal bytes

    Raises:
        CheckpointError: the path cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<I", VERSION))
            _write_str(handle, config_hash)
            handle.write(struct.pack("<I", len(tensors)))
            for name in sorted(tensors):
                value = np.ascontiguousarray(tensors[name], dtype="<f8")
                _write_str(handle, name)
                handle.write(struct.pack("<I", value.ndim))
                handle.write(struct.pack(f"<{value.ndim}I", *value.shape))
                handle.write(value.tobytes(order="C"))
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}", path=str(path))
    return path


def load_checkpoint(
    path: Path,
    expected_hash: Optional[str] = None,
    expected_shapes: Optional[Mapping[str, Tuple[int, ...]]] = None,
) -> Tuple[str, Dict[str, np.ndarray]]:
    """
    Read a checkpoint, verifying magic, version and optionally hash and shapes

    Returns:
        (config hash, name -> array)

    Raises:
        CheckpointError: unreadable file, wrong format, or a verification failure
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            if _read_exact(handle, len(MAGIC), path) != MAGIC:
                raise CheckpointError(f"Not an mfsb checkpoint: {path}", path=str(path))
            version = _read_u32(handle, path)
            if version != VERSION:
                raise CheckpointError(f"Unsupported checkpoint version {version}", path=str(path))
            stored_hash = _read_str(handle, path)
            tensors: Dict[str, np.ndarray] = {}
            for _ in range(_read_u32(handle, path)):
                name = _read_str(handle, path)
                ndim = _read_u32(handle, path)
                shape = struct.unpack(f"<{ndim}I", _read_exact(handle, 4 * ndim, path))
                count = int(np.prod(shape)) if ndim else 1
                payload = _read_exact(handle, 8 * count, path)
                tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
            if handle.read(1):
                raise CheckpointError(f"Trailing bytes in checkpoint {path}", path=str(path))
    except CheckpointError:
        raise
    except (OSError, struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}", path=str(path))

    if expected_hash is not None and stored_hash != expected_hash:
        raise CheckpointError(
            f"Checkpoint config hash {stored_hash} does not match {expected_hash}", path=str(path)
        )
    if expected_shapes is not None:
        if set(expected_shapes) != set(tensors):
            raise CheckpointError("Checkpoint tensor names do not match the model", path=str(path))
        for name, shape in expected_shapes.items():
            if tuple(tensors[name].shape) != tuple(shape):
                raise CheckpointError(
                    f"Shape of {name} is {tensors[name].shape}, expected {tuple(shape)}", path=str(path)
                )
    return stored_hash, tensors
