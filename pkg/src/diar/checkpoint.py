"""Binary serialization of named arrays (model checkpoints, feature dumps).

Layout (all integers little-endian):
    magic   b"DIARTENS"
    u32     format version (currently 1)
    u32     number of entries
    per entry, in sorted name order:
        u16     name length, then UTF-8 name bytes
        u8      dtype code (0 = float64, 1 = float32)
        u8      rank
        u32[r]  dimension sizes
        raw     C-order little-endian values

Sorted names and fixed-width headers make the file byte-stable for
identical contents.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"DIARTENS"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def save_arrays(arrays: dict[str, np.ndarray], path) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            arr = arr.astype("<f8")
            dtype = np.dtype("<f8")
        else:
            arr = arr.astype(dtype, copy=False)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    path.write_bytes(b"".join(parts))


def load_arrays(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    offset = len(MAGIC)
    version, count = struct.unpack_from("<II", raw, offset)
    offset += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            code, rank = struct.unpack_from("<BB", raw, offset)
            offset += 2
            shape = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            dtype = _CODE_DTYPES[code]
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=offset)
            offset += n_bytes
            arrays[name] = data.reshape(shape).copy()
    except (struct.error, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return arrays


def save_model(model, path) -> None:
    save_arrays(model.state_dict(), path)


def load_model(model, path) -> None:
    model.load_state_dict(load_arrays(path))
