"""Versioned binary container for named tensors, optimizer moments and config.

Layout (all integers little-endian)::

    b"NCLKCKPT"                      8-byte magic
    u32 version                      currently 1
    u32 config_len, config bytes     canonical JSON (sorted keys), UTF-8
    32 bytes                         SHA-256 of the config bytes
    u64 optimizer step
    u32 record count
    per record:
        u16 name_len, name bytes     UTF-8, e.g. "param/pointer.w_q.weight"
        u8 dtype                     1=float32, 2=float64, 3=int64
        u8 ndim, u32 * ndim dims
        raw little-endian data
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..exceptions import CheckpointFormatError, MissingCheckpointError

MAGIC = b"NCLKCKPT"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3}


def canonical_config(config: dict) -> bytes:
    return json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_config(config)).hexdigest()


def _as_array(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    arr = np.asarray(t)
    if arr.dtype not in _CODES:
        raise CheckpointFormatError(f"unsupported dtype {arr.dtype}")
    return arr


def save_checkpoint(path, tensors: dict, config: dict, step: int = 0) -> None:
    cfg = canonical_config(config)
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(cfg)) + cfg
    out += hashlib.sha256(cfg).digest()
    out += struct.pack("<QI", step, len(tensors))
    for name in sorted(tensors):
        arr = _as_array(tensors[name])
        raw_name = name.encode("utf-8")
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<BB", _CODES[arr.dtype], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, int]:
    """Return ``(tensors, config, step)``."""
    path = Path(path)
    if not path.exists():
        raise MissingCheckpointError(str(path))
    buf = path.read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointFormatError("bad magic bytes")
    pos = 8
    (version,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    cfg = buf[pos:pos + cfg_len]
    pos += cfg_len
    if hashlib.sha256(cfg).digest() != buf[pos:pos + 32]:
        raise CheckpointFormatError("config digest mismatch")
    pos += 32
    step, count = struct.unpack_from("<QI", buf, pos)
    pos += 12
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        dtype = _DTYPES.get(code)
        if dtype is None:
            raise CheckpointFormatError(f"unknown dtype code {code}")
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(buf, dtype=dtype, count=size // dtype.itemsize, offset=pos).reshape(shape).copy()
        pos += size
    if pos != len(buf):
        raise CheckpointFormatError("trailing bytes after last record")
    return tensors, json.loads(cfg.decode("utf-8")), int(step)
