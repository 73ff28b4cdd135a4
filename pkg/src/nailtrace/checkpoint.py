"""Binary checkpoint IO.

Layout (little-endian): magic ``NTCK``, format version u32, tensor count
u32; then per tensor: name length u16 + UTF-8 name, rank u8, dims as
u32s, raw float32 payload.  Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NTCK"
VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named arrays in iteration order as float32."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            # np.asarray keeps rank 0; ascontiguousarray would promote it to rank 1
            payload = np.asarray(arr, dtype="<f4", order="C")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", payload.ndim))
            f.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
            f.write(payload.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise IOError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise IOError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            size = int(np.prod(dims)) if dims else 1
            buf = f.read(4 * size)
            if len(buf) != 4 * size:
                raise IOError(f"{path}: truncated payload for tensor {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f4").reshape(dims).copy()
        return out
