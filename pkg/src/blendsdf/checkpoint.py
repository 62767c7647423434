"""Checkpoint container: a flat list of named float32 tensors.

Layout (all little-endian):
    magic   4 bytes  "USDF"
    version u32      currently 1
    count   u32      number of tensors
  then per tensor:
    name_len u32, name UTF-8 bytes
    rank     u32, dims u64 * rank
    payload  float32 * prod(dims)

Tensor order is preserved on round-trip; writers must emit a stable order so
identical states produce identical bytes.
"""

import struct

import numpy as np

MAGIC = b"USDF"
VERSION = 1


def save_tensors(path, tensors):
    """Write an ordered mapping name -> array. Arrays are cast to float32."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", a.ndim))
            if a.ndim:
                f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            f.write(a.tobytes())


def load_tensors(path):
    """Read a checkpoint back as an ordered dict name -> float32 array."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    out = {}
    off = 12
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, off) if rank else ()
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
        out[name] = arr
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return out
