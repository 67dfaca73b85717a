"""Binary weights file: named float32 arrays behind a TFAN magic header.

Layout, all little-endian:
    magic   4 bytes  b"TFAN"
    version u32      currently 1
    count   u32      number of entries
    entry*  u32 name length, UTF-8 name bytes, u32 rank, u32 dims[rank],
            float32 payload (C order)
Entries are written in sorted-name order so identical parameter sets always
produce identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import Tensor
from .errors import FormatError

MAGIC = b"TFAN"
VERSION = 1


def save_weights(params: dict, path):
    """Write a name -> array/Tensor mapping as a weights file."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name in sorted(params):
            value = params[name]
            arr = np.asarray(value.data if isinstance(value, Tensor) else value)
            # np.asarray keeps 0-d arrays 0-d (ascontiguousarray would
            # promote them to 1-d and change the stored rank).
            payload = np.asarray(arr, dtype="<f4", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", payload.ndim))
            fh.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
            fh.write(payload.tobytes())


def load_weights(path) -> dict:
    """Read a weights file into a name -> float64 ndarray mapping.

    Validates the magic, version, and that the byte count matches the
    declared shapes exactly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, not a weights file")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported weights version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if rank else 4
            payload = blob[pos : pos + n_bytes]
            if len(payload) != n_bytes:
                raise struct.error("payload truncated")
            pos += n_bytes
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: truncated or corrupt weights file ({exc})") from exc
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes after last entry")
    return out
