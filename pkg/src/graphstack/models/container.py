"""Versioned binary container for trained-model state.

Layout: magic ``BSTW``, one format-version byte, a little-endian uint32
length-prefixed UTF-8 JSON metadata blob, then an ``npz`` archive with
the numeric arrays.  Arrays round-trip bit-exactly (raw float64 buffers).
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from graphstack.errors import FileParseError

MAGIC = b"BSTW"
FORMAT_VERSION = 1


def write_container(fh, meta: dict, arrays: dict) -> None:
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    fh.write(MAGIC)
    fh.write(struct.pack("<B", FORMAT_VERSION))
    fh.write(struct.pack("<I", len(meta_blob)))
    fh.write(meta_blob)
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in arrays.items()})
    fh.write(buf.getvalue())


def read_container(fh):
    magic = fh.read(4)
    if magic != MAGIC:
        raise FileParseError(f"bad magic bytes {magic!r}; not a BSTW container")
    (version,) = struct.unpack("<B", fh.read(1))
    if version != FORMAT_VERSION:
        raise FileParseError(f"unsupported container version {version}")
    (meta_len,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(meta_len).decode("utf-8"))
    with np.load(io.BytesIO(fh.read())) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return meta, arrays


def save_container(path, meta: dict, arrays: dict) -> None:
    with open(path, "wb") as fh:
        write_container(fh, meta, arrays)


def load_container(path):
    with open(path, "rb") as fh:
        return read_container(fh)
