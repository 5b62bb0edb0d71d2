"""SSTF: a simple binary container for named tensors.

Every module in the package persists tensors through this one format
(weights, optimizer slots, checkpoints, pre-converted image tensors).

A file is a concatenation of records, one per named tensor, each laid out as

    u32  name length (little endian)
    ...  name, UTF-8
    4s   magic "SSTF"
    u16  format version (currently 1)
    u8   dtype code: 0 = float32, 1 = float64
    u8   rank
    u64  shape, rank entries, little endian
    ...  raw element data, little endian, row-major

Writers emit records in sorted name order so identical tensor maps produce
byte-identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IOFailure

MAGIC = b"SSTF"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_tensors(path, tensors: dict) -> None:
    """Write ``{name: array}`` to ``path``; float32/float64 arrays only."""
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            for name in sorted(tensors):
                arr = np.ascontiguousarray(tensors[name])
                dtype = arr.dtype.newbyteorder("<")
                if dtype not in _DTYPE_CODES:
                    raise IOFailure(f"SSTF cannot store dtype {arr.dtype} (tensor {name!r})")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(MAGIC)
                fh.write(struct.pack("<HBB", VERSION, _DTYPE_CODES[dtype], arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                fh.write(arr.astype(dtype, copy=False).tobytes())
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_tensors(path) -> dict:
    """Read all records from ``path`` into ``{name: array}``."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    off = 0
    while off < len(blob):
        if off + 4 > len(blob):
            raise IOFailure(f"{path}: truncated record header at byte {off}")
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        if blob[off : off + 4] != MAGIC:
            raise IOFailure(f"{path}: bad magic for record {name!r}")
        off += 4
        version, code, rank = struct.unpack_from("<HBB", blob, off)
        off += 4
        if version != VERSION:
            raise IOFailure(f"{path}: unsupported SSTF version {version}")
        if code not in _CODE_DTYPES:
            raise IOFailure(f"{path}: unknown dtype code {code} for record {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        nbytes = count * dtype.itemsize
        if off + nbytes > len(blob):
            raise IOFailure(f"{path}: truncated data for record {name!r}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
        tensors[name] = arr.copy()  # decouple from the mmap-able buffer
        off += nbytes
    return tensors
