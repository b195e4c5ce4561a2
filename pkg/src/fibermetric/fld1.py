"""FLD1 binary field dumps.

Layout: 8-byte magic b"FLD1\\0\\0\\0\\0", u32 n_side, u8 kind tag, u8 complex
flag, 2 reserved bytes, then row-major little-endian float64 samples
(re/im pairs when complex).  Everything little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fiber_core import KINDS, Field, TorusGrid

MAGIC = b"FLD1\x00\x00\x00\x00"
_HEADER = struct.Struct("<8sIBB2s")


def encode(values: np.ndarray, kind: str) -> bytes:
    v = np.asarray(values)
    n = v.shape[0]
    if v.shape != (n, n):
        raise ValueError("FLD1 stores square n_side x n_side arrays")
    cplx = np.iscomplexobj(v)
    head = _HEADER.pack(MAGIC, n, KINDS.index(kind), int(cplx), b"\x00\x00")
    data = np.ascontiguousarray(v, dtype="<c16" if cplx else "<f8").tobytes()
    return head + data


def decode(buf: bytes) -> tuple[np.ndarray, str]:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated FLD1 header")
    magic, n, tag, cplx, _ = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError("not an FLD1 file")
    if tag >= len(KINDS):
        raise ValueError(f"unknown kind tag {tag}")
    dtype = "<c16" if cplx else "<f8"
    want = n * n * np.dtype(dtype).itemsize
    body = buf[_HEADER.size :]
    if len(body) != want:
        raise ValueError(f"FLD1 payload has {len(body)} bytes, expected {want}")
    return np.frombuffer(body, dtype=dtype).reshape(n, n).copy(), KINDS[tag]


def write_field(path, f: Field) -> None:
    Path(path).write_bytes(encode(f.values, f.kind))


def write_array(path, values: np.ndarray, kind: str = "generic") -> None:
    Path(path).write_bytes(encode(values, kind))


def read_field(path, tau: complex = 1j) -> Field:
    """Read a dump back; the file does not carry tau, so the caller supplies it."""
    vals, kind = decode(Path(path).read_bytes())
    return Field(TorusGrid(tau, vals.shape[0]), vals, kind)


def read_array(path) -> tuple[np.ndarray, str]:
    return decode(Path(path).read_bytes())
