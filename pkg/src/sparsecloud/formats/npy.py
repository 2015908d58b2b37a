"""Minimal NPY (format version 1.0) reader/writer for 2-D float arrays."""

from __future__ import annotations

import ast
import struct

import numpy as np

from ..errors import (
    NotNpyError,
    ParseError,
    TruncationError,
    UnsupportedDtypeError,
    UnsupportedLayoutError,
)

MAGIC = b"\x93NUMPY"
_PREFIX = len(MAGIC) + 2 + 2  # magic, version, uint16 header length
_ALIGN = 64
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def write_npy(array, precision: str = "f8") -> bytes:
    """Serialise a 2-D array as little-endian, C-order NPY 1.0."""
    descr = "<" + precision.lstrip("<")
    if descr not in _DTYPES:
        raise UnsupportedDtypeError(f"precision must be f4 or f8, got {precision!r}")
    a = np.asarray(array)
    if a.ndim != 2:
        raise ParseError(f"expected a 2-D array, got shape {a.shape}")
    a = np.ascontiguousarray(a, dtype=_DTYPES[descr])
    header = "{'descr': '%s', 'fortran_order': False, 'shape': (%d, %d), }" % (
        descr,
        a.shape[0],
        a.shape[1],
    )
    # pad with spaces so magic + header + newline ends on a 64-byte boundary
    pad = -(_PREFIX + len(header) + 1) % _ALIGN
    header = header + " " * pad + "\n"
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + a.tobytes()


def read_npy(data: bytes) -> np.ndarray:
    """Parse NPY 1.0 bytes holding a 2-D ``<f4``/``<f8`` C-order array.

    ``<f4`` payloads are returned as float32 so a write/read cycle is bit-exact.
    """
    data = bytes(data)
    if len(data) < _PREFIX or data[: len(MAGIC)] != MAGIC:
        raise NotNpyError("missing \\x93NUMPY magic", 0)
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise ParseError(f"unsupported NPY version {major}.{minor}", 6)
    (hlen,) = struct.unpack("<H", data[8:10])
    if len(data) < _PREFIX + hlen:
        raise TruncationError(_PREFIX + hlen, len(data), _PREFIX)
    try:
        header = ast.literal_eval(data[_PREFIX : _PREFIX + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise ParseError(f"unreadable header dictionary: {exc}", _PREFIX) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise ParseError("header must have exactly descr, fortran_order and shape", _PREFIX)
    if header["fortran_order"]:
        raise UnsupportedLayoutError("fortran_order arrays are not supported", _PREFIX)
    descr = header["descr"]
    if descr not in _DTYPES:
        raise UnsupportedDtypeError(f"unsupported dtype {descr!r}", _PREFIX)
    shape = header["shape"]
    if not (isinstance(shape, tuple) and len(shape) == 2 and all(isinstance(s, int) and s >= 0 for s in shape)):
        raise ParseError(f"expected a 2-D shape, got {shape!r}", _PREFIX)
    dtype = _DTYPES[descr]
    offset = _PREFIX + hlen
    nbytes = shape[0] * shape[1] * dtype.itemsize
    payload = data[offset:]
    if len(payload) < nbytes:
        raise TruncationError(nbytes, len(payload), offset)
    if len(payload) > nbytes:
        raise ParseError(f"{len(payload) - nbytes} trailing bytes after array data", offset + nbytes)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
