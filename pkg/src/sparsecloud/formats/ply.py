"""Vertex-only PLY reader/writer (ascii 1.0 and binary_little_endian 1.0)."""

from __future__ import annotations

import logging

import numpy as np

from ..cloud import PointCloud
from ..errors import InvalidInputError, ParseError, TruncationError

log = logging.getLogger(__name__)

ENCODINGS = ("ascii", "binary_little_endian")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _normalize_encoding(encoding: str) -> str:
    if encoding == "binary":
        return "binary_little_endian"
    if encoding not in ENCODINGS:
        raise InvalidInputError(f"unsupported PLY encoding {encoding!r}")
    return encoding


def write_ply(cloud, encoding: str = "binary_little_endian") -> bytes:
    """Serialise points as float32 x/y/z vertices."""
    encoding = _normalize_encoding(encoding)
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("cannot write non-finite points")
    p32 = np.ascontiguousarray(pts, dtype="<f4")
    header = (
        "ply\n"
        f"format {encoding} 1.0\n"
        f"element vertex {len(p32)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    ).encode("ascii")
    if encoding == "binary_little_endian":
        return header + p32.tobytes()
    # 9 significant digits round-trip any float32
    body = "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in p32.astype(float).tolist())
    return header + body.encode("ascii")


def _parse_header(data: bytes):
    lines = []
    pos = 0
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError("header is not terminated by end_header", f"byte {pos}")
        raw = data[pos:end].rstrip(b"\r")
        lines.append(raw.decode("ascii", errors="replace"))
        pos = end + 1
        if raw.strip() == b"end_header":
            return lines, pos


def read_ply(data: bytes) -> PointCloud:
    """Parse PLY bytes into a cloud; non-coordinate vertex properties are skipped."""
    data = bytes(data)
    lines, body_start = _parse_header(data)
    if not lines or lines[0].strip() != "ply":
        raise ParseError("first header line must be 'ply'", "line 1")
    encoding = None
    count = None
    props = []
    for lineno, line in enumerate(lines[1:-1], start=2):
        tok = line.split()
        where = f"line {lineno}: {line!r}"
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise ParseError("malformed format line", where)
            if tok[1] not in ENCODINGS:
                raise ParseError(f"unsupported encoding {tok[1]!r}", where)
            encoding = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError("malformed element line", where)
            if tok[1] != "vertex" or count is not None:
                raise ParseError(f"unsupported element {tok[1]!r}; only one vertex element allowed", where)
            count = int(tok[2])
        elif tok[0] == "property":
            if count is None:
                raise ParseError("property before element", where)
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise ParseError("unsupported property declaration", where)
            props.append((tok[2], _PLY_TYPES[tok[1]], where))
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", where)
    if encoding is None:
        raise ParseError("missing format line", "header")
    if count is None:
        raise ParseError("missing 'element vertex N' line", "header")
    names = [p[0] for p in props]
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"missing vertex property {axis!r}", "header")
    if len(set(names)) != len(names):
        raise ParseError("duplicate vertex property names", "header")
    extra = [n for n in names if n not in ("x", "y", "z")]
    if extra:
        log.warning("skipping unsupported vertex properties: %s", ", ".join(extra))

    if encoding == "binary_little_endian":
        dtype = np.dtype([(n, "<" + t) for n, t, _ in props])
        expected = dtype.itemsize * count
        payload = data[body_start:]
        if len(payload) < expected:
            raise TruncationError(expected, len(payload), f"byte {body_start}")
        if len(payload) > expected:
            raise ParseError(f"{len(payload) - expected} trailing bytes after vertex data", f"byte {body_start + expected}")
        rec = np.frombuffer(payload, dtype=dtype, count=count)
        pts = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(float) if count else np.empty((0, 3))
        return PointCloud(pts)

    text = data[body_start:].decode("ascii", errors="replace").splitlines()
    header_lines = len(lines)
    rows = [r for r in text if r.strip()]
    if len(rows) < count:
        raise TruncationError(count, len(rows), f"line {header_lines + len(text) + 1}")
    if len(rows) > count:
        raise ParseError("extra data rows after vertex data", f"line {header_lines + count + 1}")
    col = [names.index(a) for a in "xyz"]
    pts = np.empty((count, 3))
    for i, row in enumerate(rows):
        tok = row.split()
        if len(tok) != len(names):
            raise ParseError(f"expected {len(names)} values", f"line {header_lines + i + 1}")
        try:
            vals = [np.float32(tok[c]) if props[c][1] == "f4" else float(tok[c]) for c in col]
        except ValueError:
            raise ParseError("non-numeric vertex value", f"line {header_lines + i + 1}") from None
        pts[i] = vals
    return PointCloud(pts)
