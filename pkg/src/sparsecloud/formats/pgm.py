"""Binary PGM (P5, maxval 255) reading and point-overlay rendering."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidImageError, ParseError, TruncationError


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 image with maxval 255 into an (H, W) uint8 array."""
    data = bytes(data)
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                raise ParseError("unterminated header comment", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", start)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ParseError("not a binary PGM (expected P5)", 0)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("non-integer PGM header field", 2) from None
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}", pos)
    if w <= 0 or h <= 0:
        raise InvalidImageError(f"image has zero size ({w}x{h})")
    raster = data[pos:]
    if len(raster) < w * h:
        raise TruncationError(w * h, len(raster), pos)
    return np.frombuffer(raster[: w * h], dtype=np.uint8).reshape(h, w).copy()


def encode_pgm(image) -> bytes:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2 or img.size == 0:
        raise InvalidImageError(f"expected a non-empty 2-D image, got shape {img.shape}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def disc_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    d = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    keep = dx * dx + dy * dy <= r * r
    return np.column_stack([dx[keep], dy[keep]])


def render_overlay(base, points, mark_radius: int = 0) -> np.ndarray:
    """Copy of ``base`` with a white disc at each pixel ``(u, v)``.

    Pixels are rounded half-up to the nearest integer; marks falling outside
    the image (entirely or partially) are clipped.
    """
    img = np.array(base, dtype=np.uint8)
    if img.ndim != 2 or img.size == 0:
        raise InvalidImageError(f"expected a non-empty 2-D image, got shape {img.shape}")
    h, w = img.shape
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    centres = np.floor(pts + 0.5).astype(np.int64)
    offs = disc_offsets(mark_radius)
    cols = (centres[:, None, 0] + offs[None, :, 0]).ravel()
    rows = (centres[:, None, 1] + offs[None, :, 1]).ravel()
    inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    img[rows[inside], cols[inside]] = 255
    return img


def write_overlay_pgm(base, points, mark_radius: int = 0) -> bytes:
    return encode_pgm(render_overlay(base, points, mark_radius))
