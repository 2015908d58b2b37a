"""Text formats: TUM trajectories and ``key value`` intrinsics files."""

from __future__ import annotations

import math

from ..errors import InvariantError, OrderingError, ParseError
from ..geometry import CameraIntrinsics, Pose

_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def _content_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield lineno, s


def read_tum_trajectory(text: str) -> list[Pose]:
    """Parse ``timestamp tx ty tz qx qy qz qw`` lines; ``#`` lines are comments."""
    poses = []
    for lineno, line in _content_lines(text):
        fields = line.split()
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}", f"line {lineno}")
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError("non-numeric field", f"line {lineno}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", f"line {lineno}")
        if poses and vals[0] < poses[-1].timestamp:
            raise OrderingError(f"timestamp {vals[0]} decreases at line {lineno}")
        try:
            poses.append(Pose(vals[4:8], vals[1:4], vals[0]))
        except ValueError as exc:
            raise ParseError(str(exc), f"line {lineno}") from None
    return poses


def write_tum_trajectory(poses) -> str:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for p in poses:
        vals = [p.timestamp, *p.translation, *p.rotation]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"


def read_intrinsics(text: str) -> CameraIntrinsics:
    values = {}
    for lineno, line in _content_lines(text):
        fields = line.split()
        if len(fields) != 2:
            raise ParseError("expected 'key value'", f"line {lineno}")
        key, raw = fields
        if key not in _INTRINSIC_KEYS:
            raise ParseError(f"unknown key {key!r}", f"line {lineno}")
        if key in values:
            raise ParseError(f"duplicate key {key!r}", f"line {lineno}")
        try:
            values[key] = int(raw) if key in ("width", "height") else float(raw)
        except ValueError:
            raise ParseError(f"bad value for {key}: {raw!r}", f"line {lineno}") from None
    for key in _INTRINSIC_KEYS:
        if key not in values:
            raise ParseError(f"missing key {key!r}", "end of file")
    if values["fx"] <= 0 or values["fy"] <= 0:
        raise InvariantError(f"focal lengths must be positive (fx={values['fx']}, fy={values['fy']})")
    return CameraIntrinsics(**values)


def write_intrinsics(intr: CameraIntrinsics) -> str:
    return (
        f"fx {intr.fx!r}\nfy {intr.fy!r}\ncx {intr.cx!r}\ncy {intr.cy!r}\n"
        f"width {intr.width}\nheight {intr.height}\n"
    )
