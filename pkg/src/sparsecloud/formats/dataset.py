"""Neutral frame-data directory: ``frames.txt`` manifest plus per-frame NPY arrays.

Layout::

    root/
      frames.txt        # "timestamp relative/path.npy" per line, '#' comments
      frames/000000.npy # (N, 4) rows: u, v, depth_value, valid (0/1)
      intrinsics.txt    # optional, key value lines
      trajectory.txt    # optional, TUM poses
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..cloud import DepthKind, PatchFrame
from ..errors import DatasetError, ParseError, SchemaError
from .npy import read_npy, write_npy

MANIFEST = "frames.txt"
INTRINSICS = "intrinsics.txt"
TRAJECTORY = "trajectory.txt"


@dataclass(frozen=True)
class FrameEntry:
    timestamp: float
    path: str


@dataclass(frozen=True)
class FrameDataset:
    root: Path
    entries: tuple
    intrinsics_path: Optional[Path] = None
    trajectory_path: Optional[Path] = None

    def __len__(self):
        return len(self.entries)

    def load_frame(self, i: int, depth_kind=DepthKind.METRIC) -> PatchFrame:
        entry = self.entries[i]
        path = self.root / entry.path
        try:
            arr = read_npy(path.read_bytes())
        except OSError as exc:
            raise DatasetError(f"cannot read {path}: {exc}") from None
        except ParseError as exc:
            raise SchemaError(f"{path}: {exc}") from None
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise SchemaError(f"{path}: expected shape (N, 4), got {arr.shape}")
        return PatchFrame.from_array(entry.timestamp, arr, depth_kind)

    def frames(self, depth_kind=DepthKind.METRIC):
        """Lazily yield PatchFrames in manifest order."""
        for i in range(len(self.entries)):
            yield self.load_frame(i, depth_kind)


def load_frame_dataset(root) -> FrameDataset:
    root = Path(root)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise DatasetError(f"missing manifest {manifest}")
    entries = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = s.split()
        if len(fields) != 2:
            raise DatasetError(f"{manifest}:{lineno}: expected 'timestamp path'")
        try:
            ts = float(fields[0])
        except ValueError:
            raise DatasetError(f"{manifest}:{lineno}: bad timestamp {fields[0]!r}") from None
        if not math.isfinite(ts) or ts < 0:
            raise DatasetError(f"{manifest}:{lineno}: timestamp must be finite and non-negative")
        if entries and ts <= entries[-1].timestamp:
            raise DatasetError(f"{manifest}:{lineno}: timestamps must be strictly increasing")
        if not (root / fields[1]).is_file():
            raise DatasetError(f"{manifest}:{lineno}: referenced file {fields[1]} does not exist")
        entries.append(FrameEntry(ts, fields[1]))
    intr = root / INTRINSICS
    traj = root / TRAJECTORY
    return FrameDataset(
        root,
        tuple(entries),
        intr if intr.is_file() else None,
        traj if traj.is_file() else None,
    )


def write_frame_dataset(root, frames, intrinsics_text=None, trajectory_text=None) -> None:
    """Write PatchFrames (plus optional intrinsics/trajectory text) in the layout above."""
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    lines = ["# timestamp path"]
    for i, frame in enumerate(frames):
        rel = f"frames/{i:06d}.npy"
        (root / rel).write_bytes(write_npy(frame.to_array(), "f8"))
        lines.append(f"{frame.timestamp:.17g} {rel}")
    (root / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if intrinsics_text is not None:
        (root / INTRINSICS).write_text(intrinsics_text, encoding="utf-8")
    if trajectory_text is not None:
        (root / TRAJECTORY).write_text(trajectory_text, encoding="utf-8")
