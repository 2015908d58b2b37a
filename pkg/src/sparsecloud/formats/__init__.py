"""Readers and writers for every external file the toolkit touches."""

from .dataset import FrameDataset, load_frame_dataset, write_frame_dataset
from .npy import read_npy, write_npy
from .pgm import encode_pgm, read_pgm, render_overlay, write_overlay_pgm
from .ply import read_ply, write_ply
from .text import read_intrinsics, read_tum_trajectory, write_intrinsics, write_tum_trajectory

__all__ = [
    "FrameDataset",
    "encode_pgm",
    "load_frame_dataset",
    "read_intrinsics",
    "read_npy",
    "read_pgm",
    "read_ply",
    "read_tum_trajectory",
    "render_overlay",
    "write_frame_dataset",
    "write_intrinsics",
    "write_npy",
    "write_overlay_pgm",
    "write_ply",
    "write_tum_trajectory",
]
