"""``sck`` command-line entry point.

Subcommands: export, convert, clean, eval, project, scale-check, pipeline,
plus synth for generating a synthetic board dataset.
Options may also come from a ``key value`` config file (``--config``);
explicit flags win over the file. ``SCK_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import cleanup as cl
from . import synth
from .align import DEFAULT_MAX_DISTANCE, DEFAULT_MAX_DT
from .cloud import DepthKind
from .metrics import DEFAULT_THRESHOLDS
from .pipeline import (
    PipelineConfig,
    StageError,
    cmd_clean,
    cmd_convert,
    cmd_eval,
    cmd_export,
    cmd_pipeline,
    cmd_project,
    cmd_scale_check,
)
from .errors import SparseCloudError

log = logging.getLogger("sparsecloud")

_BOOL_KEYS = {"icp", "save_frames"}


def _thresholds(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}") from None


def _encoding(text: str) -> str:
    if text in ("binary", "binary_little_endian"):
        return "binary_little_endian"
    if text == "ascii":
        return "ascii"
    raise argparse.ArgumentTypeError(f"encoding must be ascii or binary, got {text!r}")


def read_config_file(path) -> dict:
    """Parse ``key value`` lines; keys use flag spelling with or without dashes."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, _, value = s.partition(" ")
        key = key.lstrip("-").replace("-", "_")
        value = value.strip()
        if key in _BOOL_KEYS:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise SparseCloudError(f"{path}:{lineno}: {key} expects true/false")
            values[key] = value.lower() in ("true", "1", "yes")
        else:
            values[key] = value
    return values


def _dataset_flags(p):
    p.add_argument("--dataset", type=Path, help="frame-data directory containing frames.txt")
    p.add_argument("--trajectory", type=Path, help="TUM trajectory (default: <dataset>/trajectory.txt)")
    p.add_argument("--intrinsics", type=Path, help="intrinsics file (default: <dataset>/intrinsics.txt)")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--depth-kind", choices=["metric", "inverse"], default="metric")
    p.add_argument("--max-dt", type=float, default=DEFAULT_MAX_DT, help="pose association tolerance (s)")
    p.add_argument("--side", help="accepted for compatibility; ignored")


def _cleanup_flags(p, default="none"):
    p.add_argument("--cleanup", choices=["none", "sor", "ror", "both"], default=default)
    p.add_argument("--sor-k", type=int, default=cl.DEFAULT_SOR_K)
    p.add_argument("--sor-std", type=float, default=cl.DEFAULT_SOR_STD)
    p.add_argument("--ror-radius", type=float, default=cl.DEFAULT_ROR_RADIUS)
    p.add_argument("--ror-min", type=int, default=cl.DEFAULT_ROR_MIN)


def _eval_flags(p):
    p.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS, help="comma-separated metres")
    p.add_argument("--icp", action="store_true")
    p.add_argument("--icp-max-distance", type=float, default=DEFAULT_MAX_DISTANCE)


def build_parser():
    parser = argparse.ArgumentParser(prog="sck", description="Sparse visual-odometry point-cloud toolkit")
    parser.add_argument("--config", type=Path, help="key value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["export"] = sub.add_parser("export", help="accumulate a world-frame cloud from a dataset")
    _dataset_flags(p)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--name", default="cloud")
    p.add_argument("--save-frames", action="store_true")

    p = subs["convert"] = sub.add_parser("convert", help="convert NPY <-> PLY")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--encoding", type=_encoding, default="binary_little_endian")

    p = subs["clean"] = sub.add_parser("clean", help="outlier removal")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--encoding", type=_encoding, default="binary_little_endian")
    _cleanup_flags(p, default="sor")

    p = subs["eval"] = sub.add_parser("eval", help="Chamfer / P / R / F-score / plane RMSE")
    p.add_argument("--pred", type=Path, required=True, help="cloud under evaluation")
    p.add_argument("--ref", type=Path, required=True, help="reference cloud")
    p.add_argument("--out", type=Path, help="report path")
    _eval_flags(p)

    p = subs["project"] = sub.add_parser("project", help="overlay a cloud on one camera frame")
    p.add_argument("--cloud", type=Path, required=True)
    p.add_argument("--trajectory", type=Path, required=True)
    p.add_argument("--intrinsics", type=Path, required=True)
    p.add_argument("--timestamp", type=float, required=True)
    p.add_argument("--image", type=Path, help="base P5 PGM image (default: black)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-dt", type=float, default=DEFAULT_MAX_DT)
    p.add_argument("--mark-radius", type=int, default=1)

    p = subs["scale-check"] = sub.add_parser("scale-check", help="uniform-scale reprojection invariance")
    _dataset_flags(p)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--density", nargs=2, type=Path, metavar=("TRAJ_A", "TRAJ_B"),
                   help="report pose counts of two trajectories and their ratio")
    p.add_argument("--out", type=Path, help="report path")

    p = subs["synth"] = sub.add_parser("synth", help="write a synthetic board dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--preset", choices=["clean", "noisy"], default="clean")
    p.add_argument("--poses", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth-kind", choices=["metric", "inverse"], default="metric")

    p = subs["pipeline"] = sub.add_parser("pipeline", help="export, convert, clean and evaluate")
    _dataset_flags(p)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--name", default="cloud")
    p.add_argument("--save-frames", action="store_true")
    p.add_argument("--encoding", type=_encoding, default="binary_little_endian")
    p.add_argument("--reference", type=Path, help="reference cloud for evaluation")
    _cleanup_flags(p)
    _eval_flags(p)
    return parser, subs


def parse_args(argv=None):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        cfg = read_config_file(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _config(args) -> PipelineConfig:
    keys = PipelineConfig.__dataclass_fields__
    return PipelineConfig(**{k: v for k, v in vars(args).items() if k in keys})


def run(args) -> int:
    if getattr(args, "side", None):
        log.warning("--side %s ignored: the frame-data format has a single camera", args.side)
    cmd = args.command
    if cmd == "export":
        res = cmd_export(_config(args))
        print(res.summary, end="")
    elif cmd == "convert":
        print(cmd_convert(args.input, args.out, args.encoding).summary, end="")
    elif cmd == "clean":
        res = cmd_clean(args.input, args.out, args.cleanup, args.sor_k, args.sor_std,
                        args.ror_radius, args.ror_min, args.encoding)
        print(res.report.to_text(), end="")
    elif cmd == "eval":
        res = cmd_eval(args.pred, args.ref, args.thresholds, args.icp, args.out, args.icp_max_distance)
        print(res.report, end="")
    elif cmd == "project":
        res = cmd_project(args.cloud, args.trajectory, args.intrinsics, args.timestamp, args.out,
                          args.image, args.max_dt, args.mark_radius)
        print(f"projected {res.projected} of {res.total}")
    elif cmd == "scale-check":
        res = cmd_scale_check(_config(args), args.scale, args.density, args.out)
        print(res.report, end="")
    elif cmd == "synth":
        params = dict(pose_count=args.poses, seed=args.seed, depth_kind=DepthKind(args.depth_kind))
        scene = synth.noisy_preset(**params) if args.preset == "noisy" else synth.SyntheticScene(**params)
        gt = synth.generate_dataset(scene, args.out)
        print(f"wrote {len(gt.frames)} frames, {len(gt.labels)} observations, "
              f"{len(gt.edge_points)} edge points to {args.out}")
    elif cmd == "pipeline":
        res = cmd_pipeline(_config(args))
        for f in res.files:
            print(f"wrote {f}")
        if res.eval is not None:
            print(res.eval.report, end="")
    return 0


def main(argv=None) -> int:
    level = os.environ.get("SCK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
    except SparseCloudError as exc:
        print(f"sck: error [config]: {exc}", file=sys.stderr)
        return 1
    try:
        return run(args)
    except StageError as exc:
        print(f"sck: error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except SparseCloudError as exc:
        print(f"sck: error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
