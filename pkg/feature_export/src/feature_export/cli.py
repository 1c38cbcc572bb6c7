"""Command line: export labeled videos to clip features plus a manifest."""

import argparse
import sys

from .errors import ExportError
from .export import ExportJob, export_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feature-export",
        description="Run a 3D video encoder over raw videos and write clip features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("export", help="encode videos into a feature corpus")
    sp.add_argument("--videos", nargs="+", required=True, help="video file paths")
    sp.add_argument(
        "--labels", required=True, help="comma-separated 0/1 labels, one per video"
    )
    sp.add_argument("--out", required=True, help="output corpus directory")
    sp.add_argument("--clip-len", type=int, default=32, help="frames per clip")
    sp.add_argument("--resize", type=int, default=224, help="square frame side")
    sp.add_argument(
        "--encoder", default="builtin", help="'builtin' or a TorchScript file path"
    )
    sp.add_argument("--tap", default="mix_5c", help="endpoint name for dict encoders")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        labels = [int(tok) for tok in args.labels.split(",")]
    except ValueError:
        print(f"error: labels must be integers, got {args.labels!r}", file=sys.stderr)
        return 2
    if len(labels) != len(args.videos):
        print(
            f"error: {len(args.videos)} videos but {len(labels)} labels",
            file=sys.stderr,
        )
        return 2
    try:
        job = ExportJob(
            items=tuple(zip(args.videos, labels)),
            out_dir=args.out,
            clip_len=args.clip_len,
            resize=args.resize,
            tap=args.tap,
            encoder=args.encoder,
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = export_features(job)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"exported {len(result.exported)} videos to {result.manifest_path}")
    for path, reason in result.skipped.items():
        print(f"skipped {path}: {reason}", file=sys.stderr)
    return 0


def app() -> None:
    raise SystemExit(main())
