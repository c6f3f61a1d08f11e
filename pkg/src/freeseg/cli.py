"""Command-line entry point: ``freeseg {refine,rank,synth,viz,stats}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import ConfigError, load_config
from .ingest import ImageDecodeError
from .pipeline import PipelineError, cmd_rank, cmd_refine, cmd_stats, cmd_synth
from .viz import cmd_viz

log = logging.getLogger("freeseg")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (YAML or JSON)")
    common.add_argument("--workers", type=int, help="number of worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress output")

    parser = argparse.ArgumentParser(prog="freeseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", parents=[common], help="raw gray maps -> binary masks")
    p.add_argument("manifest", nargs="?", help="candidate manifest (JSON lines)")

    p = sub.add_parser("rank", parents=[common], help="score and filter refined segments")
    p.add_argument("manifest", nargs="?", help="refined manifest from `refine`")
    p.add_argument("--score-threshold", type=float, help="keep segments scoring above this (default 0.5)")
    p.add_argument("--drop-threshold", type=float, help="keep segments whose drop rate exceeds this (default 0.5)")

    p = sub.add_parser("synth", parents=[common], help="paste kept segments onto backgrounds")
    p.add_argument("backgrounds", nargs="?", help="COCO-style background annotations")
    p.add_argument("scored_manifest", nargs="?", help="scored manifest from `rank`")
    p.add_argument("--image-dir", help="background image directory (default: next to the JSON)")
    p.add_argument("--class-map", help="two-column source->category id mapping file")
    p.add_argument("--count", type=int, default=1, help="number of scenes to generate")
    p.add_argument("--seed", type=_u64, help="64-bit seed (overrides config and FREESEG_SEED)")

    p = sub.add_parser("viz", parents=[common], help="render mask overlays")
    p.add_argument("source", help="COCO JSON or scored manifest")
    p.add_argument("--limit", type=int, default=20, help="maximum images to render")
    p.add_argument("--image-dir")
    p.add_argument("--no-boxes", action="store_true", help="draw masks only")

    p = sub.add_parser("stats", parents=[common], help="collected/selected counts")
    p.add_argument("manifests", nargs="+")
    return parser


def _pick(flag, io: dict, key: str, what: str):
    value = flag if flag is not None else io.get(key)
    if value is None:
        raise ConfigError(f"missing {what} (pass it or set io.{key})")
    return value


def _setup_logging(quiet: bool) -> None:
    for h in [h for h in log.handlers if getattr(h, "_freeseg_cli", False)]:
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler._freeseg_cli = True
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.quiet)
    try:
        cfg = load_config(args.config)
        workers = args.workers if args.workers is not None else cfg.workers
        out = _pick(args.out, cfg.io, "out_dir", "--out")
        if args.command == "refine":
            report = cmd_refine(_pick(args.manifest, cfg.io, "manifest", "manifest"), out,
                                cfg.refine, workers)
        elif args.command == "rank":
            score = args.score_threshold if args.score_threshold is not None else cfg.score_threshold
            drop = args.drop_threshold if args.drop_threshold is not None else cfg.drop_threshold
            report = cmd_rank(_pick(args.manifest, cfg.io, "manifest", "manifest"), out,
                              score, drop, workers)
        elif args.command == "synth":
            policy = cfg.policy
            if args.seed is not None:
                policy = dataclasses.replace(policy, seed=args.seed)
            report = cmd_synth(
                _pick(args.backgrounds, cfg.io, "backgrounds", "backgrounds"),
                _pick(args.scored_manifest, cfg.io, "scored_manifest", "scored manifest"),
                out, policy, args.count,
                image_dir=args.image_dir or cfg.io.get("image_dir"),
                workers=workers, class_map_path=args.class_map or cfg.io.get("class_map"))
        elif args.command == "viz":
            written, problems = cmd_viz(args.source, out, args.limit, args.image_dir,
                                        draw_boxes=not args.no_boxes)
            for p in problems:
                log.warning(p)
            log.info("wrote %d overlays to %s", len(written), out)
            return 0
        else:
            report, _, text = cmd_stats(args.manifests, out)
            sys.stdout.write(text)
            return 0
    except (ConfigError, PipelineError, ImageDecodeError, OSError) as exc:
        log.error("error: %s", exc)
        return 2
    for d in report.diagnostics[:50]:
        log.warning(d)
    log.info(json.dumps(report.to_json()["rejects_by_reason"]))
    log.info("%s: %d in, %d out, %.1fs", report.stage, report.records_in,
             report.records_out, report.wall_time)
    return 0


if __name__ == "__main__":
    sys.exit(main())
