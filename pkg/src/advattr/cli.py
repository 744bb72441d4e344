"""Command line entry point: ``advattr {synth,run,ground}``.

Exit codes: 0 success, 1 stage failure, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .dataio import FormatError, SyntheticConfig, gen_synthetic, save_bundle
from .grounding import DetectionFormatError
from .pipeline import (
    ConfigError, PipelineConfig, StageError, config_from_dict, derive_seed, ground_report,
    run, write_report,
)

log = logging.getLogger("advattr")

EXIT_OK, EXIT_STAGE, EXIT_IO = 0, 1, 2


def _load_config(args) -> PipelineConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    return config_from_dict(data)


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    syn = cfg.synthetic or SyntheticConfig()
    bundle = gen_synthetic(replace(syn, seed=derive_seed(cfg.seed, "data", syn.seed)))
    try:
        written = save_bundle(cfg.out, bundle)
    except OSError as e:
        log.error("cannot write dataset to %s: %s", cfg.out, e.strerror or e)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    try:
        report = run(cfg)
    except StageError as e:
        cause = e.__cause__
        if e.stage in ("output", "data", "write_report") and isinstance(
                cause, (OSError, FormatError)):
            log.error("%s", e)
            return EXIT_IO
        log.error("%s", e)
        return EXIT_STAGE
    for name, points in report["curves"].items():
        print(name, " ".join(f"{p['epsilon']:g}:{p['accuracy']:.4f}" for p in points))
    print(Path(cfg.out) / "report.json")
    return EXIT_OK


def cmd_ground(args) -> int:
    report_path = Path(args.report)
    try:
        report = json.loads(report_path.read_text())
    except OSError as e:
        log.error("cannot read report %s: %s", report_path, e.strerror)
        return EXIT_IO
    except json.JSONDecodeError as e:
        log.error("%s: invalid JSON at line %d: %s", report_path, e.lineno, e.msg)
        return EXIT_IO
    if "selections" not in report:
        log.error("%s has no selections to ground", report_path)
        return EXIT_STAGE
    try:
        warnings = ground_report(report, args.detections, args.min_score)
    except OSError as e:
        log.error("cannot read detections %s: %s", args.detections, e.strerror)
        return EXIT_IO
    except DetectionFormatError as e:
        log.error("%s", e)
        return EXIT_IO
    target = Path(args.out) / "report.json" if args.out else report_path
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        write_report(target, report)
    except OSError as e:
        log.error("cannot write %s: %s", target, e.strerror)
        return EXIT_IO
    for image in report["grounding"]["missing_images"]:
        log.warning("no detections for image %s", image)
    print(f"grounded {len(report['grounding']['views'])} views, {warnings} warnings -> {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advattr", description="Attack, embed and analyse a classifier on attributes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file mirroring PipelineConfig fields")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")

    p = sub.add_parser("synth", help="write the synthetic dataset as CSV/JSON files")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the full experiment and write report.json")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ground", help="ground a report's selected attributes on detections")
    p.add_argument("report", help="report.json produced by 'run'")
    p.add_argument("detections", help="detections JSON file")
    p.add_argument("--out", help="write the grounded report here instead of in place")
    p.add_argument("--min-score", type=float, default=0.0, help="drop boxes scoring below this")
    p.set_defaults(func=cmd_ground)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
