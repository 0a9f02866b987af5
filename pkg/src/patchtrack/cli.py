"""Command-line interface.

Subcommands::

    track run   --seq DIR [--gt FILE] [--config FILE] [--seed N]
                [--mode supervised|onepass] --out DIR
                [--annotate] [--ablate switch,switch,...]
                [--dump-placement]
    track synth --spec FILE --out DIR [--seed N]
    track eval  --results DIR

Exit codes: 0 success, 1 run error (I/O, unreadable frames), 2 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness.export import export_run, recompute_summary
from .harness.protocols import compute_curves, run_one_pass, run_supervised
from .harness.sequences import SequenceError, load_sequence
from .harness.synthetic import SyntheticSpec, make_synthetic
from .tracker import ConfigError, Tracker, TrackerConfig

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="track", description="Part-based colour-sample object tracker"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="track one sequence and export results")
    run.add_argument("--seq", required=True, help="frame directory or manifest file")
    run.add_argument("--gt", default=None, help="ground-truth file (default: groundtruth.txt)")
    run.add_argument("--config", default=None, help="key=value configuration file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--mode", choices=("supervised", "onepass"), default="supervised")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--annotate", action="store_true", help="save annotated frames")
    run.add_argument(
        "--ablate", default="", help="comma-separated ablation switches to enable"
    )
    run.add_argument(
        "--dump-placement",
        action="store_true",
        help="save the segmentation mask and superpixel labels as PNGs",
    )

    synth = sub.add_parser("synth", help="materialise a synthetic sequence")
    synth.add_argument("--spec", required=True, help="scenario descriptor JSON")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="recompute summaries from per-frame CSVs")
    ev.add_argument("--results", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = TrackerConfig.from_file(args.config) if args.config else TrackerConfig()
    switches = [s.strip() for s in args.ablate.split(",") if s.strip()]
    if switches:
        cfg = cfg.ablated(*switches)
    cfg.validate()

    seq = load_sequence(args.seq, gt_path=args.gt)
    dump_dir = args.out if args.dump_placement else None

    def factory(cfg, seed):
        tracker = Tracker(cfg, seed)
        if dump_dir is not None:
            orig_init = tracker.init
            tracker.init = lambda frame, box: orig_init(frame, box, debug_dir=dump_dir)
        return tracker

    if args.mode == "supervised":
        result = run_supervised(seq, cfg, args.seed, tracker_factory=factory)
        curves = None
    else:
        result, curves = run_one_pass(seq, cfg, args.seed, tracker_factory=factory)
    summary = export_run(args.out, result, curves, seq=seq, annotate=args.annotate)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec.from_file(args.spec)
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad scenario descriptor: {exc}") from exc
    seq = make_synthetic(spec, args.seed, args.out)
    print(f"wrote {len(seq)} frames to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    summary = recompute_summary(args.results)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG_ERROR if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "synth":
            return _cmd_synth(args)
        return _cmd_eval(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (SequenceError, OSError, ValueError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR


if __name__ == "__main__":
    sys.exit(main())
