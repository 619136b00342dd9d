"""Command-line entry point: run / convert / replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import build_config, parse_config_file
from .runner import CONVERT_VIEWS, convert, replay, run


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--dataset", choices=["synthetic", "mnist"])
    p.add_argument("--mnist-dir", dest="mnist_dir")
    p.add_argument("--train-limit", dest="train_limit", type=int)
    p.add_argument("--test-limit", dest="test_limit", type=int)
    p.add_argument("--synthetic-train", dest="synthetic_train", type=int)
    p.add_argument("--synthetic-test", dest="synthetic_test", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--layers", help="comma-separated instrumented conv layers")
    p.add_argument("--views", help="comma-separated view names")
    p.add_argument("--traj-dims", dest="traj_dims", help="three weight indices, e.g. 0,1,2")
    p.add_argument("--pcc-threshold", dest="pcc_threshold", type=float)
    p.add_argument("--prune-mode", dest="prune_mode", choices=["off", "auto", "interactive"])
    p.add_argument("--prune-interval", dest="prune_interval", type=int)
    p.add_argument("--snapshot-interval", dest="snapshot_interval", type=int)
    p.add_argument("--snapshot-format", dest="snapshot_format", choices=["vtp", "csv", "both"])
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--listen", help="host:port for the co-processing stream")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cnnscope", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train with in-situ instrumentation")
    _add_run_flags(p_run)

    p_conv = sub.add_parser("convert", help="re-derive view files from snapshots")
    p_conv.add_argument("snapshot_dir")
    p_conv.add_argument("--view", required=True, choices=CONVERT_VIEWS)
    p_conv.add_argument("--format", default="vtp", choices=["vtp", "csv", "both"])
    p_conv.add_argument("--out", dest="out_dir", required=True)
    p_conv.add_argument("--traj-dims", dest="traj_dims", default="0,1,2")

    p_rep = sub.add_parser("replay", help="stream recorded snapshots to a viewer")
    p_rep.add_argument("snapshot_dir")
    p_rep.add_argument("--listen", required=True, help="host:port to serve on")
    p_rep.add_argument("--rate", type=float, default=10.0, help="steps per second")
    p_rep.add_argument("--inject-proposal", action="store_true")
    p_rep.add_argument("--wait-timeout", type=float, default=15.0)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "run":
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {
            k: v
            for k, v in vars(args).items()
            if k not in ("command", "config", "verbose") and v is not None
        }
        cfg = build_config(file_values, overrides)
        summary = run(cfg)
        json.dump(summary, sys.stdout, sort_keys=True, indent=2)
        print()
        return 0

    if args.command == "convert":
        dims = tuple(int(v) for v in args.traj_dims.split(","))
        written = convert(args.snapshot_dir, args.view, args.format, args.out_dir, traj_dims=dims)
        print(f"wrote {written} files to {args.out_dir}")
        return 0

    if args.command == "replay":
        result = replay(
            args.snapshot_dir,
            args.listen,
            rate=args.rate,
            inject_proposal=args.inject_proposal,
            wait_timeout=args.wait_timeout,
        )
        json.dump(result, sys.stdout, sort_keys=True)
        print()
        return 0 if result["status"] == "ok" else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
