"""Command-line entry point: ``archscale <command> [--config FILE] [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 validation error (bad config, bad input files,
missing prerequisites), 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .simulator import SimulationError
from .trace import TraceFormatError, load_trace_csv

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="base seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="archscale", parents=[common],
                                description="Archetype-aware autoscaling experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write synthetic trace CSVs")
    sub.add_parser("label", parents=[common], help="window, featurize and weakly label traces")
    sub.add_parser("train", parents=[common], help="train and calibrate the classifier")
    sim = sub.add_parser("simulate", parents=[common], help="run one scenario/strategy/trial")
    sim.add_argument("--scenario", help="scenario name (default: first)")
    sim.add_argument("--strategy", default="aapa", choices=("hpa", "predictive", "aapa"))
    sim.add_argument("--trial", type=int, default=0)
    sub.add_parser("compare", parents=[common], help="all strategies x scenarios x trials")
    feat = sub.add_parser("features", parents=[common], help="print the feature vector of a window")
    src = feat.add_mutually_exclusive_group(required=True)
    src.add_argument("--values", help="comma-separated per-minute counts")
    src.add_argument("--trace", type=Path, help="trace CSV in the ingestion format")
    feat.add_argument("--function-id", help="function to read from --trace (default: first)")
    feat.add_argument("--start", type=int, default=0, help="window start minute")
    feat.add_argument("--length", type=int, help="window length (default: config)")
    return p


def _overrides(args) -> dict:
    out = {}
    if args.out is not None:
        out["output_dir"] = str(args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        out["seed"] = args.seed
    return out


def _features(args, cfg) -> str:
    from .experiment import features_text

    if args.values is not None:
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("--values must be comma-separated numbers") from None
        return features_text(values)
    traces = load_trace_csv(args.trace, min_invocations=0)
    pick = [t for t in traces if args.function_id in (None, t.function_id)]
    if not pick:
        raise ConfigError(f"function {args.function_id!r} not found in {args.trace}")
    length = args.length or cfg.window_len
    counts = pick[0].counts[args.start:args.start + length]
    if len(counts) < length:
        raise ConfigError("window runs past the end of the trace")
    return features_text(counts)


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import experiment as ex

    try:
        cfg = load_config(args.config, overrides=_overrides(args))
        if args.command == "generate":
            paths = ex.cmd_generate(cfg)
            print(f"wrote {len(paths) - 1} traces and a manifest to {cfg.output_dir / 'traces'}")
        elif args.command == "label":
            path, dist = ex.cmd_label(cfg)
            print(f"wrote {path}")
            print("class distribution: " +
                  ", ".join(f"{k}: {100 * v:.1f}%" for k, v in dist.items()))
        elif args.command == "train":
            res = ex.cmd_train(cfg)
            print(res.report, end="")
            print(f"model written to {cfg.model_path} ({res.seconds:.1f}s)")
        elif args.command == "simulate":
            d, rep = ex.cmd_simulate(cfg, args.scenario, args.strategy, args.trial)
            print(f"wrote {d}: violation rate {rep.slo_violation_rate:.4f}, "
                  f"{rep.replica_minutes:.1f} pod-minutes, {rep.cold_starts} pod starts")
        elif args.command == "compare":
            rep = ex.cmd_compare(cfg)
            print(rep.files["report.txt"], end="")
        elif args.command == "features":
            print(_features(args, cfg), end="")
    except (ConfigError, TraceFormatError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        # remaining ValueErrors come from input validation (e.g. negative counts)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if args.command in ("features", "label") else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
