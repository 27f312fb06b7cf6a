"""Command-line driver: ``fairfl --config run.cfg --scheme both --out results/``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, SimConfig, load_config
from .report import (RunManifest, compare_schemes, emit_records, format_comparison, format_summary)
from .simulator import run_simulation, summarize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairfl", description=__doc__)
    ap.add_argument("--config", type=Path, help="flat key = value config file (defaults when omitted)")
    ap.add_argument("--scheme", choices=("proposed", "benchmark", "both"), default="both")
    ap.add_argument("--rounds", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, help="threads for per-device work within a round")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def resolve_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig().validate()
    overrides = {"run__rounds": args.rounds, "run__seed": args.seed, "run__workers": args.workers}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**overrides) if overrides else cfg


def run(args) -> int:
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    schemes = ["proposed", "benchmark"] if args.scheme == "both" else [args.scheme]
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest.for_config(cfg, schemes, __version__)
        manifest_path = args.out / "manifest.json"
        manifest.outputs = {s: str(args.out / f"records_{s}.csv") for s in schemes}
        manifest.write(manifest_path)

        results = {}
        for scheme in schemes:
            records = run_simulation(cfg.replace(run__scheme=scheme))
            emit_records(records, manifest.outputs[scheme])
            results[scheme] = records
            print(format_summary(summarize(records), scheme))

        summary = {s: {k: v for k, v in summarize(r).items() if k != "per_device"} for s, r in results.items()}
        if len(schemes) == 2:
            cmp = compare_schemes(results["proposed"], results["benchmark"])
            summary["comparison"] = cmp
            print(format_comparison(cmp))
        (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        manifest.outputs["summary"] = str(args.out / "summary.json")
        manifest.finished = datetime.now(timezone.utc).isoformat()
        manifest.write(manifest_path)
    except Exception as exc:
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
