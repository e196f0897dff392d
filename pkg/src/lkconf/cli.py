"""Command-line entry point: ``lkconf simulate | real-data | oracle-check``.

Errors are reported as a single line ``error: <kind>: <message>`` on stderr
with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, ExperimentConfig, preset
from .dgp import DataError
from .experiments import run_real_data, run_simulation
from .oracle import run_oracle_check
from .report import ReportError, emit_report

EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_CHECK = 2, 3, 4, 5


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lkconf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "real-data"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with ExperimentConfig fields")
        s.add_argument("--preset", help="named configuration, overridden by --config")
        s.add_argument("--seed", type=int, help="base seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--format", choices=("csv", "json"))
        s.add_argument("--threads", type=int, help="worker threads (default: LKCONF_THREADS or all cores)")
        s.add_argument("--trials", type=int, help="override the trial count")
        s.add_argument("--no-timestamp", action="store_true", help="omit the creation time")
        if name == "real-data":
            s.add_argument("--data", help="CSV file (Abalone schema)")
    o = sub.add_parser("oracle-check")
    o.add_argument("--instances", type=int, default=200)
    o.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig(scenario="csv") if args.command == "real-data" else ExperimentConfig()
    if args.config:
        try:
            base = cfg.to_dict()
            with open(args.config, encoding="utf-8") as fh:
                base.update(json.load(fh))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {args.config}: {exc.msg}") from exc
        cfg = ExperimentConfig.from_dict(base)
    for attr, field in (("seed", "base_seed"), ("out", "output"), ("format", "format"),
                        ("trials", "trials")):
        value = getattr(args, attr)
        if value is not None:
            setattr(cfg, field, value)
    if getattr(args, "data", None):
        cfg.csv_path = args.data
    return cfg.validate()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle-check":
            res = run_oracle_check(args.instances, args.seed)
            print(json.dumps(res, sort_keys=True))
            if any(res["mismatches"].values()):
                print("error: check: oracle mismatches", file=sys.stderr)
                return EXIT_CHECK
            return 0
        cfg = _config(args)
        if args.command == "simulate":
            report = run_simulation(cfg, threads=args.threads)
        else:
            report = run_real_data(cfg, threads=args.threads)
        paths = emit_report(report, cfg.output, cfg.format, timestamp=not args.no_timestamp)
        for path in paths:
            print(path)
        return 0
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ReportError, OSError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
