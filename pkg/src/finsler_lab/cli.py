"""``finsler-lab`` command line entry point.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, scenario
from .errors import ConfigError, FinslerError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _factors(text: str) -> list[float]:
    try:
        out = [float(f) for f in text.split(",") if f.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad factor list {text!r}") from exc
    if len(out) < 2 or any(f <= 0 for f in out) or out != sorted(out):
        raise argparse.ArgumentTypeError("factors must be at least two increasing positive numbers")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finsler-lab", description="Numerical checks for Finsler sprays, curvature and affine fields.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate-metric", help="check the metric axioms of a scenario's metric")
    v.add_argument("config")
    v.add_argument("--samples", type=int, default=64)

    r = sub.add_parser("run", help="run every check of a scenario")
    r.add_argument("config")
    r.add_argument("--out", metavar="DIR", help="write report.json and timings.json here")
    r.add_argument("--threads", type=int, help=f"worker threads (default: ${scenario.THREADS_ENV} or min(4, cpus))")

    c = sub.add_parser("converge", help="resolution study of one check, printed as CSV")
    c.add_argument("config")
    c.add_argument("--check", required=True, help="name of the target check")
    c.add_argument("--factors", type=_factors, default=[1.0, 2.0, 4.0])
    c.add_argument("--out", metavar="FILE", help="write the CSV here instead of stdout")

    sub.add_parser("report-schema", help="print the JSON schema of run reports")
    return p


def _validate(args) -> int:
    sc = scenario.load_scenario(args.config)
    from .metric import validate_metric

    rep = validate_metric(sc.metric, sc.domain, args.samples, sc.seed)
    print(json.dumps(scenario._jsonable(rep.as_dict()), indent=2))
    return EXIT_OK if rep.passed else EXIT_FAILED


def _run(args) -> int:
    report = scenario.run_scenario(args.config, args.out, args.threads)
    if args.out is None:
        sys.stdout.write(report.to_json())
    for entry in report.data["checks"]:
        status = "PASS" if entry["passed"] else "FAIL"
        extra = f"  ({entry['error']})" if entry["error"] else ""
        print(f"{status}  {entry['name']}{extra}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


def _converge(args) -> int:
    text = scenario.convergence_study(args.config, args.check, args.factors)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate-metric":
            return _validate(args)
        if args.command == "run":
            return _run(args)
        if args.command == "converge":
            return _converge(args)
        print(json.dumps(scenario.REPORT_SCHEMA, indent=2))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FinslerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
