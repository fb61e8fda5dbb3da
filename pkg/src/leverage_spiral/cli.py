"""Command-line front door.

    leverage-spiral run scenario.ini [--out PREFIX] [--tol 0.05] [--threads N]
    leverage-spiral sweep sweep.ini

Exit codes: 0 success, 1 validation error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import NumericalFailure, ValidationError
from .scenario import parse_scenario, run_scenario

log = logging.getLogger("leverage_spiral")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leverage-spiral", description="Leverage-spiral scenario runner")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="action", required=True)
    for name, help_ in (("run", "run one scenario file"), ("sweep", "run a sweep scenario file")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario", type=Path)
        sp.add_argument("--out", help="output path prefix (overrides the scenario's out key)")
        sp.add_argument("--tol", type=float, default=0.05, help="relative tolerance for exponent verdicts")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sweep cells")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.scenario.read_text()
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        scn = parse_scenario(text)
        if args.action == "sweep" and scn.command != "sweep":
            raise ValidationError(f"'sweep' needs command = sweep, found {scn.command!r}")
        if args.tol <= 0 or args.threads < 1:
            raise ValidationError("--tol must be > 0 and --threads >= 1")
        result = run_scenario(scn, tol=args.tol, threads=args.threads)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    prefix = args.out or scn.out or str(args.scenario.with_suffix(""))
    written = []
    for suffix, content in result.files.items():
        path = Path(f"{prefix}_{suffix}")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        written.append(path.name)
    Path(f"{prefix}_summary.txt").write_text(result.summary)
    # Run metadata stays out of the data files so those remain reproducible.
    meta = {
        "scenario": str(args.scenario),
        "command": scn.command,
        "version": __version__,
        "tol": args.tol,
        "threads": args.threads,
        "files": written,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    Path(f"{prefix}_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    sys.stdout.write(result.summary)
    log.info("wrote %s", ", ".join(written))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
