"""Command-line entry point: ``hybridtme run <config> [--out DIR] [--seed N] [--quiet]``.

Exit status: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .config import parse_config
from .errors import ConfigError, DivergenceError
from .scenarios import run_scenario
from .solver import manifest_lines, write_snapshot_csv

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _manifest(out: Path, cfg, status: str, files, checks, extra=()) -> Path:
    lines = [f"tool = hybridtme {__version__}", f"scenario = {cfg.name}", f"seed = {cfg.seed}",
             f"status = {status}"]
    lines += list(extra)
    if checks is not None:
        failed = [c.name for c in checks if not c.passed]
        lines.append(f"failed_checks = {','.join(failed) if failed else 'none'}")
    lines.append("[files]")
    lines += sorted({Path(f).name for f in files})
    lines.append("[config]")
    lines += cfg.echo().splitlines()
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hybridtme", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one scenario from a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario.seed")
    p_run.add_argument("--quiet", action="store_true", help="print nothing on success")
    args = parser.parse_args(argv)

    def say(msg: str, force: bool = False):
        if force or not args.quiet:
            print(msg)

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = run_scenario(cfg, out)
    except DivergenceError as err:
        files = []
        record = err.record
        extra = [f"error = {err}"]
        if record is not None and record.snapshots:
            files.append(write_snapshot_csv(out / "snapshot_last_healthy.csv", record.snapshots[-1], record.grid))
            extra += manifest_lines(record)
        _manifest(out, cfg, "diverged", files, None, extra)
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    report = result.report
    status = "passed" if report.passed else "failed"
    extra = [f"wall_time_s = {time.perf_counter() - start:.3f}"]
    if result.record is not None:
        extra += ["[run]"] + manifest_lines(result.record) + ["[end run]"]
    _manifest(out, cfg, status, result.files, report.checks, extra)

    for line in result.summary:
        say(line)
    for c in report.checks:
        say(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured={c.measured:.6g} bound={c.bound:.6g}",
            force=not c.passed)
    say(f"{cfg.name}: {status} ({len(report.checks)} checks) -> {out}")
    return EXIT_OK if report.passed else EXIT_CHECK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
