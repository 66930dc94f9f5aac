"""``runopt``: run solvers on collection problems from directive lines.

Each input line reads ``solver collection [problem | name.lst]``. One summary
line per run goes to standard output; the full report of each run is written
to ``<workdir>/<solver>.<collection>.<problem>.report``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .lists import RegistryError, load_registry
from .pipeline import ROOT_ENV, RunnerError, execute_run, parse_directives, resolve_and_validate

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def default_registry_root() -> Path:
    return Path(str(resources.files("optbench") / "registry"))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="runopt", description=__doc__.splitlines()[0])
    p.add_argument("input", nargs="?", help="file of directive lines (default: standard input)")
    p.add_argument("-v", "--verbose", action="store_true", help="comment on every pipeline step (stderr)")
    p.add_argument("-t", "--test", action="store_true", help="show what would run and run nothing")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="number of runs executed concurrently")
    p.add_argument("--root", type=Path, help=f"registry root (default: ${ROOT_ENV}, else the bundled registry)")
    p.add_argument("--workdir", type=Path, default=None, help="working directory (default: current directory)")
    return p


def _setup_logging(verbose: bool, stderr: TextIO) -> logging.Handler:
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("runopt: %(message)s"))
    logger = logging.getLogger("optbench.runner")
    logger.addHandler(handler)
    logger.setLevel(logging.INFO if verbose else logging.WARNING)
    logger.propagate = False
    return handler


def run_cli(
    argv: Sequence[str],
    stdin: Optional[TextIO] = None,
    stdout: Optional[TextIO] = None,
    stderr: Optional[TextIO] = None,
    environ: Optional[dict] = None,
) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    environ = os.environ if environ is None else environ

    parser = _parser()
    old_err = sys.stderr
    sys.stderr = stderr  # argparse writes usage errors to sys.stderr
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    finally:
        sys.stderr = old_err
    if args.jobs < 1:
        print("runopt: --jobs must be at least 1", file=stderr)
        return EXIT_USAGE

    handler = _setup_logging(args.verbose, stderr)
    try:
        return _run(args, stdin, stdout, stderr, environ)
    except (RunnerError, RegistryError, OSError) as exc:
        print(f"runopt: error: {exc}", file=stderr)
        return EXIT_FAILURE
    finally:
        logging.getLogger("optbench.runner").removeHandler(handler)


def _run(args, stdin, stdout, stderr, environ) -> int:
    root = args.root or (Path(environ[ROOT_ENV]) if environ.get(ROOT_ENV) else default_registry_root())
    registry = load_registry(root)
    workdir = (args.workdir or Path.cwd()).resolve()

    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            directives = parse_directives(fh, registry)
    else:
        directives = parse_directives(stdin, registry)
    plans = [resolve_and_validate(d, registry) for d in directives]

    if args.test:
        for plan in plans:
            print(plan.describe(workdir), file=stdout)
        return EXIT_OK

    def one(plan):
        return execute_run(plan, workdir, registry.root, verbose=args.verbose)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for result in pool.map(one, plans):  # results come back in directive order
            print(result.record.to_line(), file=stdout, flush=True)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_cli(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    raise SystemExit(main())
