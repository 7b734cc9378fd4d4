"""Command-line front end.

Exit codes: 0 all verdicts as expected, 1 an ``expect`` entry did not match,
2 precondition failure, 3 VIOLATION, 4 configuration error. A batch exits
with the largest code of its scenarios.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .catalog import catalog
from .errors import ConfigError
from .maps import MAP_CATALOG
from .scenario import (
    EXIT_CONFIG,
    Scenario,
    apply_overrides,
    bundled_scenarios,
    load_scenario,
    run_scenario,
)

OUT_ENV = "MAPENERGY_OUT"


def _out_dir(arg) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUT_ENV) or "out")


def _resolution(text):
    if text is None:
        return None
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}")
    return vals[0] if len(vals) == 1 else vals


def _values(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _job(args):
    sc, out, param, values = args
    try:
        outcome = run_scenario(sc, out, param=param, values=values)
    except ConfigError as exc:
        return sc.name, EXIT_CONFIG, f"{sc.name}: config error: {exc}"
    return sc.name, outcome.exit_code, outcome.summary()


def _run_batch(scenarios: list[Scenario], out: Path, jobs: int, param=None, values=None) -> int:
    work = [(sc, out, param, values) for sc in scenarios]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            results = list(pool.map(_job, work))
    else:
        results = [_job(w) for w in work]
    code = 0
    for _, rc, line in results:
        print(line)
        code = max(code, rc)
    return code


def _load_all(paths, args, mode_filter=None) -> list[Scenario]:
    out = []
    for p in paths:
        sc = load_scenario(p)
        if mode_filter is not None and sc.mode not in mode_filter:
            raise ConfigError(f"{p}: mode {sc.mode!r} cannot run under this command")
        out.append(apply_overrides(sc, args.resolution, args.levels, args.seed))
    return out


def _cmd_catalog(args) -> int:
    info = {
        "manifolds": sorted(catalog()),
        "maps": {
            name: {"params": dict(zip(e.params, e.defaults)), "summary": e.summary}
            for name, e in sorted(MAP_CATALOG.items())
        },
        "one_forms": ["zero", "const:<a>,<b>", "recover"],
        "bundled_scenarios": [p.stem for p in bundled_scenarios()],
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--resolution", type=_resolution, help="grid resolution, e.g. 128 or 96x192")
    common.add_argument("--levels", type=int, help="refinement levels")
    common.add_argument("--seed", type=_seed, help="random seed")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel scenarios")

    parser = argparse.ArgumentParser(prog="mapenergy", description="Energy inequality checks for maps between manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("verify", parents=[common], help="run verify, projective or sweep scenarios")
    p.add_argument("scenarios", nargs="+")
    p = sub.add_parser("flow", parents=[common], help="run flow scenarios")
    p.add_argument("scenarios", nargs="+")
    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter of a scenario")
    p.add_argument("scenario")
    p.add_argument("--param", required=True)
    p.add_argument("--values", type=_values, required=True, help="comma separated values")
    p = sub.add_parser("bundled", parents=[common], help="run every bundled scenario")
    p.add_argument("--list", action="store_true", help="only print the bundled scenario paths")
    sub.add_parser("catalog", help="list manifolds, maps and bundled scenarios")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    if args.command == "catalog":
        return _cmd_catalog(args)
    if args.levels is not None and args.levels < 1:
        print("config error: --levels must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    jobs = max(1, args.jobs)
    try:
        if args.command == "verify":
            scenarios = _load_all(args.scenarios, args, {"verify", "projective", "sweep"})
            return _run_batch(scenarios, out, jobs)
        if args.command == "flow":
            return _run_batch(_load_all(args.scenarios, args, {"flow"}), out, jobs)
        if args.command == "sweep":
            if not args.values:
                raise ConfigError("--values is empty")
            scenarios = _load_all([args.scenario], args, {"verify", "sweep"})
            return _run_batch(scenarios, out, 1, args.param, args.values)
        paths = bundled_scenarios()
        if args.list:
            for p in paths:
                print(p)
            return 0
        return _run_batch(_load_all(paths, args), out, jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
