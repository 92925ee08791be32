"""``paid-bench``: evaluation-count, speedup and runtime sweeps, integrand scans and oracle checks.

Exit codes: 0 success, 1 verification failure, 2 invalid arguments,
3 evaluation failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields, replace

from . import bench, verify
from .rules import EvaluationError

log = logging.getLogger("paidquad.cli")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_ARGS = 2
EXIT_EVAL = 3

COMMAND_DEFAULTS = {
    "evals-sweep": bench.EVALS_DEFAULTS,
    "runtime-sweep": bench.RUNTIME_DEFAULTS,
    "speedup": replace(bench.SPEEDUP_DEFAULTS,
                       worker_counts=tuple(sorted({1} | {2 ** k for k in range(1, 8)
                                                         if 2 ** k <= bench.physical_cores()}))),
    "scan": replace(bench.EVALS_DEFAULTS, mode="paid"),
}

# option name -> value parser, shared by flags and config files
_FLOAT = float
_INT = int


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


OPTIONS = {
    "mode": str, "channel": str, "lx": _FLOAT, "ly": _FLOAT,
    "omega_start": _FLOAT, "omega_stop": _FLOAT, "omega_points": _INT,
    "basis_size": _INT, "cc_n": _INT, "max_task": _INT, "workers": _INT,
    "epsilon": _FLOAT, "epsilon_mode": str, "out": str, "eval_budget": _INT,
    "local_criterion": str, "repeats": _INT, "worker_counts": _ints,
    "t": _FLOAT, "t_prime": _FLOAT, "mu": _FLOAT,
    "omega": _FLOAT, "m": _INT, "n": _INT, "grid_size": _INT,
    "suites": str, "inject_kernel_error": _FLOAT,
}


class UsageError(ValueError):
    pass


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys use flag names."""
    out = {}
    try:
        text = open(path).read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown or malformed entry {raw!r}")
        try:
            out[key] = OPTIONS[key](value.strip())
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run parameters (flags > --config file > command defaults)")
    g.add_argument("--config", help="key=value file with defaults for any flag")
    g.add_argument("--mode", choices=bench.MODES)
    g.add_argument("--channel", choices=("pp", "ph"))
    g.add_argument("--lx", type=float, help="transfer momentum x component")
    g.add_argument("--ly", type=float, help="transfer momentum y component")
    g.add_argument("--omega-start", type=float)
    g.add_argument("--omega-stop", type=float)
    g.add_argument("--omega-points", type=int)
    g.add_argument("--basis-size", type=int, choices=(9, 25))
    g.add_argument("--cc-n", type=int, help="N of the nested rule pair (even)")
    g.add_argument("--max-task", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--epsilon-mode", choices=("absolute", "relative"))
    g.add_argument("--eval-budget", type=int)
    g.add_argument("--local-criterion", choices=("share", "member"))
    g.add_argument("--t", type=float, help="nearest-neighbour hopping")
    g.add_argument("--t-prime", type=float, help="next-nearest-neighbour hopping")
    g.add_argument("--mu", type=float, help="chemical potential")
    g.add_argument("--out", help="output CSV path ('-' for stdout)")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="paid-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("evals-sweep", parents=[common], help="evaluation counts over a scale sweep")
    sub.add_parser("runtime-sweep", parents=[common], help="wall times over a scale sweep")
    sp = sub.add_parser("speedup", parents=[common], help="thread speedup at one scale")
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--worker-counts", type=_ints, help="e.g. '1,2,4'")
    sc = sub.add_parser("scan", parents=[common], help="integrand on a uniform grid")
    sc.add_argument("--omega", type=float)
    sc.add_argument("--m", type=int)
    sc.add_argument("--n", type=int)
    sc.add_argument("--grid-size", type=int)
    vf = sub.add_parser("verify", parents=[common], help="run the oracle suites")
    vf.add_argument("--suites", help="comma separated subset of: " + ",".join(verify.SUITES))
    vf.add_argument("--inject-kernel-error", type=float,
                    help="relative perturbation applied to the closed-form kernels")
    return parser


def resolve(args: argparse.Namespace) -> tuple[bench.BenchConfig, dict]:
    """Merge flags, config file and command defaults into a config plus extras."""
    given = {k: v for k, v in vars(args).items() if k in OPTIONS and v is not None}
    merged = read_config_file(args.config) if args.config else {}
    merged.update(given)
    base = COMMAND_DEFAULTS.get(args.command, bench.EVALS_DEFAULTS)
    changes = {}
    names = {f.name for f in fields(bench.BenchConfig)}
    for key, value in merged.items():
        if key in names:
            changes[key] = value
    if "cc_n" in merged:
        changes["N"] = merged["cc_n"]
    if "out" in merged:
        changes["out_path"] = merged["out"]
    if "lx" in merged or "ly" in merged:
        changes["l"] = (merged.get("lx", base.l[0]), merged.get("ly", base.l[1]))
    if {"omega_start", "omega_stop", "omega_points"} & merged.keys():
        grid = base.omega_grid
        changes["omega_grid"] = tuple(bench.omega_grid(merged.get("omega_start", grid[0]),
                                                       merged.get("omega_stop", grid[-1]),
                                                       merged.get("omega_points", len(grid))))
    config = replace(base, **changes)
    extras = {k: merged[k] for k in ("omega", "m", "n", "grid_size", "suites", "inject_kernel_error")
              if k in merged}
    return config, extras


def _progress(rec) -> None:
    log.info("%s", rec)


def cmd_sweep(command: str, config: bench.BenchConfig) -> int:
    records = bench.sweep(config, progress=_progress)
    meta = bench.metadata(command, config)
    with bench.open_out(config.out_path) as fh:
        bench.write_csv(fh, meta, bench.RECORD_COLUMNS, bench.record_rows(records))
    return EXIT_EVAL if any(r.note for r in records) else EXIT_OK


def cmd_speedup(config: bench.BenchConfig) -> int:
    cores = bench.physical_cores()
    too_many = [w for w in config.worker_counts if w > (os.cpu_count() or 1)]
    if too_many:
        raise UsageError(f"worker counts {too_many} exceed the {os.cpu_count()} available "
                         f"hardware threads")
    records = bench.speedup(config, progress=_progress)
    meta = bench.metadata("speedup", config, {"physical_cores": cores,
                                              "timing": f"median of {config.repeats} repetitions"})
    with bench.open_out(config.out_path) as fh:
        bench.write_csv(fh, meta, bench.SPEEDUP_COLUMNS, bench.speedup_rows(records))
    return EXIT_OK


def cmd_scan(config: bench.BenchConfig, extras: dict) -> int:
    omega = extras.get("omega", 1.0)
    m = extras.get("m", 0)
    n = extras.get("n", 0)
    grid = extras.get("grid_size", 512)
    axis, values, sharp = bench.scan(config, omega, m, n, grid)
    meta = bench.metadata("scan", config, {"omega": omega, "m": m, "n": n, "grid_size": grid,
                                           "sharpness": sharp})
    with bench.open_out(config.out_path) as fh:
        bench.write_csv(fh, meta, ["px", "py", "value"], bench.scan_rows(axis, values))
    print(f"sharpness max|phi|/mean|phi| = {sharp:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(extras: dict) -> int:
    only = None
    if "suites" in extras:
        only = [s.strip() for s in extras["suites"].split(",") if s.strip()]
        unknown = set(only) - set(verify.SUITES)
        if unknown:
            raise UsageError(f"unknown suites {sorted(unknown)}; choose from {list(verify.SUITES)}")
    results = verify.run_all(extras.get("inject_kernel_error", 0.0), only)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} suites passed")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        config, extras = resolve(args)
        if args.command in ("evals-sweep", "runtime-sweep"):
            return cmd_sweep(args.command, config)
        if args.command == "speedup":
            return cmd_speedup(config)
        if args.command == "scan":
            return cmd_scan(config, extras)
        return cmd_verify(extras)
    except EvaluationError as exc:
        print(f"paid-bench: evaluation failure: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except ValueError as exc:
        print(f"paid-bench: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
