"""Benchmark drivers behind the ``paid-bench`` command.

Each sweep builds one bubble family per scale, runs the global driver and/or
the per-member baseline on it and returns :class:`BenchRecord` rows; the
writers turn them into CSV with a ``#`` metadata header that is enough to
repeat the run.
"""
from __future__ import annotations

import contextlib
import io
import math
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .core import AdaptiveConfig, FamilyResult, run_adaptive
from .frg import BubbleSpec, FormFactorBasis, ModelParams, build_family, scan_grid, sharpness
from .local import run_family_local
from .rules import EvaluationError

MODES = ("paid", "local", "both")


def omega_grid(start: float = 10.0, stop: float = 1e-3, points: int = 20) -> list[float]:
    """Strictly descending geometric grid from ``start`` to ``stop``."""
    if not (start > 0 and stop > 0):
        raise ValueError("omega bounds must be positive")
    if points < 1:
        raise ValueError("omega_points must be >= 1")
    if points == 1:
        return [float(start)]
    if not start > stop:
        raise ValueError("omega grid must descend: need omega_start > omega_stop")
    return np.geomspace(start, stop, int(points)).tolist()


@dataclass(frozen=True)
class BenchConfig:
    mode: str = "both"
    channel: str = "pp"
    l: tuple = (1.57, 1.31)
    omega_grid: tuple = tuple(omega_grid())
    basis_size: int = 9
    N: int = 4
    max_task: int = 10
    workers: int = 1
    epsilon: float = 1e-6
    epsilon_mode: str = "relative"
    eval_budget: int = 10**10
    local_criterion: str = "share"
    repeats: int = 3
    worker_counts: tuple = (1, 2, 4)
    t: float = 1.0
    t_prime: float = 0.0
    mu: float = 0.0
    out_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.local_criterion not in ("share", "member"):
            raise ValueError(f"local_criterion must be 'share' or 'member', got {self.local_criterion!r}")
        grid = list(self.omega_grid)
        if not grid or any(not w > 0 for w in grid):
            raise ValueError("omega grid must be nonempty and positive")
        if any(a <= b for a, b in zip(grid, grid[1:])):
            raise ValueError("omega grid must be strictly descending")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if any(w < 1 for w in self.worker_counts):
            raise ValueError("worker counts must be positive")
        # validate shared fields early through the library types
        self.adaptive()
        self.spec(grid[0])

    def adaptive(self, workers: int | None = None) -> AdaptiveConfig:
        return AdaptiveConfig(epsilon=self.epsilon, epsilon_mode=self.epsilon_mode, N=self.N,
                              max_task=self.max_task,
                              workers=self.workers if workers is None else workers,
                              eval_budget=self.eval_budget)

    def spec(self, omega: float) -> BubbleSpec:
        return BubbleSpec(channel=self.channel, l=tuple(float(c) for c in self.l), omega=float(omega),
                          params=ModelParams(self.t, self.t_prime, self.mu),
                          basis=FormFactorBasis(self.basis_size))


# per-command defaults
EVALS_DEFAULTS = BenchConfig()
SPEEDUP_DEFAULTS = BenchConfig(mode="paid", basis_size=25, N=6, max_task=18,
                               omega_grid=(1e-3,), epsilon=1e-3)
RUNTIME_DEFAULTS = BenchConfig(basis_size=25, N=4, max_task=7, workers=os.cpu_count() or 1,
                               epsilon=1e-3)


@dataclass
class BenchRecord:
    omega: float
    mode: str
    eval_count: int
    task_count: int
    wall_time_seconds: float
    global_err: float
    converged: bool
    checksum: float
    threshold: float = math.nan
    workers: int = 1
    note: str = ""


def _record(omega: float, mode: str, result: FamilyResult, wall: float, workers: int) -> BenchRecord:
    checksum = math.fsum(np.abs(result.values))
    if not math.isfinite(checksum):
        raise EvaluationError(f"non-finite checksum at omega={omega} ({mode})")
    return BenchRecord(omega, mode, int(result.eval_count), int(result.task_count), wall,
                       float(result.global_err), bool(result.converged), checksum,
                       float(result.threshold), workers)


def _failed(omega: float, mode: str, exc: Exception, workers: int) -> BenchRecord:
    return BenchRecord(omega, mode, 0, 0, math.nan, math.nan, False, math.nan, math.nan, workers,
                       note=f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " "))


def run_paid(family, config: AdaptiveConfig) -> tuple[FamilyResult, float]:
    start = time.perf_counter()
    result = run_adaptive(family, config)
    return result, time.perf_counter() - start


def run_local(family, config: AdaptiveConfig, share_scale: float | None) -> tuple[FamilyResult, float]:
    start = time.perf_counter()
    result = run_family_local(family, config, share_scale=share_scale)
    return result, time.perf_counter() - start


def _share_scale(bench: BenchConfig, family, paid: FamilyResult | None) -> float | None:
    """Family value that sets the per-member share of the local baseline."""
    if bench.local_criterion != "share" or bench.epsilon_mode != "relative":
        return None
    if paid is not None and paid.converged:
        return math.fsum(paid.values)
    # pilot run at a looser target; not timed and not counted
    pilot = run_adaptive(family, replace(bench.adaptive(), epsilon=min(10 * bench.epsilon, 1e-2)))
    return math.fsum(pilot.values)


def warm_up(bench: BenchConfig) -> None:
    """Compile the numerical kernels outside any timed region."""
    family = build_family(replace(bench.spec(bench.omega_grid[0]), omega=10.0)).subfamily([0, 1])
    config = replace(bench.adaptive(), epsilon=1e-2, epsilon_mode="relative")
    run_adaptive(family, config)
    run_adaptive(family, replace(config, workers=2))


def sweep(bench: BenchConfig, progress=None) -> list[BenchRecord]:
    """One record per (omega, mode); failures become rows with ``converged=False``."""
    warm_up(bench)
    records = []
    modes = ("paid", "local") if bench.mode == "both" else (bench.mode,)
    for omega in bench.omega_grid:
        family = build_family(bench.spec(omega))
        paid = None
        for mode in modes:
            try:
                if mode == "paid":
                    paid, wall = run_paid(family, bench.adaptive())
                    rec = _record(omega, mode, paid, wall, bench.workers)
                else:
                    scale = _share_scale(bench, family, paid)
                    res, wall = run_local(family, bench.adaptive(), scale)
                    rec = _record(omega, mode, res, wall, bench.workers)
            except EvaluationError as exc:
                rec = _failed(omega, mode, exc, bench.workers)
            records.append(rec)
            if progress is not None:
                progress(rec)
    return records


@dataclass
class SpeedupRecord:
    omega: float
    workers: int
    wall_time_seconds: float
    speedup: float
    eval_count: int
    max_value_deviation: float
    value_tolerance: float
    converged: bool
    wall_times: list = field(default_factory=list)


def speedup(bench: BenchConfig, progress=None) -> list[SpeedupRecord]:
    """Median wall time of ``bench.repeats`` global runs per worker count.

    Speedup is relative to the single-worker median; values at every worker
    count are compared with the single-worker values.
    """
    warm_up(bench)
    omega = bench.omega_grid[0]
    family = build_family(bench.spec(omega))
    counts = sorted(set(bench.worker_counts) | {1})
    out = []
    base_values = None
    base_time = None
    for w in counts:
        times = []
        last = None
        for _ in range(bench.repeats):
            last, wall = run_paid(family, bench.adaptive(workers=w))
            times.append(wall)
        med = statistics.median(times)
        if w == 1:
            base_values, base_time = last.values, med
        dev = float(np.max(np.abs(last.values - base_values)))
        tol = 10 * bench.adaptive().threshold(math.fsum(base_values))
        rec = SpeedupRecord(omega, w, med, base_time / med, int(last.eval_count), dev, tol,
                            bool(last.converged), times)
        out.append(rec)
        if progress is not None:
            progress(rec)
    return out


def physical_cores() -> int:
    """Best-effort physical core count (falls back to logical CPUs)."""
    try:
        seen = set()
        phys = core = None
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("physical id"):
                    phys = line.split(":")[1].strip()
                elif line.startswith("core id"):
                    core = line.split(":")[1].strip()
                    seen.add((phys, core))
        if seen:
            return len(seen)
    except OSError:
        pass
    return os.cpu_count() or 1


# CSV -----------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def metadata(command: str, bench: BenchConfig, extra: dict | None = None) -> dict:
    meta = {"command": command, "library": "paidquad", "version": __version__}
    for f in fields(bench):
        meta[f.name] = getattr(bench, f.name)
    meta["domain"] = "[-pi, pi]^2"
    meta["kernel"] = "closed form of the regulated frequency integral"
    basis = FormFactorBasis(bench.basis_size)
    meta["basis"] = "; ".join(basis.describe(i) for i in range(basis.size))
    meta["members"] = bench.basis_size * (bench.basis_size + 1) // 2
    meta["evals_per_rect"] = (2 * bench.N + 1) ** 2
    meta["relative_denominator"] = "max(|sum of member values|, 1e-12)"
    meta["local_criterion_note"] = (
        "share: each member gets epsilon*|family value|/M absolute, family value from the paid run "
        "at the same omega (or an untimed pilot); member: epsilon relative to each member's own value"
    )
    meta["epsilon_note"] = "epsilon is not stated for the original experiments; this value is our choice"
    meta.update(extra or {})
    return meta


def write_csv(stream, meta: dict, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    for key, value in meta.items():
        stream.write(f"# {key} = {fmt(value)}\n")
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(fmt(v) for v in row) + "\n")


RECORD_COLUMNS = [f.name for f in fields(BenchRecord)]
SPEEDUP_COLUMNS = [f.name for f in fields(SpeedupRecord) if f.name != "wall_times"] + ["wall_times"]


def record_rows(records: Sequence[BenchRecord]) -> list[list]:
    return [[getattr(r, c) for c in RECORD_COLUMNS] for r in records]


def speedup_rows(records: Sequence[SpeedupRecord]) -> list[list]:
    return [[getattr(r, c) for c in SPEEDUP_COLUMNS] for r in records]


def read_csv(text: str) -> tuple[dict, list[dict]]:
    """Parse a CSV written by :func:`write_csv` into (metadata, rows of strings)."""
    meta = {}
    lines = []
    for line in io.StringIO(text):
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            lines.append(line.rstrip("\n"))
    header = lines[0].split(",")
    return meta, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def scan(bench: BenchConfig, omega: float, m: int, n: int, grid_size: int = 512):
    """Grid of member ``(m, n)`` and its sharpness."""
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    spec = bench.spec(omega)
    if not (0 <= m < spec.basis.size and 0 <= n < spec.basis.size):
        raise ValueError(f"form factor indices must lie in [0, {spec.basis.size})")
    axis, values = scan_grid(spec, m, n, grid_size)
    if not np.isfinite(values).all():
        raise EvaluationError("integrand scan produced non-finite values")
    return axis, values, sharpness(values)


def scan_rows(axis: np.ndarray, values: np.ndarray):
    for i, px in enumerate(axis.tolist()):
        row = values[i].tolist()
        for j, py in enumerate(axis.tolist()):
            yield (px, py, row[j])


def open_out(path: str | None):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def as_dict(record) -> dict:
    return asdict(record)
