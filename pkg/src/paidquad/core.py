"""Parallel adaptive integration of an integrand family under one global error.

All members of an :class:`IntegrandFamily` share a rectangle.  Every
(member, subdomain) pair is a :class:`Task` in one max-heap keyed on the local
error estimate, so refinement always goes to the worst subdomain of the worst
member, and the run stops once the summed error of all tasks of all members
drops below the target.

Workers pull up to ``max_task`` tasks per visit to the shared container,
bisect each one in both axes outside the lock and push the four children back
in one locked commit.  Worker 0 doubles as the coordinator that checks the
termination criterion after each of its rounds.
"""
from __future__ import annotations

import gc
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _store
from .rules import (
    EvaluationError,
    QuadPairRule,
    Rectangle,
    check_finite,
    contract,
    grid_axes,
    make_pair,
)

MIN_SIDE = 1e-12


class SingularityError(EvaluationError):
    """Refinement reached a subdomain too small to split any further."""


class IntegrandFamily:
    """Indexed integrands over one shared rectangle.

    Members are callables ``f(x, y)`` accepting equally shaped numpy arrays
    and returning values of the same shape (scalars are broadcast).
    Subclasses with a faster batched path override :meth:`evaluate`.
    """

    def __init__(self, members: Sequence[Callable], domain, labels: Sequence | None = None):
        self.members = list(members)
        if not self.members:
            raise ValueError("an integrand family needs at least one member")
        self.domain = Rectangle.checked(*domain)
        self.labels = list(range(len(self.members))) if labels is None else list(labels)
        if len(self.labels) != len(self.members):
            raise ValueError("labels and members differ in length")

    @property
    def member_count(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.member_count

    def evaluate(self, ids: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Values of member ``ids[r]`` on the tensor grid ``xs[r] x ys[r]``.

        Returns an array of shape ``(len(ids), nx, ny)``.
        """
        ids = np.asarray(ids)
        k, nx = xs.shape
        ny = ys.shape[1]
        out = np.empty((k, nx, ny))
        for m in np.unique(ids):
            rows = np.flatnonzero(ids == m)
            X = np.broadcast_to(xs[rows][:, :, None], (rows.size, nx, ny))
            Y = np.broadcast_to(ys[rows][:, None, :], (rows.size, nx, ny))
            out[rows] = np.broadcast_to(np.asarray(self.members[m](X, Y), dtype=float), X.shape)
        return out

    def integrate_rects(self, ids: np.ndarray, rects: np.ndarray,
                        pair: QuadPairRule) -> tuple[np.ndarray, np.ndarray]:
        """Coarse and fine quadratures of member ``ids[r]`` over ``rects[r]``."""
        xs, ys = grid_axes(rects, pair)
        values = self.evaluate(ids, xs, ys)
        check_finite(values, xs, ys, ids)
        return contract(values, rects, pair)

    def subfamily(self, indices: Sequence[int]) -> "IntegrandFamily":
        return IntegrandFamily([self.members[i] for i in indices], self.domain,
                               [self.labels[i] for i in indices])


class Task(NamedTuple):
    id: int
    domain: Rectangle
    val_N: float
    val_2N: float
    err: float


@dataclass(frozen=True)
class AdaptiveConfig:
    epsilon: float = 1e-6
    epsilon_mode: str = "relative"
    N: int = 4
    max_task: int = 10
    workers: int = 1
    eval_budget: int = 10**9
    value_floor: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.epsilon_mode not in ("absolute", "relative"):
            raise ValueError(f"epsilon_mode must be 'absolute' or 'relative', got {self.epsilon_mode!r}")
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 2, got {self.N}")
        for name in ("max_task", "workers", "eval_budget"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not self.value_floor > 0:
            raise ValueError("value_floor must be positive")

    def threshold(self, value_scale: float) -> float:
        """Absolute error target; relative mode scales by ``max(|value_scale|, value_floor)``."""
        if self.epsilon_mode == "absolute":
            return self.epsilon
        return self.epsilon * max(abs(value_scale), self.value_floor)


@dataclass
class FamilyResult:
    values: np.ndarray
    global_err: float
    eval_count: int
    task_count: int
    converged: bool
    labels: list = field(default_factory=list)
    threshold: float = math.nan
    rounds: int = 0
    member_errs: np.ndarray | None = None
    # eval_count when a worker first saw the criterion met; None if it never was
    criterion_eval_count: int | None = None


class TaskContainer:
    """Max-heap of tasks keyed on ``err`` plus running totals.

    Tasks are stored column-wise in growable arrays; the heap holds slot
    numbers next to their errors, and slots increase with creation time so
    equal errors come out oldest first.  Tasks handed out by :meth:`extract_bulk` stay accounted
    for in ``global_err`` until their refinement is committed.  Not
    thread-safe by itself; drivers serialize access.
    """

    def __init__(self, evals_per_rect: int = 0, capacity: int = 1024):
        capacity = max(int(capacity), 16)
        self.member = np.empty(capacity, dtype=np.int64)
        self.rect = np.empty((capacity, 4))
        self.val_n = np.empty(capacity)
        self.val_2n = np.empty(capacity)
        self.err = np.empty(capacity)
        self.state = np.empty(capacity, dtype=np.int8)
        self.heap = np.empty(capacity, dtype=np.int64)
        self.hkey = np.empty(capacity)
        self.meta = np.zeros(_store.META_LEN, dtype=np.int64)
        self.sums = np.zeros(4)
        self.evals_per_rect = evals_per_rect
        self._handed: dict[int, int] = {}

    # bookkeeping -----------------------------------------------------
    @property
    def capacity(self) -> int:
        return self.member.shape[0]

    @property
    def created(self) -> int:
        return int(self.meta[_store.N_CREATED])

    @property
    def eval_count(self) -> int:
        return int(self.meta[_store.EVAL_COUNT])

    @eval_count.setter
    def eval_count(self, value: int) -> None:
        self.meta[_store.EVAL_COUNT] = value

    def __len__(self) -> int:
        return int(self.meta[_store.HEAP_SIZE])

    @property
    def global_err(self) -> float:
        return _store.fsum_parts(self.sums, _store.ERR_S)

    @property
    def total_value_fine(self) -> float:
        return _store.fsum_parts(self.sums, _store.VAL_S)

    @property
    def inflight(self) -> int:
        return int(np.count_nonzero(self.state[:self.created] == _store.INFLIGHT))

    def reserve(self, extra: int) -> None:
        """Grow the arrays so ``extra`` more tasks fit."""
        need = self.created + extra
        if need <= self.capacity:
            return
        cap = max(need, 2 * self.capacity)
        for name in ("member", "rect", "val_n", "val_2n", "err", "state", "heap", "hkey"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[:old.shape[0]] = old
            setattr(self, name, new)

    # array interface used by the drivers ------------------------------
    def take(self, max_task: int) -> np.ndarray:
        out = np.empty(max_task, dtype=np.int64)
        count = _store.take(self.heap, self.hkey, self.state, self.meta, max_task, out)
        return out[:count]

    def put(self, ids: np.ndarray, rects: np.ndarray, q_c: np.ndarray, q_f: np.ndarray) -> None:
        self.reserve(ids.shape[0])
        _store.put(self.member, self.rect, self.val_n, self.val_2n, self.err, self.state,
                   self.heap, self.hkey, self.meta, self.sums, ids, rects, q_c, q_f)

    def replace(self, parents: np.ndarray, ids, rects, q_c, q_f) -> None:
        """Retire extracted ``parents`` and insert their children in one step."""
        if ids.shape[0] != 4 * parents.shape[0]:
            raise AssertionError(f"{parents.shape[0]} parents need {4 * parents.shape[0]} "
                                 f"children, got {ids.shape[0]}")
        _store.retire(self.err, self.val_2n, self.state, self.sums, parents)
        self.put(ids, rects, q_c, q_f)
        self.meta[_store.EVAL_COUNT] += ids.shape[0] * self.evals_per_rect

    def task(self, slot: int) -> Task:
        return Task(int(self.member[slot]), Rectangle(*self.rect[slot].tolist()),
                    float(self.val_n[slot]), float(self.val_2n[slot]), float(self.err[slot]))

    # task-level interface ---------------------------------------------
    def push(self, task: Task) -> None:
        self.put(np.array([task.id], dtype=np.int64), np.array([task.domain], dtype=float),
                 np.array([task.val_N]), np.array([task.val_2N]))

    def peek_err(self) -> float:
        return float(self.hkey[0]) if len(self) else math.nan

    def extract_bulk(self, max_task: int) -> list[Task]:
        """Remove up to ``max_task`` tasks in non-increasing error order."""
        if max_task < 1:
            raise ValueError("max_task must be >= 1")
        out = []
        for slot in self.take(max_task).tolist():
            task = self.task(slot)
            self._handed[id(task)] = slot
            out.append(task)
        return out

    def commit(self, parents: Sequence[Task], children: Sequence[Task]) -> float:
        """Replace extracted ``parents`` by their ``children``; returns the new global error."""
        if len(children) != 4 * len(parents):
            raise AssertionError(f"{len(parents)} parents need {4 * len(parents)} children, "
                                 f"got {len(children)}")
        slots = []
        for parent in parents:
            slot = self._handed.pop(id(parent), None)
            if slot is None:
                raise AssertionError(f"task {parent} was not extracted from this container")
            slots.append(slot)
        ids = np.array([c.id for c in children], dtype=np.int64).reshape(-1)
        rects = np.array([tuple(c.domain) for c in children], dtype=float).reshape(-1, 4)
        q_c = np.array([c.val_N for c in children], dtype=float)
        q_f = np.array([c.val_2N for c in children], dtype=float)
        self.replace(np.array(slots, dtype=np.int64), ids, rects, q_c, q_f)
        return self.global_err

    def live_slots(self) -> np.ndarray:
        """Slots of all leaves, queued first in heap order, then those in flight."""
        n = self.created
        inflight = np.flatnonzero(self.state[:n] == _store.INFLIGHT)
        return np.concatenate([self.heap[:len(self)], inflight])

    def tasks(self) -> list[Task]:
        """All leaves, queued and in flight."""
        return [self.task(s) for s in self.live_slots().tolist()]

    def resum(self) -> tuple[float, float]:
        """Compensated re-summation of (global error, total fine value) over all leaves."""
        return _store.resum(self.err, self.val_2n, self.state, self.created)

    def resync(self) -> float:
        """Replace the running totals by their re-summation."""
        err, value = self.resum()
        self.sums[:] = (err, 0.0, value, 0.0)
        return err

    def member_totals(self, member_count: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-member sums of ``val_2N`` and ``err`` over all leaves."""
        vals, errs, _ = _store.member_totals(self.member, self.err, self.val_2n, self.state,
                                             self.created, member_count)
        return vals, errs


def evaluate_tasks(ids: Sequence[int], rects: Sequence[tuple], family: IntegrandFamily,
                   pair: QuadPairRule) -> list[Task]:
    """Fresh pair quadratures for members ``ids`` on rectangles ``rects``."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    q_c, q_f = family.integrate_rects(ids, rects, pair)
    return [Task(i, Rectangle(*r), a, b, abs(a - b))
            for i, r, a, b in zip(ids.tolist(), rects.tolist(), q_c.tolist(), q_f.tolist())]


def init_container(family: IntegrandFamily, pair: QuadPairRule) -> TaskContainer:
    """One task per member over the whole domain."""
    M = family.member_count
    container = TaskContainer(pair.evals_per_rect, capacity=64 * M)
    ids = np.arange(M, dtype=np.int64)
    rects = np.tile(np.array(family.domain, dtype=float), (M, 1))
    q_c, q_f = family.integrate_rects(ids, rects, pair)
    container.put(ids, rects, q_c, q_f)
    container.eval_count = M * pair.evals_per_rect
    return container


def _singular(container: TaskContainer, slot: int) -> SingularityError:
    t = container.task(slot)
    d = t.domain
    return SingularityError(
        f"member {t.id}: subdomain {tuple(d)} is below the minimum side {MIN_SIDE} "
        f"with error {t.err:.3e}; the integrand is probably not integrable there",
        point=(0.5 * (d.x_lo + d.x_hi), 0.5 * (d.y_lo + d.y_hi)),
        member=t.id,
    )


def refine_tasks(tasks: Sequence[Task], family: IntegrandFamily, pair: QuadPairRule) -> list[Task]:
    """Bisect every task once per axis; children come in parent order, four each."""
    rects = []
    ids = []
    for task in tasks:
        x0, x1, y0, y1 = task.domain
        if x1 - x0 < MIN_SIDE or y1 - y0 < MIN_SIDE:
            raise SingularityError(
                f"member {task.id}: subdomain {tuple(task.domain)} is below the minimum side "
                f"{MIN_SIDE}", point=(0.5 * (x0 + x1), 0.5 * (y0 + y1)), member=task.id)
        xm = 0.5 * (x0 + x1)
        ym = 0.5 * (y0 + y1)
        rects += ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1))
        ids += (task.id,) * 4
    return evaluate_tasks(ids, rects, family, pair)


def refine_task(task: Task, family: IntegrandFamily, pair: QuadPairRule) -> list[Task]:
    """The four quadrant children of ``task`` (lower-left, lower-right, upper-left, upper-right)."""
    return refine_tasks([task], family, pair)


class _RunState:
    def __init__(self):
        self.done = False
        self.converged = False
        # set by any worker whose commit met a stop condition; blocks new
        # extractions until the coordinator rules on it
        self.pending = False
        self.met_eval_count: int | None = None
        self.error: BaseException | None = None
        self.cond = threading.Condition(threading.Lock())


def _stop_condition(container: TaskContainer, config: AdaptiveConfig) -> bool:
    return (container.global_err < config.threshold(container.total_value_fine)
            or container.eval_count >= config.eval_budget)


def _coordinator_check(container: TaskContainer, config: AdaptiveConfig, state: _RunState) -> None:
    """Termination test; caller holds the container lock."""
    state.pending = False
    if container.global_err < config.threshold(container.total_value_fine):
        if state.met_eval_count is None:
            state.met_eval_count = container.eval_count
        # confirm on the re-summed totals before declaring convergence
        container.resync()
        if container.global_err < config.threshold(container.total_value_fine):
            state.done = True
            state.converged = True
            return
    if container.eval_count >= config.eval_budget:
        state.done = True


def _worker(rank: int, container: TaskContainer, family: IntegrandFamily, pair: QuadPairRule,
            config: AdaptiveConfig, state: _RunState, trace: list | None) -> None:
    cond = state.cond
    try:
        while True:
            with cond:
                parents = None
                while not state.done:
                    if rank == 0 and (state.pending or len(container) == 0):
                        _coordinator_check(container, config, state)
                        cond.notify_all()
                        if state.done:
                            break
                    if not state.pending and len(container):
                        parents = container.take(config.max_task)
                        break
                    # everything is in flight or a stop is pending; wait for a commit
                    cond.wait(0.05)
                if parents is None:
                    return
                ids, rects, bad = _store.split(container.member, container.rect, parents, MIN_SIDE)
                if bad >= 0:
                    raise _singular(container, bad)
            # evaluation runs outside the lock
            q_c, q_f = family.integrate_rects(ids, rects, pair)
            with cond:
                container.replace(parents, ids, rects, q_c, q_f)
                container.meta[_store.ROUNDS] += 1
                if trace is not None:
                    trace.extend(parents.tolist())
                if rank == 0:
                    _coordinator_check(container, config, state)
                elif _stop_condition(container, config):
                    if state.met_eval_count is None and container.eval_count < config.eval_budget:
                        state.met_eval_count = container.eval_count
                    state.pending = True
                cond.notify_all()
    except BaseException as exc:  # noqa: BLE001 - re-raised by the driver
        with cond:
            if state.error is None:
                state.error = exc
            state.done = True
            cond.notify_all()


def _run_compiled(container: TaskContainer, family: IntegrandFamily, pair: QuadPairRule,
                  config: AdaptiveConfig, state: _RunState, trace: list | None) -> None:
    """Single-worker loop inside one compiled function; same sequence as :func:`_worker`."""
    fn, args = family.jit_integrator()
    relative = config.epsilon_mode == "relative"
    while True:
        trace_buf = (np.empty(container.capacity, dtype=np.int64) if trace is not None
                     else np.empty(1, dtype=np.int64))
        container.meta[_store.TRACE_LEN] = 0
        status = _store.serial_loop(
            fn, args, pair.fine.nodes, pair.fine.weights, pair.coarse.weights,
            container.member, container.rect, container.val_n, container.val_2n, container.err,
            container.state, container.heap, container.hkey, container.meta, container.sums, trace_buf,
            config.max_task, config.epsilon, relative, config.value_floor, config.eval_budget,
            pair.evals_per_rect, MIN_SIDE)
        if trace is not None:
            trace.extend(trace_buf[:container.meta[_store.TRACE_LEN]].tolist())
        if status == _store.NEED_SPACE:
            container.reserve(container.capacity)
            continue
        if status == _store.SINGULAR:
            raise _singular(container, int(container.meta[_store.BAD_SLOT]))
        if status == _store.NONFINITE:
            # re-run the offending parent through the generic path to report the point
            slot = int(container.meta[_store.BAD_SLOT])
            ids, rects, _ = _store.split(container.member, container.rect,
                                         np.array([slot], dtype=np.int64), MIN_SIDE)
            IntegrandFamily.integrate_rects(family, ids, rects, pair)
            raise EvaluationError(f"non-finite quadrature for member {container.member[slot]}",
                                  member=int(container.member[slot]))
        state.done = True
        state.converged = status == _store.CONVERGED
        if state.converged:
            state.met_eval_count = container.eval_count
        return


def run_adaptive(family: IntegrandFamily, config: AdaptiveConfig | None = None, *,
                 trace: list | None = None) -> FamilyResult:
    """Integrate every member of ``family`` to one global error target.

    ``trace``, when given, receives the :class:`Task` of each refined
    subdomain in commit order.
    """
    config = config or AdaptiveConfig()
    pair = make_pair(config.N)
    container = init_container(family, pair)
    state = _RunState()
    slots = [] if trace is not None else None
    _coordinator_check(container, config, state)

    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        if not state.done:
            if config.workers == 1 and hasattr(family, "jit_integrator"):
                _run_compiled(container, family, pair, config, state, slots)
            elif config.workers == 1:
                _worker(0, container, family, pair, config, state, slots)
            else:
                threads = [threading.Thread(target=_worker,
                                            args=(r, container, family, pair, config, state, slots),
                                            daemon=True)
                           for r in range(config.workers)]
                for th in threads:
                    th.start()
                for th in threads:
                    th.join()
            if state.error is not None:
                raise state.error
    finally:
        if gc_was_enabled:
            gc.enable()

    if trace is not None:
        trace.extend(container.task(s) for s in slots)
    err, _ = container.resum()
    values, member_errs = container.member_totals(family.member_count)
    threshold = config.threshold(math.fsum(values))
    return FamilyResult(
        values=values,
        global_err=err,
        eval_count=container.eval_count,
        task_count=len(container) + container.inflight,
        converged=state.converged and err < threshold,
        labels=list(family.labels),
        threshold=threshold,
        rounds=int(container.meta[_store.ROUNDS]),
        member_errs=member_errs,
        criterion_eval_count=state.met_eval_count,
    )


def serial_reference(family: IntegrandFamily, config: AdaptiveConfig | None = None, *,
                     trace: list | None = None) -> FamilyResult:
    """Deterministic single-worker run refining one task at a time."""
    config = replace(config or AdaptiveConfig(), workers=1, max_task=1)
    return run_adaptive(family, config, trace=trace)
