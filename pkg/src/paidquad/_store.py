"""Array-backed task storage and heap primitives, compiled with numba.

Tasks live in parallel arrays indexed by a slot number that is handed out in
creation order and never reused, so the slot doubles as the tie-break key
(older first).  ``state`` marks each slot as queued, in flight or refined.
"""
from __future__ import annotations

import math

import numba
import numpy as np

QUEUED = 0
INFLIGHT = 1
REFINED = 2

# meta layout
N_CREATED = 0
HEAP_SIZE = 1
EVAL_COUNT = 2
ROUNDS = 3
TRACE_LEN = 4
BAD_SLOT = 5
META_LEN = 6

# sums layout: Neumaier pairs for the error and the fine value
ERR_S = 0
ERR_C = 1
VAL_S = 2
VAL_C = 3

# status codes of the compiled serial loop
CONVERGED = 0
BUDGET = 1
NEED_SPACE = 2
SINGULAR = 3
NONFINITE = 4


@numba.njit(cache=True, nogil=True, inline="always")
def _before(ka, sa, kb, sb):
    return ka > kb or (ka == kb and sa < sb)


# 4-ary heap with the keys stored next to the slots: a sift touches one or
# two cache lines per level instead of chasing err[slot] for every child
@numba.njit(cache=True, nogil=True)
def heap_push(heap, hkey, size, key, slot):
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 2
        if _before(key, slot, hkey[parent], heap[parent]):
            heap[pos] = heap[parent]
            hkey[pos] = hkey[parent]
            pos = parent
        else:
            break
    heap[pos] = slot
    hkey[pos] = key
    return size + 1


@numba.njit(cache=True, nogil=True)
def heap_pop(heap, hkey, size):
    top = heap[0]
    size -= 1
    if size > 0:
        slot = heap[size]
        key = hkey[size]
        pos = 0
        while True:
            first = 4 * pos + 1
            if first >= size:
                break
            best = first
            last = min(first + 4, size)
            for c in range(first + 1, last):
                if _before(hkey[c], heap[c], hkey[best], heap[best]):
                    best = c
            if _before(hkey[best], heap[best], key, slot):
                heap[pos] = heap[best]
                hkey[pos] = hkey[best]
                pos = best
            else:
                break
        heap[pos] = slot
        hkey[pos] = key
    return top, size


@numba.njit(cache=True, nogil=True, inline="always")
def _neumaier(sums, k, x):
    s = sums[k]
    t = s + x
    if abs(s) >= abs(x):
        sums[k + 1] += (s - t) + x
    else:
        sums[k + 1] += (x - t) + s
    sums[k] = t


@numba.njit(cache=True, nogil=True)
def take(heap, hkey, state, meta, max_task, out):
    """Pop up to ``max_task`` slots into ``out``; returns how many."""
    size = meta[HEAP_SIZE]
    count = min(max_task, size)
    for i in range(count):
        slot, size = heap_pop(heap, hkey, size)
        state[slot] = INFLIGHT
        out[i] = slot
    meta[HEAP_SIZE] = size
    return count


@numba.njit(cache=True, nogil=True)
def put(member, rect, val_n, val_2n, err, state, heap, hkey, meta, sums, ids, rects, q_c, q_f):
    """Append tasks and push them; the caller guarantees capacity."""
    n = meta[N_CREATED]
    size = meta[HEAP_SIZE]
    for i in range(ids.shape[0]):
        slot = n + i
        member[slot] = ids[i]
        for c in range(4):
            rect[slot, c] = rects[i, c]
        val_n[slot] = q_c[i]
        val_2n[slot] = q_f[i]
        e = abs(q_c[i] - q_f[i])
        err[slot] = e
        state[slot] = QUEUED
        size = heap_push(heap, hkey, size, e, slot)
        _neumaier(sums, ERR_S, e)
        _neumaier(sums, VAL_S, q_f[i])
    meta[N_CREATED] = n + ids.shape[0]
    meta[HEAP_SIZE] = size


@numba.njit(cache=True, nogil=True)
def retire(err, val_2n, state, sums, parents):
    for i in range(parents.shape[0]):
        p = parents[i]
        state[p] = REFINED
        _neumaier(sums, ERR_S, -err[p])
        _neumaier(sums, VAL_S, -val_2n[p])


@numba.njit(cache=True, nogil=True)
def split(member, rect, parents, min_side):
    """Children of ``parents`` in quadrant order; ``bad`` is the first unsplittable parent or -1."""
    k = parents.shape[0]
    ids = np.empty(4 * k, dtype=np.int64)
    rects = np.empty((4 * k, 4))
    bad = -1
    for i in range(k):
        p = parents[i]
        x0 = rect[p, 0]
        x1 = rect[p, 1]
        y0 = rect[p, 2]
        y1 = rect[p, 3]
        if bad < 0 and (x1 - x0 < min_side or y1 - y0 < min_side):
            bad = p
        xm = 0.5 * (x0 + x1)
        ym = 0.5 * (y0 + y1)
        j = 4 * i
        rects[j, 0] = x0
        rects[j, 1] = xm
        rects[j, 2] = y0
        rects[j, 3] = ym
        rects[j + 1, 0] = xm
        rects[j + 1, 1] = x1
        rects[j + 1, 2] = y0
        rects[j + 1, 3] = ym
        rects[j + 2, 0] = x0
        rects[j + 2, 1] = xm
        rects[j + 2, 2] = ym
        rects[j + 2, 3] = y1
        rects[j + 3, 0] = xm
        rects[j + 3, 1] = x1
        rects[j + 3, 2] = ym
        rects[j + 3, 3] = y1
        for a in range(4):
            ids[j + a] = member[p]
    return ids, rects, bad


@numba.njit(cache=True, nogil=True)
def resum(err, val_2n, state, n_created):
    """Compensated re-summation of error and fine value over all unrefined slots."""
    sums = np.zeros(4)
    for slot in range(n_created):
        if state[slot] != REFINED:
            _neumaier(sums, ERR_S, err[slot])
            _neumaier(sums, VAL_S, val_2n[slot])
    return sums[ERR_S] + sums[ERR_C], sums[VAL_S] + sums[VAL_C]


@numba.njit(cache=True, nogil=True)
def member_totals(member, err, val_2n, state, n_created, member_count):
    vals = np.zeros(2 * member_count)
    errs = np.zeros(2 * member_count)
    leaves = np.zeros(member_count, dtype=np.int64)
    for slot in range(n_created):
        if state[slot] != REFINED:
            m = member[slot]
            _neumaier(vals, 2 * m, val_2n[slot])
            _neumaier(errs, 2 * m, err[slot])
            leaves[m] += 1
    out_v = np.empty(member_count)
    out_e = np.empty(member_count)
    for m in range(member_count):
        out_v[m] = vals[2 * m] + vals[2 * m + 1]
        out_e[m] = errs[2 * m] + errs[2 * m + 1]
    return out_v, out_e, leaves


@numba.njit(cache=True, nogil=True)
def threshold(epsilon, relative, value_floor, value):
    if relative:
        return epsilon * max(abs(value), value_floor)
    return epsilon


# not cached: the integrator argument is a dispatcher type that never matches a cache entry
@numba.njit(nogil=True)
def serial_loop(integrator, args, nodes, wf, wc, member, rect, val_n, val_2n, err, state, heap,
                hkey, meta, sums, trace, max_task, epsilon, relative, value_floor, eval_budget,
                evals_per_rect, min_side):
    """Extract, refine and commit until a stop condition; mirrors the threaded coordinator.

    Returns a status code; ``NEED_SPACE`` asks the caller to grow the arrays
    and call again.
    """
    parents = np.empty(max_task, dtype=np.int64)
    capacity = member.shape[0]
    while True:
        if meta[N_CREATED] + 4 * max_task > capacity:
            return NEED_SPACE
        count = take(heap, hkey, state, meta, max_task, parents)
        sel = parents[:count]
        ids, rects, bad = split(member, rect, sel, min_side)
        if bad >= 0:
            meta[BAD_SLOT] = bad
            return SINGULAR
        q_c, q_f, bad = integrator(ids, rects, nodes, wf, wc, args)
        if bad >= 0:
            meta[BAD_SLOT] = sel[bad // 4]
            return NONFINITE
        retire(err, val_2n, state, sums, sel)
        put(member, rect, val_n, val_2n, err, state, heap, hkey, meta, sums, ids, rects, q_c, q_f)
        meta[EVAL_COUNT] += 4 * count * evals_per_rect
        meta[ROUNDS] += 1
        if trace.shape[0] > 1:
            t = meta[TRACE_LEN]
            for i in range(count):
                trace[t + i] = sel[i]
            meta[TRACE_LEN] = t + count
        # coordinator check
        total = sums[ERR_S] + sums[ERR_C]
        value = sums[VAL_S] + sums[VAL_C]
        if total < threshold(epsilon, relative, value_floor, value):
            e, v = resum(err, val_2n, state, meta[N_CREATED])
            sums[ERR_S] = e
            sums[ERR_C] = 0.0
            sums[VAL_S] = v
            sums[VAL_C] = 0.0
            if e < threshold(epsilon, relative, value_floor, v):
                return CONVERGED
        if meta[EVAL_COUNT] >= eval_budget:
            return BUDGET


def fsum_parts(sums, k) -> float:
    return math.fsum((sums[k], sums[k + 1]))
