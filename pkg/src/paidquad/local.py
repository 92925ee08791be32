"""Per-integral baseline: every family member is refined on its own, with an
isolated error target, using the same rule pair and subdivision as the
global driver.  Differences in evaluation counts against
:func:`paidquad.core.run_adaptive` therefore come from the error strategy alone.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import AdaptiveConfig, FamilyResult, IntegrandFamily, serial_reference
from .rules import make_pair


@dataclass
class LocalResult:
    value: float
    err: float
    eval_count: int
    converged: bool
    task_count: int = 1


def _run_single(family: IntegrandFamily, config: AdaptiveConfig) -> LocalResult:
    res = serial_reference(family, config)
    return LocalResult(float(res.values[0]), res.global_err, res.eval_count,
                       res.converged, res.task_count)


def run_local(member: Callable, domain, config: AdaptiveConfig | None = None) -> LocalResult:
    """Serial adaptive integration of one integrand, worst subdomain first."""
    return _run_single(IntegrandFamily([member], domain), config or AdaptiveConfig())


def member_config(config: AdaptiveConfig, member_count: int) -> AdaptiveConfig:
    """Isolated per-member target.

    Absolute mode splits the family target evenly; relative mode keeps
    ``epsilon`` relative to each member's own value.
    """
    if config.epsilon_mode == "absolute":
        return replace(config, epsilon=config.epsilon / member_count)
    return config


def initial_scale(family: IntegrandFamily, N: int) -> float:
    """Mean magnitude of the whole-domain fine estimates of all members."""
    pair = make_pair(N)
    M = family.member_count
    rects = np.tile(np.array(family.domain, dtype=float), (M, 1))
    _, q_f = family.integrate_rects(np.arange(M, dtype=np.int64), rects, pair)
    return float(np.mean(np.abs(q_f)))


def run_family_local(family: IntegrandFamily, config: AdaptiveConfig | None = None, *,
                     member_floor: float | str | None = None,
                     share_scale: float | None = None) -> FamilyResult:
    """Integrate each member independently, members spread over ``config.workers`` threads.

    ``eval_budget`` caps each member separately.

    Parameters
    ----------
    member_floor
        Relative mode only: lower bound on the denominator of each member's
        threshold.  ``None`` keeps ``config.value_floor``; ``"auto"`` uses
        :func:`initial_scale`, so members that vanish by symmetry stop once
        their error is small against a typical member instead of against
        zero.
    share_scale
        Relative mode only: give every member the absolute target
        ``epsilon * max(|share_scale|, value_floor) / M``, an equal share of
        the family-level threshold a global run with family value
        ``share_scale`` would use.  Overrides ``member_floor``.
    """
    config = config or AdaptiveConfig()
    M = family.member_count
    relative = config.epsilon_mode == "relative"
    if relative and share_scale is not None:
        family_threshold = config.threshold(share_scale)
        per_member = replace(config, epsilon=family_threshold / M, epsilon_mode="absolute")
    else:
        if member_floor == "auto":
            member_floor = initial_scale(family, config.N)
        if member_floor is not None and relative:
            config = replace(config, value_floor=max(float(member_floor), config.value_floor))
        per_member = member_config(config, M)

    def job(m: int) -> LocalResult:
        return _run_single(family.subfamily([m]), per_member)

    if config.workers == 1:
        results = [job(m) for m in range(M)]
    else:
        # executor threads pull members first-in first-out
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(job, range(M)))

    values = np.array([r.value for r in results])
    errs = np.array([r.err for r in results])
    if per_member.epsilon_mode == "absolute":
        threshold = per_member.epsilon * M
    else:
        threshold = math.fsum(per_member.threshold(v) for v in values)
    return FamilyResult(
        values=values,
        global_err=math.fsum(errs),
        eval_count=sum(r.eval_count for r in results),
        task_count=sum(r.task_count for r in results),
        converged=all(r.converged for r in results),
        labels=list(family.labels),
        threshold=threshold,
        member_errs=errs,
    )
