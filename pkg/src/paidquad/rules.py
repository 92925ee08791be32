"""Clenshaw-Curtis rules, nested rule pairs and tensor-product evaluation
on axis-aligned rectangles.

A :class:`QuadPairRule` couples an ``N+1`` point rule with the ``2N+1`` point
rule whose even-indexed nodes are exactly the coarse nodes, so one sweep over
the fine tensor grid yields both quadratures and their difference.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.fft


class EvaluationError(ArithmeticError):
    """An integrand returned a non-finite value."""

    def __init__(self, message: str, point=None, member=None):
        super().__init__(message)
        self.point = point
        self.member = member


class Rectangle(NamedTuple):
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    @classmethod
    def checked(cls, x_lo, x_hi, y_lo, y_hi) -> "Rectangle":
        vals = [float(v) for v in (x_lo, x_hi, y_lo, y_hi)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"rectangle bounds must be finite, got {vals}")
        if not (vals[0] < vals[1] and vals[2] < vals[3]):
            raise ValueError(f"rectangle must have x_lo < x_hi and y_lo < y_hi, got {vals}")
        return cls(*vals)

    @property
    def area(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)

    def quadrants(self) -> tuple["Rectangle", "Rectangle", "Rectangle", "Rectangle"]:
        """Equal bisection in each axis: (lower-left, lower-right, upper-left, upper-right)."""
        xm = 0.5 * (self.x_lo + self.x_hi)
        ym = 0.5 * (self.y_lo + self.y_hi)
        return (
            Rectangle(self.x_lo, xm, self.y_lo, ym),
            Rectangle(xm, self.x_hi, self.y_lo, ym),
            Rectangle(self.x_lo, xm, ym, self.y_hi),
            Rectangle(xm, self.x_hi, ym, self.y_hi),
        )


@dataclass(frozen=True)
class Rule1D:
    point_count: int
    nodes: np.ndarray
    weights: np.ndarray


class PairResult(NamedTuple):
    q_coarse: float
    q_fine: float
    err: float
    eval_count: int


@dataclass(frozen=True)
class QuadPairRule:
    N: int
    coarse: Rule1D
    fine: Rule1D

    @property
    def evals_per_rect(self) -> int:
        return self.fine.point_count ** 2


def _check_point_count(point_count) -> int:
    if int(point_count) != point_count or point_count < 2:
        raise ValueError(f"point_count must be an integer >= 2, got {point_count!r}")
    return int(point_count)


def cc_nodes(point_count: int) -> np.ndarray:
    n = _check_point_count(point_count) - 1
    return np.cos(np.arange(n + 1) * np.pi / n)


def cc_weights_cosine(point_count: int) -> np.ndarray:
    """Weights from the explicit cosine sum (O(n^2))."""
    n = _check_point_count(point_count) - 1
    theta = np.arange(n + 1) * np.pi / n
    k = np.arange(1, n // 2 + 1)
    b = np.where(2 * k == n, 1.0, 2.0)
    series = (b / (4.0 * k**2 - 1.0)) @ np.cos(2.0 * np.outer(k, theta))
    c = np.full(n + 1, 2.0)
    c[0] = c[-1] = 1.0
    w = c / n * (1.0 - series)
    return 0.5 * (w + w[::-1])


def cc_weights_dct(point_count: int) -> np.ndarray:
    """Weights from a type-I discrete cosine transform of the Chebyshev moments (O(n log n))."""
    n = _check_point_count(point_count) - 1
    k = np.arange(n + 1)
    moments = np.zeros(n + 1)
    even = k % 2 == 0
    moments[even] = 2.0 / (1.0 - k[even] ** 2.0)
    if n == 1:
        return np.ones(2)
    w = scipy.fft.dct(moments, type=1) / n
    w[0] *= 0.5
    w[-1] *= 0.5
    return 0.5 * (w + w[::-1])


@functools.lru_cache(maxsize=None)
def make_rule(point_count: int) -> Rule1D:
    """Clenshaw-Curtis rule on [-1, 1] with nodes cos(j*pi/(point_count-1)), descending."""
    point_count = _check_point_count(point_count)
    nodes = cc_nodes(point_count)
    weights = cc_weights_cosine(point_count) if point_count <= 257 else cc_weights_dct(point_count)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return Rule1D(point_count, nodes, weights)


@functools.lru_cache(maxsize=None)
def make_pair(N: int) -> QuadPairRule:
    if int(N) != N or N < 2 or N % 2:
        raise ValueError(f"N must be an even integer >= 2, got {N!r}")
    N = int(N)
    fine = make_rule(2 * N + 1)
    # coarse nodes are taken from the fine grid by index, so nesting is exact
    nodes = fine.nodes[::2].copy()
    nodes.flags.writeable = False
    coarse = Rule1D(N + 1, nodes, make_rule(N + 1).weights)
    return QuadPairRule(N, coarse, fine)


def grid_axes(rects: np.ndarray, pair: QuadPairRule) -> tuple[np.ndarray, np.ndarray]:
    """Fine-grid coordinates for a stack of rectangles.

    ``rects`` has shape (k, 4) in (x_lo, x_hi, y_lo, y_hi) order; returns
    ``xs`` and ``ys`` of shape (k, 2N+1).
    """
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    t = pair.fine.nodes
    xm = 0.5 * (rects[:, 0] + rects[:, 1])
    xh = 0.5 * (rects[:, 1] - rects[:, 0])
    ym = 0.5 * (rects[:, 2] + rects[:, 3])
    yh = 0.5 * (rects[:, 3] - rects[:, 2])
    xs = xm[:, None] + xh[:, None] * t[None, :]
    ys = ym[:, None] + yh[:, None] * t[None, :]
    return xs, ys


def contract(values: np.ndarray, rects: np.ndarray, pair: QuadPairRule) -> tuple[np.ndarray, np.ndarray]:
    """Coarse and fine quadratures from fine-grid values of shape (k, 2N+1, 2N+1)."""
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    jac = 0.25 * (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2])
    wf = pair.fine.weights
    wc = pair.coarse.weights
    q_fine = jac * np.einsum("kij,i,j->k", values, wf, wf)
    q_coarse = jac * np.einsum("kij,i,j->k", values[:, ::2, ::2], wc, wc)
    return q_coarse, q_fine


def check_finite(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, members=None) -> None:
    if np.isfinite(values).all():
        return
    k, i, j = np.argwhere(~np.isfinite(values))[0]
    point = (float(xs[k, i]), float(ys[k, j]))
    member = None if members is None else int(members[k])
    raise EvaluationError(
        f"integrand returned {values[k, i, j]!r} at point {point}"
        + ("" if member is None else f" (member {member})"),
        point=point,
        member=member,
    )


def integrate_pair(f: Callable, rect: Rectangle, pair: QuadPairRule) -> PairResult:
    """Tensor Clenshaw-Curtis pair on one rectangle.

    ``f`` is called once with two (2N+1, 2N+1) coordinate arrays holding the
    distinct fine-grid points.
    """
    rect = Rectangle.checked(*rect)
    xs, ys = grid_axes(np.array([rect]), pair)
    X, Y = np.meshgrid(xs[0], ys[0], indexing="ij")
    values = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)[None]
    check_finite(values, xs, ys)
    q_c, q_f = contract(values, np.array([rect]), pair)
    q_c, q_f = float(q_c[0]), float(q_f[0])
    return PairResult(q_c, q_f, abs(q_c - q_f), pair.evals_per_rect)
