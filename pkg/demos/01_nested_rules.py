"""Nested Clenshaw-Curtis pairs and the error estimate they give for free.

Run with ``python demos/01_nested_rules.py``.
"""
# %%
import math

import numpy as np

from paidquad import integrate_pair, make_pair

# The coarse rule of a pair reuses every other node of the fine rule, so one
# grid of (2N+1)^2 points yields two estimates and their difference.
pair = make_pair(4)
print("fine nodes  ", np.round(pair.fine.nodes, 4))
print("coarse nodes", np.round(pair.coarse.nodes, 4))
print("coarse == fine[::2]:", np.array_equal(pair.coarse.nodes, pair.fine.nodes[::2]))

# %%
# Polynomials of per-axis degree <= N are integrated exactly by both rules,
# so the estimate vanishes up to rounding.
res = integrate_pair(lambda x, y: 3 * x**4 * y**2 - x * y + 1, (-1, 1, -1, 1), pair)
print(f"polynomial: fine {res.q_fine:.15f} exact {12 / 15 + 4:.15f} err {res.err:.1e}")

# %%
# A peaked function shows a large gap between the rules; halving the
# rectangle shrinks it quickly, which is what the adaptive drivers exploit.
def runge(x, y):
    return 1 / (1 + 25 * x**2) / (1 + 25 * y**2)


exact = (0.4 * math.atan(5)) ** 2
for depth in range(4):
    h = 2.0 / 2**depth
    edges = -1 + h * np.arange(2**depth + 1)
    fine = err = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        for y0, y1 in zip(edges[:-1], edges[1:]):
            r = integrate_pair(runge, (x0, x1, y0, y1), pair)
            fine += r.q_fine
            err += r.err
    print(f"{4**depth:3d} rectangles: estimate {err:.2e}, true error {abs(fine - exact):.2e}")
