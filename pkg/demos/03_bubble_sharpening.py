"""Bubble integrands sharpen as the scale drops, and the family gets harder.

Run with ``python demos/03_bubble_sharpening.py``.
"""
# %%
import time

import numpy as np

from paidquad import AdaptiveConfig, BubbleSpec, build_family, run_adaptive, run_family_local
from paidquad.frg import kernel_oracle, kernel_pp, KernelArgs, scan_grid, sharpness

# The frequency integral is done in closed form; check one value against the
# numerical oracle first.
args = KernelArgs(0.3, 0.7, -1.1)
print(f"closed form {kernel_pp(*args):.12f}  oracle {kernel_oracle('pp', args):.12f}")

# %%
# Peak height over mean: the constant-form-factor member near l = (pi, pi/4).
for omega in (1.0, 0.5, 0.1, 0.03):
    _, grid = scan_grid(BubbleSpec("pp", (3.14, 0.78), omega), 0, 0, 256)
    print(f"omega {omega:5.2f}: sharpness {sharpness(grid):7.2f}")

# %%
# The whole 45-member family at a few scales; the local baseline gets the same
# family-level target so both end at comparable accuracy.
cfg = AdaptiveConfig(epsilon=1e-5)
print(f"{'omega':>6} {'paid evals':>11} {'local evals':>12} {'paid s':>7} {'local s':>8}")
for omega in (1.0, 0.1, 0.03):
    family = build_family(BubbleSpec("pp", (1.57, 1.31), omega))
    start = time.perf_counter()
    paid = run_adaptive(family, cfg)
    t_paid = time.perf_counter() - start
    start = time.perf_counter()
    local = run_family_local(family, cfg, share_scale=float(np.sum(paid.values)))
    t_local = time.perf_counter() - start
    print(f"{omega:6.2f} {paid.eval_count:11d} {local.eval_count:12d} {t_paid:7.2f} {t_local:8.2f}")
