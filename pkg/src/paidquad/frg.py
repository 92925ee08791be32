"""Bubble integrands of the t-t' Hubbard model on the square lattice.

The frequency integral of the two regulated propagators is done in closed
form; what is left is a momentum integrand over the Brillouin zone
``[-pi, pi]^2`` for every unordered pair of form factors ``(m, n)``.

Closed form of the particle-particle kernel.  With ``a = |e1|``,
``b = |e2|`` and ``W = omega``, the frequency integral of
``-4 W p^4 / (p^2 + W^2)^3 / ((i p - e1)(-i p - e2))`` reduces to
``-4 W p^4 (p^2 + e1 e2) / ((p^2 + W^2)^3 (p^2 + a^2)(p^2 + b^2))``
and its residues at ``iW``, ``ia``, ``ib`` combine into

    e1 e2 >= 0:  -pi/2 [W^4 + 3W^3(a+b) + 12W^2 ab + 3a^2 b^2 + W ab(a^2+18ab+b^2)/(a+b)] / ((W+a)^3 (W+b)^3)
    e1 e2 <  0:  -pi/2 [W^4 + 3W^3(a+b) + 6W^2 ab - W ab(a+b) - 3a^2 b^2] / ((W+a)^3 (W+b)^3)

Only sums of pole positions appear in the denominators, so merging poles
(``a == b``, ``a == W``) need no special treatment.  The particle-hole
kernel follows from ``kernel_ph(W, e1, e2) == -kernel_pp(W, e1, -e2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .core import IntegrandFamily
from .rules import make_rule

BRILLOUIN_ZONE = (-math.pi, math.pi, -math.pi, math.pi)


class OracleError(ArithmeticError):
    """The numerical frequency integral did not converge."""


@dataclass(frozen=True)
class ModelParams:
    t: float = 1.0
    t_prime: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.t == 0:
            raise ValueError("hopping t sets the energy scale and must be nonzero")

    @property
    def bandwidth_bound(self) -> float:
        return 4 * abs(self.t) + 4 * abs(self.t_prime) + abs(self.mu)


class KernelArgs(NamedTuple):
    omega: float
    e1: float
    e2: float


def dispersion(k, params: ModelParams = ModelParams()):
    kx, ky = np.asarray(k[0], dtype=float), np.asarray(k[1], dtype=float)
    cx, cy = np.cos(kx), np.cos(ky)
    return -2.0 * params.t * (cx + cy) - 4.0 * params.t_prime * cx * cy - params.mu


def regulator(k0, omega: float):
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    k0 = np.asarray(k0, dtype=float)
    return k0**2 / (k0**2 + omega**2)


def propagator(k0, k, params: ModelParams, omega: float):
    """Regulated propagator ``theta(k0) / (i k0 - eps(k))``; zero at ``k0 == 0``."""
    k0 = np.asarray(k0, dtype=float)
    theta = regulator(k0, omega)
    eps = dispersion(k, params)
    denom = 1j * k0 - eps
    safe = np.where(theta == 0, 1.0, denom)
    return np.where(theta == 0, 0.0 + 0.0j, theta / safe)


@numba.njit(cache=True, nogil=True)
def _pp(omega, e1, e2):
    a = abs(e1)
    b = abs(e2)
    w = omega
    s = a + b
    ab = a * b
    den = (w + a) ** 3 * (w + b) ** 3
    if e1 * e2 >= 0.0:
        num = w**4 + 3.0 * w**3 * s + 12.0 * w * w * ab + 3.0 * ab * ab
        if s > 0.0:
            num += w * ab * (a * a + 18.0 * ab + b * b) / s
    else:
        num = w**4 + 3.0 * w**3 * s + 6.0 * w * w * ab - w * ab * s - 3.0 * ab * ab
    return -0.5 * math.pi * num / den


@numba.vectorize(["float64(float64, float64, float64)"], nopython=True, cache=True)
def _pp_ufunc(omega, e1, e2):
    return _pp(omega, e1, e2)


@numba.vectorize(["float64(float64, float64, float64)"], nopython=True, cache=True)
def _ph_ufunc(omega, e1, e2):
    return -_pp(omega, e1, -e2)


def _check_omega(omega):
    if not np.all(np.asarray(omega) > 0):
        raise ValueError(f"omega must be positive, got {omega}")


def kernel_pp(omega, e1, e2):
    """Omega-derivative of the frequency-integrated particle-particle propagator pair."""
    _check_omega(omega)
    out = _pp_ufunc(omega, e1, e2)
    return float(out) if np.ndim(out) == 0 else out


def kernel_ph(omega, e1, e2):
    """Omega-derivative of the frequency-integrated particle-hole propagator pair."""
    _check_omega(omega)
    out = _ph_ufunc(omega, e1, e2)
    return float(out) if np.ndim(out) == 0 else out


def _frequency_integrand(channel: str, omega: float, e1: float, e2: float, p0: np.ndarray) -> np.ndarray:
    # d/domega theta(p0)^2 times the bare propagator pair
    dtheta2 = -4.0 * omega * p0**4 / (p0**2 + omega**2) ** 3
    if channel == "pp":
        pair = 1.0 / ((1j * p0 - e1) * (-1j * p0 - e2))
    else:
        pair = 1.0 / ((1j * p0 - e1) * (1j * p0 - e2))
    return dtheta2 * pair


def kernel_oracle(channel: str, args: KernelArgs, tol: float = 1e-11, *,
                  max_points: int = 2**20 + 1) -> float:
    """Numerical frequency integral by nested Clenshaw-Curtis levels.

    Substitutes ``p0 = omega * tan(u)`` on ``u in (-pi/2, pi/2)`` and doubles
    the rule until two successive levels agree to ``tol`` (mixed abs/rel).
    """
    if channel not in ("pp", "ph"):
        raise ValueError(f"channel must be 'pp' or 'ph', got {channel!r}")
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    omega, e1, e2 = (float(v) for v in args)
    _check_omega(omega)

    def level(n_points):
        rule = make_rule(n_points)
        u = 0.5 * math.pi * rule.nodes[1:-1]  # integrand vanishes at u = +-pi/2
        p0 = omega * np.tan(u)
        jac = omega / np.cos(u) ** 2
        vals = _frequency_integrand(channel, omega, e1, e2, p0) * jac
        return 0.5 * math.pi * np.sum(rule.weights[1:-1] * vals)

    n = 65
    prev = level(n)
    while True:
        n = 2 * n - 1
        if n > max_points:
            raise OracleError(f"{channel} oracle did not converge for {args} within {max_points} points")
        cur = level(n)
        scale = max(1.0, abs(cur.real))
        if abs(cur - prev) < tol * scale:
            if abs(cur.imag) >= tol * scale:
                raise OracleError(f"imaginary part {cur.imag} exceeds tolerance")
            return float(cur.real)
        prev = cur


# --- form factors -----------------------------------------------------------

# 1D factors: 1, cos x, sin x, cos 2x, sin 2x
_ONE_D_NAMES = ("1", "cos({})", "sin({})", "cos(2{})", "sin(2{})")
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)

# 2D basis as (x-factor, y-factor); the 9-element basis is a prefix of the 25-element one
_PAIRS_9 = [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2)]
_PAIRS_25 = _PAIRS_9 + [(3, 0), (4, 0), (0, 3), (0, 4),
                        (3, 1), (3, 2), (4, 1), (4, 2),
                        (1, 3), (1, 4), (2, 3), (2, 4),
                        (3, 3), (3, 4), (4, 3), (4, 4)]


def _factor_1d(kind: int, x):
    x = np.asarray(x, dtype=float)
    if kind == 0:
        return np.full_like(x, _INV_SQRT_2PI)
    freq = 1.0 if kind in (1, 2) else 2.0
    trig = np.cos if kind in (1, 3) else np.sin
    return _INV_SQRT_PI * trig(freq * x)


@dataclass(frozen=True)
class FormFactorBasis:
    size: int = 9
    pairs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.size not in (9, 25):
            raise ValueError(f"basis size must be 9 or 25, got {self.size}")
        object.__setattr__(self, "pairs", tuple(_PAIRS_9 if self.size == 9 else _PAIRS_25))

    def describe(self, index: int) -> str:
        ix, iy = self.pairs[index]
        parts = [_ONE_D_NAMES[ix].format("px"), _ONE_D_NAMES[iy].format("py")]
        parts = [p for p in parts if p != "1"] or ["1"]
        return "*".join(parts)

    def __call__(self, index: int, p):
        return form_factor(index, p, self)


def form_factor(index: int, p, basis: FormFactorBasis):
    """Orthonormal form factor ``index`` of ``basis`` at momentum ``p = (px, py)``."""
    if not 0 <= index < basis.size:
        raise ValueError(f"form factor index {index} outside basis of size {basis.size}")
    ix, iy = basis.pairs[index]
    return _factor_1d(ix, p[0]) * _factor_1d(iy, p[1])


# --- bubble families ---------------------------------------------------------

@dataclass(frozen=True)
class BubbleSpec:
    channel: str = "pp"
    l: tuple = (1.57, 1.31)
    omega: float = 1.0
    params: ModelParams = ModelParams()
    basis: FormFactorBasis = FormFactorBasis(9)

    def __post_init__(self):
        if self.channel not in ("pp", "ph"):
            raise ValueError(f"channel must be 'pp' or 'ph', got {self.channel!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if len(self.l) != 2 or not all(math.isfinite(c) for c in self.l):
            raise ValueError(f"transfer momentum must be a finite 2-vector, got {self.l}")


@numba.njit(cache=True, nogil=True, inline="always")
def _factor_scalar(kind, x):
    if kind == 0:
        return 0.3989422804014327  # 1/sqrt(2 pi)
    if kind == 1:
        return 0.5641895835477563 * math.cos(x)
    if kind == 2:
        return 0.5641895835477563 * math.sin(x)
    if kind == 3:
        return 0.5641895835477563 * math.cos(2.0 * x)
    return 0.5641895835477563 * math.sin(2.0 * x)


@numba.njit(cache=True, nogil=True)
def _bubble_grid(kinds, ids, xs, ys, lx, ly, omega, t, tp, mu, ph):
    """Integrand values on tensor grids; ``kinds[m]`` holds the 1D factor kinds of member m."""
    k, nx = xs.shape
    ny = ys.shape[1]
    out = np.empty((k, nx, ny))
    cx1 = np.empty(nx)
    cx2 = np.empty(nx)
    fx = np.empty(nx)
    cy1 = np.empty(ny)
    cy2 = np.empty(ny)
    fy = np.empty(ny)
    hx = 0.5 * lx
    hy = 0.5 * ly
    for r in range(k):
        mx, my, nxk, nyk = kinds[ids[r], 0], kinds[ids[r], 1], kinds[ids[r], 2], kinds[ids[r], 3]
        for i in range(nx):
            x = xs[r, i]
            cx1[i] = math.cos(hx + x)
            cx2[i] = math.cos(hx - x)
            fx[i] = _factor_scalar(mx, x) * _factor_scalar(nxk, x)
        for j in range(ny):
            y = ys[r, j]
            cy1[j] = math.cos(hy + y)
            cy2[j] = math.cos(hy - y)
            fy[j] = _factor_scalar(my, y) * _factor_scalar(nyk, y)
        for i in range(nx):
            for j in range(ny):
                e1 = -2.0 * t * (cx1[i] + cy1[j]) - 4.0 * tp * cx1[i] * cy1[j] - mu
                e2 = -2.0 * t * (cx2[i] + cy2[j]) - 4.0 * tp * cx2[i] * cy2[j] - mu
                if ph:
                    kern = -_pp(omega, e1, -e2)
                else:
                    kern = _pp(omega, e1, e2)
                out[r, i, j] = kern * fx[i] * fy[j]
    return out


@numba.njit(cache=True, nogil=True)
def _bubble_rects(kinds, ids, rects, nodes, wf, wc, lx, ly, omega, t, tp, mu, ph):
    """Fused grid evaluation and pair contraction; ``bad`` is the first non-finite row or -1."""
    k = rects.shape[0]
    n = nodes.shape[0]
    q_c = np.empty(k)
    q_f = np.empty(k)
    cx1 = np.empty(n)
    cx2 = np.empty(n)
    fx = np.empty(n)
    cy1 = np.empty(n)
    cy2 = np.empty(n)
    fy = np.empty(n)
    hx = 0.5 * lx
    hy = 0.5 * ly
    bad = -1
    for r in range(k):
        m = ids[r]
        mx, my, nxk, nyk = kinds[m, 0], kinds[m, 1], kinds[m, 2], kinds[m, 3]
        xm = 0.5 * (rects[r, 0] + rects[r, 1])
        xh = 0.5 * (rects[r, 1] - rects[r, 0])
        ym = 0.5 * (rects[r, 2] + rects[r, 3])
        yh = 0.5 * (rects[r, 3] - rects[r, 2])
        for i in range(n):
            x = xm + xh * nodes[i]
            y = ym + yh * nodes[i]
            cx1[i] = math.cos(hx + x)
            cx2[i] = math.cos(hx - x)
            fx[i] = _factor_scalar(mx, x) * _factor_scalar(nxk, x)
            cy1[i] = math.cos(hy + y)
            cy2[i] = math.cos(hy - y)
            fy[i] = _factor_scalar(my, y) * _factor_scalar(nyk, y)
        sf = 0.0
        sc = 0.0
        for i in range(n):
            row_f = 0.0
            row_c = 0.0
            for j in range(n):
                e1 = -2.0 * t * (cx1[i] + cy1[j]) - 4.0 * tp * cx1[i] * cy1[j] - mu
                e2 = -2.0 * t * (cx2[i] + cy2[j]) - 4.0 * tp * cx2[i] * cy2[j] - mu
                if ph:
                    v = -_pp(omega, e1, -e2) * fy[j]
                else:
                    v = _pp(omega, e1, e2) * fy[j]
                row_f += wf[j] * v
                if j % 2 == 0:
                    row_c += wc[j // 2] * v
            sf += wf[i] * fx[i] * row_f
            if i % 2 == 0:
                sc += wc[i // 2] * fx[i] * row_c
        jac = xh * yh
        q_f[r] = jac * sf
        q_c[r] = jac * sc
        if bad < 0 and not (math.isfinite(sf) and math.isfinite(sc)):
            bad = r
    return q_c, q_f, bad


@numba.njit(cache=True, nogil=True)
def _bubble_integrator(ids, rects, nodes, wf, wc, args):
    kinds, lx, ly, omega, t, tp, mu, ph = args
    return _bubble_rects(kinds, ids, rects, nodes, wf, wc, lx, ly, omega, t, tp, mu, ph)


class BubbleFamily(IntegrandFamily):
    """Momentum integrands ``kernel(eps(q1), eps(q2)) f_m(p) f_n(p)`` for all ``m <= n``.

    The arguments are ``q1, q2 = l/2 + p, l/2 - p``; for the particle-hole
    channel ``p + l/2, p - l/2`` gives the same energies because the
    dispersion is even.
    """

    def __init__(self, spec: BubbleSpec, pairs: Sequence[tuple[int, int]] | None = None):
        self.spec = spec
        if pairs is None:
            pairs = [(m, n) for m in range(spec.basis.size) for n in range(m, spec.basis.size)]
        pairs = [tuple(p) for p in pairs]
        self._kinds = np.array([spec.basis.pairs[m] + spec.basis.pairs[n] for m, n in pairs],
                               dtype=np.int64)
        members = [self._member_callable(m, n) for m, n in pairs]
        super().__init__(members, BRILLOUIN_ZONE, pairs)

    def _member_callable(self, m: int, n: int):
        spec = self.spec

        def phi(px, py):
            return integrand(spec, m, n, px, py)

        phi.__name__ = f"phi_{m}_{n}"
        return phi

    def evaluate(self, ids, xs, ys):
        s = self.spec
        return _bubble_grid(self._kinds, np.ascontiguousarray(ids, dtype=np.int64),
                            np.ascontiguousarray(xs), np.ascontiguousarray(ys),
                            float(s.l[0]), float(s.l[1]), float(s.omega),
                            float(s.params.t), float(s.params.t_prime), float(s.params.mu),
                            s.channel == "ph")

    def jit_integrator(self):
        """Compiled ``(ids, rects, nodes, wf, wc, args) -> (q_c, q_f, bad)`` and its ``args``."""
        s = self.spec
        args = (self._kinds, float(s.l[0]), float(s.l[1]), float(s.omega), float(s.params.t),
                float(s.params.t_prime), float(s.params.mu), s.channel == "ph")
        return _bubble_integrator, args

    def integrate_rects(self, ids, rects, pair):
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        rects = np.ascontiguousarray(rects, dtype=float)
        fn, args = self.jit_integrator()
        q_c, q_f, bad = fn(ids, rects, pair.fine.nodes, pair.fine.weights, pair.coarse.weights, args)
        if bad >= 0:
            # the generic path locates and reports the offending point
            super().integrate_rects(ids[bad:bad + 1], rects[bad:bad + 1], pair)
        return q_c, q_f

    def subfamily(self, indices):
        return BubbleFamily(self.spec, [self.labels[i] for i in indices])


def integrand(spec: BubbleSpec, m: int, n: int, px, py):
    """Pointwise integrand of member ``(m, n)``, evaluated with plain numpy."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    lx, ly = spec.l
    e1 = dispersion((0.5 * lx + px, 0.5 * ly + py), spec.params)
    e2 = dispersion((0.5 * lx - px, 0.5 * ly - py), spec.params)
    kern = kernel_pp(spec.omega, e1, e2) if spec.channel == "pp" else kernel_ph(spec.omega, e1, e2)
    p = (px, py)
    return kern * form_factor(m, p, spec.basis) * form_factor(n, p, spec.basis)


def build_family(spec: BubbleSpec) -> BubbleFamily:
    """One member per unordered form-factor pair, ``size * (size + 1) / 2`` in total."""
    return BubbleFamily(spec)


def scan_grid(spec: BubbleSpec, m: int, n: int, grid_size: int = 512):
    """Integrand of member ``(m, n)`` on a uniform ``grid_size``-square grid over the zone."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    axis = np.linspace(-math.pi, math.pi, grid_size)
    PX, PY = np.meshgrid(axis, axis, indexing="ij")
    return axis, integrand(spec, m, n, PX, PY)


def sharpness(values) -> float:
    """``max|phi| / mean|phi|``: how strongly peaked a sampled integrand is."""
    mag = np.abs(np.asarray(values))
    return float(mag.max() / mag.mean())
