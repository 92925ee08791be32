"""Oracle suites run by ``paid-bench verify`` and reused by the test-suite.

Each suite returns a :class:`SuiteResult` with its case count, the number of
failures and the worst observed deviation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import AdaptiveConfig, IntegrandFamily, run_adaptive
from .frg import (
    BRILLOUIN_ZONE,
    BubbleSpec,
    FormFactorBasis,
    KernelArgs,
    build_family,
    form_factor,
    kernel_oracle,
    kernel_ph,
    kernel_pp,
)
from .rules import Rectangle, integrate_pair, make_pair


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: int
    worst: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.cases > 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.cases - self.failures}/{self.cases} cases, "
                f"worst {self.worst:.3e} (tol {self.tolerance:.0e}){' ' + self.detail if self.detail else ''}")


def mixed_error(value: float, reference: float) -> float:
    """``|value - reference| / max(1, |reference|)``."""
    return abs(value - reference) / max(1.0, abs(reference))


# kernels --------------------------------------------------------------

def kernel_cases(count: int = 1000, coalescent: int = 50, seed: int = 7) -> list[tuple[str, KernelArgs]]:
    """Random (channel, args) cases; the last ``coalescent`` ones sit on merging poles."""
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count - coalescent):
        omega = 10 ** rng.uniform(-3, 1)
        e1, e2 = rng.uniform(-4.5, 4.5, 2)
        cases.append((rng.choice(["pp", "ph"]), KernelArgs(omega, e1, e2)))
    for k in range(coalescent):
        omega = 10 ** rng.uniform(-3, 1)
        e = rng.uniform(-4.5, 4.5)
        kind = k % 3
        if kind == 0:
            cases.append(("pp", KernelArgs(omega, e, -e)))
        elif kind == 1:
            cases.append(("pp", KernelArgs(omega, e, e + rng.uniform(-1e-9, 1e-9))))
        else:
            cases.append(("ph", KernelArgs(omega, e, e + rng.uniform(-1e-9, 1e-9))))
    return cases


def kernel_suite(count: int = 1000, coalescent: int = 50, tol: float = 1e-8,
                 perturbation: float = 0.0, seed: int = 7) -> SuiteResult:
    """Closed-form kernels against the quadrature oracle.

    ``perturbation`` scales the closed form by ``1 + perturbation`` to check
    that the suite notices a wrong kernel.
    """
    cases = kernel_cases(count, coalescent, seed)
    analytic = {"pp": kernel_pp, "ph": kernel_ph}
    worst = 0.0
    failures = 0
    for channel, args in cases:
        value = analytic[channel](*args) * (1.0 + perturbation)
        err = mixed_error(value, kernel_oracle(channel, args, tol=1e-11))
        worst = max(worst, err)
        failures += err > tol
    spot = kernel_pp(1.0, 0.0, 0.0) * (1.0 + perturbation)
    spot_err = abs(spot + math.pi / 2)
    failures += spot_err > 1e-9
    return SuiteResult("kernel-oracle", len(cases) + 1, failures, max(worst, spot_err), tol,
                       f"(kernel_pp(1,0,0) = {spot:.15f})")


# form factors ---------------------------------------------------------

def gram_matrix(basis: FormFactorBasis, points: int = 64) -> np.ndarray:
    """Gram matrix on a uniform periodic grid, exact for these trigonometric shells."""
    axis = -math.pi + 2 * math.pi * np.arange(points) / points
    PX, PY = np.meshgrid(axis, axis, indexing="ij")
    F = np.stack([form_factor(i, (PX, PY), basis).ravel() for i in range(basis.size)])
    return F @ F.T * (2 * math.pi / points) ** 2


def orthonormality_suite(tol: float = 1e-10) -> SuiteResult:
    worst = 0.0
    cases = 0
    failures = 0
    for size in (9, 25):
        dev = np.abs(gram_matrix(FormFactorBasis(size)) - np.eye(size))
        worst = max(worst, float(dev.max()))
        cases += dev.size
        failures += int((dev > tol).sum())
    return SuiteResult("orthonormality", cases, failures, worst, tol)


# rules ----------------------------------------------------------------

def random_polynomial(rng: np.random.Generator, degree: int):
    """Random per-axis degree polynomial and its exact integral over a rectangle."""
    coef = rng.normal(size=(degree + 1, degree + 1))

    def f(x, y):
        return np.polynomial.polynomial.polyval2d(x, y, coef)

    def exact(rect: Rectangle) -> float:
        px = np.polynomial.polynomial.polyint(np.eye(degree + 1), axis=0)
        ix = np.polynomial.polynomial.polyval(rect.x_hi, px) - np.polynomial.polynomial.polyval(rect.x_lo, px)
        iy = np.polynomial.polynomial.polyval(rect.y_hi, px) - np.polynomial.polynomial.polyval(rect.y_lo, px)
        return float(ix @ coef @ iy)

    return f, exact


def random_rectangle(rng: np.random.Generator) -> Rectangle:
    x0, y0 = rng.uniform(-3, 3, 2)
    w, h = rng.uniform(0.05, 3, 2)
    return Rectangle(x0, x0 + w, y0, y0 + h)


def polynomial_suite(count: int = 200, tol: float = 1e-12, seed: int = 11) -> SuiteResult:
    """Pair error and fine value of random per-axis degree <= N polynomials."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    cases = 0
    for N in (2, 4, 6):
        pair = make_pair(N)
        for _ in range(count):
            f, exact = random_polynomial(rng, N)
            rect = random_rectangle(rng)
            res = integrate_pair(f, rect, pair)
            ref = exact(rect)
            scale = max(abs(ref), 1e-300)
            # relative to the magnitude of the integrand times the area to avoid cancellation noise
            mag = integrate_pair(lambda x, y: np.abs(f(x, y)), rect, pair).q_fine
            scale = max(scale, mag)
            dev = max(res.err, abs(res.q_fine - ref)) / scale
            worst = max(worst, dev)
            failures += dev > tol
            cases += 1
    return SuiteResult("polynomial-exactness", cases, failures, worst, tol)


# driver ---------------------------------------------------------------

def uniform_reference(f: Callable, domain, depth: int = 8, points: int = 32, chunk: int = 16) -> float:
    """Composite Gauss-Legendre rule on a uniform ``2**depth`` square grid of panels.

    Independent of the Clenshaw-Curtis code; used as the brute-force reference.
    """
    rect = Rectangle.checked(*domain)
    t, w = np.polynomial.legendre.leggauss(points)
    panels = 2 ** depth

    def axis(lo, hi):
        h = (hi - lo) / panels
        left = lo + h * np.arange(panels)
        x = (left[:, None] + 0.5 * h * (t[None, :] + 1.0)).ravel()
        wx = np.tile(0.5 * h * w, panels)
        return x, wx

    x, wx = axis(rect.x_lo, rect.x_hi)
    y, wy = axis(rect.y_lo, rect.y_hi)
    total = []
    for s in range(0, x.size, chunk):
        X = x[s:s + chunk, None]
        vals = np.broadcast_to(np.asarray(f(X, y[None, :]), dtype=float), (X.shape[0], y.size))
        total.append(wx[s:s + chunk] @ vals @ wy)
    return math.fsum(total)


def oracle_corpus() -> list[tuple[str, IntegrandFamily]]:
    """Six families of bounded integrands spanning smooth to sharply peaked."""
    unit = (-1.0, 1.0, -1.0, 1.0)
    consts = IntegrandFamily([lambda x, y, c=c: np.full(np.broadcast(x, y).shape, c)
                              for c in (1.0, 2.0, -3.5)], unit)
    polys = IntegrandFamily([lambda x, y: x**2 * y**2, lambda x, y: x**2 + y**2,
                             lambda x, y: 1 + x - 2 * x**3 * y + 0.5 * y**5 + x**6 * y**6], unit)
    runge = IntegrandFamily([lambda x, y: 1 / (1 + 25 * x**2) / (1 + 25 * y**2)], unit)
    gauss = IntegrandFamily([lambda x, y: np.exp(-50 * ((x - 0.3) ** 2 + y**2))], BRILLOUIN_ZONE)
    out = [("constants", consts), ("polynomials", polys), ("runge", runge), ("gaussian", gauss)]
    for omega in (0.5, 0.05):
        fam = build_family(BubbleSpec("pp", (1.57, 1.31), omega, basis=FormFactorBasis(9)))
        out.append((f"pp(0,0) omega={omega}", fam.subfamily([0])))
    return out


def oracle_suite(epsilon: float = 1e-8, depth: int = 8) -> SuiteResult:
    """Adaptive values against the uniform reference within ``max(10 eps, 1e-9 |value|)``."""
    worst = 0.0
    failures = 0
    cases = 0
    notes = []
    config = AdaptiveConfig(epsilon=epsilon, epsilon_mode="absolute")
    for name, family in oracle_corpus():
        res = run_adaptive(family, config)
        for m, member in enumerate(family.members):
            ref = uniform_reference(member, family.domain, depth)
            tol = max(10 * epsilon, 1e-9 * abs(ref))
            dev = abs(res.values[m] - ref)
            worst = max(worst, dev / tol)
            bad = dev > tol or not res.converged
            failures += bad
            cases += 1
            if bad:
                notes.append(f"{name}[{m}] dev {dev:.2e}")
    return SuiteResult("oracle-equivalence", cases, failures, worst, 1.0,
                       "(worst is deviation / tolerance)" + ("; " + ", ".join(notes) if notes else ""))


SUITES = {
    "kernel": kernel_suite,
    "orthonormality": orthonormality_suite,
    "polynomial": polynomial_suite,
    "oracle": oracle_suite,
}


def run_all(kernel_perturbation: float = 0.0, only: list[str] | None = None) -> list[SuiteResult]:
    out = []
    for name, fn in SUITES.items():
        if only and name not in only:
            continue
        out.append(fn(perturbation=kernel_perturbation) if name == "kernel" else fn())
    return out
