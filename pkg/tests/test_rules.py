"""Clenshaw-Curtis rules, nested pairs and single-rectangle pair quadrature."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paidquad.rules import (
    EvaluationError,
    Rectangle,
    cc_weights_cosine,
    cc_weights_dct,
    integrate_pair,
    make_pair,
    make_rule,
)


def moment_weights(point_count):
    """Oracle: weights from exactness on Chebyshev polynomials T_0..T_n at the nodes."""
    n = point_count - 1
    x = np.cos(np.arange(n + 1) * np.pi / n)
    k = np.arange(n + 1)
    T = np.cos(np.outer(k, np.arccos(np.clip(x, -1, 1))))
    moments = np.zeros(n + 1)
    even = k % 2 == 0
    moments[even] = 2.0 / (1.0 - k[even].astype(float) ** 2)
    return np.linalg.solve(T, moments)


class TestMakeRule:
    def test_two_points(self):
        rule = make_rule(2)
        np.testing.assert_array_equal(rule.nodes, [1.0, -1.0])
        np.testing.assert_allclose(rule.weights, [1.0, 1.0], atol=1e-15)

    def test_three_points_is_simpson(self):
        rule = make_rule(3)
        np.testing.assert_allclose(rule.nodes, [1.0, 0.0, -1.0], atol=1e-16)
        np.testing.assert_allclose(rule.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)

    @pytest.mark.parametrize("point_count", [2, 3, 5, 9, 13, 17, 33, 65, 129, 257, 513])
    def test_weights_sum_to_two(self, point_count):
        assert abs(make_rule(point_count).weights.sum() - 2.0) < 1e-14

    @pytest.mark.parametrize("point_count", [2, 3, 4, 5, 7, 9, 13, 17, 25, 33])
    def test_monomial_exactness(self, point_count):
        rule = make_rule(point_count)
        for d in range(point_count):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert abs(rule.weights @ rule.nodes**d - exact) < 1e-13, d

    @pytest.mark.parametrize("point_count", [2, 3, 5, 8, 9, 16, 17, 33])
    def test_weights_match_moment_oracle(self, point_count):
        np.testing.assert_allclose(make_rule(point_count).weights, moment_weights(point_count),
                                   atol=1e-13)

    @pytest.mark.parametrize("point_count", [2, 3, 4, 5, 9, 10, 17, 33, 64, 65, 129, 257, 1025])
    def test_cosine_and_dct_weights_agree(self, point_count):
        np.testing.assert_allclose(cc_weights_cosine(point_count), cc_weights_dct(point_count),
                                   rtol=0, atol=1e-14)

    @pytest.mark.parametrize("point_count", [2, 5, 9, 13])
    def test_nodes_are_exact_cosines(self, point_count):
        n = point_count - 1
        expected = [math.cos(j * math.pi / n) for j in range(point_count)]
        np.testing.assert_array_equal(make_rule(point_count).nodes, np.cos(np.arange(point_count) * np.pi / n))
        np.testing.assert_allclose(make_rule(point_count).nodes, expected, atol=1e-16)

    def test_cached_and_read_only(self):
        rule = make_rule(9)
        assert make_rule(9) is rule
        with pytest.raises(ValueError):
            rule.weights[0] = 0.0

    @pytest.mark.parametrize("bad", [1, 0, -3, 2.5])
    def test_invalid_point_count(self, bad):
        with pytest.raises(ValueError):
            make_rule(bad)


class TestMakePair:
    @pytest.mark.parametrize("N, coarse, fine, evals", [(2, 3, 5, 25), (4, 5, 9, 81), (6, 7, 13, 169)])
    def test_sizes(self, N, coarse, fine, evals):
        pair = make_pair(N)
        assert pair.coarse.point_count == coarse
        assert pair.fine.point_count == fine
        assert pair.evals_per_rect == evals

    @pytest.mark.parametrize("N", [2, 4, 6, 8, 16])
    def test_nesting_is_bitwise(self, N):
        pair = make_pair(N)
        for j, x in enumerate(pair.coarse.nodes):
            assert x == pair.fine.nodes[2 * j]

    def test_n2_nodes(self):
        pair = make_pair(2)
        np.testing.assert_allclose(pair.fine.nodes, [1, math.sqrt(2) / 2, 0, -math.sqrt(2) / 2, -1],
                                   atol=1e-16)
        np.testing.assert_allclose(pair.coarse.nodes, [1, 0, -1], atol=1e-16)

    @pytest.mark.parametrize("bad", [0, 1, 3, 5, -2])
    def test_invalid_N(self, bad):
        with pytest.raises(ValueError):
            make_pair(bad)


class Counter:
    """Wraps an integrand and counts the points it is called on."""

    def __init__(self, f):
        self.f = f
        self.points = 0

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(x, y)
        self.points += x.size
        return self.f(x, y)


class TestIntegratePair:
    def test_constant_on_brillouin_zone(self):
        res = integrate_pair(lambda x, y: np.ones_like(x), (-math.pi, math.pi, -math.pi, math.pi), make_pair(4))
        assert res.q_coarse == pytest.approx(4 * math.pi**2, rel=1e-14)
        assert res.q_fine == pytest.approx(4 * math.pi**2, rel=1e-14)
        assert res.err < 1e-12

    def test_scalar_return_is_broadcast(self):
        res = integrate_pair(lambda x, y: 2.0, (0, 1, 0, 3), make_pair(2))
        assert res.q_fine == pytest.approx(6.0, rel=1e-14)

    def test_x2y2(self):
        res = integrate_pair(lambda x, y: x**2 * y**2, (-1, 1, -1, 1), make_pair(4))
        assert res.q_coarse == pytest.approx(4 / 9, rel=1e-14)
        assert res.q_fine == pytest.approx(4 / 9, rel=1e-14)

    def test_runge_in_x(self):
        res = integrate_pair(lambda x, y: 1 / (1 + 25 * x**2), (-1, 1, -1, 1), make_pair(4))
        exact = 2 * (2 / 5) * math.atan(5)
        assert abs(res.q_fine - exact) < 0.2
        assert res.err > 0
        assert res.err == abs(res.q_coarse - res.q_fine)

    @pytest.mark.parametrize("N", [2, 4, 6])
    def test_each_fine_point_evaluated_once(self, N):
        f = Counter(lambda x, y: np.sin(x) * y)
        res = integrate_pair(f, (0, 1, 0, 1), make_pair(N))
        assert f.points == res.eval_count == (2 * N + 1) ** 2

    def test_nonfinite_reports_point(self):
        with pytest.raises(EvaluationError) as info, np.errstate(divide="ignore"):
            integrate_pair(lambda x, y: 1 / x, (0, 1, 0, 1), make_pair(2))
        assert info.value.point[0] == 0.0

    @pytest.mark.parametrize("rect", [(1, 0, 0, 1), (0, 1, 2, 2), (0, math.inf, 0, 1), (0, 1, math.nan, 1)])
    def test_invalid_rectangle(self, rect):
        with pytest.raises(ValueError):
            integrate_pair(lambda x, y: x, rect, make_pair(2))


poly_coef = st.lists(st.floats(-5, 5), min_size=25, max_size=25).map(lambda c: np.reshape(c, (5, 5)))
rects = st.tuples(st.floats(-10, 10), st.floats(0.01, 5), st.floats(-10, 10), st.floats(0.01, 5)).map(
    lambda t: Rectangle(t[0], t[0] + t[1], t[2], t[2] + t[3]))


def poly(coef):
    return lambda x, y: np.polynomial.polynomial.polyval2d(x, y, coef)


def abs_scale(coef, rect):
    return integrate_pair(lambda x, y: np.abs(poly(coef)(x, y)), rect, make_pair(4)).q_fine + 1e-300


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(poly_coef, rects)
    def test_polynomial_exactness(self, coef, rect):
        res = integrate_pair(poly(coef), rect, make_pair(4))
        assert res.err <= 1e-12 * abs_scale(coef, rect)

    @settings(max_examples=100, deadline=None)
    @given(poly_coef, rects)
    def test_translation_scale_covariance(self, coef, rect):
        f = poly(coef)
        hx = 0.5 * (rect.x_hi - rect.x_lo)
        hy = 0.5 * (rect.y_hi - rect.y_lo)
        cx = 0.5 * (rect.x_hi + rect.x_lo)
        cy = 0.5 * (rect.y_hi + rect.y_lo)
        direct = integrate_pair(f, rect, make_pair(4))
        mapped = integrate_pair(lambda u, v: f(cx + hx * u, cy + hy * v), (-1, 1, -1, 1), make_pair(4))
        scale = abs_scale(coef, rect)
        assert abs(direct.q_fine - rect.area / 4 * mapped.q_fine) <= 1e-13 * scale
        assert abs(direct.q_coarse - rect.area / 4 * mapped.q_coarse) <= 1e-13 * scale

    @settings(max_examples=100, deadline=None)
    @given(poly_coef, rects)
    def test_subdivision_consistency(self, coef, rect):
        f = poly(coef)
        whole = integrate_pair(f, rect, make_pair(4)).q_fine
        parts = math.fsum(integrate_pair(f, q, make_pair(4)).q_fine for q in rect.quadrants())
        assert abs(parts - whole) <= 1e-12 * abs_scale(coef, rect)

    def test_quadrants_tile_parent(self):
        rect = Rectangle(0.0, 1.0, 0.0, 1.0)
        assert rect.quadrants() == (
            (0, 0.5, 0, 0.5), (0.5, 1, 0, 0.5), (0, 0.5, 0.5, 1), (0.5, 1, 0.5, 1))
