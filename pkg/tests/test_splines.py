import numpy as np
import pytest

from precisionfit.splines import (
    grid_spline_eval,
    grid_spline_fit,
    grid_spline_from_json,
    grid_spline_to_json,
    spline_eval_1d,
    spline_eval_batch,
    spline_fit_1d,
    spline_from_json,
    spline_to_json,
)
from precisionfit.targets import box, parse_expression


def _poly(coeffs, x):
    return np.polyval(coeffs, x)


class TestSplineFit1D:
    @pytest.mark.parametrize("order", [1, 2, 3, 4, 5])
    def test_reproduces_own_degree(self, order):
        # an order-n spline is exact on polynomials of degree <= n
        rng = np.random.default_rng(order)
        coeffs = rng.normal(size=order + 1)
        xs = np.linspace(-1, 2, 12)
        sp = spline_fit_1d(xs, _poly(coeffs, xs), order)
        t = np.linspace(-1, 2, 777)
        want = _poly(coeffs, t)
        scale = np.abs(want).max()
        assert np.abs(spline_eval_batch(sp, t) - want).max() <= 1e-12 * scale

    def test_interpolates_fit_points(self):
        xs = np.linspace(0, 3, 17)
        ys = np.sin(xs)
        for order in (1, 2, 3, 4, 5):
            sp = spline_fit_1d(xs, ys, order)
            assert np.abs(spline_eval_batch(sp, xs) - ys).max() <= 1e-12

    def test_order5_hits_precision_floor(self):
        xs = np.linspace(1, 5, 4096)
        sp = spline_fit_1d(xs, np.cos(2 * xs), 5)
        t = np.random.default_rng(0).uniform(1, 5, 20000)
        err = spline_eval_batch(sp, t) - np.cos(2 * t)
        rel = np.sqrt((err**2).sum() / (np.cos(2 * t) ** 2).sum())
        assert rel <= 1e-13

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            spline_fit_1d(np.array([0.0, 1.0, 2.0]), np.zeros(3), 3)

    def test_duplicate_knots(self):
        with pytest.raises(ValueError):
            spline_fit_1d(np.array([0.0, 1.0, 1.0, 2.0, 3.0]), np.zeros(5), 2)


class TestSplineEval1D:
    def test_linear_midpoint_average(self):
        xs = np.array([0.0, 1.0, 2.0])
        ys = np.array([2.0, 6.0, 4.0])
        sp = spline_fit_1d(xs, ys, 1)
        assert spline_eval_1d(sp, 0.5) == pytest.approx(4.0, abs=1e-14)
        assert spline_eval_1d(sp, 1.5) == pytest.approx(5.0, abs=1e-14)

    def test_knot_values_exact(self):
        xs = np.linspace(0, 1, 9)
        ys = np.exp(xs)
        sp = spline_fit_1d(xs, ys, 3)
        for x, y in zip(xs, ys):
            assert abs(spline_eval_1d(sp, x) - y) <= 1e-12

    def test_derivative_continuity_at_interior_knots(self):
        xs = np.linspace(0, 2, 11)
        sp = spline_fit_1d(xs, np.sin(3 * xs), 3)
        h = 1e-7
        for knot in sp.knots[1:-1]:
            left = (spline_eval_1d(sp, knot) - spline_eval_1d(sp, knot - h)) / h
            right = (spline_eval_1d(sp, knot + h) - spline_eval_1d(sp, knot)) / h
            assert abs(left - right) <= 1e-5  # first-order FD: O(h) accuracy

    def test_out_of_range_rejected(self):
        sp = spline_fit_1d(np.linspace(0, 1, 5), np.zeros(5), 1)
        with pytest.raises(ValueError):
            spline_eval_1d(sp, 1.5)


class TestGridSpline:
    def test_exact_on_low_degree_2d(self):
        spec = parse_expression("x1^3*x2^2", 2)
        gs = grid_spline_fit(spec, box(0, 1, 2), 8)
        q = np.random.default_rng(1).uniform(0.05, 0.95, (500, 2))
        want = q[:, 0] ** 3 * q[:, 1] ** 2
        assert np.abs(grid_spline_eval(gs, q) - want).max() <= 1e-10

    def test_exact_at_grid_nodes(self):
        spec = parse_expression("sin(x1*x2)", 2)
        gs = grid_spline_fit(spec, box(1, 3, 2), 7)
        mesh = np.meshgrid(*gs.axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        got = grid_spline_eval(gs, nodes)
        assert np.abs(got - gs.values.ravel()).max() <= 1e-12

    def test_3d_product_exact(self):
        spec = parse_expression("x1*x2*x3", 3)
        gs = grid_spline_fit(spec, box(1, 5, 3), 6)
        q = np.random.default_rng(2).uniform(1.5, 4.5, (300, 3))
        want = q.prod(axis=1)
        assert np.abs(grid_spline_eval(gs, q) - want).max() <= 1e-10 * 125

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            grid_spline_fit(parse_expression("x1", 1), box(0, 1, 1), 8)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            grid_spline_fit(parse_expression("x1*x2", 2), box(0, 1, 2), 3)


class TestSerialization:
    def test_spline_round_trip(self):
        xs = np.linspace(0, 1, 9)
        sp = spline_fit_1d(xs, np.cos(xs), 3)
        back = spline_from_json(spline_to_json(sp))
        t = np.linspace(0, 1, 101)
        assert np.array_equal(spline_eval_batch(sp, t), spline_eval_batch(back, t))

    def test_grid_round_trip(self):
        spec = parse_expression("sin(x1*x2)", 2)
        gs = grid_spline_fit(spec, box(1, 3, 2), 6)
        back = grid_spline_from_json(grid_spline_to_json(gs))
        q = np.random.default_rng(3).uniform(1.1, 2.9, (50, 2))
        assert np.allclose(grid_spline_eval(gs, q), grid_spline_eval(back, q),
                           rtol=0, atol=1e-15)
