"""Uniform B-spline evaluation and grid bookkeeping."""

from __future__ import annotations

import numpy as np
import numpy.testing as nptest
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from webfem.bspline import GridSpec, bspline_eval, support_cells, tensor_eval


def scipy_bspline(n, k, h, x, d=0):
    """Reference values from scipy's de Boor implementation."""
    knots = h * (k + np.arange(n + 1, dtype=float))
    b = BSpline.basis_element(knots, extrapolate=False)
    if d:
        b = b.derivative(d)
    out = b(np.asarray(x, dtype=float))
    return np.nan_to_num(out, nan=0.0)


class TestBsplineEval:
    def test_box_function(self) -> None:
        assert bspline_eval(1, 0, 1.0, 0.5) == 1.0

    def test_hat_peak(self) -> None:
        assert bspline_eval(2, 0, 1.0, 1.0) == 1.0

    def test_cubic_knot_values(self) -> None:
        nptest.assert_allclose(bspline_eval(4, 0, 1.0, 1.0), 1 / 6, rtol=1e-14)
        nptest.assert_allclose(bspline_eval(4, 0, 1.0, 2.0), 4 / 6, rtol=1e-14)

    def test_hat_slope(self) -> None:
        assert bspline_eval(2, 0, 1.0, 0.5, d=1) == pytest.approx(1.0)

    @pytest.mark.parametrize("n,d", [(n, d) for n in (2, 3, 4, 5) for d in range(min(n, 3))])
    def test_matches_scipy(self, n: int, d: int) -> None:
        h, k = 0.3, -2
        x = np.linspace(k * h - 0.2, (k + n) * h + 0.2, 173)
        # avoid the knots, where one-sided values may differ
        x = x[np.min(np.abs(x[:, None] / h - np.arange(-10, 10)[None, :]), axis=1) > 1e-9]
        nptest.assert_allclose(bspline_eval(n, k, h, x, d), scipy_bspline(n, k, h, x, d),
                               atol=1e-12 / h**d)

    def test_right_continuous_at_knots(self) -> None:
        # order 2 derivative jumps at x=1 from +1 to -1; the right value is used
        assert bspline_eval(2, 0, 1.0, 1.0, d=1) == pytest.approx(-1.0)
        assert bspline_eval(1, 0, 1.0, 1.0) == 0.0
        assert bspline_eval(1, 0, 1.0, 0.0) == 1.0

    @pytest.mark.parametrize("args", [(0, 0, 1.0, 0.5, 0), (2, 0, 0.0, 0.5, 0), (2, 0, 1.0, 0.5, -1)])
    def test_rejects_bad_arguments(self, args: tuple) -> None:
        with pytest.raises(ValueError):
            bspline_eval(*args)

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_zero_outside_support_nonnegative_inside(self, n: int) -> None:
        h, k = 0.25, 1
        out = np.array([k * h - 1e-3, k * h - 0.5, (k + n) * h, (k + n) * h + 0.7])
        assert np.all(bspline_eval(n, k, h, out) == 0.0)
        inside = np.linspace(k * h, (k + n) * h, 101)[:-1]
        assert np.all(bspline_eval(n, k, h, inside) >= 0.0)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_derivative_matches_central_differences(self, n: int) -> None:
        h, k, step = 0.5, 0, 1e-5
        x = (k + np.array([0.31, 1.47, n - 0.23])) * h
        fd = (bspline_eval(n, k, h, x + step) - bspline_eval(n, k, h, x - step)) / (2 * step)
        nptest.assert_allclose(bspline_eval(n, k, h, x, d=1), fd, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_piecewise_polynomial_on_cells(self, n: int) -> None:
        h, k = 0.2, 0
        for cell in range(k, k + n):
            t = np.linspace(cell * h, (cell + 1) * h, n + 3)[1:-1]
            vals = bspline_eval(n, k, h, t)
            fit = np.polyfit(t, vals, n - 1)
            nptest.assert_allclose(np.polyval(fit, t), vals, atol=1e-10)

    @given(st.integers(2, 6), st.floats(0.05, 2.0), st.floats(0.0, 1.0, exclude_max=True))
    @settings(max_examples=60, deadline=None)
    def test_partition_of_unity(self, n: int, h: float, frac: float) -> None:
        x = (3.0 + frac) * h
        total = sum(bspline_eval(n, k, h, x) for k in range(3 - n + 1, 4))
        assert abs(total - 1.0) < 1e-12


class TestGrid:
    def test_validation(self) -> None:
        with pytest.raises(ValueError):
            GridSpec(0.0, 2, 1, ((0, 1),))
        with pytest.raises(ValueError):
            GridSpec(0.1, 1, 1, ((0, 1),))
        with pytest.raises(ValueError):
            GridSpec(0.1, 2, 3, ((0, 1),) * 3)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_covering_keeps_every_touching_spline(self, n: int) -> None:
        h = 1 / 8
        grid = GridSpec.covering(h, n, (0.0, 0.0), (1.0, 1.0))
        for lo, hi in grid.index_box:
            # b_lo ends at the left edge of the box's first cell and b_hi starts in its last
            assert (lo + n) * h > 0.0 and (lo - 1 + n) * h <= 0.0
            assert hi * h < 1.0 and (hi + 1) * h >= 1.0

    def test_cell_geometry(self) -> None:
        grid = GridSpec(0.25, 2, 2, ((0, 3), (0, 3)))
        lo, hi = grid.cell_bounds((1, 2))
        nptest.assert_array_equal(lo, [0.25, 0.5])
        nptest.assert_array_equal(hi, [0.5, 0.75])

    def test_flat_index_round_trip(self) -> None:
        grid = GridSpec(0.25, 3, 2, ((-2, 3), (-1, 4)))
        ks = np.array(grid.all_indices())
        flat = grid.flat_index(ks)
        nptest.assert_array_equal(flat, np.arange(len(ks)))
        nptest.assert_array_equal(grid.unflat_index(flat), ks)


class TestTensor:
    def test_hat_product_peak(self) -> None:
        grid = GridSpec(1.0, 2, 2, ((0, 2), (0, 2)))
        assert tensor_eval(grid, (0, 0), (1.0, 1.0)) == 1.0

    def test_zero_outside_support(self) -> None:
        grid = GridSpec(1.0, 3, 2, ((0, 2), (0, 2)))
        pts = np.array([[-0.1, 1.0], [1.0, 3.0], [3.5, 3.5]])
        nptest.assert_array_equal(tensor_eval(grid, (0, 0), pts), 0.0)

    def test_dimension_mismatch(self) -> None:
        grid = GridSpec(1.0, 2, 2, ((0, 2), (0, 2)))
        with pytest.raises(ValueError):
            tensor_eval(grid, (0,), (0.5, 0.5))
        with pytest.raises(ValueError):
            tensor_eval(grid, (0, 0), (0.5,))

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_partition_of_unity(self, n: int) -> None:
        h = 0.25
        grid = GridSpec.covering(h, n, (0.0, 0.0), (1.0, 1.0))
        rng = np.random.default_rng(1)
        pts = rng.uniform(0.0, 1.0, size=(40, 2))
        total = sum(tensor_eval(grid, k, pts) for k in grid.all_indices())
        nptest.assert_allclose(total, 1.0, atol=1e-12)

    def test_mixed_derivative_is_product(self) -> None:
        grid = GridSpec(0.5, 3, 2, ((0, 2), (0, 2)))
        x = np.array([0.61, 0.93])
        expect = bspline_eval(3, 1, 0.5, x[0], 1) * bspline_eval(3, 0, 0.5, x[1], 1)
        assert tensor_eval(grid, (1, 0), x, (1, 1)) == pytest.approx(expect)


class TestSupportCells:
    def test_linear_1d(self) -> None:
        grid = GridSpec(0.25, 2, 1, ((-1, 3),))
        assert support_cells(grid, 0) == [(0,), (1,)]
        assert support_cells(grid, -1) == [(-1,), (0,)]

    def test_count_2d(self) -> None:
        grid = GridSpec(0.25, 3, 2, ((-2, 3), (-2, 3)))
        cells = support_cells(grid, (0, 0))
        assert len(cells) == 9
        assert min(cells) == (0, 0) and max(cells) == (2, 2)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_cells_tile_the_support(self, n: int) -> None:
        h, k = 0.5, 2
        grid = GridSpec(h, n, 1, ((0, 5),))
        cells = support_cells(grid, k)
        lo, hi = cells[0][0] * h, (cells[-1][0] + 1) * h
        assert (lo, hi) == (k * h, (k + n) * h)
