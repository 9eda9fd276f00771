"""Expression parsing, evaluation and symbolic differentiation."""

from __future__ import annotations

import math

import numpy as np
import numpy.testing as nptest
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webfem.expr import ExprError, NonSmoothError, differentiate, parse_expression


class TestParse:
    def test_polynomial(self) -> None:
        assert parse_expression("x*(1-x)")(0.25) == pytest.approx(0.1875)

    def test_sin_pi(self) -> None:
        assert parse_expression("sin(pi*x)")(0.5) == pytest.approx(1.0)

    def test_syntax_error_offset(self) -> None:
        with pytest.raises(ExprError) as info:
            parse_expression("x+*y")
        assert info.value.offset == 2

    @pytest.mark.parametrize("src", ["foo(x)", "z+1", "x+", "(x", "sin x", "2x", "x)"])
    def test_rejects(self, src: str) -> None:
        with pytest.raises(ExprError):
            parse_expression(src)

    @pytest.mark.parametrize(
        "src,x,y,expect",
        [
            ("2^3^2", 0.0, 0.0, 512.0),
            ("-x^2", 3.0, 0.0, -9.0),
            ("(-x)^2", 3.0, 0.0, 9.0),
            ("1-2-3", 0.0, 0.0, -4.0),
            ("8/4/2", 0.0, 0.0, 1.0),
            ("x*y+x/y", 2.0, 4.0, 8.5),
            ("2*-x", 1.5, 0.0, -3.0),
            ("min(x, y) + max(x, y)", 1.0, 5.0, 6.0),
            ("abs(-x) + sqrt(y)", 2.0, 9.0, 5.0),
            ("exp(0) + cos(0) + e - e", 0.0, 0.0, 2.0),
            ("1.5e-1 * 2", 0.0, 0.0, 0.3),
            ("x^2 + y^2 - 1", 0.9, 0.9, 0.62),
        ],
    )
    def test_precedence_and_values(self, src: str, x: float, y: float, expect: float) -> None:
        assert parse_expression(src)(x, y) == pytest.approx(expect)

    def test_numbers_become_constants(self) -> None:
        e = parse_expression(2.5)
        assert e.is_const and e.value == 2.5

    def test_vectorized_evaluation(self) -> None:
        e = parse_expression("x*y")
        pts = np.array([[1.0, 2.0], [3.0, 4.0]])
        nptest.assert_array_equal(e.at(pts), [2.0, 12.0])

    def test_one_dimensional_variables(self) -> None:
        e = parse_expression("x*(1-x)", variables=("x",))
        nptest.assert_allclose(e.at(np.array([[0.5]])), [0.25])
        with pytest.raises(ExprError):
            parse_expression("x*y", variables=("x",))

    def test_constant_folding(self) -> None:
        assert parse_expression("2*3+1").is_const
        assert parse_expression("0*x").is_const

    def test_print_reparse(self) -> None:
        e = parse_expression("-(x+1)^2/(y-3) + sin(x*y)")
        again = parse_expression(str(e))
        for x, y in [(0.2, 0.7), (1.3, -0.4)]:
            assert again(x, y) == pytest.approx(e(x, y), rel=1e-14)


class TestDifferentiate:
    def test_square(self) -> None:
        assert differentiate(parse_expression("x^2"), "x")(0.5) == pytest.approx(1.0)

    def test_sin(self) -> None:
        assert differentiate(parse_expression("sin(pi*x)"), "x")(0.0) == pytest.approx(math.pi)

    def test_other_variable(self) -> None:
        d = differentiate(parse_expression("x"), "y")
        assert d.is_const and d.value == 0.0

    @pytest.mark.parametrize("src", ["abs(x)", "min(x, y)", "max(x, 1)"])
    def test_nonsmooth_rejected_in_smooth_mode(self, src: str) -> None:
        with pytest.raises(NonSmoothError):
            differentiate(parse_expression(src), "x", smooth=True)

    def test_nonsmooth_allowed_otherwise(self) -> None:
        d = differentiate(parse_expression("abs(x) + max(x, y)"), "x")
        assert d(-2.0, 0.0) == pytest.approx(-1.0)
        assert d(2.0, 0.0) == pytest.approx(2.0)

    def test_variable_power(self) -> None:
        d = differentiate(parse_expression("x^y"), "y")
        assert d(2.0, 3.0) == pytest.approx(8.0 * math.log(2.0))


def _leaf():
    return st.one_of(st.sampled_from(["x", "y", "pi"]), st.floats(-3, 3).map(lambda v: f"{v:.3f}"))


def _grow(children):
    # arguments are kept in ranges where every function is smooth
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, children).map(lambda t: f"({t[0]})/(2 + sin({t[1]}))"),
        children.map(lambda a: f"sin({a})"),
        children.map(lambda a: f"cos({a})"),
        children.map(lambda a: f"exp(sin({a}))"),
        children.map(lambda a: f"sqrt(1 + ({a})^2)"),
        children.map(lambda a: f"log(2 + cos({a}))"),
        children.map(lambda a: f"({a})^3"),
        children.map(lambda a: f"-({a})"),
    )


random_expressions = st.recursive(_leaf(), _grow, max_leaves=12)


@given(random_expressions, st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_derivative_matches_finite_differences(src: str, x: float, y: float) -> None:
    e = parse_expression(src)
    step = 1e-6
    for name, dx, dy in (("x", step, 0.0), ("y", 0.0, step)):
        d = differentiate(e, name, smooth=True)(x, y)
        fd = (e(x + dx, y + dy) - e(x - dx, y - dy)) / (2 * step)
        scale = max(1.0, abs(d), abs(e(x, y)))
        assert abs(d - fd) <= 1e-6 * scale, (src, name, d, fd)
