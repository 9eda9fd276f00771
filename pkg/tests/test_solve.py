"""Linear solvers, condition numbers, discrete solutions and error metrics."""

from __future__ import annotations

import numpy as np
import numpy.testing as nptest
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from webfem.assembly import QuadConfig
from webfem.basis import WebBasis, reproduction_coefficients
from webfem.bspline import GridSpec
from webfem.config import load_config, shipped_config
from webfem.domain import interval, quarter_disk, square_minus_quarter_disk, weight_eval
from webfem.problem import CoupledProblem, manufactured
from webfem.solve import (
    CSV_COLUMNS, ExactField, NonConvergenceError, SingularMatrixError, SolutionField, bicgstab,
    build_system, convergence_study, error_norms, estimate_condition, evaluate_solution, fit_slope,
    relative_residual, run_case, solve, solve_matrix,
)

SMOOTH = "(x^2+y^2-1)*(1-x)*(1-y)*exp(x)"


def product_problem():
    return manufactured(CoupledProblem(square_minus_quarter_disk("product"), q1=1.0, exact=(SMOOTH, "0")))


def poly_problem():
    return load_config(shipped_config("poly_bvp")).build_problem()


class TestLinearSolvers:
    @pytest.mark.parametrize("method", ["direct", "iterative", "auto"])
    def test_identity(self, method: str) -> None:
        x, stats = solve_matrix(sp.identity(5, format="csr"), np.arange(1.0, 6.0), method)
        nptest.assert_allclose(x, np.arange(1.0, 6.0))
        assert stats.residual <= 1e-10

    def test_bad_tolerance_and_method(self) -> None:
        G = sp.identity(3, format="csr")
        with pytest.raises(ValueError):
            solve_matrix(G, np.ones(3), method="cg")
        with pytest.raises(ValueError):
            solve(type("S", (), {"G": G, "F": np.ones(3)})(), tol=2.0)

    def test_iterative_matches_direct_on_poly_system(self) -> None:
        _, system = build_system(poly_problem(), 1 / 8, 4)
        xd, _ = solve(system, "direct", 1e-12)
        xi, st_i = solve(system, "iterative", 1e-10)
        assert st_i.method == "iterative" and st_i.iterations > 0
        assert np.linalg.norm(xi - xd) <= 1e-7 * np.linalg.norm(xd)

    @given(st.integers(2, 30), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_bicgstab_on_random_nonsymmetric(self, n: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        G = sp.csr_matrix(np.eye(n) * n + rng.standard_normal((n, n)))
        b = rng.standard_normal(n)
        x, _, res = bicgstab(G, b, tol=1e-11)
        assert res <= 1e-11
        nptest.assert_allclose(G @ x, b, atol=1e-9 * np.linalg.norm(b))

    def test_nonconvergence_reports_best_residual(self) -> None:
        rng = np.random.default_rng(1)
        G = sp.csr_matrix(rng.standard_normal((40, 40)))
        with pytest.raises(NonConvergenceError) as info:
            bicgstab(G, rng.standard_normal(40), tol=1e-12, maxiter=3)
        assert 0.0 < info.value.best_residual < np.inf
        assert info.value.x is not None
        assert "best relative residual" in str(info.value)

    def test_zero_rhs(self) -> None:
        x, its, res = bicgstab(sp.identity(4, format="csr"), np.zeros(4))
        assert not x.any() and its == 0 and res == 0.0


class TestConditionNumber:
    def test_identity(self) -> None:
        assert estimate_condition(sp.identity(6)) == pytest.approx(1.0)

    def test_diagonal(self) -> None:
        assert estimate_condition(sp.diags([1.0, 10.0])) == pytest.approx(10.0, rel=1e-8)

    def test_against_dense_svd(self) -> None:
        rng = np.random.default_rng(4)
        A = np.eye(12) * 3 + rng.standard_normal((12, 12))
        s = np.linalg.svd(A, compute_uv=False)
        assert estimate_condition(sp.csr_matrix(A), rtol=1e-13) == pytest.approx(s[0] / s[-1], rel=1e-6)

    def test_singular(self) -> None:
        with pytest.raises(SingularMatrixError):
            estimate_condition(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))

    @pytest.mark.parametrize("n", [2, 3])
    def test_stiffness_condition_quadruples(self, n: int) -> None:
        prob = CoupledProblem(interval(), P=[[1]], R=[0], q1=0.0)
        c1 = estimate_condition(build_system(prob, 1 / 16, n)[1].G)
        c2 = estimate_condition(build_system(prob, 1 / 32, n)[1].G)
        assert 3.5 <= c2 / c1 <= 4.5

    def test_condition_grows_under_refinement(self) -> None:
        prob = CoupledProblem(square_minus_quarter_disk(), q1=1.0)
        conds = [estimate_condition(build_system(prob, h, 2)[1].G) for h in (1 / 8, 1 / 16, 1 / 32)]
        assert conds[0] < conds[1] < conds[2]


class TestSolutionEvaluation:
    dom = quarter_disk()
    basis = WebBasis(GridSpec.covering(0.25, 3, dom.lower, dom.upper), dom)

    def test_coefficient_length_checked(self) -> None:
        with pytest.raises(ValueError):
            SolutionField(self.basis, np.zeros(3))

    def test_zero_coefficients(self) -> None:
        sol = SolutionField(self.basis, np.zeros(2 * self.basis.N))
        vals, inside = evaluate_solution(sol, np.array([[0.2, 0.3], [0.5, 0.5]]))
        assert inside.all()
        assert not vals.any()

    def test_vanishes_on_boundary_and_nan_outside(self) -> None:
        rng = np.random.default_rng(0)
        sol = SolutionField(self.basis, rng.standard_normal(2 * self.basis.N))
        t = np.linspace(0.05, 1.5, 7)
        pts = np.concatenate([np.c_[np.cos(t), np.sin(t)], np.c_[np.zeros(4), np.linspace(0.1, 0.9, 4)],
                              [[0.9, 0.9]]])
        vals, inside = evaluate_solution(sol, pts)
        nptest.assert_allclose(vals[:, :-1], 0.0, atol=1e-12)
        assert not inside[7:-1].any()  # exact points on the axis; arc points may round inward
        assert np.isnan(vals[:, -1]).all()

    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_linear_in_coefficients(self, a: float, b: float, seed: int) -> None:
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal((2, 2 * self.basis.N))
        pts = rng.uniform(0, 0.7, size=(10, 2))
        fu, _ = evaluate_solution(SolutionField(self.basis, u), pts, d=1)
        fv, _ = evaluate_solution(SolutionField(self.basis, v), pts, d=1)
        fw, _ = evaluate_solution(SolutionField(self.basis, a * u + b * v), pts, d=1)
        nptest.assert_allclose(fw, a * fu + b * fv, atol=1e-10 * (1 + np.abs(fw).max()))


class TestMetrics:
    def test_residual_needs_smooth_splines(self) -> None:
        prob = product_problem()
        basis, _ = build_system(prob, 0.25, 2)
        with pytest.raises(ValueError, match="n >= 3"):
            relative_residual(prob, SolutionField(basis, np.zeros(2 * basis.N)), basis)

    def test_zero_rhs_flag(self) -> None:
        dom = quarter_disk()
        prob = CoupledProblem(dom)
        basis = WebBasis(GridSpec.covering(0.25, 3, dom.lower, dom.upper), dom)
        res = relative_residual(prob, SolutionField(basis, np.zeros(2 * basis.N)), basis)
        assert res.zero_rhs and res.e == 0.0

    def test_reproduced_field_has_zero_error(self) -> None:
        # w * x * y with the product weight is in the n = 3 space
        dom = quarter_disk("product")
        basis = WebBasis(GridSpec.covering(0.25, 3, dom.lower, dom.upper), dom)
        c = reproduction_coefficients(basis, (1, 1))
        sol = SolutionField(basis, np.concatenate([c, -2 * c]))
        w = "(1-x^2-y^2)*x*y"
        err = error_norms(sol, (f"{w}*x*y", f"-2*{w}*x*y"))
        assert err.L2_total < 1e-9 and err.H1_total < 1e-9

    def test_zero_against_zero(self) -> None:
        dom = quarter_disk()
        basis = WebBasis(GridSpec.covering(0.25, 2, dom.lower, dom.upper), dom)
        err = error_norms(SolutionField(basis, np.zeros(2 * basis.N)), ExactField("0", "0", 2))
        assert err.L2 == (0.0, 0.0) and err.H1 == (0.0, 0.0)

    def test_fit_slope(self) -> None:
        hs = np.array([0.1, 0.05, 0.025])
        assert fit_slope(hs, 3 * hs**2) == pytest.approx(2.0)
        assert np.isnan(fit_slope(hs, [1.0, np.nan, -1.0]))


class TestConvergence:
    def test_needs_three_widths(self) -> None:
        with pytest.raises(ValueError):
            convergence_study(product_problem(), [0.25, 0.125], [2])

    def test_report_csv(self) -> None:
        rep = convergence_study(product_problem(), [0.25, 0.125, 0.0625], [2], condition=False)
        lines = rep.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 5 and lines[-1].startswith("# slopes n=2:")
        assert [r["h"] for r in rep.rows] == [0.25, 0.125, 0.0625]
        assert "seconds" not in rep.to_csv(include_timing=False).splitlines()[0]
        assert "slopes n=2" in rep.to_table()

    def test_h1_error_rate_for_quadratics(self) -> None:
        prob = product_problem()
        h1 = [run_case(prob, h, 3, condition=False, residual=False)[0]["H1"] for h in (1 / 8, 1 / 16, 1 / 32)]
        assert h1[0] > h1[1] > h1[2]
        assert 2**1.75 <= h1[1] / h1[2] <= 2**2.25

    def test_solution_vanishes_on_dirichlet_boundary(self) -> None:
        _, sol = run_case(poly_problem(), 0.1, 4, condition=False, residual=False)
        s = np.linspace(0.0, 1.0, 21)
        pts = np.concatenate([np.c_[np.ones_like(s), s], np.c_[s, np.ones_like(s)],
                              np.c_[np.cos(s * np.pi / 2), np.sin(s * np.pi / 2)]])
        vals, _ = evaluate_solution(sol, pts)
        assert np.nanmax(np.abs(vals)) < 1e-12
        inner, _ = evaluate_solution(sol, np.array([[0.8, 0.8]]))
        assert np.abs(inner).max() > 1e-6

    def test_poly_residual_decreases(self) -> None:
        prob = poly_problem()
        e = [run_case(prob, h, 4, condition=False)[0]["e"] for h in (0.1, 0.05)]
        assert e[1] < e[0]

    def test_quadrature_options_reach_the_metrics(self) -> None:
        prob = product_problem()
        row_a, _ = run_case(prob, 0.25, 3, QuadConfig(cut_rule="discard"), condition=False)
        row_b, _ = run_case(prob, 0.25, 3, QuadConfig(), condition=False)
        assert row_a["H1"] != row_b["H1"]
        assert weight_eval(prob.dom.w_omega, (0.9, 0.9)) > 0
