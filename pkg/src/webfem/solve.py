"""Solution of the Galerkin system and accuracy metrics.

Metrics: relative residual of the strong equations, L2 and H1-seminorm
errors against an exact solution, condition numbers, and least-squares
convergence rates over a sweep of grid widths.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import QuadConfig, assemble, map_chunks
from .basis import WebBasis
from .bspline import GridSpec
from .domain import weight_eval
from .expr import differentiate, parse_expression

DIRECT_LIMIT = 20_000


class NonConvergenceError(RuntimeError):
    def __init__(self, message, best_residual, x=None):
        super().__init__(f"{message} (best relative residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.x = x


class SingularMatrixError(ValueError):
    pass


@dataclass
class SolverStats:
    method: str
    iterations: int
    residual: float
    seconds: float


def jacobi_preconditioner(G):
    d = G.diagonal().astype(float)
    d[d == 0.0] = 1.0
    return 1.0 / d


def bicgstab(G, F, tol=1e-10, maxiter=None, precond=None, x0=None):
    """Right-preconditioned BiCGSTAB for a general sparse matrix.

    `precond` is a vector of inverse diagonal entries (Jacobi).  The method is
    restarted from the true residual on breakdown or when the recursively
    updated residual drifts from the true one.  Returns ``(x, iterations, rel_res)``.
    """
    n = G.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    Minv = np.ones(n) if precond is None else precond
    bnorm = np.linalg.norm(F)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    best_x, best_res = x.copy(), np.inf
    it = 0
    while it < maxiter:
        r = F - G @ x
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return x, it, res
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        while it < maxiter:
            it += 1
            rho_new = r_hat @ r
            if rho_new == 0.0 or omega == 0.0:
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            p_hat = Minv * p
            v = G @ p_hat
            denom = r_hat @ v
            if denom == 0.0:
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= tol * bnorm:
                x = x + alpha * p_hat
                break
            s_hat = Minv * s
            t = G @ s_hat
            tt = t @ t
            omega = (t @ s) / tt if tt > 0.0 else 0.0
            x = x + alpha * p_hat + omega * s_hat
            r = s - omega * t
            if np.linalg.norm(r) <= tol * bnorm:
                break
    r = F - G @ x
    res = np.linalg.norm(r) / bnorm
    if res < best_res:
        best_x, best_res = x, res
    if best_res <= tol:
        return best_x, it, best_res
    raise NonConvergenceError(f"BiCGSTAB did not converge in {maxiter} iterations", best_res, best_x)


def _direct(G, F, tol):
    lu = spla.splu(sp.csc_matrix(G))
    x = lu.solve(F)
    bnorm = np.linalg.norm(F) or 1.0
    res = np.linalg.norm(F - G @ x) / bnorm
    steps = 0
    while res > tol and steps < 3:  # iterative refinement
        x = x + lu.solve(F - G @ x)
        res = np.linalg.norm(F - G @ x) / bnorm
        steps += 1
    if res > tol:
        raise NonConvergenceError("direct solve missed the tolerance", res, x)
    return x, steps, res


def solve(system, method="auto", tol=1e-10, maxiter=None):
    """Solve ``G U = F``; returns ``(U, SolverStats)`` with ``|GU - F|/|F| <= tol``.

    ``auto`` uses the sparse direct solver up to 20 000 unknowns and
    Jacobi-preconditioned BiCGSTAB beyond.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    G = system.G if hasattr(system, "G") else system
    F = system.F if hasattr(system, "F") else None
    return solve_matrix(G, F, method, tol, maxiter)


def solve_matrix(G, F, method="auto", tol=1e-10, maxiter=None):
    G = sp.csr_matrix(G)
    F = np.asarray(F, dtype=float)
    if method == "auto":
        method = "direct" if G.shape[0] <= DIRECT_LIMIT else "iterative"
    t0 = time.perf_counter()
    if method == "direct":
        x, its, res = _direct(G, F, tol)
    elif method == "iterative":
        maxiter = 10 * G.shape[0] if maxiter is None else maxiter
        x, its, res = bicgstab(G, F, tol, maxiter, jacobi_preconditioner(G))
    else:
        raise ValueError(f"unknown solver method {method!r}")
    # independent check with one matrix-vector product
    bnorm = np.linalg.norm(F)
    check = np.linalg.norm(G @ x - F) / bnorm if bnorm > 0 else np.linalg.norm(G @ x)
    if check > tol:
        raise NonConvergenceError(f"{method} solution fails the residual check", check, x)
    return x, SolverStats(method, its, float(check), time.perf_counter() - t0)


def estimate_condition(G, rtol=1e-9, maxiter=5000, seed=0):
    """Spectral condition number ``sigma_max / sigma_min`` of a sparse matrix.

    Power iteration on ``G^T G`` gives ``sigma_max``; inverse iteration through
    a sparse LU factorization gives ``sigma_min``.
    """
    G = sp.csc_matrix(G, dtype=float)
    n = G.shape[0]
    try:
        lu = spla.splu(G)
    except RuntimeError as exc:
        raise SingularMatrixError(f"matrix is singular: {exc}") from None
    rng = np.random.default_rng(seed)

    def power(apply):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(maxiter):
            w = apply(v)
            lam_new = float(v @ w)
            nw = np.linalg.norm(w)
            if not np.isfinite(nw) or nw == 0.0:
                raise SingularMatrixError("matrix is singular to working precision")
            v = w / nw
            if abs(lam_new - lam) <= rtol * abs(lam_new):
                return lam_new
            lam = lam_new
        return lam

    GT = G.T.tocsr()
    Gr = G.tocsr()
    lam_max = power(lambda v: GT @ (Gr @ v))
    lam_inv = power(lambda v: lu.solve(lu.solve(v, trans="T")))
    if lam_inv <= 0.0 or not np.isfinite(lam_inv):
        raise SingularMatrixError("matrix is singular to working precision")
    cond = np.sqrt(lam_max * lam_inv)
    if cond > 1e16:
        raise SingularMatrixError(f"matrix is singular to working precision (cond ~ {cond:.2e})")
    return float(cond)


# -- discrete solution -------------------------------------------------------


class SolutionField:
    """Discrete solution ``u_c = sum_i U_c[i] B_i`` for components c = 1, 2."""

    def __init__(self, basis, coeffs, meta=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (2 * basis.N,):
            raise ValueError(f"expected {2 * basis.N} coefficients, got {coeffs.shape}")
        self.basis = basis
        self.coeffs = coeffs
        self.meta = dict(meta or {})

    @property
    def U1(self):
        return self.coeffs[: self.basis.N]

    @property
    def U2(self):
        return self.coeffs[self.basis.N:]

    def jets(self, pts, cells=None, order=1):
        """Per component: values (P,), gradients (P, m) and, for order 2, Hessians."""
        m = self.basis.grid.m
        mats = self.basis.eval_matrices(pts, cells, order)
        out = []
        for U in (self.U1, self.U2):
            val = mats[(0,) * m] @ U
            grad = hess = None
            if order >= 1:
                grad = np.stack([mats[_unit(m, a)] @ U for a in range(m)], axis=1)
            if order >= 2:
                hess = np.empty((len(val), m, m))
                for a in range(m):
                    for b in range(a, m):
                        col = mats[tuple(np.add(_unit(m, a), _unit(m, b)))] @ U
                        hess[:, a, b] = hess[:, b, a] = col
            out.append((val, grad, hess))
        return out


class ExactField:
    """A pair of expressions evaluated through the same interface as SolutionField."""

    def __init__(self, u1, u2, m):
        names = ("x", "y")[:m]
        self.m = m
        self.exprs = tuple(parse_expression(u, variables=names) for u in (u1, u2))
        self.grads = [[differentiate(u, a) for a in names] for u in self.exprs]
        self.hess = [[[differentiate(g, b) for b in names] for g in gs] for gs in self.grads]

    def jets(self, pts, cells=None, order=1):
        out = []
        for c in range(2):
            val = self.exprs[c].at(pts)
            grad = np.stack([g.at(pts) for g in self.grads[c]], axis=1) if order >= 1 else None
            hess = None
            if order >= 2:
                hess = np.stack([np.stack([h.at(pts) for h in row], axis=1) for row in self.hess[c]], axis=1)
            out.append((val, grad, hess))
        return out


def _unit(m, a):
    return tuple(1 if nu == a else 0 for nu in range(m))


def evaluate_solution(sol, pts, d=0):
    """Values (``d=0``) or gradients (``d=1``) of both components at `pts`.

    Returns ``(values, inside)``: `values` has shape (2, P) or (2, P, m) and
    is NaN where the point lies outside the domain (``w_omega < 0``); on the
    boundary itself the basis vanishes and so do the values.  `inside` is
    True where ``w_omega > 0``.
    """
    m = sol.basis.grid.m
    pts = np.asarray(pts, dtype=float).reshape(-1, m)
    jets = sol.jets(pts, order=d)
    w = weight_eval(sol.basis.dom.w_omega, pts)
    vals = np.stack([j[0] if d == 0 else j[1] for j in jets])
    vals[:, w < 0.0] = np.nan
    return vals, w > 0.0


# -- metrics -------------------------------------------------------------------


@dataclass
class ResidualResult:
    e: float
    residual_norm: float
    rhs_norm: float
    zero_rhs: bool = False

    def __float__(self):
        return self.e


def relative_residual(problem, field, basis, quad=None):
    """``||L u - f||_0 / ||f||_0`` over the domain, both components combined.

    `field` is a :class:`SolutionField` (spline order ``n >= 3`` required so the
    second derivatives exist cell-wise) or an :class:`ExactField`.
    """
    quad = quad or QuadConfig()
    m = problem.m
    if isinstance(field, SolutionField) and field.basis.grid.n < 3:
        raise ValueError("the strong residual needs second derivatives: use spline order n >= 3 "
                         "(order 2 splines are only piecewise linear)")

    def fn(pts, wts, cells):
        if len(wts) == 0:
            return 0.0, 0.0
        (u1, g1, H1), (u2, g2, H2) = field.jets(pts, cells, order=2)
        P = np.empty((len(wts), m, m))
        for a in range(m):
            for b in range(m):
                P[:, a, b] = problem.P(a, b).at(pts)
        divP = np.stack([d.at(pts) for d in problem.div_P], axis=1)
        R = np.stack([r.at(pts) for r in problem.R], axis=1)
        q1 = problem.q1.at(pts)
        q2 = problem.q2.at(pts)

        def op(u, g, H, other, sign):
            diff = -np.einsum("pb,pb->p", divP, g) - np.einsum("pab,pab->p", P, H)
            return diff + np.einsum("pa,pa->p", R, g) + q1 * u + sign * q2 * other

        r1 = op(u1, g1, H1, u2, +1.0) - problem.f1.at(pts)
        r2 = op(u2, g2, H2, u1, -1.0) - problem.f2.at(pts)
        f1 = problem.f1.at(pts)
        f2 = problem.f2.at(pts)
        return float(wts @ (r1 * r1 + r2 * r2)), float(wts @ (f1 * f1 + f2 * f2))

    parts = map_chunks(fn, basis, quad)
    rr = np.sqrt(sum(p[0] for p in parts))
    ff = np.sqrt(sum(p[1] for p in parts))
    if ff == 0.0:
        return ResidualResult(float(rr), float(rr), 0.0, zero_rhs=True)
    return ResidualResult(float(rr / ff), float(rr), float(ff))


@dataclass
class ErrorNorms:
    L2: tuple
    H1: tuple

    @property
    def L2_total(self):
        return float(sum(self.L2))

    @property
    def H1_total(self):
        return float(sum(self.H1))


def error_norms(sol, exact, quad=None):
    """L2 and H1-seminorm errors per component; totals use the product-space sum."""
    quad = quad or QuadConfig()
    basis = sol.basis
    m = basis.grid.m
    ref = exact if isinstance(exact, ExactField) else ExactField(exact[0], exact[1], m)

    def fn(pts, wts, cells):
        if len(wts) == 0:
            return np.zeros(4)
        approx = sol.jets(pts, cells, order=1)
        true = ref.jets(pts, cells, order=1)
        out = []
        for (uh, gh, _), (u, g, _) in zip(approx, true):
            out.append(wts @ (u - uh) ** 2)
            out.append(wts @ np.sum((g - gh) ** 2, axis=1))
        return np.array(out)

    tot = np.sqrt(np.maximum(sum(map_chunks(fn, basis, quad)), 0.0))
    return ErrorNorms((float(tot[0]), float(tot[2])), (float(tot[1]), float(tot[3])))


def fit_slope(hs, values):
    """Least-squares slope of ``log(values)`` against ``log(hs)``."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values) & (values > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[ok]), np.log(values[ok]), 1)[0])


# -- convergence studies ---------------------------------------------------------

CSV_COLUMNS = ("n", "h", "N", "L2", "H1", "e", "cond", "seconds")


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def by_order(self, n):
        return [r for r in self.rows if r["n"] == n]

    def slopes(self):
        """Fitted log-log slopes per order for the H1 and L2 errors, residual and condition."""
        out = {}
        for n in sorted({r["n"] for r in self.rows}):
            rows = self.by_order(n)
            hs = [r["h"] for r in rows]
            out[n] = {k: fit_slope(hs, [r[k] for r in rows]) for k in ("H1", "L2", "e", "cond")}
        return out

    def to_csv(self, include_timing=True):
        buf = io.StringIO()
        cols = CSV_COLUMNS if include_timing else CSV_COLUMNS[:-1]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
        for n, s in self.slopes().items():
            buf.write(f"# slopes n={n}: " + " ".join(f"{k}={_fmt(v)}" for k, v in s.items()) + "\n")
        return buf.getvalue()

    def to_table(self):
        head = "".join(f"{c:>14}" for c in CSV_COLUMNS)
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append("".join(f"{_fmt(r.get(c)):>14}" for c in CSV_COLUMNS))
        for n, s in self.slopes().items():
            lines.append(f"slopes n={n}: " + "  ".join(f"{k}={_fmt(v)}" for k, v in s.items()))
        return "\n".join(lines)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not np.isfinite(v):
        return "nan" if np.isnan(v) else str(v)
    return f"{v:.6e}"


def build_system(problem, h, n, quad=None):
    """WEB basis on the grid covering the domain and the assembled system."""
    quad = quad or QuadConfig()
    dom = problem.dom
    grid = GridSpec.covering(h, n, dom.lower, dom.upper)
    basis = WebBasis(grid, dom, depth=quad.class_depth)
    return basis, assemble(problem, basis, quad)


def run_case(problem, h, n, quad=None, method="auto", tol=1e-10, condition=True, residual=True):
    """Build, assemble and solve one (n, h) case; returns ``(row, solution)``.

    The solution's ``meta`` holds the solver statistics and the system.
    """
    quad = quad or QuadConfig()
    t0 = time.perf_counter()
    basis, system = build_system(problem, h, n, quad)
    U, stats = solve(system, method, tol)
    sol = SolutionField(basis, U, {"h": h, "n": n, "solver": stats, "system": system})
    row = {"n": n, "h": h, "N": basis.N, "L2": None, "H1": None, "e": None, "cond": None}
    if problem.exact is not None:
        err = error_norms(sol, problem.exact, quad)
        row["L2"], row["H1"] = err.L2_total, err.H1_total
    if residual and n >= 3:
        row["e"] = relative_residual(problem, sol, basis, quad).e
    if condition:
        row["cond"] = estimate_condition(system.G)
    row["seconds"] = time.perf_counter() - t0
    return row, sol


def convergence_study(problem, h_list, n_list, quad=None, method="auto", tol=1e-10,
                      condition=True, residual=True):
    """Run every (n, h) combination and collect a :class:`ConvergenceReport`.

    A failing case is kept as a row with missing metrics so partial reports
    remain usable.
    """
    if len(h_list) < 3:
        raise ValueError("a convergence study needs at least three grid widths")
    report = ConvergenceReport()
    for n in n_list:
        for h in sorted(h_list, reverse=True):
            try:
                row, _ = run_case(problem, h, n, quad, method, tol, condition, residual)
            except (NonConvergenceError, SingularMatrixError, ValueError) as exc:
                row = {"n": n, "h": h, "N": None, "L2": None, "H1": None, "e": None,
                       "cond": None, "seconds": None, "error": str(exc)}
            report.rows.append(row)
    return report
