"""Coupled elliptic boundary value problems.

The system, with zero Dirichlet data on the essential boundary, is::

    -div(P grad u1) + R . grad u1 + q1 u1 + q2 u2 = f1
    -div(P grad u2) + R . grad u2 + q1 u2 - q2 u1 = f2

`P` is a symmetric matrix field and `R` a vector field.  All coefficients
are :class:`~webfem.expr.Expr` trees in ``x`` (and ``y``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as ex
from .basis import sample_domain
from .expr import differentiate, parse_expression

VARS = ("x", "y")


class NotEllipticError(ValueError):
    pass


class WellposednessError(RuntimeError):
    """The sufficient coercivity condition failed and no override was given."""


class CoupledProblem:
    """Coefficients, right-hand sides and (optionally) the exact solution.

    `P` may be given as a full nested list; only its upper triangle is read.
    Strings are parsed as expressions.
    """

    def __init__(self, dom, P=None, R=None, q1=1.0, q2=0.0, f1=0.0, f2=0.0, exact=None):
        self.dom = dom
        m = dom.m
        names = VARS[:m]
        self.m = m
        parse = lambda s: parse_expression(s, names)  # noqa: E731
        if P is None:
            P = [[1.0 if a == b else 0.0 for b in range(m)] for a in range(m)]
        R = [0.0] * m if R is None else R
        if len(R) != m or len(P) != m or any(len(row) != m for row in P):
            raise ValueError(f"P must be {m}x{m} and R of length {m}")
        self._P = {(a, b): parse(P[a][b]) for a in range(m) for b in range(a, m)}
        self.R = [parse(r) for r in R]
        self.q1 = parse(q1)
        self.q2 = parse(q2)
        self.f1 = parse(f1)
        self.f2 = parse(f2)
        self.exact = None if exact is None else tuple(parse(u) for u in exact)

    def P(self, a, b):
        return self._P[(min(a, b), max(a, b))]

    @property
    def symmetric(self):
        """True when the Galerkin matrix is symmetric (no advection, no coupling)."""
        return all(r.is_const and r.value == 0.0 for r in self.R) and self.q2.is_const and self.q2.value == 0.0

    @cached_property
    def div_P(self):
        """Column divergences ``sum_a d_a P_ab`` for each ``b``."""
        out = []
        for b in range(self.m):
            acc = ex.ZERO
            for a in range(self.m):
                acc = ex.add(acc, differentiate(self.P(a, b), VARS[a]))
            out.append(acc)
        return out

    def with_rhs(self, f1, f2):
        new = object.__new__(CoupledProblem)
        new.__dict__.update({k: v for k, v in self.__dict__.items() if k != "div_P"})
        names = VARS[: self.m]
        new.f1 = parse_expression(f1, names)
        new.f2 = parse_expression(f2, names)
        return new

    def apply_operator(self, u1, u2, smooth=True):
        """Strong operator applied symbolically to expressions `u1`, `u2`."""
        names = VARS[: self.m]

        def one(u, other, sign):
            grads = [differentiate(u, a, smooth) for a in names]
            acc = ex.ZERO
            for a in range(self.m):
                flux = ex.ZERO
                for b in range(self.m):
                    flux = ex.add(flux, ex.mul(self.P(a, b), grads[b]))
                acc = ex.sub(acc, differentiate(flux, names[a], smooth))
            for a in range(self.m):
                acc = ex.add(acc, ex.mul(self.R[a], grads[a]))
            acc = ex.add(acc, ex.mul(self.q1, u))
            coupling = ex.mul(self.q2, other)
            return ex.add(acc, coupling) if sign > 0 else ex.sub(acc, coupling)

        return one(u1, u2, +1), one(u2, u1, -1)

    def coefficient_exprs(self):
        yield from self._P.values()
        yield from self.R
        yield self.q1
        yield self.q2


def manufactured_rhs(problem):
    """Right-hand sides ``(f1, f2)`` produced by the exact solution, built symbolically."""
    if problem.exact is None:
        raise ValueError("manufactured right-hand side needs an exact solution")
    for e in list(problem.coefficient_exprs()) + list(problem.exact):
        if not e.is_smooth():
            raise ex.NonSmoothError(f"expression {e} is not smooth")
    return problem.apply_operator(*problem.exact, smooth=True)


def manufactured(problem):
    """Copy of `problem` whose right-hand sides come from its exact solution."""
    return problem.with_rhs(*manufactured_rhs(problem))


@dataclass
class WellposednessReport:
    alpha: float
    Bsq: float
    kappa: float
    threshold: float
    passed: bool
    sample_count: int

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"alpha={self.alpha:.6g}  B^2={self.Bsq:.6g}  kappa={self.kappa:.6g}  "
                f"threshold={self.threshold:.6g}  samples={self.sample_count}  -> {verdict}")


def check_wellposedness(problem, resolution=16):
    """Sampled check of the coercivity condition ``kappa >= alpha/2 + B^2/(2 alpha)``.

    `alpha` is the smallest eigenvalue of P, `B^2` the sum of squared sup-norms
    of the advection components and `kappa` the minimum of q1, all taken over
    lattice samples inside the domain.
    """
    if resolution < 8:
        raise ValueError("sample resolution must be at least 8 per dimension")
    pts = sample_domain(problem.dom, resolution)
    if len(pts) == 0:
        raise ValueError("no sample points inside the domain")
    m = problem.m
    Pv = np.empty((len(pts), m, m))
    for a in range(m):
        for b in range(m):
            Pv[:, a, b] = problem.P(a, b).at(pts)
    alpha = float(np.min(np.linalg.eigvalsh(Pv)[:, 0]))
    if alpha <= 0.0:
        raise NotEllipticError(f"not elliptic on samples: min eigenvalue of P is {alpha:.6g}")
    Bsq = float(sum(np.max(np.abs(r.at(pts))) ** 2 for r in problem.R))
    kappa = float(np.min(problem.q1.at(pts)))
    threshold = alpha / 2.0 + Bsq / (2.0 * alpha)
    return WellposednessReport(alpha, Bsq, kappa, threshold, kappa >= threshold, len(pts))


def enforce_gate(report, override=False):
    """Raise on a failed gate unless `override`, in which case only warn."""
    if report.passed:
        return
    msg = f"coercivity condition not met on samples ({report})"
    if not override:
        raise WellposednessError(msg)
    warnings.warn(msg + "; continuing because the gate is overridden", stacklevel=2)
