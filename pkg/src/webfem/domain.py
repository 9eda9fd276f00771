"""Implicit domains described by weight functions.

A domain is ``{x in box : w_omega(x) > 0}``.  Weight functions are trees of
primitives (half-spaces, circles, products, user expressions) combined with
R-functions, which keep the sign logic of set intersection/union while
staying smooth away from points where both arguments vanish.

Every node evaluates a second-order jet ``(value, gradient, hessian)`` for a
whole array of points at once.
"""

from __future__ import annotations

import enum
import itertools

import numpy as np

from .expr import differentiate, parse_expression

SINGULAR_EPS = 1e-30
TINY_WEIGHT = 1e-12


class NonDifferentiableError(ValueError):
    """Raised when a gradient is requested where an R-function has a kink."""


class WeightExpr:
    """Base class of weight-function nodes."""

    def jet(self, x, order=2):
        """Return ``(v, g, H, singular)`` at points `x` of shape (P, m).

        `g` and `H` are ``None`` when not requested by `order`; `singular` flags
        points where both arguments of some R-function vanish.
        """
        raise NotImplementedError

    def __call__(self, x):
        return weight_eval(self, x)

    def to_dict(self):
        raise NotImplementedError

    # combinators read naturally: a & b, a | b, -a
    def __and__(self, other):
        return RAnd(self, other)

    def __or__(self, other):
        return ROr(self, other)

    def __neg__(self):
        return Negate(self)


def _zeros(P, m, order):
    g = np.zeros((P, m)) if order >= 1 else None
    H = np.zeros((P, m, m)) if order >= 2 else None
    return g, H


class HalfSpace(WeightExpr):
    """Affine function ``a . x + b`` (positive on the kept side)."""

    def __init__(self, a, b):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = float(b)

    def jet(self, x, order=2):
        P, m = x.shape
        v = x @ self.a + self.b
        g, H = _zeros(P, m, order)
        if g is not None:
            g[:] = self.a
        return v, g, H, np.zeros(P, dtype=bool)

    def to_dict(self):
        return {"type": "halfspace", "a": self.a.tolist(), "b": self.b}


class Circle(WeightExpr):
    """``sign * (|x - c|^2 - r^2)``: positive outside for sign=+1, inside for sign=-1."""

    def __init__(self, center, radius, sign=1):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.sign = 1.0 if sign >= 0 else -1.0

    def jet(self, x, order=2):
        P, m = x.shape
        dx = x - self.center
        v = self.sign * (np.sum(dx * dx, axis=1) - self.radius**2)
        g, H = _zeros(P, m, order)
        if g is not None:
            g[:] = 2.0 * self.sign * dx
        if H is not None:
            H[:] = 2.0 * self.sign * np.eye(m)
        return v, g, H, np.zeros(P, dtype=bool)

    def to_dict(self):
        return {"type": "circle", "center": self.center.tolist(),
                "radius": self.radius, "sign": int(self.sign)}


class Product(WeightExpr):
    def __init__(self, *children):
        if not children:
            raise ValueError("product needs at least one factor")
        self.children = tuple(children)

    def jet(self, x, order=2):
        v, g, H, sing = self.children[0].jet(x, order)
        for child in self.children[1:]:
            cv, cg, cH, cs = child.jet(x, order)
            if H is not None:
                H = (cv[:, None, None] * H + v[:, None, None] * cH
                     + g[:, :, None] * cg[:, None, :] + cg[:, :, None] * g[:, None, :])
            if g is not None:
                g = cv[:, None] * g + v[:, None] * cg
            v = v * cv
            sing = sing | cs
        return v, g, H, sing

    def to_dict(self):
        return {"type": "product", "args": [c.to_dict() for c in self.children]}


class ExprWeight(WeightExpr):
    """Weight given by a user expression in ``x`` (and ``y``)."""

    def __init__(self, src, m=2):
        self.src = src if isinstance(src, str) else str(src)
        self.m = m
        names = ("x", "y")[:m]
        self.expr = parse_expression(src, names)
        self.grad = [differentiate(self.expr, a) for a in names]
        self.hess = [[differentiate(gi, b) for b in names] for gi in self.grad]

    def jet(self, x, order=2):
        P, m = x.shape
        v = self.expr.at(x)
        g, H = _zeros(P, m, order)
        if g is not None:
            for a in range(m):
                g[:, a] = self.grad[a].at(x)
        if H is not None:
            for a in range(m):
                for b in range(m):
                    H[:, a, b] = self.hess[a][b].at(x)
        return v, g, H, np.zeros(P, dtype=bool)

    def to_dict(self):
        return {"type": "expr", "src": self.src}


class _RFunction(WeightExpr):
    # a + b + s*sqrt(a^2 + b^2); s=-1 conjunction, s=+1 disjunction
    s = 0.0
    name = ""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def jet(self, x, order=2):
        s = self.s
        av, ag, aH, asg = self.a.jet(x, order)
        bv, bg, bH, bsg = self.b.jet(x, order)
        rho2 = av * av + bv * bv
        singular = asg | bsg | (rho2 < SINGULAR_EPS)
        rho = np.sqrt(rho2)
        v = av + bv + s * rho
        g = H = None
        if order >= 1:
            safe = np.where(rho > 0.0, rho, 1.0)
            fa = np.where(rho > 0.0, 1.0 + s * av / safe, 1.0)
            fb = np.where(rho > 0.0, 1.0 + s * bv / safe, 1.0)
            g = fa[:, None] * ag + fb[:, None] * bg
            if order >= 2:
                r3 = np.where(rho > 0.0, safe**3, np.inf)
                faa = s * bv * bv / r3
                fbb = s * av * av / r3
                fab = -s * av * bv / r3
                H = (fa[:, None, None] * aH + fb[:, None, None] * bH
                     + faa[:, None, None] * ag[:, :, None] * ag[:, None, :]
                     + fbb[:, None, None] * bg[:, :, None] * bg[:, None, :]
                     + fab[:, None, None] * (ag[:, :, None] * bg[:, None, :]
                                             + bg[:, :, None] * ag[:, None, :]))
        return v, g, H, singular

    def to_dict(self):
        return {"type": self.name, "args": [self.a.to_dict(), self.b.to_dict()]}


class RAnd(_RFunction):
    """R-conjunction ``a + b - sqrt(a^2 + b^2)`` (intersection)."""

    s = -1.0
    name = "rand"


class ROr(_RFunction):
    """R-disjunction ``a + b + sqrt(a^2 + b^2)`` (union)."""

    s = 1.0
    name = "ror"


def r_and(a, b):
    return RAnd(_lift(a), _lift(b))


def r_or(a, b):
    return ROr(_lift(a), _lift(b))


class Negate(WeightExpr):
    def __init__(self, a):
        self.a = a

    def jet(self, x, order=2):
        v, g, H, s = self.a.jet(x, order)
        return -v, None if g is None else -g, None if H is None else -H, s

    def to_dict(self):
        return {"type": "negate", "args": [self.a.to_dict()]}


class Scale(WeightExpr):
    def __init__(self, a, factor):
        self.a = a
        self.factor = float(factor)

    def jet(self, x, order=2):
        c = self.factor
        v, g, H, s = self.a.jet(x, order)
        return c * v, None if g is None else c * g, None if H is None else c * H, s

    def to_dict(self):
        return {"type": "scale", "factor": self.factor, "args": [self.a.to_dict()]}


class Constant(WeightExpr):
    def __init__(self, value):
        self.value = float(value)

    def jet(self, x, order=2):
        P, m = x.shape
        g, H = _zeros(P, m, order)
        return np.full(P, self.value), g, H, np.zeros(P, dtype=bool)

    def to_dict(self):
        return {"type": "const", "value": self.value}


def _lift(w):
    return Constant(w) if isinstance(w, (int, float)) else w


def weight_eval(w, x):
    """Value of weight `w` at a single point or at an array of points (P, m)."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(1, -1) if x.ndim <= 1 else x
    v = w.jet(pts, order=0)[0]
    return float(v[0]) if x.ndim <= 1 else v


def weight_grad(w, x):
    """Exact gradient of `w`; raises :class:`NonDifferentiableError` at R-function kinks."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(1, -1) if x.ndim <= 1 else x
    _, g, _, singular = w.jet(pts, order=1)
    if np.any(singular):
        bad = pts[np.argmax(singular)]
        raise NonDifferentiableError(f"weight is not differentiable at {bad.tolist()}")
    return g[0] if x.ndim <= 1 else g


def weight_hessian(w, x):
    x = np.asarray(x, dtype=float)
    pts = x.reshape(1, -1) if x.ndim <= 1 else x
    H = w.jet(pts, order=2)[2]
    return H[0] if x.ndim <= 1 else H


def weight_from_dict(d, m=2):
    """Build a weight tree from its config-file representation."""
    kind = d["type"]
    args = [weight_from_dict(a, m) for a in d.get("args", [])]
    if kind == "halfspace":
        return HalfSpace(d["a"], d["b"])
    if kind == "circle":
        return Circle(d["center"], d["radius"], d.get("sign", 1))
    if kind == "product":
        return Product(*args)
    if kind == "expr":
        return ExprWeight(d["src"], m)
    if kind == "rand":
        return RAnd(*args)
    if kind == "ror":
        return ROr(*args)
    if kind == "negate":
        return Negate(*args)
    if kind == "scale":
        return Scale(args[0], d["factor"])
    if kind == "const":
        return Constant(d["value"])
    raise ValueError(f"unknown weight node type {kind!r}")


class DomainSpec:
    """Domain ``w_omega > 0`` inside `bounding_box`, with Dirichlet weight `w_dirichlet`."""

    def __init__(self, w_omega, bounding_box, w_dirichlet=None, name=None):
        lo, hi = bounding_box
        self.lower = np.atleast_1d(np.asarray(lo, dtype=float))
        self.upper = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError("bounding box must satisfy lower < upper")
        self.w_omega = w_omega
        self.w_dirichlet = w_omega if w_dirichlet is None else w_dirichlet
        self.name = name

    @property
    def m(self):
        return self.lower.shape[0]

    @property
    def bounding_box(self):
        return self.lower, self.upper

    def inside(self, x):
        return weight_eval(self.w_omega, x) > 0.0

    def __repr__(self):
        return f"DomainSpec(name={self.name!r}, box={self.lower.tolist()}..{self.upper.tolist()})"


WEIGHT_FORMS = ("rfunction", "product")


def square_minus_quarter_disk(weight="rfunction"):
    """``{(x, y) in (0,1)^2 : x^2 + y^2 > 1}``: the unit square outside the unit circle.

    ``weight="product"`` keeps the R-function domain indicator but uses the
    plain product of the three primitives as Dirichlet weight.
    """
    pieces = (Circle((0.0, 0.0), 1.0, +1), HalfSpace((-1.0, 0.0), 1.0), HalfSpace((0.0, -1.0), 1.0))
    return _builtin_2d(pieces, "square-minus-quarter-disk", weight)


def quarter_disk(weight="rfunction"):
    """``{x, y > 0 : x^2 + y^2 < 1}``."""
    pieces = (Circle((0.0, 0.0), 1.0, -1), HalfSpace((1.0, 0.0), 0.0), HalfSpace((0.0, 1.0), 0.0))
    return _builtin_2d(pieces, "quarter-disk", weight)


def _builtin_2d(pieces, name, weight):
    if weight not in WEIGHT_FORMS:
        raise ValueError(f"unknown weight form {weight!r}; choose from {WEIGHT_FORMS}")
    w = RAnd(pieces[0], RAnd(pieces[1], pieces[2]))
    wd = Product(*pieces) if weight == "product" else None
    return DomainSpec(w, ((0.0, 0.0), (1.0, 1.0)), w_dirichlet=wd, name=name)


def interval(a=0.0, b=1.0, weight="rfunction"):
    if weight not in WEIGHT_FORMS:
        raise ValueError(f"unknown weight form {weight!r}; choose from {WEIGHT_FORMS}")
    pieces = (HalfSpace((1.0,), -a), HalfSpace((-1.0,), b))
    wd = Product(*pieces) if weight == "product" else None
    name = "unit-interval" if (a, b) == (0.0, 1.0) else "interval"
    return DomainSpec(RAnd(*pieces), ((a,), (b,)), w_dirichlet=wd, name=name)


BUILTIN_DOMAINS = {
    "square-minus-quarter-disk": square_minus_quarter_disk,
    "quarter-disk": quarter_disk,
    "unit-interval": interval,
}


def builtin_domain(name, weight="rfunction"):
    try:
        make = BUILTIN_DOMAINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin domain {name!r}; choose from {sorted(BUILTIN_DOMAINS)}") from None
    return make(weight=weight)


class CellClass(enum.IntEnum):
    EXTERIOR = 0
    BOUNDARY = 1
    INTERIOR = 2


def _lattice(m, depth):
    t = np.linspace(0.0, 1.0, 2**depth + 1)
    return np.array(list(itertools.product(t, repeat=m)))


def classify_boxes(w, lower, size, depth=3):
    """Classify axis-aligned boxes by the signs of `w` on a sample lattice.

    `lower` has shape (B, m) and `size` is a scalar or shape (B,) edge length.
    """
    lower = np.asarray(lower, dtype=float)
    B, m = lower.shape
    if B == 0:
        return np.zeros(0, dtype=int)
    size = np.broadcast_to(np.asarray(size, dtype=float), (B,))
    lat = _lattice(m, depth)
    pts = lower[:, None, :] + size[:, None, None] * lat[None, :, :]
    v = w.jet(pts.reshape(-1, m), order=0)[0].reshape(B, -1)
    out = np.full(B, int(CellClass.BOUNDARY))
    out[np.all(v >= 0.0, axis=1)] = CellClass.INTERIOR
    out[np.all(v < 0.0, axis=1)] = CellClass.EXTERIOR
    out[np.max(np.abs(v), axis=1) < TINY_WEIGHT] = CellClass.BOUNDARY
    return out


def classify_cell(dom, cell, grid, depth=3):
    """Classify grid cell `cell` as interior, boundary or exterior to the domain."""
    if depth < 1:
        raise ValueError("classification depth must be >= 1")
    lo, _ = grid.cell_bounds(cell)
    return CellClass(classify_boxes(dom.w_omega, lo[None, :], grid.h, depth)[0])


def classify_grid(dom, grid, depth=3):
    """Class of every cell in the grid's cell box, as a dict keyed by cell tuple."""
    cells = grid.all_cells()
    lower = np.array(cells, dtype=float) * grid.h
    codes = classify_boxes(dom.w_omega, lower, grid.h, depth)
    return {c: CellClass(int(k)) for c, k in zip(cells, codes)}
