"""Weighted extended B-spline (WEB-spline) bases.

Grid splines are split into *inner* splines, whose support contains at least
one interior cell, and *outer* splines, which touch the domain only through
boundary cells.  Each outer spline ``b_j`` is attached to an ``n^m`` array of
inner splines with Lagrange extrapolation weights ``e_{i,j}``, and every basis
function is

    B_i = w / w(x_i) * (b_i + sum_j e_{i,j} b_j)

where ``x_i`` is the center of an interior cell in the support of ``b_i``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

from .bspline import GridSpec, bspline_eval, cell_of, local_factors, local_offsets
from .domain import CellClass, classify_grid, weight_eval


class NoInteriorCellError(ValueError):
    """The grid is too coarse for the domain: no cell lies fully inside."""


class UnderResolvedError(ValueError):
    """An outer spline has no complete array of inner splines to attach to."""


@dataclass
class IndexClassification:
    grid: GridSpec
    inner: list
    outer: list
    irrelevant: list
    cell_class: dict
    inner_mask: np.ndarray = field(repr=False)
    relevant_mask: np.ndarray = field(repr=False)


def _window_any(mask, n):
    """For each spline index, whether any cell of its support is set in `mask`."""
    m = mask.ndim
    padded = np.pad(mask, [(n - 1, n - 1)] * m, constant_values=False)
    win = sliding_window_view(padded, (n,) * m)
    return win.reshape(win.shape[:m] + (-1,)).any(axis=-1)


def classify_indices(grid, dom, depth=3):
    """Split the grid splines into inner, outer and irrelevant index sets."""
    cell_class = classify_grid(dom, grid, depth)
    shape = tuple(hi - lo + 1 for lo, hi in grid.cell_box)
    lo = np.array([b[0] for b in grid.cell_box])
    codes = np.zeros(shape, dtype=int)
    for c, k in cell_class.items():
        codes[tuple(np.asarray(c) - lo)] = int(k)
    inner_mask = _window_any(codes == CellClass.INTERIOR, grid.n)
    relevant_mask = _window_any(codes != CellClass.EXTERIOR, grid.n)
    assert inner_mask.shape == grid.index_shape
    indices = grid.all_indices()
    flat_inner = inner_mask.ravel()
    flat_rel = relevant_mask.ravel()
    inner = [k for k, a in zip(indices, flat_inner) if a]
    outer = [k for k, a, r in zip(indices, flat_inner, flat_rel) if r and not a]
    irrelevant = [k for k, r in zip(indices, flat_rel) if not r]
    if not inner:
        raise NoInteriorCellError(
            f"no interior cell at h={grid.h}: the domain is too small for the grid")
    return IndexClassification(grid, inner, outer, irrelevant, cell_class, inner_mask, relevant_mask)


def lagrange_weights(nodes, t):
    """Values at `t` of the Lagrange basis polynomials on `nodes`."""
    nodes = np.asarray(nodes, dtype=float)
    out = np.ones(len(nodes))
    for r, tr in enumerate(nodes):
        for q, tq in enumerate(nodes):
            if q != r:
                out[r] *= (t - tq) / (tr - tq)
    return out


@dataclass
class ExtensionTable:
    """Extension coefficients: for each outer index the lower corner of its
    inner array ``A(j)`` and the ``(n,)*m`` tensor of weights on that array."""

    n: int
    arrays: dict

    def coefficient(self, i, j):
        if j not in self.arrays:
            return 0.0
        s, coef = self.arrays[j]
        r = tuple(int(a) - int(b) for a, b in zip(i, s))
        if all(0 <= v < self.n for v in r):
            return float(coef[r])
        return 0.0

    def members(self, j):
        """Inner indices of ``A(j)``, in the order matching ``coef.ravel()``."""
        s, coef = self.arrays[j]
        return [tuple(int(a) for a in np.asarray(s) + np.asarray(r)) for r in np.ndindex(coef.shape)]

    def entries(self):
        """Iterate over ``(i, j, e_ij)`` for all nonzero-structure entries."""
        for j, (s, coef) in self.arrays.items():
            for i, e in zip(self.members(j), coef.ravel()):
                yield i, j, float(e)


def _best_array(full, lo, j, n, radius):
    """Lower corner of the closest all-inner n^m array within `radius` of `j`."""
    m = len(j)
    ranges = []
    for nu in range(m):
        a = max(j[nu] - radius - n + 1, lo[nu])
        b = min(j[nu] + radius, lo[nu] + full.shape[nu] - 1)
        if a > b:
            return None
        ranges.append(np.arange(a, b + 1))
    grids = np.meshgrid(*ranges, indexing="ij")
    s = np.stack([g.ravel() for g in grids], axis=1)
    ok = full[tuple((s - lo).T)]
    if not ok.any():
        return None
    s = s[ok]
    jj = np.asarray(j)
    gap = np.maximum(0, np.maximum(s - jj, jj - (s + n - 1)))
    linf = gap.max(axis=1)
    center = np.sum((s + (n - 1) / 2.0 - jj) ** 2, axis=1)
    # lexsort: last key is primary
    keys = [s[:, nu] for nu in reversed(range(m))] + [center, linf]
    return tuple(int(v) for v in s[np.lexsort(keys)[0]])


def extension_coeffs(cls, grid):
    """Attach every outer spline to its nearest inner array by Lagrange extrapolation."""
    n, m = grid.n, grid.m
    lo = np.array([b[0] for b in grid.index_box])
    win = sliding_window_view(cls.inner_mask, (n,) * m)
    # full[s] is True when the array with lower corner s is entirely inner
    full = win.reshape(win.shape[:m] + (-1,)).all(axis=-1)
    max_radius = max(grid.index_shape)
    arrays = {}
    for j in cls.outer:
        s = None
        radius = 2 * n
        while s is None and radius <= 2 * max_radius:
            s = _best_array(full, lo, j, n, radius)
            radius *= 2
        if s is None:
            raise UnderResolvedError(
                f"domain under-resolved: no {n}^{m} array of inner splines near outer index {j}")
        factors = [lagrange_weights(np.arange(s[nu], s[nu] + n), j[nu]) for nu in range(m)]
        coef = factors[0]
        for f in factors[1:]:
            coef = np.multiply.outer(coef, f)
        arrays[j] = (s, coef)
    return ExtensionTable(n, arrays)


class WebBasis:
    """WEB-spline basis on `grid` for domain `dom`.

    Basis functions are numbered ``0..N-1`` following ``classification.inner``.
    """

    def __init__(self, grid, dom, classification=None, ext=None, depth=3):
        if dom.m != grid.m:
            raise ValueError("grid and domain dimensions differ")
        self.grid = grid
        self.dom = dom
        self.classification = classification or classify_indices(grid, dom, depth)
        self.ext = ext or extension_coeffs(self.classification, grid)
        cls = self.classification
        self.inner = list(cls.inner)
        self.outer = list(cls.outer)
        self.inner_pos = {k: a for a, k in enumerate(self.inner)}
        self.N = len(self.inner)
        relevant = self.inner + self.outer
        self._lookup = np.full(int(np.prod(grid.index_shape)), -1, dtype=np.int64)
        self._lookup[grid.flat_index(np.array(relevant))] = np.arange(len(relevant))
        self.n_relevant = len(relevant)

        rows = list(range(self.N))
        cols = list(range(self.N))
        vals = [1.0] * self.N
        outer_pos = {k: self.N + a for a, k in enumerate(self.outer)}
        for i, j, e in self.ext.entries():
            rows.append(self.inner_pos[i])
            cols.append(outer_pos[j])
            vals.append(e)
        self.E = sp.csr_matrix((vals, (rows, cols)), shape=(self.N, self.n_relevant))
        self.ET = self.E.T.tocsr()

        self.x_i = np.array([self._center_point(i) for i in self.inner])
        self.w_at_xi = weight_eval(dom.w_dirichlet, self.x_i)
        if np.any(self.w_at_xi <= 0.0):
            bad = self.inner[int(np.argmin(self.w_at_xi))]
            raise ValueError(f"weight is not positive at the normalization point of {bad}")
        self.inv_w = sp.diags(1.0 / self.w_at_xi)

    def _center_point(self, i):
        n, h = self.grid.n, self.grid.h
        mid = np.asarray(i, dtype=float) + n / 2.0
        best = None
        for l in np.ndindex(*(n,) * self.grid.m):
            cell = tuple(int(a) + b for a, b in zip(i, l))
            if self.classification.cell_class.get(cell) != CellClass.INTERIOR:
                continue
            dist = float(np.sum((np.asarray(cell) + 0.5 - mid) ** 2))
            if best is None or dist < best[0]:
                best = (dist, cell)
        return (np.asarray(best[1], dtype=float) + 0.5) * h

    # -- evaluation ----------------------------------------------------------

    def spline_matrices(self, x, cells=None, order=1):
        """Grid-spline values and derivatives at `x` as sparse (P, n_relevant) matrices.

        Returns a dict keyed by derivative multi-order tuples.
        """
        grid = self.grid
        x = np.asarray(x, dtype=float).reshape(-1, grid.m)
        cells = cell_of(grid, x) if cells is None else np.asarray(cells, dtype=int).reshape(-1, grid.m)
        P = x.shape[0]
        F = local_factors(grid, x, cells, max_deriv=min(order, grid.n - 1))
        offs = local_offsets(grid)  # (K, m)
        k = cells[:, None, :] - offs[None, :, :]  # (P, K, m)
        lo = np.array([b[0] for b in grid.index_box])
        hi = np.array([b[1] for b in grid.index_box])
        inbox = np.all((k >= lo) & (k <= hi), axis=2)
        flat = np.zeros(k.shape[:2], dtype=np.int64)
        flat[inbox] = grid.flat_index(k[inbox])
        col = np.where(inbox, self._lookup[flat], -1)
        keep = col >= 0
        rows = np.broadcast_to(np.arange(P)[:, None], keep.shape)[keep]
        cols = col[keep]

        def build(d):
            val = np.ones((P, offs.shape[0]))
            for nu in range(grid.m):
                dn = d[nu]
                if dn >= F.shape[0]:
                    val = np.zeros_like(val)
                    break
                val = val * F[dn, nu][:, offs[:, nu]]
            return sp.csr_matrix((val[keep], (rows, cols)), shape=(P, self.n_relevant))

        out = {}
        for d in _orders(grid.m, order):
            out[d] = build(d)
        return out

    def eval_matrices(self, x, cells=None, order=1):
        """WEB-spline values and derivatives at `x` as sparse (P, N) matrices.

        Keys are derivative multi-orders, e.g. ``(0, 0)``, ``(1, 0)``, ``(1, 1)``.
        """
        m = self.grid.m
        x = np.asarray(x, dtype=float).reshape(-1, m)
        S = self.spline_matrices(x, cells, order)
        T = {d: (S[d] @ self.ET) @ self.inv_w for d in S}
        v, g, H, _ = self.dom.w_dirichlet.jet(x, order=max(order, 0))
        zero = (0,) * m
        out = {zero: sp.diags(v) @ T[zero]}
        if order >= 1:
            for a in range(m):
                da = _unit(m, a)
                out[da] = sp.diags(g[:, a]) @ T[zero] + sp.diags(v) @ T[da]
        if order >= 2:
            for a in range(m):
                for b in range(a, m):
                    dab = tuple(np.add(_unit(m, a), _unit(m, b)))
                    out[dab] = (sp.diags(H[:, a, b]) @ T[zero]
                                + sp.diags(g[:, a]) @ T[_unit(m, b)]
                                + sp.diags(g[:, b]) @ T[_unit(m, a)]
                                + sp.diags(v) @ T[dab])
        return {d: M.tocsr() for d, M in out.items()}


def _unit(m, a):
    return tuple(1 if nu == a else 0 for nu in range(m))


def _orders(m, order):
    out = []
    for total in range(order + 1):
        for d in np.ndindex(*(total + 1,) * m):
            if sum(d) == total:
                out.append(tuple(int(v) for v in d))
    return out


def build_basis(grid, dom, depth=3):
    return WebBasis(grid, dom, depth=depth)


def web_eval(basis, i, x, d=None):
    """Value (``d`` all zero) or first partial derivative of ``B_i`` at `x`."""
    m = basis.grid.m
    i = tuple(int(v) for v in np.atleast_1d(i))
    if i not in basis.inner_pos:
        raise KeyError(f"{i} is not an inner index")
    d = (0,) * m if d is None else tuple(int(v) for v in np.atleast_1d(d))
    if sum(d) > 1:
        raise ValueError("web_eval supports derivative orders |d| <= 1")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    mats = basis.eval_matrices(x.reshape(-1, m), order=sum(d))
    col = mats[d][:, basis.inner_pos[i]].toarray().ravel()
    return float(col[0]) if single else col


def monomial_spline_coeffs(n, a, k, h=1.0):
    """Coefficients ``c_k`` with ``sum_k c_k b_k(x) = x^a`` (exact for ``a <= n-1``).

    Solved by collocation on the reference cell ``[0, 1]``; the coefficients
    are then the degree-(n-1) polynomial in ``k`` through those values.
    """
    t = (np.arange(n) + 0.5) / n
    ks = -np.arange(n)
    M = np.array([[bspline_eval(n, kk, 1.0, tq) for kk in ks] for tq in t])
    c = np.linalg.solve(M, t**a)
    poly = np.polyfit(ks.astype(float), c, n - 1)
    return np.polyval(poly, np.asarray(k, dtype=float)) * h**a


def sample_domain(dom, resolution):
    """Lattice points of the bounding box lying strictly inside the domain."""
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(dom.lower, dom.upper)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return pts[weight_eval(dom.w_omega, pts) > 0.0]


def reproduction_coefficients(basis, p):
    """WEB coefficients that represent ``w * x^p`` exactly when ``|p| <= n-1``."""
    n, h = basis.grid.n, basis.grid.h
    ks = np.array(basis.inner, dtype=float)
    c = np.ones(basis.N)
    for nu, a in enumerate(p):
        c = c * monomial_spline_coeffs(n, a, ks[:, nu], h)
    return c * basis.w_at_xi


def reproduction_residual(basis, p, resolution=None):
    """Max deviation between ``w * x^p`` and its WEB representation on domain samples."""
    p = tuple(int(v) for v in np.atleast_1d(p))
    if len(p) != basis.grid.m:
        raise ValueError("exponent multi-index must match the dimension")
    if sum(p) > basis.grid.n - 1:
        warnings.warn(f"monomial degree {sum(p)} exceeds n-1={basis.grid.n - 1}: "
                      "residual is expected to be nonzero", stacklevel=2)
    if resolution is None:
        resolution = max(65, int(round(8 / basis.grid.h)) + 1)
    pts = sample_domain(basis.dom, resolution)
    coef = reproduction_coefficients(basis, p)
    B = basis.eval_matrices(pts, order=0)[(0,) * basis.grid.m]
    target = weight_eval(basis.dom.w_dirichlet, pts) * np.prod(pts ** np.array(p), axis=1)
    return float(np.max(np.abs(B @ coef - target)))
