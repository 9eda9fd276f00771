"""Uniform tensor-product B-splines on a Cartesian grid.

The univariate spline of order ``n`` (degree ``n - 1``) with index ``k`` is
supported on ``[k*h, (k+n)*h]`` and spans ``n`` grid cells.  Cell ``l`` is the
box ``h*([0,1]^m + l)``.  Evaluation at knots uses right-continuous limits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def _cardinal(n, t, d=0):
    """Cardinal B-spline of order `n` (knots 0..n) and its `d`-th derivative at `t`."""
    t = np.asarray(t, dtype=float)
    if d > 0:
        if n == 1:
            return np.zeros_like(t)
        return _cardinal(n - 1, t, d - 1) - _cardinal(n - 1, t - 1.0, d - 1)
    if n == 1:
        return ((t >= 0.0) & (t < 1.0)).astype(float)
    # Cox-de Boor on uniform knots
    return (t * _cardinal(n - 1, t) + (n - t) * _cardinal(n - 1, t - 1.0)) / (n - 1)


def bspline_eval(n, k, h, x, d=0):
    """Evaluate the `d`-th derivative of the order-`n` uniform B-spline `b_k`.

    `x` may be a scalar or an array; the result has the same shape.
    """
    if n < 1:
        raise ValueError(f"spline order must be >= 1, got {n}")
    if h <= 0:
        raise ValueError(f"grid width must be positive, got {h}")
    if d < 0:
        raise ValueError(f"derivative order must be >= 0, got {d}")
    x = np.asarray(x, dtype=float)
    val = _cardinal(n, x / h - k, d) / h**d
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of width `h` carrying order-`n` splines in `m` dimensions.

    `index_box` holds one inclusive ``(lo, hi)`` range of spline indices per
    dimension.
    """

    h: float
    n: int
    m: int
    index_box: tuple

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid width h must be positive")
        if self.n < 2:
            raise ValueError("spline order n must be >= 2")
        if self.m not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        box = tuple((int(lo), int(hi)) for lo, hi in self.index_box)
        if len(box) != self.m:
            raise ValueError("index_box must have one range per dimension")
        object.__setattr__(self, "index_box", box)

    @classmethod
    def covering(cls, h, n, lower, upper):
        """Grid whose index box holds every spline touching the box ``[lower, upper]``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        box = []
        for lo, hi in zip(lower, upper):
            c_lo = math.floor(lo / h + 1e-9)
            c_hi = math.ceil(hi / h - 1e-9) - 1
            box.append((c_lo - n + 1, c_hi))
        return cls(float(h), int(n), len(box), tuple(box))

    @property
    def cell_box(self):
        """Inclusive cell-index range per dimension touched by the index box."""
        return tuple((lo + self.n - 1, hi) for lo, hi in self.index_box)

    @property
    def index_shape(self):
        return tuple(hi - lo + 1 for lo, hi in self.index_box)

    def all_cells(self):
        return list(itertools.product(*(range(lo, hi + 1) for lo, hi in self.cell_box)))

    def all_indices(self):
        return list(itertools.product(*(range(lo, hi + 1) for lo, hi in self.index_box)))

    def cell_bounds(self, cell):
        l = np.asarray(cell, dtype=float)
        return l * self.h, (l + 1.0) * self.h

    def flat_index(self, k):
        """Row-major position of multi-index `k` (array of shape (..., m)) in the index box."""
        k = np.asarray(k)
        lo = np.array([b[0] for b in self.index_box])
        return np.ravel_multi_index(tuple(np.moveaxis(k - lo, -1, 0)), self.index_shape)

    def unflat_index(self, flat):
        lo = np.array([b[0] for b in self.index_box])
        return np.stack(np.unravel_index(flat, self.index_shape), axis=-1) + lo


def tensor_eval(grid, k, x, d=None):
    """Tensor-product B-spline `b_k` (or a partial derivative) at point(s) `x`.

    `x` has shape ``(m,)`` or ``(P, m)``; `d` is a per-dimension derivative order.
    """
    k = tuple(int(v) for v in np.atleast_1d(k))
    x = np.asarray(x, dtype=float)
    d = (0,) * grid.m if d is None else tuple(int(v) for v in np.atleast_1d(d))
    if len(k) != grid.m or len(d) != grid.m or x.shape[-1] != grid.m:
        raise ValueError(f"dimension mismatch: grid is {grid.m}-D")
    val = np.ones(x.shape[:-1])
    for nu in range(grid.m):
        val = val * bspline_eval(grid.n, k[nu], grid.h, x[..., nu], d[nu])
    return val if val.ndim else float(val)


def support_cells(grid, k):
    """Cells ``l`` with ``k_i <= l_i <= k_i + n - 1``, i.e. the support of `b_k`."""
    k = np.atleast_1d(k)
    return list(itertools.product(*(range(int(ki), int(ki) + grid.n) for ki in k)))


def local_factors(grid, x, cells, max_deriv=1):
    """Univariate factors of the splines active in each point's cell.

    For points `x` (P, m) lying in `cells` (P, m), returns an array of shape
    ``(max_deriv + 1, m, P, n)`` whose entry ``[d, nu, p, r]`` is the `d`-th
    derivative of ``b_{l_nu - r}`` along dimension `nu` at ``x[p, nu]``.
    """
    n, h = grid.n, grid.h
    x = np.asarray(x, dtype=float)
    t = x / h - cells  # local coordinate in [0, 1]
    shifts = np.arange(n, dtype=float)
    out = np.empty((max_deriv + 1, grid.m, x.shape[0], n))
    for d in range(max_deriv + 1):
        for nu in range(grid.m):
            out[d, nu] = _cardinal(n, t[:, nu, None] + shifts, d) / h**d
    return out


def local_offsets(grid):
    """All ``r`` in ``{0..n-1}^m``: the active splines in cell ``l`` are ``b_{l - r}``."""
    return np.array(list(itertools.product(range(grid.n), repeat=grid.m)), dtype=int)


def cell_of(grid, x):
    """Cell containing each point of `x` (right-continuous convention)."""
    return np.floor(np.asarray(x, dtype=float) / grid.h + 1e-12).astype(int)
