"""Gauss-Legendre quadrature over interior and cut grid cells.

Interior cells get one tensor Gauss rule.  Boundary cells are split
dyadically; each sub-cell is re-classified, interior pieces get a full rule
and exterior pieces are dropped.  Sub-cells still cut at the deepest level
are integrated either

* ``"roots"``: along Gauss lines in the direction where the weight varies
  most, the zeros of the weight are located by bisection and each positive
  piece of the line gets its own Gauss rule (high order for smooth
  boundaries), or
* ``"discard"``: with the full Gauss rule minus the points outside the domain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import CellClass, classify_boxes, weight_eval


@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def _reference_rule(p, m):
    t, w = np.polynomial.legendre.leggauss(p)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts = np.array(list(itertools.product(t, repeat=m)))
    wts = np.array([np.prod(c) for c in itertools.product(w, repeat=m)])
    return pts, wts


def gauss_rule(lower, size, p):
    """Tensor Gauss rule with `p` points per dimension on the cube ``lower + size*[0,1]^m``."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    ref_pts, ref_wts = _reference_rule(p, lower.shape[0])
    return QuadratureRule(lower + size * ref_pts, ref_wts * size ** lower.shape[0])


def _batched_rule(lower, size, p):
    """Rules for B boxes at once: points (B*Q, m), weights (B*Q,)."""
    m = lower.shape[1]
    ref_pts, ref_wts = _reference_rule(p, m)
    size = np.broadcast_to(np.asarray(size, dtype=float), (lower.shape[0],))
    pts = lower[:, None, :] + size[:, None, None] * ref_pts[None, :, :]
    wts = ref_wts[None, :] * size[:, None] ** m
    return pts.reshape(-1, m), wts.ravel()


CUT_RULES = ("roots", "discard")
LINE_SAMPLES = 9
BISECTIONS = 60


def _line_pieces(w, origin, axis, length, p):
    """Gauss points on the positive parts of axis-parallel segments.

    `origin` (L, m) are segment starts along coordinate `axis` (L,), all of
    the same `length`.  Returns points (Q, m), weights (Q,) per unit outer
    weight and the segment index of each point.
    """
    L, m = origin.shape
    if L == 0:
        return np.zeros((0, m)), np.zeros(0), np.zeros(0, dtype=int)
    unit = np.zeros((L, m))
    unit[np.arange(L), axis] = 1.0

    def at(t):  # t: (L, K) fractions along each segment
        pts = origin[:, None, :] + length * t[:, :, None] * unit[:, None, :]
        return w.jet(pts.reshape(-1, m), order=0)[0].reshape(t.shape)

    ts = np.broadcast_to(np.linspace(0.0, 1.0, LINE_SAMPLES), (L, LINE_SAMPLES))
    vals = at(ts)
    a, b = ts[:, :-1].copy(), ts[:, 1:].copy()
    va = vals[:, :-1]
    change = va * vals[:, 1:] < 0.0
    for _ in range(BISECTIONS):
        mid = 0.5 * (a + b)
        vm = at(mid)
        left = (vm * va) <= 0.0
        b = np.where(change & left, mid, b)
        a = np.where(change & ~left, mid, a)
    roots = np.where(change, 0.5 * (a + b), np.inf)
    brk = np.sort(np.concatenate([np.zeros((L, 1)), roots, np.ones((L, 1))], axis=1), axis=1)
    lo, hi = brk[:, :-1], brk[:, 1:]
    valid = np.isfinite(hi) & (hi > lo)
    mid = np.where(valid, 0.5 * (lo + np.where(valid, hi, 0.0)), 0.5)
    keep = valid & (at(mid) > 0.0)
    seg, piece = np.nonzero(keep)
    t0, t1 = lo[seg, piece], hi[seg, piece]
    gt, gw = np.polynomial.legendre.leggauss(p)
    gt, gw = 0.5 * (gt + 1.0), 0.5 * gw
    frac = t0[:, None] + (t1 - t0)[:, None] * gt[None, :]
    pts = origin[seg][:, None, :] + length * frac[:, :, None] * unit[seg][:, None, :]
    wts = length * (t1 - t0)[:, None] * gw[None, :]
    return pts.reshape(-1, m), wts.ravel(), np.repeat(seg, p)


def _root_rule(w, lower, size, p):
    """Line-by-line rule on cut boxes; returns points, weights, box index."""
    B, m = lower.shape
    centers = lower + 0.5 * size
    if m == 1:
        pts, wts, seg = _line_pieces(w, lower, np.zeros(B, dtype=int), size, p)
        return pts, wts, seg
    g = w.jet(centers, order=1)[1]
    axis = np.argmax(np.abs(g), axis=1)  # height direction
    other = 1 - axis
    gt, gw = np.polynomial.legendre.leggauss(p)
    gt, gw = 0.5 * (gt + 1.0), 0.5 * gw
    box = np.repeat(np.arange(B), p)
    origin = lower[box].copy()
    oth = other[box]
    origin[np.arange(len(box)), oth] += size * np.tile(gt, B)
    pts, wts, seg = _line_pieces(w, origin, axis[box], size, p)
    wts = wts * size * np.tile(gw, B)[seg]
    return pts, wts, box[seg]


def cut_cell_points(w, lower, size, p, depth, class_depth=3, rule="roots"):
    """Quadrature points for boundary boxes.

    `lower` (B, m) and `size` (scalar) describe the boxes.  Returns
    ``points, weights, owner`` where `owner` indexes the originating box.
    """
    if rule not in CUT_RULES:
        raise ValueError(f"unknown cut-cell rule {rule!r}; choose from {CUT_RULES}")
    lower = np.asarray(lower, dtype=float)
    B, m = lower.shape
    owner = np.arange(B)
    children = np.array(list(itertools.product((0.0, 1.0), repeat=m)))
    out_p, out_w, out_o = [], [], []
    for _ in range(depth):
        if len(lower) == 0:
            break
        size = size / 2.0
        lower = (lower[:, None, :] + size * children[None, :, :]).reshape(-1, m)
        owner = np.repeat(owner, len(children))
        cls = classify_boxes(w, lower, size, class_depth)
        inner = cls == CellClass.INTERIOR
        if inner.any():
            pts, wts = _batched_rule(lower[inner], size, p)
            out_p.append(pts)
            out_w.append(wts)
            out_o.append(np.repeat(owner[inner], p**m))
        keep = cls == CellClass.BOUNDARY
        lower, owner = lower[keep], owner[keep]
    if len(lower) and rule == "roots":
        pts, wts, box = _root_rule(w, lower, size, p)
        out_p.append(pts)
        out_w.append(wts)
        out_o.append(owner[box])
    elif len(lower):
        pts, wts = _batched_rule(lower, size, p)
        own = np.repeat(owner, p**m)
        inside = weight_eval(w, pts) > 0.0
        out_p.append(pts[inside])
        out_w.append(wts[inside])
        out_o.append(own[inside])
    if not out_p:
        return np.zeros((0, m)), np.zeros(0), np.zeros(0, dtype=int)
    pts = np.concatenate(out_p)
    wts = np.concatenate(out_w)
    own = np.concatenate(out_o)
    # group by owner so results do not depend on the subdivision level order
    order = np.argsort(own, kind="stable")
    return pts[order], wts[order], own[order]


def cells_quadrature(dom, grid, cells, classes, p, depth=4, class_depth=3, rule="roots"):
    """Quadrature points for a list of cells with known classes.

    Returns ``points, weights, cell_ids`` where `cell_ids` (Q, m) is the grid
    cell owning each point.
    """
    cells = np.asarray(cells, dtype=int).reshape(-1, grid.m)
    classes = np.asarray(classes, dtype=int)
    m, h = grid.m, grid.h
    out_p, out_w, out_c = [], [], []
    interior = np.flatnonzero(classes == CellClass.INTERIOR)
    if len(interior):
        pts, wts = _batched_rule(cells[interior] * h, h, p)
        out_p.append(pts)
        out_w.append(wts)
        own = np.repeat(interior, p**m)
        out_c.append(own)
    boundary = np.flatnonzero(classes == CellClass.BOUNDARY)
    if len(boundary):
        pts, wts, own = cut_cell_points(dom.w_omega, cells[boundary] * h, h, p, depth, class_depth, rule)
        out_p.append(pts)
        out_w.append(wts)
        out_c.append(boundary[own])
    if not out_p:
        return np.zeros((0, m)), np.zeros(0), np.zeros((0, m), dtype=int)
    pts = np.concatenate(out_p)
    wts = np.concatenate(out_w)
    own = np.concatenate(out_c)
    order = np.argsort(own, kind="stable")
    return pts[order], wts[order], cells[own[order]]


def integrate_cell(dom, grid, cell, cls, f, p=3, depth=4, class_depth=3, rule="roots"):
    """Integrate `f` over the part of `cell` inside the domain.

    `f` maps points (Q, m) to values (Q,).  Returns ``(integral, volume)``
    where `volume` is the measured area/length of the cut cell.
    """
    if CellClass(cls) == CellClass.EXTERIOR:
        return 0.0, 0.0
    pts, wts, _ = cells_quadrature(dom, grid, [cell], [int(cls)], p, depth, class_depth, rule)
    if len(wts) == 0:
        return 0.0, 0.0
    return float(np.dot(wts, f(pts))), float(np.sum(wts))


def domain_measure(dom, grid, cell_class, p=2, depth=4, class_depth=3, rule="roots"):
    """Measured area (or length) of the domain from the cut-cell rule."""
    cells = [c for c, k in sorted(cell_class.items()) if k != CellClass.EXTERIOR]
    classes = [int(cell_class[c]) for c in cells]
    _, wts, _ = cells_quadrature(dom, grid, cells, classes, p, depth, class_depth, rule)
    return float(np.sum(wts))
