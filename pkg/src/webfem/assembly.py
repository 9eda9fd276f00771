"""Assembly of the block Galerkin system for the coupled problem.

With basis ``B_1..B_N`` the unknowns are ``U = (U1, U2)`` and

    G = [[A + M1,  M2    ],
         [ -M2,    A + M1]]

where ``A_ij = int grad B_i . P grad B_j + (R . grad B_j) B_i``,
``M1_ij = int q1 B_j B_i`` and ``M2_ij = int q2 B_j B_i``.  Rows are test
functions, columns trial functions.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .domain import CellClass
from .quadrature import cells_quadrature

CHUNK_CELLS = 64


@dataclass
class QuadConfig:
    """Quadrature settings; ``gauss=None`` means ``n + 1`` points per dimension."""

    gauss: int | None = None
    cut_depth: int = 4
    class_depth: int = 3
    cut_rule: str = "roots"
    threads: int | None = None

    def points_for(self, n):
        return self.gauss if self.gauss else n + 1

    def workers(self):
        if self.threads:
            return max(1, int(self.threads))
        env = os.environ.get("WEBFEM_THREADS")
        return max(1, int(env)) if env else 1


@dataclass
class AssembledSystem:
    G: sp.csr_matrix
    F: np.ndarray
    N: int
    inner: list
    A: sp.csr_matrix = field(repr=False)
    M1: sp.csr_matrix = field(repr=False)
    M2: sp.csr_matrix = field(repr=False)

    @property
    def blocks(self):
        N = self.N
        G = self.G.tocsr()
        return G[:N, :N], G[:N, N:], G[N:, :N], G[N:, N:]


def _chunks(basis):
    """Non-exterior cells in a fixed global order, split into chunks."""
    cc = basis.classification.cell_class
    cells = [c for c in sorted(cc) if cc[c] != CellClass.EXTERIOR]
    return [cells[a:a + CHUNK_CELLS] for a in range(0, len(cells), CHUNK_CELLS)]


def map_chunks(fn, basis, quad):
    """Apply `fn(points, weights, cells)` to every quadrature chunk.

    Chunks are processed by up to ``quad.workers()`` threads; results come back
    in the fixed chunk order regardless of scheduling.
    """
    p = quad.points_for(basis.grid.n)
    cc = basis.classification.cell_class

    def work(chunk):
        classes = [int(cc[c]) for c in chunk]
        pts, wts, cells = cells_quadrature(basis.dom, basis.grid, chunk, classes, p,
                                           quad.cut_depth, quad.class_depth, quad.cut_rule)
        return fn(pts, wts, cells)

    chunks = _chunks(basis)
    workers = quad.workers()
    if workers == 1:
        return [work(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, chunks))


def _local_contrib(problem, basis):
    m = basis.grid.m
    zero = (0,) * m
    units = [tuple(1 if nu == a else 0 for nu in range(m)) for a in range(m)]

    def fn(pts, wts, cells):
        N = basis.N
        if len(wts) == 0:
            empty = sp.csr_matrix((N, N))
            return empty, empty, empty, np.zeros(N), np.zeros(N)
        mats = basis.eval_matrices(pts, cells, order=1)
        B = mats[zero]
        D = [mats[u] for u in units]
        A = sp.csr_matrix((N, N))
        for a in range(m):
            for b in range(m):
                c = problem.P(a, b).at(pts) * wts
                A = A + D[a].T @ sp.diags(c) @ D[b]
            r = problem.R[a].at(pts) * wts
            A = A + B.T @ sp.diags(r) @ D[a]
        M1 = B.T @ sp.diags(problem.q1.at(pts) * wts) @ B
        M2 = B.T @ sp.diags(problem.q2.at(pts) * wts) @ B
        F1 = B.T @ (problem.f1.at(pts) * wts)
        F2 = B.T @ (problem.f2.at(pts) * wts)
        return A, M1, M2, F1, F2

    return fn


def assemble(problem, basis, quad=None):
    """Assemble ``G U = F`` for `problem` in the WEB space `basis`."""
    quad = quad or QuadConfig()
    N = basis.N
    parts = map_chunks(_local_contrib(problem, basis), basis, quad)
    A = sp.csr_matrix((N, N))
    M1 = sp.csr_matrix((N, N))
    M2 = sp.csr_matrix((N, N))
    F1 = np.zeros(N)
    F2 = np.zeros(N)
    for a, m1, m2, f1, f2 in parts:  # fixed order keeps the sums deterministic
        A = A + a
        M1 = M1 + m1
        M2 = M2 + m2
        F1 += f1
        F2 += f2
    K = (A + M1).tocsr()
    M2 = M2.tocsr()
    G = sp.bmat([[K, M2], [-M2, K]], format="csr")
    F = np.concatenate([F1, F2])
    return AssembledSystem(G, F, N, list(basis.inner), A.tocsr(), M1.tocsr(), M2)


def dump_system(system, directory, stem="system"):
    """Write ``G`` and ``F`` in Matrix Market coordinate format."""
    os.makedirs(directory, exist_ok=True)
    g_path = os.path.join(directory, f"{stem}_G.mtx")
    f_path = os.path.join(directory, f"{stem}_F.mtx")
    scipy.io.mmwrite(g_path, system.G.tocoo(), precision=17)
    scipy.io.mmwrite(f_path, sp.coo_matrix(system.F.reshape(-1, 1)), precision=17)
    return g_path, f_path
