"""
A tour of the WEB-spline basis
==============================

Build the basis on the unit square with a quarter disk removed and look at
how grid indices are split, how outer splines are attached to inner ones,
and how polynomials times the weight are reproduced.
"""

import numpy as np

from webfem import GridSpec, WebBasis, square_minus_quarter_disk
from webfem.basis import reproduction_residual
from webfem.domain import CellClass, weight_eval

# the domain is the positive set of an R-function weight
dom = square_minus_quarter_disk()
print("w at (0.9, 0.9):", weight_eval(dom.w_omega, (0.9, 0.9)))
print("w at (0.5, 0.5):", weight_eval(dom.w_omega, (0.5, 0.5)))

# a grid of biquadratic B-splines (order n = 3) covering the bounding box
grid = GridSpec.covering(1 / 8, 3, dom.lower, dom.upper)
basis = WebBasis(grid, dom)

counts = {k.name: 0 for k in CellClass}
for k in basis.classification.cell_class.values():
    counts[CellClass(k).name] += 1
print("cells:", counts)
print(f"inner indices: {basis.N}, outer indices: {len(basis.outer)}")

# every outer spline is distributed over an n x n array of inner neighbours
j = basis.outer[0]
members = basis.ext.members(j)
print(f"outer index {j} feeds {len(members)} inner splines, "
      f"coefficients sum to {sum(basis.ext.coefficient(i, j) for i in members):.12f}")

# the basis reproduces w * x^a * y^b for total degree below n
for p in [(0, 0), (1, 0), (1, 1), (0, 2)]:
    print(f"reproduction residual for x^{p[0]} y^{p[1]}: {reproduction_residual(basis, p):.2e}")

# every basis function vanishes on the boundary
t = np.linspace(0, np.pi / 2, 50)
arc = np.c_[np.cos(t), np.sin(t)]
B = basis.eval_matrices(arc, order=0)[(0, 0)]
print("largest basis value on the arc:", abs(B).max())
