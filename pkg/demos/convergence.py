"""
Convergence and conditioning
============================

A manufactured smooth solution on the square minus the quarter disk gives
errors that decay like h^(n-1) in the H1 seminorm, while the condition
number of the system grows like h^-2 for every spline order.
"""

from webfem import CoupledProblem, square_minus_quarter_disk
from webfem.problem import manufactured
from webfem.solve import build_system, convergence_study, estimate_condition, fit_slope

hs = [1 / 8, 1 / 16, 1 / 32]

# errors: the product of the three boundary pieces is a smooth weight, so
# u / w is smooth as well and the full rate shows up already on coarse grids
u = "(x^2+y^2-1)*(1-x)*(1-y)*exp(x)"
problem = manufactured(CoupledProblem(square_minus_quarter_disk("product"), q1=1.0, exact=(u, "0")))
report = convergence_study(problem, hs, [2, 3], condition=False)
print(report.to_table())

# conditioning of the symmetric problem with the R-function weight
sym = CoupledProblem(square_minus_quarter_disk(), q1=1.0)
for n in (2, 3):
    conds = [estimate_condition(build_system(sym, h, n)[1].G) for h in hs]
    print(f"n={n}: H1 error ~ h^{report.slopes()[n]['H1']:.2f}, "
          f"condition {', '.join(f'{c:.0f}' for c in conds)} ~ h^{fit_slope(hs, conds):.2f}")
