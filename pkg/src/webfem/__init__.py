"""Weighted extended B-spline (WEB) finite elements on implicitly defined domains."""

from .assembly import AssembledSystem, QuadConfig, assemble, dump_system
from .basis import (ExtensionTable, IndexClassification, NoInteriorCellError, UnderResolvedError,
                    WebBasis, classify_indices, extension_coeffs, reproduction_residual, web_eval)
from .bspline import GridSpec, bspline_eval, support_cells, tensor_eval
from .config import ConfigError, RunConfig, load_config, shipped_config
from .domain import (CellClass, Circle, DomainSpec, HalfSpace, Product, builtin_domain, classify_cell,
                     quarter_disk, r_and, r_or, square_minus_quarter_disk, weight_eval, weight_grad)
from .export import export_field
from .expr import differentiate, parse_expression
from .problem import (CoupledProblem, WellposednessReport, check_wellposedness, manufactured,
                      manufactured_rhs)
from .quadrature import integrate_cell
from .solve import (ConvergenceReport, SolutionField, convergence_study, error_norms,
                    estimate_condition, evaluate_solution, relative_residual, run_case, solve)

__version__ = "0.1.0"
