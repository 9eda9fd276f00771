"""JSON run configuration.

A config file has six sections; every key is optional except ``domain``
and ``grid``::

    {
      "domain":     {"builtin": "square-minus-quarter-disk", "weight": "rfunction"},
      "grid":       {"h": [0.125, 0.0625, 0.03125], "n": [2, 3]},
      "problem":    {"P": [["1", "0"], ["0", "1"]], "R": ["0", "0"],
                     "q1": "1", "q2": "0", "f1": "0", "f2": "0",
                     "exact": ["x*y*(1-x)", "0"], "manufactured": true},
      "quadrature": {"gauss": null, "cut_depth": 4, "class_depth": 3, "cut_rule": "roots"},
      "solver":     {"method": "auto", "tol": 1e-10, "override_gate": false,
                     "condition": true},
      "output":     {"dir": "out", "resolution": 41, "format": "csv",
                     "timing": true, "dump_system": false}
    }

Instead of ``builtin`` a domain may give an explicit weight tree::

    {"omega": {"type": "rand", "args": [...]}, "dirichlet": null,
     "bounding_box": [[0, 0], [1, 1]]}

Node types are ``halfspace`` (``a``, ``b``), ``circle`` (``center``,
``radius``, ``sign``), ``product``, ``expr`` (``src``), ``rand``, ``ror``,
``negate``, ``scale`` (``factor``) and ``const`` (``value``).
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .assembly import QuadConfig
from .domain import BUILTIN_DOMAINS, WEIGHT_FORMS, DomainSpec, builtin_domain, weight_from_dict
from .expr import parse_expression
from .problem import CoupledProblem, manufactured
from .quadrature import CUT_RULES

VARS = ("x", "y")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _expr_text(v):
    return v if isinstance(v, str) else repr(float(v))


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(unknown))}")


@dataclass
class DomainConfig:
    builtin: str | None = "square-minus-quarter-disk"
    weight: str = "rfunction"
    omega: dict | None = None
    dirichlet: dict | None = None
    bounding_box: list | None = None

    def build(self):
        if self.omega is None:
            return builtin_domain(self.builtin, self.weight)
        m = len(self.bounding_box[0])
        w = weight_from_dict(self.omega, m)
        wd = None if self.dirichlet is None else weight_from_dict(self.dirichlet, m)
        return DomainSpec(w, self.bounding_box, w_dirichlet=wd, name="custom")

    def validate(self):
        if self.omega is None:
            if self.builtin not in BUILTIN_DOMAINS:
                raise ConfigError(f"unknown builtin domain {self.builtin!r}; choose from {sorted(BUILTIN_DOMAINS)}")
        elif self.bounding_box is None or len(self.bounding_box) != 2:
            raise ConfigError("a custom domain needs 'bounding_box': [lower, upper]")
        if self.weight not in WEIGHT_FORMS:
            raise ConfigError(f"unknown weight form {self.weight!r}; choose from {WEIGHT_FORMS}")
        try:
            return self.build()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid domain: {exc}") from None


@dataclass
class GridConfig:
    h: list = field(default_factory=lambda: [0.1])
    n: list = field(default_factory=lambda: [3])

    def __post_init__(self):
        self.h = [float(v) for v in _as_list(self.h)]
        self.n = [int(v) for v in _as_list(self.n)]

    def validate(self):
        if not self.h or any(not v > 0.0 for v in self.h):
            raise ConfigError("grid widths h must be positive")
        if not self.n or any(v < 2 for v in self.n):
            raise ConfigError("spline orders n must be at least 2")


@dataclass
class ProblemConfig:
    P: list | None = None
    R: list | None = None
    q1: str = "1"
    q2: str = "0"
    f1: str = "0"
    f2: str = "0"
    exact: list | None = None
    manufactured: bool = False

    def __post_init__(self):
        if self.P is not None:
            self.P = [[_expr_text(v) for v in row] for row in self.P]
        if self.R is not None:
            self.R = [_expr_text(v) for v in self.R]
        for name in ("q1", "q2", "f1", "f2"):
            setattr(self, name, _expr_text(getattr(self, name)))
        if self.exact is not None:
            self.exact = [_expr_text(v) for v in self.exact]

    def expressions(self):
        yield from (s for row in (self.P or []) for s in row)
        yield from self.R or []
        yield from (self.q1, self.q2, self.f1, self.f2)
        yield from self.exact or []

    def build(self, dom):
        prob = CoupledProblem(dom, self.P, self.R, self.q1, self.q2, self.f1, self.f2,
                              exact=self.exact)
        return manufactured(prob) if self.manufactured else prob

    def validate(self, m):
        if self.P is not None and (len(self.P) != m or any(len(row) != m for row in self.P)):
            raise ConfigError(f"'P' must be a {m}x{m} matrix of expressions")
        if self.R is not None and len(self.R) != m:
            raise ConfigError(f"'R' must list {m} expressions")
        for src in self.expressions():
            try:
                parse_expression(src, VARS[:m])
            except ValueError as exc:
                raise ConfigError(f"in expression {src!r}: {exc}") from None
        if self.manufactured and self.exact is None:
            raise ConfigError("'manufactured' needs an 'exact' solution")
        if self.exact is not None and len(self.exact) != 2:
            raise ConfigError("'exact' must list two expressions (u1, u2)")


@dataclass
class SolverConfig:
    method: str = "auto"
    tol: float = 1e-10
    override_gate: bool = False
    condition: bool = True

    def validate(self):
        if self.method not in ("auto", "direct", "iterative"):
            raise ConfigError(f"unknown solver method {self.method!r}")
        if not 0.0 < self.tol < 1.0:
            raise ConfigError("solver tolerance must lie in (0, 1)")


@dataclass
class OutputConfig:
    dir: str = "out"
    resolution: int = 41
    format: str = "csv"
    timing: bool = True
    dump_system: bool = False

    def validate(self):
        if self.resolution < 2:
            raise ConfigError("output resolution must be at least 2")
        if self.format not in ("csv", "vtk"):
            raise ConfigError(f"unknown output format {self.format!r}")


_SECTIONS = {
    "domain": DomainConfig,
    "grid": GridConfig,
    "problem": ProblemConfig,
    "quadrature": QuadConfig,
    "solver": SolverConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    quadrature: QuadConfig = field(default_factory=QuadConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data):
        _check_keys("config", data, _SECTIONS)
        kwargs = {}
        for name, kind in _SECTIONS.items():
            sec = data.get(name, {})
            _check_keys(name, sec, [f.name for f in fields(kind)])
            try:
                kwargs[name] = kind(**copy.deepcopy(sec))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"section '{name}': {exc}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def validate(self):
        dom = self.domain.validate()
        self.grid.validate()
        self.problem.validate(dom.m)
        self.solver.validate()
        self.output.validate()
        if self.quadrature.cut_rule not in CUT_RULES:
            raise ConfigError(f"unknown cut-cell rule {self.quadrature.cut_rule!r}")
        if self.quadrature.cut_depth < 0 or self.quadrature.class_depth < 1:
            raise ConfigError("cut_depth must be >= 0 and class_depth >= 1")
        return self

    def build_domain(self):
        return self.domain.build()

    def build_problem(self):
        return self.problem.build(self.build_domain())


def apply_overrides(data, overrides):
    """Apply ``key.path=value`` strings to a config dict (a modified copy is returned).

    Values are read as JSON when possible, otherwise kept as strings, so
    ``grid.h=[0.1,0.05]`` gives a list and ``problem.q1=1+x`` a string.
    """
    data = copy.deepcopy(data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def load_config(path, overrides=()):
    """Read, override and validate a JSON config file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(apply_overrides(data, overrides))


def shipped_config(name="poly_bvp"):
    """Path of a config file bundled with the package."""
    return os.path.join(os.path.dirname(__file__), "data", f"{name}.json")
