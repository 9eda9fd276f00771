"""Small expression language for coefficient fields.

Grammar (standard precedence, ``^`` right-associative, unary minus binds
looser than ``^``)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Expressions are immutable trees evaluated with numpy, so every function
accepts arrays of points.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "log": 1,
    "abs": 1, "min": 2, "max": 2,
}
NONSMOOTH = {"abs", "min", "max", "sign"}

_NUMPY = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
    "log": np.log, "abs": np.abs, "min": np.minimum, "max": np.maximum,
    "sign": np.sign,
}


class ExprError(ValueError):
    """Parse failure; `offset` is the byte offset of the offending token."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
        self.offset = offset


class NonSmoothError(ValueError):
    pass


@dataclass(frozen=True)
class Expr:
    """Expression node.

    `op` is ``'const'``, ``'var'``, one of ``+ - * / ^``, ``'neg'`` or a
    function name; `value` holds the number or variable name for leaves.
    """

    op: str
    args: tuple = ()
    value: object = None

    def evaluate(self, env):
        """Evaluate with `env` mapping variable names to arrays (or floats)."""
        op = self.op
        if op == "const":
            return self.value
        if op == "var":
            try:
                return env[self.value]
            except KeyError:
                raise KeyError(f"no value bound for variable {self.value!r}") from None
        vals = [a.evaluate(env) for a in self.args]
        if op == "+":
            return vals[0] + vals[1]
        if op == "-":
            return vals[0] - vals[1]
        if op == "*":
            return vals[0] * vals[1]
        if op == "/":
            return vals[0] / vals[1]
        if op == "^":
            return np.power(vals[0], vals[1])
        if op == "neg":
            return -vals[0]
        return _NUMPY[op](*vals)

    def __call__(self, x, y=None):
        """Evaluate at coordinates; the result always has the shape of `x`."""
        x = np.asarray(x, dtype=float)
        env = {"x": x, "y": np.zeros_like(x) if y is None else np.asarray(y, dtype=float)}
        out = self.evaluate(env)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, env["y"]).shape).copy()

    def at(self, points):
        """Evaluate at an array of points of shape (P, m)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self(points[:, 0], points[:, 1] if points.shape[1] > 1 else None)

    @property
    def is_const(self):
        return self.op == "const"

    def variables(self):
        if self.op == "var":
            return {self.value}
        out = set()
        for a in self.args:
            out |= a.variables()
        return out

    def is_smooth(self):
        return self.op not in NONSMOOTH and all(a.is_smooth() for a in self.args)

    def __str__(self):
        op = self.op
        if op == "const":
            v = self.value
            return repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))
        if op == "var":
            return self.value
        if op == "neg":
            return f"(-{self.args[0]})"
        if op in "+-*/^":
            return f"({self.args[0]} {op} {self.args[1]})"
        return f"{op}({', '.join(str(a) for a in self.args)})"


# -- constructors with light constant folding ------------------------------

def const(v):
    return Expr("const", (), float(v))


def var(name):
    return Expr("var", (), name)


ZERO = const(0.0)
ONE = const(1.0)


def _isval(e, v):
    return e.op == "const" and e.value == v


def add(a, b):
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if _isval(a, 0.0):
        return b
    if _isval(b, 0.0):
        return a
    return Expr("+", (a, b))


def sub(a, b):
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if _isval(b, 0.0):
        return a
    if _isval(a, 0.0):
        return neg(b)
    return Expr("-", (a, b))


def mul(a, b):
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if _isval(a, 0.0) or _isval(b, 0.0):
        return ZERO
    if _isval(a, 1.0):
        return b
    if _isval(b, 1.0):
        return a
    return Expr("*", (a, b))


def div(a, b):
    if a.is_const and b.is_const and b.value != 0.0:
        return const(a.value / b.value)
    if _isval(a, 0.0):
        return ZERO
    if _isval(b, 1.0):
        return a
    return Expr("/", (a, b))


def power(a, b):
    if a.is_const and b.is_const:
        return const(a.value ** b.value)
    if _isval(b, 0.0):
        return ONE
    if _isval(b, 1.0):
        return a
    return Expr("^", (a, b))


def neg(a):
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def call(fn, *args):
    if all(a.is_const for a in args) and fn in _NUMPY:
        return const(_NUMPY[fn](*(a.value for a in args)))
    return Expr(fn, tuple(args))


# -- parser ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            start = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExprError(f"unexpected character {src[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, variables):
        self.tokens = _tokenize(src)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, off = self.take()
        if val != text or kind != "op":
            raise ExprError(f"expected {text!r}, found {val or 'end of input'!r}", off)

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("-", "+"):
            self.take()
            operand = self.unary()
            return neg(operand) if val == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", off)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExprError(f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}", off)
                return call(val, *args)
            if val in self.variables:
                return var(val)
            if val in CONSTANTS:
                return const(CONSTANTS[val])
            raise ExprError(f"unknown variable {val!r}", off)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprError(f"unexpected {val or 'end of input'!r}", off)


def parse_expression(src, variables=("x", "y")):
    """Parse `src` into an :class:`Expr`; raises :class:`ExprError` with an offset."""
    if isinstance(src, Expr):
        return src
    if isinstance(src, (int, float)):
        return const(src)
    return _Parser(str(src), tuple(variables)).parse()


# -- symbolic differentiation ------------------------------------------------

def differentiate(e, name, smooth=False):
    """Symbolic partial derivative of `e` with respect to variable `name`.

    With ``smooth=True`` any ``abs``/``min``/``max`` node raises
    :class:`NonSmoothError` instead of producing a one-sided derivative.
    """
    op = e.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if e.value == name else ZERO
    if smooth and op in NONSMOOTH:
        raise NonSmoothError(f"{op}() is not differentiable everywhere")
    a = e.args[0]
    da = differentiate(a, name, smooth)
    if op == "neg":
        return neg(da)
    if op in ("+", "-", "*", "/", "^", "min", "max"):
        b = e.args[1]
        db = differentiate(b, name, smooth)
    if op == "+":
        return add(da, db)
    if op == "-":
        return sub(da, db)
    if op == "*":
        return add(mul(da, b), mul(a, db))
    if op == "/":
        return div(sub(mul(da, b), mul(a, db)), mul(b, b))
    if op == "^":
        if b.is_const:
            return mul(mul(b, power(a, const(b.value - 1.0))), da)
        return mul(e, add(mul(db, call("log", a)), div(mul(b, da), a)))
    if op == "sin":
        return mul(call("cos", a), da)
    if op == "cos":
        return neg(mul(call("sin", a), da))
    if op == "exp":
        return mul(e, da)
    if op == "sqrt":
        return div(da, mul(const(2.0), e))
    if op == "log":
        return div(da, a)
    if op == "abs":
        return mul(call("sign", a), da)
    if op == "sign":
        return ZERO
    if op in ("min", "max"):
        # min(a,b) = (a+b)/2 - |a-b|/2, max with '+'
        s = mul(call("sign", sub(a, b)), sub(da, db))
        mean = mul(const(0.5), add(da, db))
        half = mul(const(0.5), s)
        return sub(mean, half) if op == "min" else add(mean, half)
    raise ValueError(f"cannot differentiate node {op!r}")
