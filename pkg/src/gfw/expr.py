"""Analytic scalar expressions over the coordinates (t, x, y, z).

Metric functions are supplied as small closed-form expressions; this module
parses them and evaluates them together with exact first and second partial
derivatives (see :mod:`gfw.jets`).  Grammar (ASCII, whitespace insignificant)::

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' ['-'] NUMBER)?
    base   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Exponents must be integer or half-integer constants; general powers go
through exp/log.  Single-argument functions: sqrt, sin, cos, exp, log.
The six-argument vector helpers dot(ax,ay,az,bx,by,bz) and
cross_x/cross_y/cross_z(ax,ay,az,bx,by,bz) are expanded at parse time into
plain arithmetic and never appear in the tree.

``t``, ``x``, ``y``, ``z`` are the coordinates; ``r`` always denotes the
derived radius sqrt(x^2+y^2+z^2) of the Cartesian evaluation point (one
interpretation per document; a free-variable reading of ``r`` is not
supported).  Every other identifier is a named parameter resolved from a
table at evaluation time.

Expressions are immutable after parsing and evaluation is pure, so they are
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError, UnboundParameter
from .jets import Jet2

COORDS = ("t", "x", "y", "z")
UNARY_FUNCTIONS = ("sqrt", "sin", "cos", "exp", "log")
VECTOR_HELPERS = ("dot", "cross_x", "cross_y", "cross_z")


# ---------------------------------------------------------------------------
# syntax tree
# ---------------------------------------------------------------------------

class Expr:
    """Base node.  Supports composition through the arithmetic operators."""

    __slots__ = ()

    def __add__(self, other):
        return Bin("+", self, as_expr(other))

    def __radd__(self, other):
        return Bin("+", as_expr(other), self)

    def __sub__(self, other):
        return Bin("-", self, as_expr(other))

    def __rsub__(self, other):
        return Bin("-", as_expr(other), self)

    def __mul__(self, other):
        return Bin("*", self, as_expr(other))

    def __rmul__(self, other):
        return Bin("*", as_expr(other), self)

    def __truediv__(self, other):
        return Bin("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return Bin("/", as_expr(other), self)

    def __pow__(self, q):
        return Pow(self, float(q))

    def __neg__(self):
        return Bin("-", Num(0.0), self)

    def __str__(self):
        return to_string(self)

    def parameters(self) -> frozenset[str]:
        acc: set[str] = set()
        _collect_params(self, acc)
        return frozenset(acc)

    def uses_coordinate(self, name: str) -> bool:
        return _uses_coordinate(self, name)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str  # one of t, x, y, z, r


@dataclass(frozen=True, slots=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Bin(Expr):
    op: str  # + - * /
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: float  # integer or half-integer


@dataclass(frozen=True, slots=True)
class Call(Expr):
    fn: str  # sqrt sin cos exp log
    arg: Expr


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Num(float(v))


def _collect_params(e: Expr, acc: set[str]):
    if isinstance(e, Param):
        acc.add(e.name)
    elif isinstance(e, Bin):
        _collect_params(e.lhs, acc)
        _collect_params(e.rhs, acc)
    elif isinstance(e, Pow):
        _collect_params(e.base, acc)
    elif isinstance(e, Call):
        _collect_params(e.arg, acc)


def _uses_coordinate(e: Expr, name: str) -> bool:
    if isinstance(e, Var):
        return e.name == name or (name in ("x", "y", "z") and e.name == "r")
    if isinstance(e, Bin):
        return _uses_coordinate(e.lhs, name) or _uses_coordinate(e.rhs, name)
    if isinstance(e, Pow):
        return _uses_coordinate(e.base, name)
    if isinstance(e, Call):
        return _uses_coordinate(e.arg, name)
    return False


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text: str):
    """Yield (kind, value, column) with 1-based columns."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        col = i + 1
        if c in _OPS:
            tokens.append(("op", c, col))
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                val = float(lit)
            except ValueError:
                raise ParseError(f"bad number literal '{lit}'", col) from None
            tokens.append(("num", val, col))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], col))
            i = j
        else:
            raise ParseError(f"unexpected character '{c}'", col)
    tokens.append(("end", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0
        self.open_parens = []

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op, opened_at=None):
        kind, val, col = self.peek()
        if kind == "op" and val == op:
            return self.next()
        if opened_at is not None and kind == "end":
            raise ParseError("unclosed '('", opened_at)
        raise ParseError(f"expected '{op}'", col)

    def parse_expr(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.next()
            node = self.parse_term()
            if val == "-":
                node = Bin("-", Num(0.0), node)
        else:
            node = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                node = Bin(val, node, self.parse_term())
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                node = Bin(val, node, self.parse_factor())
            else:
                return node

    def parse_factor(self) -> Expr:
        node = self.parse_base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            sign = 1.0
            kind, val, col = self.peek()
            if kind == "op" and val == "-":
                self.next()
                sign = -1.0
                kind, val, col = self.peek()
            if kind != "num":
                raise ParseError("expected a numeric exponent after '^'", col)
            self.next()
            q = sign * val
            if 2.0 * q != round(2.0 * q):
                raise ParseError("exponent must be integer or half-integer", col)
            node = Pow(node, q)
        return node

    def parse_base(self) -> Expr:
        kind, val, col = self.next()
        if kind == "num":
            return Num(val)
        if kind == "ident":
            kind2, val2, _ = self.peek()
            if kind2 == "op" and val2 == "(":
                _, _, paren_col = self.next()
                self.open_parens.append(paren_col)
                args = [self.parse_expr()]
                while True:
                    kind3, val3, _ = self.peek()
                    if kind3 == "op" and val3 == ",":
                        self.next()
                        args.append(self.parse_expr())
                    else:
                        break
                self.expect_op(")", opened_at=paren_col)
                self.open_parens.pop()
                return self._make_call(val, args, col)
            if val in COORDS or val == "r":
                return Var(val)
            return Param(val)
        if kind == "op" and val == "(":
            self.open_parens.append(col)
            node = self.parse_expr()
            self.expect_op(")", opened_at=col)
            self.open_parens.pop()
            return node
        if kind == "end":
            if self.open_parens:
                raise ParseError("unclosed '('", self.open_parens[-1])
            raise ParseError("unexpected end of expression", col)
        raise ParseError(f"unexpected '{val}'", col)

    def _make_call(self, name, args, col) -> Expr:
        if name in UNARY_FUNCTIONS:
            if len(args) != 1:
                raise ParseError(f"{name}() takes exactly one argument", col)
            return Call(name, args[0])
        if name in VECTOR_HELPERS:
            if len(args) != 6:
                raise ParseError(
                    f"{name}() takes six arguments (ax,ay,az,bx,by,bz)", col)
            ax, ay, az, bx, by, bz = args
            if name == "dot":
                return ax * bx + ay * by + az * bz
            if name == "cross_x":
                return ay * bz - az * by
            if name == "cross_y":
                return az * bx - ax * bz
            return ax * by - ay * bx
        raise ParseError(f"unknown function '{name}'", col)


def parse(text: str) -> Expr:
    """Parse expression text into an immutable tree.

    Raises :class:`ParseError` with the offending column on bad syntax.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 1)
    parser = _Parser(_tokenize(text))
    node = parser.parse_expr()
    kind, val, col = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing '{val}'", col)
    return node


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_string(e: Expr, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, Num):
        s = _fmt_number(e.value)
        if e.value < 0 and parent_prec > 0:
            s = f"({s})"
        return s
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Pow):
        base = to_string(e.base, 3)
        q = e.exponent
        qs = _fmt_number(abs(q))
        return f"{base}^{'-' if q < 0 else ''}{qs}"
    if isinstance(e, Bin):
        prec = _PREC[e.op]
        s = (f"{to_string(e.lhs, prec)} {e.op} "
             f"{to_string(e.rhs, prec, right=True)}")
        # '-' and '/' do not associate on the right; '+' and '*' do
        need = prec < parent_prec or (prec == parent_prec and right)
        return f"({s})" if need else s
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _coordinate_jets(point, order):
    pt = np.asarray(point, dtype=float)
    if pt.shape[-1] != 4:
        raise ValueError("evaluation points must have 4 coordinates (t,x,y,z)")
    base = np.moveaxis(pt, -1, 0)
    return [Jet2.coordinate(k, base[k], order=order) for k in range(4)]


def _eval(e: Expr, coords, r_jet, params, order) -> Jet2:
    if isinstance(e, Num):
        return Jet2.constant(e.value, coords[0].value.shape, order)
    if isinstance(e, Param):
        if e.name not in params:
            raise UnboundParameter(f"parameter '{e.name}' has no value")
        return Jet2.constant(float(params[e.name]), coords[0].value.shape, order)
    if isinstance(e, Var):
        if e.name == "r":
            return r_jet()
        return coords[COORDS.index(e.name)]
    if isinstance(e, Bin):
        a = _eval(e.lhs, coords, r_jet, params, order)
        b = _eval(e.rhs, coords, r_jet, params, order)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        return _eval(e.base, coords, r_jet, params, order).powc(e.exponent)
    if isinstance(e, Call):
        arg = _eval(e.arg, coords, r_jet, params, order)
        return getattr(arg, e.fn)()
    raise TypeError(f"not an Expr: {e!r}")


def eval_jet2(e: Expr, point, params=None, order: int = 2) -> Jet2:
    """Evaluate with exact derivatives at one point or a batch of points.

    ``point`` is a length-4 sequence (t, x, y, z) or an array whose last
    axis has length 4.  Raises :class:`DomainError` on 1/0, sqrt/log of a
    non-positive argument, or a non-finite result, and
    :class:`UnboundParameter` for parameters missing from the table.
    """
    params = {} if params is None else params
    coords = _coordinate_jets(point, order)

    cache = {}

    def r_jet():
        if "r" not in cache:
            _, x, y, z = coords
            rsq = x * x + y * y + z * z
            if np.any(rsq.value == 0.0):
                raise DomainError("r = 0: radius is not differentiable there")
            cache["r"] = rsq.sqrt()
        return cache["r"]

    return _eval(e, coords, r_jet, params, order).require_finite()


def eval_value(e: Expr, point, params=None):
    """Plain values (no derivatives); vectorized like :func:`eval_jet2`."""
    return eval_jet2(e, point, params, order=0).value
