"""Scalar expressions over chart coordinates with second-order jet evaluation.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?            # right-associative
    atom   := number | name | func '(' expr ')' | '(' expr ')'

Variables are ``x0 .. x{dim-1}``; ``t`` is an alias for ``x0``.  The
constants ``pi`` and ``e`` are recognised.  ``to_text`` is the canonical
serializer and re-parses to an expression with bit-identical values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expression",
    "Jet2",
    "eval_jet1",
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "VariableRangeError",
    "ExprDomainError",
    "FUNCTIONS",
    "parse",
    "to_text",
    "eval_jet2",
    "evaluate",
]


class ExpressionError(ValueError):
    """Base class for parse errors; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ExprSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class VariableRangeError(ExpressionError):
    pass


class ExprDomainError(ArithmeticError):
    """Raised when an operation is evaluated outside its domain.

    ``node`` holds the canonical text of the offending subexpression.
    """

    def __init__(self, reason: str, node: str = ""):
        super().__init__(f"{reason} in '{node}'" if node else reason)
        self.reason = reason
        self.node = node


# --------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Unary, Binary]

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs", "arcsin")
_CONSTANTS = {"pi": math.pi, "e": math.e}


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            where = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {where}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Unary("neg", arg)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg)
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                raise UnknownIdentifierError(f"unknown function {val!r}", pos)
            if val == "t":
                if self.dim < 1:
                    raise VariableRangeError("variable 't' needs dimension >= 1", pos)
                return Var(0)
            if val in _CONSTANTS:
                return Const(_CONSTANTS[val])
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if idx >= self.dim:
                    raise VariableRangeError(
                        f"variable {val!r} out of range for dimension {self.dim}", pos
                    )
                return Var(idx)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {val!r}", pos)


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return 3
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return 5


def _const_text(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot serialize non-finite constant {v}")
    v = float(v)
    negative_zero = v == 0.0 and math.copysign(1.0, v) < 0
    if v.is_integer() and abs(v) < 1e15 and not negative_zero:
        return str(int(v))
    return repr(v)


def to_text(node: Node) -> str:
    """Canonical text of ``node`` using minimal parentheses."""
    if isinstance(node, Const):
        return _const_text(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = to_text(node.arg)
            if _prec(node.arg) < 3:
                inner = f"({inner})"
            return "-" + inner
        return f"{node.op}({to_text(node.arg)})"
    p = _PREC[node.op]
    left = to_text(node.left)
    right = to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= 4:
            left = f"({left})"
        if _prec(node.right) < 4:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# --------------------------------------------------------------------------
# jets


class Jet2:
    """Second-order jet: value, gradient and Hessian of a scalar at a point."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray):
        self.value = value
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, value: float, n: int) -> "Jet2":
        return cls(float(value), np.zeros(n), np.zeros((n, n)))

    @classmethod
    def variable(cls, value: float, index: int, n: int) -> "Jet2":
        g = np.zeros(n)
        g[index] = 1.0
        return cls(float(value), g, np.zeros((n, n)))

    def __repr__(self) -> str:
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    def _lift(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(float(other), self.grad.shape[0])

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.value + o.value, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        o = self._lift(other)
        return Jet2(self.value - o.value, self.grad - o.grad, self.hess - o.hess)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        return _mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return _mul(self, _chain(o, *_reciprocal(o.value, "division")))

    def __rtruediv__(self, other):
        return self._lift(other) / self


def _mul(a: Jet2, b: Jet2) -> Jet2:
    s = np.outer(a.grad, b.grad)
    hess = (a.value * b.hess + b.value * a.hess) + (s + s.T)
    return Jet2(a.value * b.value, a.value * b.grad + b.value * a.grad, hess)


def _chain(a: Jet2, f0: float, f1: float, f2: float) -> Jet2:
    g = a.grad
    return Jet2(f0, f1 * g, f1 * a.hess + f2 * np.outer(g, g))


def _scale(a: Jet2, c: float) -> Jet2:
    return Jet2(a.value * c, a.grad * c, a.hess * c)


def _reciprocal(x: float, what: str, node: str = "") -> tuple[float, float, float]:
    if x == 0.0:
        raise ExprDomainError(f"{what} by zero", node)
    r = 1.0 / x
    return r, -r * r, 2.0 * r * r * r


def _derivs(name: str, x: float, node: str) -> tuple[float, float, float]:
    """Value, first and second derivative of a named function at ``x``."""
    if name == "sin":
        s, c = math.sin(x), math.cos(x)
        return s, c, -s
    if name == "cos":
        s, c = math.sin(x), math.cos(x)
        return c, -s, -c
    if name == "sinh":
        s, c = _hyp(math.sinh, x, node), _hyp(math.cosh, x, node)
        return s, c, s
    if name == "cosh":
        s, c = _hyp(math.sinh, x, node), _hyp(math.cosh, x, node)
        return c, s, c
    if name == "tanh":
        th = math.tanh(x)
        d = 1.0 - th * th
        return th, d, -2.0 * th * d
    if name == "exp":
        v = _hyp(math.exp, x, node)
        return v, v, v
    if name == "ln":
        if x <= 0.0:
            raise ExprDomainError(f"ln of non-positive value {x!r}", node)
        r = 1.0 / x
        return math.log(x), r, -r * r
    if name == "sqrt":
        if x <= 0.0:
            raise ExprDomainError(f"sqrt derivative undefined at {x!r}", node)
        s = math.sqrt(x)
        return s, 0.5 / s, -0.25 / (s * x)
    if name == "abs":
        if x == 0.0:
            raise ExprDomainError("abs is not differentiable at 0", node)
        sg = 1.0 if x > 0 else -1.0
        return abs(x), sg, 0.0
    if name == "arcsin":
        if not -1.0 < x < 1.0:
            raise ExprDomainError(f"arcsin derivative undefined at {x!r}", node)
        q = 1.0 - x * x
        d = 1.0 / math.sqrt(q)
        return math.asin(x), d, x * d / q
    raise ExprDomainError(f"unknown function {name!r}", node)


def _hyp(fn: Callable[[float], float], x: float, node: str) -> float:
    try:
        return fn(x)
    except OverflowError:
        raise ExprDomainError(f"overflow evaluating at {x!r}", node) from None


def _pow_const(a: Jet2, c: float, node: str) -> Jet2:
    x = a.value
    if c == round(c) and abs(c) < 2**31:
        k = int(c)
        if x == 0.0 and k < 0:
            raise ExprDomainError("zero raised to a negative power", node)
        f0 = x**k
        f1 = k * x ** (k - 1) if k != 0 else 0.0
        f2 = k * (k - 1) * x ** (k - 2) if k not in (0, 1) else 0.0
        return _chain(a, float(f0), float(f1), float(f2))
    if x < 0.0:
        raise ExprDomainError(f"negative base {x!r} with non-integer exponent", node)
    if x == 0.0:
        if c > 2.0:
            return _chain(a, 0.0, 0.0, 0.0)
        raise ExprDomainError("derivative of fractional power undefined at 0", node)
    f0 = x**c
    return _chain(a, f0, c * f0 / x, c * (c - 1.0) * f0 / (x * x))


def _jet(node: Node, p: np.ndarray, n: int) -> Jet2:
    if isinstance(node, Const):
        return Jet2.constant(node.value, n)
    if isinstance(node, Var):
        return Jet2.variable(p[node.index], node.index, n)
    if isinstance(node, Unary):
        a = _jet(node.arg, p, n)
        if node.op == "neg":
            return -a
        try:
            return _chain(a, *_derivs(node.op, a.value, ""))
        except ExprDomainError as exc:
            raise ExprDomainError(exc.reason, to_text(node)) from None
    op = node.op
    if isinstance(node.right, Const) and op != "^":
        a = _jet(node.left, p, n)
        c = node.right.value
        if op == "+":
            return Jet2(a.value + c, a.grad, a.hess)
        if op == "-":
            return Jet2(a.value - c, a.grad, a.hess)
        if op == "*":
            return _scale(a, c)
        if c == 0.0:
            raise ExprDomainError("division by zero", to_text(node))
        return _scale(a, 1.0 / c)
    if isinstance(node.left, Const) and op in "+*":
        b = _jet(node.right, p, n)
        c = node.left.value
        if op == "+":
            return Jet2(b.value + c, b.grad, b.hess)
        return _scale(b, c)
    a = _jet(node.left, p, n)
    b = _jet(node.right, p, n)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return _mul(a, b)
    if op == "/":
        return _mul(a, _chain(b, *_reciprocal(b.value, "division", to_text(node))))
    # power
    if not b.grad.any() and not b.hess.any():
        return _pow_const(a, b.value, to_text(node))
    if a.value <= 0.0:
        raise ExprDomainError(
            f"non-positive base {a.value!r} with variable exponent", to_text(node)
        )
    la = _chain(a, math.log(a.value), 1.0 / a.value, -1.0 / (a.value * a.value))
    e = _mul(b, la)
    return _chain(e, *_derivs("exp", e.value, to_text(node)))


J1 = tuple  # (value, first derivative, second derivative) of a univariate jet


def _chain1(a: J1, f0: float, f1: float, f2: float) -> J1:
    return f0, f1 * a[1], f1 * a[2] + f2 * a[1] * a[1]


def _mul1(a: J1, b: J1) -> J1:
    return a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + 2.0 * a[1] * b[1] + a[2] * b[0]


def _pow1(a: J1, c: float, node: str) -> J1:
    # reuse the multivariate rules through a 1-variable Jet2
    j = _pow_const(Jet2(a[0], np.array([a[1]]), np.array([[a[2]]])), c, node)
    return j.value, float(j.grad[0]), float(j.hess[0, 0])


def _shift1(a: J1, c: float) -> J1:
    return a[0] + c, a[1], a[2]


def _neg1(a: J1) -> J1:
    return -a[0], -a[1], -a[2]


def _compile1(node: Node) -> Callable[[float], J1]:
    """Closure computing the float-only jet of a univariate expression.

    Compiling once removes the per-call tree walk; warping functions are
    evaluated at every step of a geodesic integration.
    """
    if isinstance(node, Const):
        c = (node.value, 0.0, 0.0)
        return lambda x: c
    if isinstance(node, Var):
        return lambda x: (x, 1.0, 0.0)
    if isinstance(node, Unary):
        arg = _compile1(node.arg)
        op = node.op
        if op == "neg":

            return lambda x: _neg1(arg(x))

        def unary(x):
            a = arg(x)
            try:
                return _chain1(a, *_derivs(op, a[0], ""))
            except ExprDomainError as exc:
                raise ExprDomainError(exc.reason, to_text(node)) from None

        return unary
    left, right = _compile1(node.left), _compile1(node.right)
    op = node.op
    if op in "+-" and isinstance(node.left, Const):
        c = node.left.value
        if op == "+":
            return lambda x: _shift1(right(x), c)
        return lambda x: _shift1(_neg1(right(x)), c)
    if op in "+-" and isinstance(node.right, Const):
        c = node.right.value if op == "+" else -node.right.value
        return lambda x: _shift1(left(x), c)
    if op == "+":

        def add(x):
            a, b = left(x), right(x)
            return a[0] + b[0], a[1] + b[1], a[2] + b[2]

        return add
    if op == "-":

        def sub(x):
            a, b = left(x), right(x)
            return a[0] - b[0], a[1] - b[1], a[2] - b[2]

        return sub
    if op == "*":
        return lambda x: _mul1(left(x), right(x))
    if op == "/":

        def div(x):
            b = right(x)
            return _mul1(left(x), _chain1(b, *_reciprocal(b[0], "division", to_text(node))))

        return div

    def power(x):
        a, b = left(x), right(x)
        if b[1] == 0.0 and b[2] == 0.0:
            return _pow1(a, b[0], to_text(node))
        if a[0] <= 0.0:
            raise ExprDomainError(f"non-positive base {a[0]!r} with variable exponent", to_text(node))
        la = _chain1(a, math.log(a[0]), 1.0 / a[0], -1.0 / (a[0] * a[0]))
        e = _mul1(b, la)
        return _chain1(e, *_derivs("exp", e[0], to_text(node)))

    return power


def _value(node: Node, p) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(p[node.index])
    if isinstance(node, Unary):
        x = _value(node.arg, p)
        op = node.op
        if op == "neg":
            return -x
        try:
            if op == "sqrt":
                if x < 0.0:
                    raise ValueError
                return math.sqrt(x)
            if op == "ln":
                if x <= 0.0:
                    raise ValueError
                return math.log(x)
            if op == "arcsin":
                return math.asin(x)
            if op == "abs":
                return abs(x)
            return _derivs(op, x, "")[0]
        except (ValueError, OverflowError, ExprDomainError):
            raise ExprDomainError(f"{op} undefined at {x!r}", to_text(node)) from None
    a = _value(node.left, p)
    b = _value(node.right, p)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprDomainError("division by zero", to_text(node))
        return a / b
    try:
        if b == round(b) and abs(b) < 2**31:
            return float(a ** int(b))
        if a < 0.0:
            raise ValueError
        return a**b
    except (ValueError, ZeroDivisionError, OverflowError):
        raise ExprDomainError(f"power undefined for base {a!r}", to_text(node)) from None


# --------------------------------------------------------------------------
# public wrapper


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the dimension it was parsed for."""

    root: Node
    dim: int

    @property
    def text(self) -> str:
        return to_text(self.root)

    def __str__(self) -> str:
        return self.text

    def __call__(self, p) -> float:
        return _value(self.root, p)

    def jet(self, p) -> Jet2:
        return eval_jet2(self, p)

    @cached_property
    def jet1(self) -> Callable[[float], tuple[float, float, float]]:
        """Compiled univariate jet (1-variable expressions only)."""
        if self.dim != 1:
            raise ValueError("jet1 needs a 1-variable expression")
        return _compile1(self.root)

    def variables(self) -> set[int]:
        out: set[int] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.index)
            elif isinstance(node, Unary):
                stack.append(node.arg)
            elif isinstance(node, Binary):
                stack.extend((node.left, node.right))
        return out

    def is_constant(self) -> bool:
        return not self.variables()


def parse(text: str, dim: int) -> Expression:
    """Parse ``text`` as a scalar expression in ``dim`` chart coordinates."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return Expression(_Parser(text, dim).parse(), dim)


def eval_jet2(e: Expression, p) -> Jet2:
    """Value, gradient and Hessian of ``e`` at ``p``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (e.dim,):
        raise ValueError(f"point has shape {p.shape}, expected ({e.dim},)")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite entries")
    return _jet(e.root, p, e.dim)


def eval_jet1(e: Expression, x: float) -> tuple[float, float, float]:
    """(value, derivative, second derivative) of a 1-variable expression."""
    if e.dim != 1:
        raise ValueError("eval_jet1 needs a 1-variable expression")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("point has non-finite entries")
    return e.jet1(x)


def evaluate(e: Expression, p) -> float:
    return _value(e.root, p)
