"""Expression language for schemes, ansatz functions and test functions.

Grammar (lowest to highest binding)::

    expr    := expr ('+' | '-') expr
             | expr ('*' | '/') expr
             | '-' expr                      # unary minus
             | expr '^' expr                 # right associative
             | NUMBER | NAME | NAME '(' args ')' | VAR '[' int ',' int ']' | '(' expr ')'

``VAR`` is one of ``x``, ``t``, ``y`` or ``u``; a bare name is a parameter (or, for
point functions such as ansatz terms, one of the point coordinates).  Values are
evaluated with plain floats, numpy arrays, or :class:`Dual` numbers, so the same
compiled tree provides exact first derivatives in forward mode and, by nesting
duals, second derivatives.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import DSLSyntaxError, EvaluationError, UnboundError

GRID_VARS = ("x", "t", "y", "u")
FUNCTIONS = {"exp": 1, "ln": 1, "sin": 1, "cos": 1, "sqrt": 1, "abs": 1, "pow": 2}
CONSTANTS = {"pi": math.pi, "e": math.e}

Pos = tuple  # (line, column), 1-based


# ---------------------------------------------------------------------------
# Tree nodes.  Source positions never take part in equality.


@dataclass(frozen=True)
class Num:
    value: float
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Param:
    name: str
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Ref:
    var: str
    i: int
    j: int
    pos: Pos = field(default=(0, 0), compare=False, repr=False)

    @property
    def key(self):
        return (self.var, self.i, self.j)


@dataclass(frozen=True)
class Neg:
    operand: Any
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Any
    right: Any
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[^\W\d]\w*)
  | (?P<op>[-+*/^(),\[\]])
    """,
    re.VERBOSE | re.UNICODE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'number', 'name', 'op', 'eof'
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col, i = 1, 1, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[i]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind != "ws":
                tokens.append(_Token(kind, s, line, col))
            col += len(s)
        i = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Pratt parser

_INFIX_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30
_EXPR_START = ("number", "name", "'('", "'-'", "'+'")


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.k = 0

    @property
    def tok(self):
        return self.tokens[self.k]

    def advance(self):
        t = self.tokens[self.k]
        self.k += 1
        return t

    def fail(self, message, expected=(), tok=None):
        tok = tok or self.tok
        raise DSLSyntaxError(message, tok.line, tok.col, expected)

    def expect(self, op):
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        found = self.tok.text or "end of input"
        self.fail(f"expected {op!r} but found {found!r}", (repr(op),))

    def parse(self):
        node = self.expression(0)
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r}", ("operator", "end of input"))
        return node

    def expression(self, rbp):
        left = self.nud(self.advance())
        while self.tok.kind == "op" and _INFIX_BP.get(self.tok.text, -1) > rbp:
            op = self.advance()
            bp = _INFIX_BP[op.text]
            right = self.expression(bp - 1 if op.text == "^" else bp)
            left = BinOp(op.text, left, right, (op.line, op.col))
        return left

    def nud(self, tok):
        pos = (tok.line, tok.col)
        if tok.kind == "number":
            return Num(float(tok.text), pos)
        if tok.kind == "op" and tok.text == "-":
            return Neg(self.expression(_UNARY_BP), pos)
        if tok.kind == "op" and tok.text == "+":
            return self.expression(_UNARY_BP)
        if tok.kind == "op" and tok.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        if tok.kind == "name":
            if self.tok.kind == "op" and self.tok.text == "[":
                return self.grid_ref(tok)
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            return Param(tok.text, pos)
        found = tok.text or "end of input"
        self.fail(f"unexpected {found!r}", _EXPR_START, tok)

    def offset(self):
        sign = 1
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = -1 if self.advance().text == "-" else 1
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            found = tok.text or "end of input"
            self.fail(f"malformed grid reference: expected integer offset, found {found!r}", ("integer",))
        self.advance()
        return sign * int(tok.text)

    def grid_ref(self, name):
        if name.text not in GRID_VARS:
            self.fail(f"malformed grid reference: {name.text!r} is not a grid variable", GRID_VARS, name)
        self.advance()  # '['
        i = self.offset()
        self.expect(",")
        j = self.offset()
        self.expect("]")
        return Ref(name.text, i, j, (name.line, name.col))

    def call(self, name):
        if name.text not in FUNCTIONS:
            self.fail(f"unknown function {name.text!r}", tuple(FUNCTIONS), name)
        self.advance()  # '('
        args = [self.expression(0)]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")
        if len(args) != FUNCTIONS[name.text]:
            self.fail(f"{name.text} takes {FUNCTIONS[name.text]} argument(s), got {len(args)}", (), name)
        return Call(name.text, tuple(args), (name.line, name.col))


# ---------------------------------------------------------------------------
# Serialization

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(node) -> str:
    """Serialize a tree so that parsing the text gives back an equal tree."""
    if isinstance(node, Num):
        return _fmt_number(node.value)
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Ref):
        return f"{node.var}[{node.i},{node.j}]"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        if isinstance(node.operand, BinOp) and node.operand.op != "^":
            inner = f"({inner})"
        return "-" + inner
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = to_text(node.left), to_text(node.right)
        if _needs_parens(node.left, p, right_side=node.op == "^"):
            left = f"({left})"
        if _needs_parens(node.right, p, right_side=node.op != "^"):
            right = f"({right})"
        return f"{left}{node.op}{right}" if node.op in "*/^" else f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _needs_parens(child, prec, right_side):
    if isinstance(child, Neg):
        # unary minus binds looser than '^' only
        return prec >= _INFIX_BP["^"]
    if not isinstance(child, BinOp):
        return False
    cp = _PREC[child.op]
    return cp < prec or (cp == prec and right_side)


# ---------------------------------------------------------------------------
# Dual numbers


class Dual:
    """Forward-mode dual number with a sparse gradient.

    ``val`` and the gradient entries may be floats, numpy arrays, or Duals
    themselves (nesting gives second derivatives).
    """

    __slots__ = ("val", "grad")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, val, grad=None):
        self.val = val
        self.grad = grad if grad is not None else {}

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r})"

    def __neg__(self):
        return Dual(-self.val, {k: -g for k, g in self.grad.items()})

    def __add__(self, other):
        if isinstance(other, Dual):
            grad = dict(self.grad)
            for k, g in other.grad.items():
                grad[k] = grad[k] + g if k in grad else g
            return Dual(self.val + other.val, grad)
        return Dual(self.val + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            grad = {k: g * other.val for k, g in self.grad.items()}
            for k, g in other.grad.items():
                term = self.val * g
                grad[k] = grad[k] + term if k in grad else term
            return Dual(self.val * other.val, grad)
        return Dual(self.val * other, {k: g * other for k, g in self.grad.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            grad = {k: g / other.val for k, g in self.grad.items()}
            for k, g in other.grad.items():
                term = -(q * g) / other.val
                grad[k] = grad[k] + term if k in grad else term
            return Dual(q, grad)
        return Dual(self.val / other, {k: g / other for k, g in self.grad.items()})

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, {k: -(q * g) / self.val for k, g in self.grad.items()})


def real_part(v):
    while isinstance(v, Dual):
        v = v.val
    return v


def _chain(d, fval, deriv):
    return Dual(fval, {k: g * deriv for k, g in d.grad.items()})


def _exp(a, pos=None):
    if isinstance(a, Dual):
        e = _exp(a.val, pos)
        return _chain(a, e, e)
    return np.exp(a) if isinstance(a, np.ndarray) else math.exp(a)


def _ln(a, pos=None):
    if np.any(real_part(a) <= 0):
        raise EvaluationError("ln of non-positive value", pos)
    if isinstance(a, Dual):
        return _chain(a, _ln(a.val, pos), 1.0 / a.val)
    return np.log(a) if isinstance(a, np.ndarray) else math.log(a)


def _sin(a, pos=None):
    if isinstance(a, Dual):
        return _chain(a, _sin(a.val), _cos(a.val))
    return np.sin(a) if isinstance(a, np.ndarray) else math.sin(a)


def _cos(a, pos=None):
    if isinstance(a, Dual):
        return _chain(a, _cos(a.val), -_sin(a.val))
    return np.cos(a) if isinstance(a, np.ndarray) else math.cos(a)


def _sqrt(a, pos=None):
    r = real_part(a)
    if np.any(r < 0):
        raise EvaluationError("sqrt of negative value", pos)
    if isinstance(a, Dual):
        if np.any(r == 0) and a.grad:
            raise EvaluationError("sqrt is not differentiable at 0", pos)
        s = _sqrt(a.val, pos)
        return _chain(a, s, 0.5 / s)
    return np.sqrt(a) if isinstance(a, np.ndarray) else math.sqrt(a)


def _abs(a, pos=None):
    if isinstance(a, Dual):
        return _chain(a, _abs(a.val), np.sign(real_part(a.val)))
    return np.abs(a) if isinstance(a, np.ndarray) else abs(a)


def _pow(a, b, pos=None):
    ra, rb = real_part(a), real_part(b)
    if np.any((ra == 0) & (rb < 0)):
        raise EvaluationError("0 raised to a negative power", pos)
    while isinstance(b, Dual) and not b.grad:
        b = b.val
    if not isinstance(b, Dual):
        if not isinstance(a, Dual):
            if np.any((ra < 0) & (np.asarray(rb) != np.round(rb))):
                raise EvaluationError("negative base raised to a non-integer power", pos)
            return a**b
        if np.all(b == 0):
            return Dual(_pow(a.val, b, pos), {})
        return _chain(a, _pow(a.val, b, pos), b * _pow(a.val, b - 1, pos))
    if np.any(ra <= 0):
        raise EvaluationError("non-positive base raised to a variable power", pos)
    if not isinstance(a, Dual):
        v = _pow(a, b.val, pos)
        return _chain(b, v, v * _ln(a, pos))
    return _exp(b * _ln(a, pos), pos)


_FUNC_IMPL = {"exp": _exp, "ln": _ln, "sin": _sin, "cos": _cos, "sqrt": _sqrt, "abs": _abs}


# ---------------------------------------------------------------------------
# Compilation to closures


def _compile(node) -> Callable[[Mapping], Any]:
    if isinstance(node, Num):
        v = node.value
        return lambda env: v
    if isinstance(node, Ref):
        key, pos = node.key, node.pos

        def ref(env):
            try:
                return env[key]
            except KeyError:
                raise UnboundError(f"unbound grid reference {node.var}[{node.i},{node.j}]", pos) from None

        return ref
    if isinstance(node, Param):
        name, pos = node.name, node.pos

        def param(env):
            if name in env:
                return env[name]
            if name in CONSTANTS:
                return CONSTANTS[name]
            raise UnboundError(f"unbound parameter {name!r}", pos)

        return param
    if isinstance(node, Neg):
        f = _compile(node.operand)
        return lambda env: -f(env)
    if isinstance(node, BinOp):
        f, g, pos = _compile(node.left), _compile(node.right), node.pos
        if node.op == "+":
            return lambda env: f(env) + g(env)
        if node.op == "-":
            return lambda env: f(env) - g(env)
        if node.op == "*":
            return lambda env: f(env) * g(env)
        if node.op == "/":

            def div(env):
                den = g(env)
                if np.any(real_part(den) == 0):
                    raise EvaluationError("division by zero", pos)
                return f(env) / den

            return div
        return lambda env: _pow(f(env), g(env), pos)
    if isinstance(node, Call):
        args = [_compile(a) for a in node.args]
        pos = node.pos
        if node.func == "pow":
            return lambda env: _pow(args[0](env), args[1](env), pos)
        impl = _FUNC_IMPL[node.func]
        arg = args[0]
        return lambda env: impl(arg(env), pos)
    raise TypeError(f"not an expression node: {node!r}")


def _collect(node, refs, names):
    if isinstance(node, Ref):
        refs.add(node.key)
    elif isinstance(node, Param):
        names.add(node.name)
    elif isinstance(node, Neg):
        _collect(node.operand, refs, names)
    elif isinstance(node, BinOp):
        _collect(node.left, refs, names)
        _collect(node.right, refs, names)
    elif isinstance(node, Call):
        for a in node.args:
            _collect(a, refs, names)


class Expression:
    """Immutable parsed expression with a compiled evaluator."""

    __slots__ = ("root", "source", "refs", "names", "_fn")

    def __init__(self, root, source=None):
        refs, names = set(), set()
        _collect(root, refs, names)
        self.root = root
        self.source = source if source is not None else to_text(root)
        self.refs = frozenset(refs)
        self.names = frozenset(names)
        self._fn = _compile(root)

    def __eq__(self, other):
        return isinstance(other, Expression) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __str__(self):
        return to_text(self.root)

    def __call__(self, values: Mapping):
        """Evaluate with a flat mapping of grid keys ``(var, i, j)`` and names."""
        return self._fn(values)

    @property
    def offsets(self):
        return frozenset((i, j) for _, i, j in self.refs)


def parse_expression(text: str) -> Expression:
    return Expression(_Parser(text).parse(), text)


# ---------------------------------------------------------------------------
# Evaluation API


@dataclass(frozen=True)
class Environment:
    refs: Mapping = field(default_factory=dict)
    params: Mapping = field(default_factory=dict)

    def lookup(self):
        merged = dict(self.params)
        merged.update(self.refs)
        return merged


def evaluate(e: Expression, env: Environment):
    return e(env.lookup())


def eval_with_gradient(e: Expression, env: Environment, wrt=None):
    """Value and exact partial derivatives of ``e``.

    ``wrt`` lists the keys to differentiate by; it defaults to the grid
    references occurring in ``e``.  Keys may be grid keys or names.
    """
    values = env.lookup()
    keys = sorted(e.refs) if wrt is None else list(wrt)
    for k in keys:
        if k not in values:
            raise UnboundError(f"cannot differentiate by unbound {k!r}")
        values[k] = Dual(values[k], {k: 1.0})
    out = e(values)
    if isinstance(out, Dual):
        return out.val, {k: out.grad.get(k, 0.0) for k in keys}
    return out, {k: 0.0 for k in keys}


def value_and_grad(e: Expression, values: Mapping, keys):
    """Low-level variant of :func:`eval_with_gradient` on a flat mapping (mutated)."""
    for k in keys:
        values[k] = Dual(values[k], {k: 1.0})
    out = e(values)
    if isinstance(out, Dual):
        return out.val, [out.grad.get(k, 0.0) for k in keys]
    return out, [0.0] * len(keys)


def second_derivatives(e: Expression, values: Mapping, names):
    """Value, gradient and Hessian of ``e`` with respect to ``names`` via nested duals."""
    values = dict(values)
    for n in names:
        values[n] = Dual(Dual(values[n], {n: 1.0}), {n: Dual(1.0, {})})
    out = e(values)
    zero = 0.0
    if not isinstance(out, Dual):
        return out, {n: zero for n in names}, {(a, b): zero for a in names for b in names}
    inner = out.val
    value = inner.val if isinstance(inner, Dual) else inner
    grad, hess = {}, {}
    for a in names:
        ga = out.grad.get(a, zero)
        grad[a] = ga.val if isinstance(ga, Dual) else ga
        for b in names:
            hess[(a, b)] = ga.grad.get(b, zero) if isinstance(ga, Dual) else zero
    return value, grad, hess
