"""Algebraic scalar functions of ``k`` with explicit branch cuts.

Grammar (whitespace insignificant)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := ('-' | '+') factor | base ('^' ['-'] integer)?
    base    := number | 'k' | '(' expr ')' | radical
    radical := 'sqrt(' expr [sep 'up=' list] [sep 'down=' list] sep 'sign=' ('+'|'-') ')'
    sep     := ';' | ','
    list    := expr (',' expr)*          (constant expressions)

Numbers are decimal with an optional exponent and an optional ``i``
suffix (``2``, ``0.5i``, ``1e-3``).

A radical ``sqrt(p(k); up=a..; down=b..; sign=s)`` is evaluated as::

    s * sqrt(lead(p)) * exp(1/2 * sum_i Log_i(k - a_i))

over the roots ``a_i`` of ``p``. ``Log_i`` has a vertical cut going up from
``a_i`` for points listed under ``up`` and down for points under ``down``, so
with ``s = +`` the radical behaves like ``+sqrt(lead) * k**(deg/2)`` for
large positive real ``k``.  Cuts from lower half-plane points pointing
downwards is a convention of this package; it keeps the real axis clear.

Shore evaluation continues the value found on the right (``plus``) or left
(``minus``) shore of the cut through a chosen branch point into the whole
half-strip above that point, which is what the jump coefficients need off
the cut itself.
"""

from dataclasses import dataclass, field
import functools
import re

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    DivisionByZero,
    EvalAtBranchPoint,
    ExprSyntaxError,
    UndeclaredBranchPoint,
)

__all__ = [
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Radical",
    "ShoreSpec",
    "parse",
    "to_text",
    "evaluate",
    "as_polynomial",
    "radicals",
    "NotPolynomial",
]

ROOT_MATCH_TOL = 1e-6


# =========
# AST nodes
# =========

@dataclass(frozen=True)
class Const:
    value: complex


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Radical:
    """Square root of a polynomial with declared branch points."""

    operand: object
    up: tuple
    down: tuple
    sign: int
    lead: complex = field(default=1.0, compare=False, repr=False)

    @property
    def points(self):
        return self.up + self.down


@dataclass(frozen=True)
class ShoreSpec:
    """Which value of a multivalued expression to take.

    ``side`` is ``"off"`` (ordinary evaluation in the cut plane), ``"plus"``
    (right shore) or ``"minus"`` (left shore) of the vertical cut starting at
    ``point``.  ``cut_index`` is informational.
    """

    side: str = "off"
    point: complex = None
    cut_index: int = None

    def __post_init__(self):
        if self.side not in ("off", "plus", "minus"):
            raise ValueError(f"unknown shore {self.side!r}")
        if self.side != "off" and self.point is None:
            raise ValueError("a shore needs the branch point of its cut")

    @classmethod
    def plus(cls, point, cut_index=None):
        return cls("plus", complex(point), cut_index)

    @classmethod
    def minus(cls, point, cut_index=None):
        return cls("minus", complex(point), cut_index)


OFF = ShoreSpec()


class NotPolynomial(Exception):
    pass


# =========
# Tokenizer
# =========

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^();,=])"
    r")"
)

_KEYWORDS = {"k", "sqrt", "up", "down", "sign"}


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip()) if m is None else pos
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if kind == "ident" and value not in _KEYWORDS:
            raise ExprSyntaxError(f"unknown identifier {value!r}", start)
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _number(text):
    if text.endswith("i"):
        return complex(0.0, float(text[:-1]))
    return complex(float(text), 0.0)


# ======
# Parser
# ======

class _Parser:

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            shown = val or "end of input"
            raise ExprSyntaxError(f"expected {value!r}, found {shown!r}", pos)

    def parse(self):
        node = self.expr(in_radical=False)
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos)
        return node

    def expr(self, in_radical):
        node = self.term(in_radical)
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term(in_radical))
        return node

    def term(self, in_radical):
        node = self.factor(in_radical)
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            right = self.factor(in_radical)
            if op == "/" and _is_zero_constant(right):
                raise DivisionByZero("division by an identically zero expression")
            node = BinOp(op, node, right)
        return node

    def factor(self, in_radical):
        kind, val, pos = self.peek()
        if val in ("-", "+"):
            self.take()
            operand = self.factor(in_radical)
            return Neg(operand) if val == "-" else operand
        node = self.base(in_radical)
        if self.peek()[1] == "^":
            self.take()
            negative = False
            if self.peek()[1] == "-":
                self.take()
                negative = True
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ExprSyntaxError("exponent must be an integer", pos)
            node = Pow(node, -int(val) if negative else int(val))
        return node

    def base(self, in_radical):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(_number(val))
        if val == "k":
            return Var()
        if val == "(":
            node = self.expr(in_radical)
            self.expect(")")
            return node
        if val == "sqrt":
            if in_radical:
                raise ExprSyntaxError("nested radicals are not supported", pos)
            return self.radical(pos)
        shown = val or "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", pos)

    def radical(self, start):
        self.expect("(")
        operand = self.expr(in_radical=True)
        up, down, sign = (), (), None
        seen = set()
        while self.peek()[1] in (";", ","):
            self.take()
            kind, key, pos = self.take()
            if key not in ("up", "down", "sign") or key in seen:
                raise ExprSyntaxError(f"unexpected radical option {key!r}", pos)
            if "sign" in seen:
                raise ExprSyntaxError("'sign=' must be the last radical option", pos)
            seen.add(key)
            self.expect("=")
            if key == "sign":
                kind, val, pos = self.take()
                if val not in ("+", "-"):
                    raise ExprSyntaxError("sign must be '+' or '-'", pos)
                sign = 1 if val == "+" else -1
            else:
                values = [self.constant()]
                while self.peek()[1] == "," and not self._option_follows():
                    self.take()
                    values.append(self.constant())
                if key == "up":
                    up = tuple(values)
                else:
                    down = tuple(values)
        if sign is None:
            raise ExprSyntaxError("radical needs 'sign=+' or 'sign=-'", self.peek()[2])
        self.expect(")")
        return make_radical(operand, up, down, sign, position=start)

    def _option_follows(self):
        # "," then "up="/"down="/"sign=" separates options, not list items
        nxt = self.tokens[self.i + 1]
        return nxt[1] in ("up", "down", "sign")

    def constant(self):
        pos = self.peek()[2]
        node = self.expr(in_radical=True)
        try:
            coeffs = as_polynomial(node)
        except NotPolynomial:
            coeffs = None
        if coeffs is None or len(coeffs) > 1:
            raise ExprSyntaxError("branch points must be constants", pos)
        return complex(coeffs[0])


def _is_zero_constant(node):
    try:
        coeffs = as_polynomial(node)
    except NotPolynomial:
        return False
    return len(coeffs) == 1 and coeffs[0] == 0


def make_radical(operand, up, down, sign, position=None):
    """Build a validated :class:`Radical` node."""
    try:
        coeffs = as_polynomial(operand)
    except NotPolynomial:
        raise ExprSyntaxError("radical operand must be a polynomial in k", position)
    if len(coeffs) == 1 and coeffs[0] == 0:
        raise ExprSyntaxError("radical of the zero polynomial", position)
    up = tuple(complex(a) for a in up)
    down = tuple(complex(a) for a in down)
    declared = list(up + down)
    roots = list(npoly.polyroots(coeffs)) if len(coeffs) > 1 else []
    unmatched = list(range(len(declared)))
    for r in roots:
        hits = [
            i for i in unmatched
            if abs(declared[i] - r) <= ROOT_MATCH_TOL * (1.0 + abs(r))
        ]
        if not hits:
            raise UndeclaredBranchPoint(
                f"operand root {complex(r):.6g} is not declared as a branch point"
            )
        best = min(hits, key=lambda i: abs(declared[i] - r))
        unmatched.remove(best)
    if unmatched:
        raise ExprSyntaxError(
            f"declared branch point {declared[unmatched[0]]} is not a simple root "
            "of the radical operand",
            position,
        )
    return Radical(operand, up, down, int(sign), lead=complex(coeffs[-1]))


def parse(text):
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        With the 0-based position of the offending token.
    UndeclaredBranchPoint
        When a radical operand has a root missing from ``up``/``down``.
    """
    return _Parser(text).parse()


# =======
# Printer
# =======

def _fmt_real(x):
    return repr(float(x))


def _fmt_const(z):
    z = complex(z)
    if z.imag == 0:
        s = _fmt_real(z.real)
    elif z.real == 0:
        s = _fmt_real(z.imag) + "i"
    else:
        s = f"{_fmt_real(z.real)}+{_fmt_real(z.imag)}i".replace("+-", "-")
        return f"({s})"
    return f"({s})" if s.startswith("-") else s


def to_text(node):
    """Render ``node`` in the input grammar.

    For any tree ``e`` returned by :func:`parse`, ``parse(to_text(e)) == e``.
    """
    if isinstance(node, Const):
        return _fmt_const(node.value)
    if isinstance(node, Var):
        return "k"
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"{to_text_atom(node.base)}^{node.exponent}"
    if isinstance(node, Radical):
        parts = [to_text(node.operand)]
        if node.up:
            parts.append("up=" + ", ".join(_fmt_const(a) for a in node.up))
        if node.down:
            parts.append("down=" + ", ".join(_fmt_const(a) for a in node.down))
        parts.append("sign=" + ("+" if node.sign > 0 else "-"))
        return "sqrt(" + "; ".join(parts) + ")"
    raise TypeError(f"not an expression node: {node!r}")


def to_text_atom(node):
    s = to_text(node)
    if isinstance(node, (Var, Radical)) or (s.startswith("(") and not isinstance(node, Pow)):
        return s
    return f"({s})"


# ===========
# Polynomials
# ===========

def as_polynomial(node):
    """Ascending coefficient array of a radical-free polynomial expression.

    Raises :class:`NotPolynomial` for radicals, negative powers or division
    by a non-constant.
    """
    return _poly(node)


@functools.lru_cache(maxsize=4096)
def _poly_cached(node):
    return tuple(_poly_impl(node))


def _poly(node):
    return np.array(_poly_cached(node), dtype=np.complex128)


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=np.complex128))
    while len(c) > 1 and c[-1] == 0:
        c = c[:-1]
    return c


def _poly_impl(node):
    if isinstance(node, Const):
        return _trim([node.value])
    if isinstance(node, Var):
        return _trim([0.0, 1.0])
    if isinstance(node, Neg):
        return -_poly(node.operand)
    if isinstance(node, BinOp):
        a, b = _poly(node.left), _poly(node.right)
        if node.op == "+":
            return _trim(npoly.polyadd(a, b))
        if node.op == "-":
            return _trim(npoly.polysub(a, b))
        if node.op == "*":
            return _trim(npoly.polymul(a, b))
        if len(b) == 1 and b[0] != 0:
            return a / b[0]
        raise NotPolynomial("division by a non-constant")
    if isinstance(node, Pow):
        if node.exponent < 0:
            raise NotPolynomial("negative power")
        return _trim(npoly.polypow(_poly(node.base), node.exponent))
    raise NotPolynomial("radical")


def radicals(node):
    """All distinct radical nodes in ``node``, in first-seen order."""
    found = []

    def walk(n):
        if isinstance(n, Radical):
            if n not in found:
                found.append(n)
            walk(n.operand)
        elif isinstance(n, Neg):
            walk(n.operand)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Pow):
            walk(n.base)

    walk(node)
    return found


# ==========
# Evaluation
# ==========

def _arg_up(w):
    a = np.angle(w)
    return np.where(a > np.pi / 2, a - 2 * np.pi, a)


def _arg_down(w):
    a = np.angle(w)
    return np.where(a <= -np.pi / 2, a + 2 * np.pi, a)


def _arg_minus(w):
    a = np.angle(w)
    return np.where(a > 0, a - 2 * np.pi, a)


def _same_point(a, b):
    return abs(a - b) <= 1e-12 * (1.0 + abs(a))


def _radical_value(node, k, shore, flips):
    total = 0.0
    for a, is_up in [(a, True) for a in node.up] + [(a, False) for a in node.down]:
        w = k - a
        if np.any(np.abs(w) <= 1e-15 * (1.0 + abs(a))):
            raise EvalAtBranchPoint(f"evaluation at branch point {a}")
        if shore.side != "off" and _same_point(a, shore.point):
            arg = np.angle(w) if shore.side == "plus" else _arg_minus(w)
        else:
            arg = _arg_up(w) if is_up else _arg_down(w)
        total = total + 0.5 * (np.log(np.abs(w)) + 1j * arg)
    value = node.sign * np.sqrt(node.lead) * np.exp(total)
    if node in flips:
        value = -value
    return value


def _eval(node, k, shore, flips):
    if isinstance(node, Const):
        return node.value + 0 * k
    if isinstance(node, Var):
        return k
    if isinstance(node, BinOp):
        a = _eval(node.left, k, shore, flips)
        b = _eval(node.right, k, shore, flips)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if np.any(b == 0):
            raise DivisionByZero("denominator vanishes")
        return a / b
    if isinstance(node, Neg):
        return -_eval(node.operand, k, shore, flips)
    if isinstance(node, Pow):
        base = _eval(node.base, k, shore, flips)
        if node.exponent < 0 and np.any(base == 0):
            raise DivisionByZero("negative power of zero")
        return base ** node.exponent if node.exponent >= 0 else 1.0 / base ** (-node.exponent)
    if isinstance(node, Radical):
        return _radical_value(node, k, shore, flips)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node, k, shore=OFF, flips=frozenset()):
    """Value of ``node`` at ``k`` (scalar or array).

    Parameters
    ----------
    shore : ShoreSpec
        ``plus``/``minus`` continue the right/left shore value of the cut
        through ``shore.point`` into the half-strip above it; the point
        must satisfy ``Im(k - shore.point) >= 0``.
    flips : frozenset of Radical
        Radicals evaluated on their other sheet (sign reversed).
    """
    if shore.side != "off" and np.any(np.imag(np.asarray(k) - shore.point) < 0):
        raise ValueError("shore evaluation is only defined above the branch point")
    if isinstance(k, (int, float)):
        k = complex(k)
    out = _eval(node, k, shore, flips)
    if np.ndim(out) == 0:
        return complex(out)
    return out
