"""Vector fields: a small expression language, built-in systems and the
linear coordinate change ``f(x) = T^-1 fhat(T x)``.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('^' | '**') unary)?        # right associative
    atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1`` .. ``xn``. Functions: sin, cos, exp, ln, abs.
Components are separated by newlines or semicolons; ``#`` starts a comment.
"""
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .diffmath import lu_invert
from .errors import ArityError, NonFinite, ParseError, UnknownSystem, UnknownVariable

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "abs": np.abs,
}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    child: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    arg: object


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^();\n])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source):
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "op":
            if text in (";", "\n"):
                tokens.append(_Token("sep", text, line, col))
            else:
                tokens.append(_Token("op", "^" if text == "**" else text, line, col))
        elif kind in ("num", "name"):
            tokens.append(_Token(kind, text, line, col))
        if text == "\n":
            line += 1
            line_start = m.end()
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens, n):
        self.tokens = tokens
        self.pos = 0
        self.n = n

    @property
    def tok(self):
        return self.tokens[self.pos]

    def advance(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.kind != "op" or t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.advance()

    def components(self):
        comps = []
        while True:
            while self.tok.kind == "sep":
                self.advance()
            if self.tok.kind == "eof":
                return comps
            comps.append(self.expr())
            if self.tok.kind not in ("sep", "eof"):
                t = self.tok
                raise ParseError(f"unexpected token {t.text!r}", t.line, t.col)

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            m = re.fullmatch(r"x(\d+)", t.text)
            if m is None:
                raise ParseError(f"unknown name {t.text!r}", t.line, t.col)
            idx = int(m.group(1))
            if not 1 <= idx <= self.n:
                raise UnknownVariable(f"variable {t.text} outside x1..x{self.n}", t.line, t.col)
            return Var(idx)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.line, t.col)


def parse_expression(source, n):
    """Parse a single scalar expression over ``x1..xn``."""
    comps = _Parser(_tokenize(source), n).components()
    if len(comps) != 1:
        raise ArityError(f"expected one expression, found {len(comps)}")
    return comps[0]


def _is_integer_const(node):
    return isinstance(node, Const) and float(node.value).is_integer()


def evaluate(node, x):
    """Evaluate an expression tree at ``x`` of shape ``(..., n)``.

    Returns an array with the leading shape of ``x``.
    """
    if isinstance(node, Const):
        return np.full(x.shape[:-1], node.value)
    if isinstance(node, Var):
        return x[..., node.index - 1]
    if isinstance(node, Neg):
        return -evaluate(node.child, x)
    if isinstance(node, Call):
        return FUNCTIONS[node.name](evaluate(node.arg, x))
    left = evaluate(node.left, x)
    if node.op == "^" and _is_integer_const(node.right):
        return left ** int(node.right.value) if node.right.value >= 0 else 1.0 / left ** int(-node.right.value)
    right = evaluate(node.right, x)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        return left / right
    if np.any((left < 0) & (right != np.floor(right))):
        raise NonFinite("non-integer power of a negative base")
    return left ** right


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_source(node):
    """Render an expression tree as text that parses back to the same tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"-({to_source(node.child)})"
    if isinstance(node, Call):
        return f"{node.name}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


@dataclass(frozen=True, eq=False)
class VectorField:
    """Right-hand side ``f`` of ``x' = f(x)``.

    With ``transform = (T, T_inv)`` the stored components describe ``fhat``
    and the field is ``f(x) = T_inv @ fhat(T @ x)``.
    """

    n: int
    components: Tuple[object, ...]
    name: str = "custom"
    transform: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.components) != self.n:
            raise ArityError(f"{self.name}: {len(self.components)} components for n={self.n}")
        if self.transform is not None:
            t, t_inv = self.transform
            if t.shape != (self.n, self.n) or t_inv.shape != (self.n, self.n):
                raise ArityError(f"{self.name}: transform must be {self.n}x{self.n}")
            if np.max(np.abs(t @ t_inv - np.eye(self.n))) > 1e-10:
                raise ValueError(f"{self.name}: T @ T_inv deviates from the identity")
            t.setflags(write=False)
            t_inv.setflags(write=False)

    def __call__(self, x):
        return eval_field(self, x)

    def source(self):
        return "; ".join(to_source(c) for c in self.components)


def parse_vector_field(source, n, name="custom", transform=None):
    """Build a field from ``n`` expressions separated by newlines or ``;``.

    ``source`` may also be a list of expression strings. ``transform`` is an
    optional n x n matrix T; its inverse is computed here.
    """
    if not isinstance(source, str):
        source = "\n".join(source)
    comps = _Parser(_tokenize(source), n).components()
    if len(comps) != n:
        raise ArityError(f"expected {n} components, found {len(comps)}")
    pair = None
    if transform is not None:
        t = np.array(transform, dtype=np.float64)
        pair = (t, lu_invert(t))
    return VectorField(n, tuple(comps), name, pair)


def eval_field(vf, x):
    """``f(x)`` for a single state (shape ``(n,)``) or a batch ``(m, n)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != vf.n:
        raise ArityError(f"state has length {x.shape[-1]}, field has n={vf.n}")
    y = x if vf.transform is None else x @ vf.transform[0].T
    with np.errstate(all="ignore"):
        out = np.stack([evaluate(c, y) for c in vf.components], axis=-1)
        if vf.transform is not None:
            out = out @ vf.transform[1].T
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{vf.name}: non-finite field value")
    return out


EXAMPLE_2D = """
-x1 - 10*x2^2
-2*x2
"""

EXAMPLE_10D_HAT = """
-x1 + 0.5*x2 - 0.1*x9^2
-0.5*x1 - x2
-x3 + 0.5*x4 - 0.1*x1^2
-0.5*x3 - x4
-x5 + 0.5*x6 + 0.1*x7^2
-0.5*x5 - x6
-x7 + 0.5*x8
-0.5*x7 - x8
-x9 + 0.5*x10
-0.5*x9 - x10 + 0.1*x2^2
"""

EXAMPLE_10D_T = [
    "-1/5 -3/10 1/2 -4/5 4/5 2/5 7/10 7/10 -1 4/5",
    "1/5 1 9/10 4/5 -1/10 3/5 -3/10 1/2 4/5 -3/10",
    "-3/10 3/10 2/5 -2/5 0 -3/5 3/10 3/5 1 -1/2",
    "-7/10 -1/10 -3/5 -1/5 -3/5 2/5 1/10 -1/10 1/10 -3/5",
    "1/10 -3/5 -9/10 -7/10 -1/5 -1/10 1/10 1/5 0 -4/5",
    "3/5 9/10 -1/5 1 2/5 1/2 0 -1/10 -2/5 0",
    "-1 1 7/10 3/5 -4/5 -4/5 0 -1/5 -1/5 7/10",
    "-9/10 4/5 1/5 1 -4/5 2/5 -3/10 7/10 1/5 -4/5",
    "3/5 -1/10 -2/5 -1/2 -3/10 -1/10 -7/10 1 4/5 -3/10",
    "0 -1 -1/10 2/5 -3/10 -1/10 -1/5 7/10 -1/10 4/5",
]


def example_10d_matrix():
    return np.array([[float(Fraction(v)) for v in row.split()] for row in EXAMPLE_10D_T])


def builtin(name):
    """The two systems used in the numerical experiments."""
    if name == "example_2d":
        return parse_vector_field(EXAMPLE_2D, 2, name=name)
    if name == "example_10d":
        return parse_vector_field(EXAMPLE_10D_HAT, 10, name=name, transform=example_10d_matrix())
    raise UnknownSystem(f"unknown built-in system {name!r} (known: example_2d, example_10d)")
