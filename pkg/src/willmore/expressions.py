"""Analytic expressions of one variable, evaluated at complex arguments.

Curve data enters as text like "sin(u) + e^(0.1*u)"; parsing produces an
immutable tree that can be evaluated on complex numbers or numpy arrays,
differentiated symbolically, and Schwarz-conjugated (conjugate every
literal, so that eval(conj_expr(e), z) == conj(eval(e, conj(z)))).

Only elementary analytic pieces are supported: +, -, *, /, integer powers,
sin, cos, sinh, cosh, exp, sqrt. That is enough to express every data set
used here, and complex evaluation then IS the analytic extension of the
real-axis data, with no fitting step in between.
"""

from __future__ import annotations

import re
import warnings

import numpy as np

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "sqrt": np.sqrt,
}


class ParseError(ValueError):
    """Syntax or name error, carrying the byte offset into the source."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class SqrtBranchWarning(UserWarning):
    """sqrt was evaluated exactly on its branch cut (negative real axis)."""


class Expr:
    """Base class; subclasses are immutable value nodes."""

    def __call__(self, z):
        raise NotImplementedError

    def diff(self):
        raise NotImplementedError

    def conj_literals(self):
        raise NotImplementedError

    def is_const(self):
        return False

    def __repr__(self):
        return f"{type(self).__name__}({self})"


class Const(Expr):
    def __init__(self, value):
        self.value = complex(value)

    def __call__(self, z):
        z = np.asarray(z)
        if z.ndim == 0:
            return self.value
        return np.full(z.shape, self.value, dtype=complex)

    def diff(self):
        return Const(0.0)

    def conj_literals(self):
        return Const(self.value.conjugate())

    def is_const(self):
        return True

    def __str__(self):
        v = self.value
        if v.imag == 0.0:
            re = v.real
            s = repr(int(re)) if re == int(re) and abs(re) < 1e15 else repr(re)
            return s if re >= 0 else f"({s})"
        if v.real == 0.0:
            return f"({v.imag!r}*i)"
        return f"({v.real!r} + {v.imag!r}*i)"


class Var(Expr):
    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if z.ndim == 0:
            return complex(z)
        return z

    def diff(self):
        return Const(1.0)

    def conj_literals(self):
        return self

    def __str__(self):
        return "u"


class _Binary(Expr):
    op = "?"

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def conj_literals(self):
        return type(self)(self.a.conj_literals(), self.b.conj_literals())

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


class Add(_Binary):
    op = "+"

    def __call__(self, z):
        return self.a(z) + self.b(z)

    def diff(self):
        return eadd(self.a.diff(), self.b.diff())


class Sub(_Binary):
    op = "-"

    def __call__(self, z):
        return self.a(z) - self.b(z)

    def diff(self):
        return esub(self.a.diff(), self.b.diff())


class Mul(_Binary):
    op = "*"

    def __call__(self, z):
        return self.a(z) * self.b(z)

    def diff(self):
        return eadd(emul(self.a.diff(), self.b), emul(self.a, self.b.diff()))


class Div(_Binary):
    op = "/"

    def __call__(self, z):
        num = self.a(z)
        den = self.b(z)
        if np.ndim(den) == 0:
            if den == 0:
                raise ZeroDivisionError(f"division by zero in {self}")
            return num / den
        with np.errstate(divide="ignore", invalid="ignore"):
            return num / den

    def diff(self):
        # (a/b)' = a'/b - a*b'/b^2
        return esub(
            ediv(self.a.diff(), self.b),
            ediv(emul(self.a, self.b.diff()), emul(self.b, self.b)),
        )


class Neg(Expr):
    def __init__(self, a):
        self.a = a

    def __call__(self, z):
        return -self.a(z)

    def diff(self):
        return eneg(self.a.diff())

    def conj_literals(self):
        return Neg(self.a.conj_literals())

    def __str__(self):
        return f"(-{self.a})"


class Pow(Expr):
    """Integer power of a subtree."""

    def __init__(self, base, n):
        if n != int(n):
            raise ValueError(f"only integer powers are supported, got {n}")
        self.base = base
        self.n = int(n)

    def __call__(self, z):
        v = self.base(z)
        if self.n < 0 and np.ndim(v) == 0 and v == 0:
            raise ZeroDivisionError(f"zero base with negative power in {self}")
        with np.errstate(divide="ignore", invalid="ignore"):
            return v ** self.n

    def diff(self):
        if self.n == 0:
            return Const(0.0)
        return emul(
            emul(Const(self.n), Pow(self.base, self.n - 1)), self.base.diff()
        )

    def conj_literals(self):
        return Pow(self.base.conj_literals(), self.n)

    def __str__(self):
        if self.n >= 0:
            return f"{_paren(self.base)}^{self.n}"
        return f"{_paren(self.base)}^({self.n})"


class Fun(Expr):
    def __init__(self, name, arg):
        if name not in _FUNCS:
            raise ValueError(f"unknown function {name!r}")
        self.name = name
        self.arg = arg

    def __call__(self, z):
        v = self.arg(z)
        if self.name == "sqrt":
            v = np.asarray(v, dtype=complex)
            on_cut = (v.real < 0) & (v.imag == 0)
            if np.any(on_cut):
                warnings.warn(
                    "sqrt evaluated on its branch cut (negative real axis)",
                    SqrtBranchWarning,
                    stacklevel=2,
                )
            out = np.sqrt(v)
            return complex(out) if out.ndim == 0 else out
        out = _FUNCS[self.name](np.asarray(v, dtype=complex))
        return complex(out) if out.ndim == 0 else out

    def diff(self):
        da = self.arg.diff()
        if self.name == "sin":
            outer = Fun("cos", self.arg)
        elif self.name == "cos":
            outer = eneg(Fun("sin", self.arg))
        elif self.name == "sinh":
            outer = Fun("cosh", self.arg)
        elif self.name == "cosh":
            outer = Fun("sinh", self.arg)
        elif self.name == "exp":
            outer = self
        else:  # sqrt' = 1/(2 sqrt)
            outer = ediv(Const(0.5), self)
        return emul(outer, da)

    def conj_literals(self):
        return Fun(self.name, self.arg.conj_literals())

    def __str__(self):
        return f"{self.name}({self.arg})"


def _paren(e):
    s = str(e)
    if isinstance(e, (Const, Var, Fun)) or s.startswith("("):
        return s
    return f"({s})"


# ---------------------------------------------------------------------------
# smart constructors: light constant folding only, used when building derived
# expressions (sums of data fields, symbolic derivatives) so trees stay small

def _c(x):
    return x if isinstance(x, Expr) else Const(x)


def eadd(a, b):
    a, b = _c(a), _c(b)
    if a.is_const() and b.is_const():
        return Const(a.value + b.value)
    if a.is_const() and a.value == 0:
        return b
    if b.is_const() and b.value == 0:
        return a
    return Add(a, b)


def esub(a, b):
    a, b = _c(a), _c(b)
    if a.is_const() and b.is_const():
        return Const(a.value - b.value)
    if b.is_const() and b.value == 0:
        return a
    if a.is_const() and a.value == 0:
        return eneg(b)
    return Sub(a, b)


def emul(a, b):
    a, b = _c(a), _c(b)
    if a.is_const() and b.is_const():
        return Const(a.value * b.value)
    if a.is_const():
        if a.value == 0:
            return Const(0.0)
        if a.value == 1:
            return b
    if b.is_const():
        if b.value == 0:
            return Const(0.0)
        if b.value == 1:
            return a
    return Mul(a, b)


def ediv(a, b):
    a, b = _c(a), _c(b)
    if b.is_const():
        if b.value == 0:
            raise ZeroDivisionError("constant zero denominator")
        if b.value == 1:
            return a
        if a.is_const():
            return Const(a.value / b.value)
    if a.is_const() and a.value == 0:
        return Const(0.0)
    return Div(a, b)


def eneg(a):
    a = _c(a)
    if a.is_const():
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def conj_expr(e):
    """Schwarz conjugate: eval(conj_expr(e), z) == conj(eval(e, conj(z)))."""
    return e.conj_literals()


def ensure_expr(x):
    """Coerce text / numbers / Expr into an Expr."""
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(x)


def is_real_on_axis(e, samples=None, tol=1e-12):
    """Numerical check that e maps reals to reals (real-coefficient data)."""
    if samples is None:
        samples = np.linspace(-2.3, 2.3, 17)
    vals = np.atleast_1d(np.asarray(e(np.asarray(samples, dtype=complex))))
    scale = max(1.0, float(np.max(np.abs(vals))))
    return float(np.max(np.abs(vals.imag))) < tol * scale


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == m.start():
            if text[pos:].strip() == "":
                break
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.take()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}, found {val!r}", off)

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = Add(e, rhs) if val == "+" else Sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.factor()
                e = Mul(e, rhs) if val == "*" else Div(e, rhs)
            else:
                return e

    def factor(self):
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.factor())
        if kind == "op" and val == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            if isinstance(base, _EulerBase):
                # e^x is the exponential function, any exponent allowed
                return Fun("exp", self.exponent_operand())
            n, off = self.integer_exponent()
            return Pow(base, n)
        if isinstance(base, _EulerBase):
            return Const(np.e)
        return base

    def exponent_operand(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "(":
            self.take()
            e = self.expr()
            self.expect_op(")")
            return e
        return self.factor()

    def integer_exponent(self):
        kind, val, off = self.peek()
        neg = False
        parens = False
        if kind == "op" and val == "(":
            self.take()
            parens = True
            kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.take()
            neg = True
            kind, val, off = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ParseError("exponent must be an integer literal", off)
        self.take()
        if parens:
            self.expect_op(")")
        n = int(val)
        return (-n if neg else n), off

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "ident":
            if val in ("u", "z"):
                return Var()
            if val == "i":
                return Const(1j)
            if val == "e":
                return _EulerBase()
            if val in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Fun(val, arg)
            raise ParseError(f"unknown identifier {val!r}", off)
        raise ParseError(f"unexpected token {val!r}", off)


class _EulerBase(Const):
    """Marker for a bare 'e' token, resolved by the power rule."""

    def __init__(self):
        super().__init__(np.e)


def parse(text):
    """Parse expression text into an AnalyticExpr tree.

    Variables 'u' and 'z' both denote the single free variable; 'i' is the
    imaginary unit; 'e^x' means exp(x); '^' otherwise takes integer
    exponents only. Raises ParseError with a byte offset on bad input.
    """
    return _Parser(text).parse()


def differentiate(e):
    """Symbolic derivative of an expression tree."""
    return ensure_expr(e).diff()


def evaluate(e, z):
    """Evaluate expression (tree or text) at complex z (scalar or array)."""
    return ensure_expr(e)(z)
