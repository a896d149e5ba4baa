"""Coefficient expressions, symbolic derivatives, and the operator-hypothesis
constants.

The grammar (part of the config-file contract):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?          # right-assoc
    unary  := '-' unary | atom
    atom   := NUMBER | 'x' | '(' expr ')' | FUNC '(' expr ')'
    FUNC   := 'sin'|'cos'|'exp'|'sqrt'
    NUMBER := decimal literal with optional exponent

Whitespace is insignificant.  Coefficients depend on a single variable; the
initial-field parser reuses the same grammar with 'x','y','z' allowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EvalError, ExprSyntaxError

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    name: str  # 'x', 'y' or 'z'

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Bin:
    op: str  # '+', '-', '*', '/', '^'
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Call:
    func: str  # 'sin', 'cos', 'exp', 'sqrt'
    arg: "Expr"

    def __str__(self):
        return f"{self.func}({self.arg})"


Expr = Const | Var | Neg | Bin | Call

_FUNCS = ("sin", "cos", "exp", "sqrt")


# ---------------------------------------------------------------------------
# Parser (recursive descent; offsets are byte offsets into the input)


class _Parser:
    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.vars = variables
        self.pos = 0

    def error(self, message):
        raise ExprSyntaxError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str) -> bool:
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def parse(self) -> Expr:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected {self.text[self.pos]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            c = self.peek()
            if c == "+" or c == "-":
                self.pos += 1
                e = Bin(c, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            c = self.peek()
            if c == "*" or c == "/":
                self.pos += 1
                e = Bin(c, e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        e = self.unary()
        if self.peek() == "^":
            self.pos += 1
            return Bin("^", e, self.factor())  # right-associative
        return e

    def unary(self) -> Expr:
        if self.peek() == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        c = self.peek()
        if c == "":
            self.error("unexpected end of expression")
        if c == "(":
            self.pos += 1
            e = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return e
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha():
            return self.name()
        self.error(f"unexpected {c!r}")

    def number(self) -> Expr:
        start = self.pos
        t = self.text
        n = len(t)
        while self.pos < n and t[self.pos].isdigit():
            self.pos += 1
        if self.pos < n and t[self.pos] == ".":
            self.pos += 1
            while self.pos < n and t[self.pos].isdigit():
                self.pos += 1
        if self.pos < n and t[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < n and t[self.pos] in "+-":
                self.pos += 1
            if self.pos < n and t[self.pos].isdigit():
                while self.pos < n and t[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # 'e' was not an exponent
        lit = t[start:self.pos]
        try:
            return Const(float(lit))
        except ValueError:
            self.pos = start
            self.error(f"bad number literal {lit!r}")

    def name(self) -> Expr:
        start = self.pos
        t = self.text
        while self.pos < len(t) and t[self.pos].isalpha():
            self.pos += 1
        word = t[start:self.pos]
        if word in self.vars:
            return Var(word)
        if word in _FUNCS:
            if not self.take("("):
                self.error(f"{word} requires parenthesized argument")
            e = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return Call(word, e)
        self.pos = start
        self.error(f"unknown name {word!r}")


def parse_expr(text: str, variables: tuple[str, ...] = ("x",)) -> Expr:
    """Parse an expression string; raises ExprSyntaxError with byte offset."""
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# Evaluation (vectorized over numpy arrays)


def evaluate(e: Expr, **values) -> np.ndarray | float:
    """Evaluate with named variable arrays/scalars, e.g. evaluate(e, x=xs).

    Raises EvalError on division by zero, sqrt of a negative, or any
    non-finite intermediate (pole of '^' with negative base etc.).
    """
    out = _eval(e, values)
    if isinstance(out, np.ndarray):
        if not np.all(np.isfinite(out)):
            raise EvalError(f"non-finite value evaluating {e}")
    elif not math.isfinite(out):
        raise EvalError(f"non-finite value evaluating {e}")
    return out


def _eval(e: Expr, values):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return values[e.name]
        except KeyError:
            raise EvalError(f"variable {e.name!r} not supplied") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, values)
    if isinstance(e, Bin):
        a = _eval(e.left, values)
        b = _eval(e.right, values)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0.0):
                raise EvalError("division by zero")
            return a / b
        # '^'
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.power(a, b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) \
                else _scalar_pow(a, b)
        if np.any(~np.isfinite(np.asarray(r))):
            raise EvalError("power left the real domain")
        return r
    if isinstance(e, Call):
        a = _eval(e.arg, values)
        if e.func == "sin":
            return np.sin(a)
        if e.func == "cos":
            return np.cos(a)
        if e.func == "exp":
            return np.exp(a)
        # sqrt
        if np.any(np.asarray(a) < 0.0):
            raise EvalError("sqrt of negative value")
        return np.sqrt(a)
    raise TypeError(f"not an expression node: {e!r}")


def _scalar_pow(a, b):
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError):
        return math.nan


# ---------------------------------------------------------------------------
# Symbolic differentiation (w.r.t. a single variable)


def differentiate(e: Expr, var: str = "x") -> Expr:
    """Symbolic derivative; simplification limited to constant folding and
    0/1 elimination."""
    return _simplify(_diff(e, var))


def _diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, var))
    if isinstance(e, Bin):
        u, v = e.left, e.right
        du, dv = _diff(u, var), _diff(v, var)
        if e.op in "+-":
            return Bin(e.op, du, dv)
        if e.op == "*":
            return Bin("+", Bin("*", du, v), Bin("*", u, dv))
        if e.op == "/":
            num = Bin("-", Bin("*", du, v), Bin("*", u, dv))
            return Bin("/", num, Bin("^", v, Const(2.0)))
        # u^v: constant exponent gets the power rule; a variable exponent
        # would need u^v*(dv*log u + v*du/u), which is out of grammar (no
        # log), so it is rejected at differentiation time.
        if _is_constant(v):
            c = float(evaluate(v))
            return Bin("*", Bin("*", Const(c), Bin("^", u, Const(c - 1.0))), du)
        raise EvalError("cannot differentiate a variable exponent "
                        "(grammar has no log)")
    if isinstance(e, Call):
        da = _diff(e.arg, var)
        if e.func == "sin":
            outer = Call("cos", e.arg)
        elif e.func == "cos":
            outer = Neg(Call("sin", e.arg))
        elif e.func == "exp":
            outer = Call("exp", e.arg)
        else:  # sqrt
            outer = Bin("/", Const(0.5), Call("sqrt", e.arg))
        return Bin("*", outer, da)
    raise TypeError(f"not an expression node: {e!r}")


def _simplify(e: Expr) -> Expr:
    if isinstance(e, Neg):
        a = _simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        return Neg(a)
    if isinstance(e, Call):
        a = _simplify(e.arg)
        if isinstance(a, Const):
            try:
                return Const(float(evaluate(Call(e.func, a))))
            except EvalError:
                pass
        return Call(e.func, a)
    if not isinstance(e, Bin):
        return e
    a, b = _simplify(e.left), _simplify(e.right)
    ca, cb = isinstance(a, Const), isinstance(b, Const)
    if ca and cb:
        try:
            return Const(float(evaluate(Bin(e.op, a, b))))
        except EvalError:
            return Bin(e.op, a, b)
    if e.op == "+":
        if ca and a.value == 0.0:
            return b
        if cb and b.value == 0.0:
            return a
    elif e.op == "-":
        if cb and b.value == 0.0:
            return a
        if ca and a.value == 0.0:
            return Neg(b)
    elif e.op == "*":
        if (ca and a.value == 0.0) or (cb and b.value == 0.0):
            return Const(0.0)
        if ca and a.value == 1.0:
            return b
        if cb and b.value == 1.0:
            return a
    elif e.op == "/":
        if ca and a.value == 0.0:
            return Const(0.0)
        if cb and b.value == 1.0:
            return a
    elif e.op == "^":
        if cb and b.value == 1.0:
            return a
        if cb and b.value == 0.0:
            return Const(1.0)
    return Bin(e.op, a, b)


# ---------------------------------------------------------------------------
# Profiles and the hypothesis report


@dataclass(frozen=True)
class CoefficientProfile:
    """One axis coefficient a_l on [0, length] with its symbolic derivative."""

    axis: int  # 1, 2 or 3
    expr: Expr
    dexpr: Expr
    length: float
    text: str = ""

    def a(self, x) -> np.ndarray | float:
        return evaluate(self.expr, x=x)

    def da(self, x) -> np.ndarray | float:
        return evaluate(self.dexpr, x=x)

    @property
    def is_constant(self) -> bool:
        return _is_constant(self.expr)


def _is_constant(e: Expr) -> bool:
    if isinstance(e, Const):
        return True
    if isinstance(e, Var):
        return False
    if isinstance(e, Neg):
        return _is_constant(e.arg)
    if isinstance(e, Bin):
        return _is_constant(e.left) and _is_constant(e.right)
    return _is_constant(e.arg)


def make_profile(axis: int, text: str, length: float) -> CoefficientProfile:
    """Parse a coefficient expression and attach its symbolic derivative.

    The derivative is spot-checked against central finite differences at a
    few interior points (|diff| <= 1e-6*(1+|value|)) so a bad rule cannot
    slip into the hypothesis constants silently.
    """
    expr = parse_expr(text)
    dexpr = differentiate(expr)
    xs = np.linspace(0.12 * length, 0.93 * length, 17)
    fd_step = 1e-6 * max(1.0, length)
    sym = np.asarray(evaluate(dexpr, x=xs), dtype=float) + np.zeros_like(xs)
    fd = (np.asarray(evaluate(expr, x=xs + fd_step), dtype=float)
          - np.asarray(evaluate(expr, x=xs - fd_step), dtype=float)) / (2 * fd_step)
    if np.max(np.abs(sym - fd) / (1.0 + np.abs(sym))) > 1e-6:
        raise EvalError(f"symbolic derivative of {text!r} disagrees with "
                        "finite differences")
    return CoefficientProfile(axis, expr, dexpr, float(length), text)


def constant_profile(axis: int, value: float, length: float) -> CoefficientProfile:
    return CoefficientProfile(axis, Const(float(value)), Const(0.0),
                              float(length), repr(float(value)))


def poincare_constant(lengths) -> float:
    """max_l L_l / pi: the per-direction Dirichlet Poincare constant of a box,
    valid for every axis simultaneously."""
    return max(lengths) / math.pi


def _chebyshev_points(length: float, samples: int) -> np.ndarray:
    # Chebyshev-Lobatto points on [0, L]: includes both endpoints, since the
    # sup/inf run over the closed box.
    k = np.arange(samples)
    return 0.5 * length * (1.0 - np.cos(np.pi * k / (samples - 1)))


@dataclass(frozen=True)
class ConditionReport:
    """All constants of the imaginary-axis resolvent estimate, plus pass/fail.

    pass_ is exactly (all margins > 0) and (k_const > 0); those are the two
    hypotheses under which every purely imaginary s != 0 is a regular point
    of T and the resolvents obey norm <= theta/|s|.
    """

    c_omega: float
    c_a: float
    phi_sup: float
    margins: tuple
    k_const: float
    tau: float
    theta: float
    pass_: bool
    inf_a: tuple
    domain_note: str = ("box domain: per-direction Poincare inequality holds "
                        "by 1-D slicing; corners are harmless for it")

    def kappa_at(self, s1_squared: float) -> float:
        return min(s1_squared, min(self.margins))

    def as_flat_dict(self) -> dict:
        d = {
            "c_omega": self.c_omega,
            "c_a": self.c_a,
            "phi_sup": self.phi_sup,
            "k_const": self.k_const,
            "tau": self.tau,
            "theta": self.theta,
            "pass": self.pass_,
            "domain_note": self.domain_note,
            "check_margins_positive": bool(min(self.margins) > 0.0),
            "check_k_positive": bool(self.k_const > 0.0),
            "check_coefficients_positive": bool(min(self.inf_a) > 0.0),
        }
        for i, m in enumerate(self.margins):
            d[f"margin_{i + 1}"] = m
        for i, m in enumerate(self.inf_a):
            d[f"inf_a_{i + 1}"] = m
        d["kappa_at_1"] = self.kappa_at(1.0) if min(self.margins) > -math.inf else None
        return d


def check_conditions(profiles, lengths, samples: int = 1024) -> ConditionReport:
    """Evaluate every hypothesis constant by dense sampling.

    sup/inf over the closed box are estimated at `samples` Chebyshev-Lobatto
    points per axis (the coefficients are C^1 in one variable each, so dense
    1-D sampling is adequate; raise `samples` for paranoia).
    """
    if samples < 64:
        raise ValueError("samples must be >= 64")
    lengths = getattr(lengths, "lengths", lengths)  # BoxDomain or plain tuple
    c_omega = poincare_constant(lengths)
    sqrt_co = math.sqrt(c_omega)

    inf_a = []
    margins = []
    dsup_sq = []
    for p, length in zip(profiles, lengths):
        xs = _chebyshev_points(length, samples)
        a = np.asarray(p.a(xs), dtype=float) + np.zeros(samples)
        da = np.asarray(p.da(xs), dtype=float) + np.zeros(samples)
        inf_a.append(float(np.min(a)))
        # d/dx (a^2) = 2 a a'
        d_a2_sup = float(np.max(np.abs(2.0 * a * da)))
        inf_a2 = float(np.min(a * a))
        margins.append(inf_a2 - 0.5 * sqrt_co * d_a2_sup)
        dsup_sq.append(float(np.max(da * da)))

    phi_sup = math.sqrt(sum(dsup_sq))
    min_inf_a = min(inf_a)
    if min_inf_a > 0.0:
        c_a = 1.0 / min_inf_a
        k_const = 0.5 - 0.5 * (phi_sup ** 2) * (c_omega ** 2) * (c_a ** 2)
    else:
        c_a = math.inf
        k_const = -math.inf
    if k_const > 0.0:
        tau = 0.5 / (1.0 + 2.0 * (phi_sup ** 2) * (c_omega ** 2)
                     * (c_a ** 2) / k_const)
        # sqrt(1/tau), not 1/sqrt(tau): exact when 1/tau is representable
        theta = 2.0 * max(1.0, math.sqrt(1.0 / tau))
    else:
        tau = 0.0
        theta = math.inf
    ok = (min(margins) > 0.0) and (k_const > 0.0)
    return ConditionReport(
        c_omega=c_omega, c_a=c_a, phi_sup=phi_sup, margins=tuple(margins),
        k_const=k_const, tau=tau, theta=theta, pass_=ok, inf_a=tuple(inf_a),
    )
