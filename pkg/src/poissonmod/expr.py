"""Symbolic scalar expressions over named coordinates.

Expressions are immutable, hash-consed trees: two structurally identical
expressions are the same Python object, so ``a is b`` is structural equality.
Only light canonicalization happens at construction time (constant folding,
collection of like terms and like powers); semantic equality is decided by
:func:`is_zero`, which evaluates at pseudo-random points.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Chart",
    "ParseError",
    "DomainError",
    "SamplingError",
    "const",
    "var",
    "pi",
    "exp",
    "log",
    "sin",
    "cos",
    "sqrt",
    "as_expr",
    "parse",
    "differentiate",
    "evaluate",
    "evaluate_many",
    "is_zero",
    "zero_check",
    "ZeroCheck",
    "sample_points",
    "ZERO",
    "ONE",
]

Number = int | Fraction


class ParseError(ValueError):
    """Malformed expression text; ``position`` is the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class DomainError(ArithmeticError):
    """Evaluation left the domain of a subexpression (log, fractional power, 1/0)."""

    def __init__(self, message: str, subexpr: "Expr | None" = None):
        super().__init__(message if subexpr is None else f"{message}: {subexpr}")
        self.subexpr = subexpr


class SamplingError(RuntimeError):
    """No valid sample point could be found inside the domain guard."""


# ---------------------------------------------------------------------------
# node classes

_INTERN: dict[tuple, "Expr"] = {}

_RANK_CONST, _RANK_PI, _RANK_VAR, _RANK_POW, _RANK_MUL, _RANK_ADD, _RANK_FUNC = range(7)
_FUNC_CODES = {"exp": 1, "log": 2, "sin": 3, "cos": 4}


class Expr:
    __slots__ = ("_h", "_sk", "_vars", "_dcache", "_fn_cache", "__weakref__")

    rank: int = -1

    def _finish(self, h: int, sk: tuple, variables: frozenset[str]) -> None:
        self._h = h
        self._sk = sk
        self._vars = variables
        self._dcache = {}
        self._fn_cache = None

    # structural identity: interning makes object identity equal to structure
    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)

    @property
    def free_vars(self) -> frozenset[str]:
        return self._vars

    def children(self) -> tuple["Expr", ...]:
        return ()

    def is_const(self) -> bool:
        return False

    def is_zero_struct(self) -> bool:
        return False

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        if isinstance(exponent, Const):
            exponent = exponent.value
        if not isinstance(exponent, (int, Fraction)):
            raise TypeError("only rational exponents are supported")
        return power(self, Fraction(exponent))

    def diff(self, name: str) -> "Expr":
        return differentiate(self, name)

    def subs(self, mapping: Mapping[str, "Expr | Number"]) -> "Expr":
        return substitute(self, mapping)

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        return f"Expr({to_text(self)!r})"


class Const(Expr):
    __slots__ = ("value",)
    rank = _RANK_CONST

    def __init__(self, value: Fraction):
        self.value = value
        self._finish(hash((0, value.numerator, value.denominator)), (_RANK_CONST, value, 0), frozenset())

    def is_const(self):
        return True

    def is_zero_struct(self):
        return self.value == 0


class Pi(Expr):
    __slots__ = ()
    rank = _RANK_PI

    def __init__(self):
        self._finish(hash((1, 314159)), (_RANK_PI, "", 0), frozenset())


class Var(Expr):
    __slots__ = ("name",)
    rank = _RANK_VAR

    def __init__(self, name: str):
        self.name = name
        crc = zlib.crc32(name.encode())
        self._finish(hash((2, crc)), (_RANK_VAR, name, crc), frozenset([name]))


class Pow(Expr):
    __slots__ = ("base", "exponent")
    rank = _RANK_POW

    def __init__(self, base: Expr, exponent: Fraction):
        self.base = base
        self.exponent = exponent
        h = hash((3, base._h, exponent.numerator, exponent.denominator))
        self._finish(h, (_RANK_POW, "", h), base._vars)

    def children(self):
        return (self.base,)


class Mul(Expr):
    __slots__ = ("factors",)
    rank = _RANK_MUL

    def __init__(self, factors: tuple[Expr, ...]):
        self.factors = factors
        h = hash((4,) + tuple(f._h for f in factors))
        self._finish(h, (_RANK_MUL, "", h), frozenset().union(*(f._vars for f in factors)))

    def children(self):
        return self.factors


class Add(Expr):
    __slots__ = ("terms",)
    rank = _RANK_ADD

    def __init__(self, terms: tuple[Expr, ...]):
        self.terms = terms
        h = hash((5,) + tuple(t._h for t in terms))
        self._finish(h, (_RANK_ADD, "", h), frozenset().union(*(t._vars for t in terms)))

    def children(self):
        return self.terms


class Func(Expr):
    __slots__ = ("fname", "arg")
    rank = _RANK_FUNC

    def __init__(self, fname: str, arg: Expr):
        self.fname = fname
        self.arg = arg
        h = hash((6, _FUNC_CODES[fname], arg._h))
        self._finish(h, (_RANK_FUNC, fname, h), arg._vars)

    def children(self):
        return (self.arg,)


def _intern(key: tuple, factory: Callable[[], Expr]) -> Expr:
    node = _INTERN.get(key)
    if node is None:
        node = factory()
        _INTERN[key] = node
    return node


def const(value: Number | str | float) -> Expr:
    if isinstance(value, float):
        value = Fraction(value).limit_denominator(10**12)
    q = Fraction(value)
    return _intern(("c", q), lambda: Const(q))


def var(name: str) -> Expr:
    return _intern(("v", name), lambda: Var(name))


ZERO = const(0)
ONE = const(1)
MINUS_ONE = const(-1)
pi = _intern(("pi",), Pi)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction, float)):
        return const(value)
    if isinstance(value, str):
        raise TypeError("use parse() to turn text into an expression")
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def _sort(nodes: Iterable[Expr]) -> tuple[Expr, ...]:
    return tuple(sorted(nodes, key=lambda n: n._sk))


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    """Write ``e`` as ``coeff * core`` with a rational coefficient."""
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        core = rest[0] if len(rest) == 1 else _intern(("*",) + rest, lambda: Mul(rest))
        return e.factors[0].value, core
    return Fraction(1), e


def _scaled(coeff: Fraction, core: Expr) -> Expr:
    if coeff == 0:
        return ZERO
    if core is ONE:
        return const(coeff)
    if coeff == 1:
        return core
    factors = (const(coeff),) + (core.factors if isinstance(core, Mul) else (core,))
    return _intern(("*",) + factors, lambda: Mul(factors))


def add(*args: Expr) -> Expr:
    acc: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    stack = list(args)
    stack.reverse()
    while stack:
        a = stack.pop()
        if isinstance(a, Add):
            stack.extend(reversed(a.terms))
            continue
        c, core = _split_coeff(a)
        if c == 0:
            continue
        if core in acc:
            acc[core] += c
        else:
            acc[core] = c
            order.append(core)
    terms = [_scaled(acc[core], core) for core in order if acc[core] != 0]
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    terms_t = _sort(terms)
    return _intern(("+",) + terms_t, lambda: Add(terms_t))


def neg(e: Expr) -> Expr:
    c, core = _split_coeff(e)
    return _scaled(-c, core)


def _base_exp(e: Expr) -> tuple[Expr, Fraction]:
    if isinstance(e, Pow):
        return e.base, e.exponent
    return e, Fraction(1)


def mul(*args: Expr) -> Expr:
    coeff = Fraction(1)
    acc: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    stack = list(args)
    stack.reverse()
    while stack:
        a = stack.pop()
        if isinstance(a, Const):
            coeff *= a.value
            if coeff == 0:
                return ZERO
            continue
        if isinstance(a, Mul):
            stack.extend(reversed(a.factors))
            continue
        b, p = _base_exp(a)
        if b in acc:
            acc[b] += p
        else:
            acc[b] = p
            order.append(b)
    factors: list[Expr] = []
    for b in order:
        p = acc[b]
        if p == 0:
            continue
        f = power(b, p)
        if isinstance(f, Const):
            coeff *= f.value
        elif isinstance(f, Mul):
            for g in f.factors:
                if isinstance(g, Const):
                    coeff *= g.value
                else:
                    factors.append(g)
        else:
            factors.append(f)
    if coeff == 0:
        return ZERO
    if not factors:
        return const(coeff)
    ft = _sort(factors)
    if coeff != 1:
        ft = (const(coeff),) + ft
    if len(ft) == 1:
        return ft[0]
    return _intern(("*",) + ft, lambda: Mul(ft))


def _rational_root(q: Fraction, p: Fraction) -> Fraction | None:
    """Exact value of q**p for rational q, p when it is rational, else None."""
    if p.denominator == 1:
        if q == 0 and p < 0:
            return None
        return q ** int(p)
    if q < 0:
        return None
    k = p.denominator

    def iroot(n: int) -> int | None:
        r = round(n ** (1.0 / k)) if n > 0 else 0
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand**k == n:
                return cand
        return None

    rn, rd = iroot(q.numerator), iroot(q.denominator)
    if rn is None or rd is None:
        return None
    base = Fraction(rn, rd)
    if base == 0 and p < 0:
        return None
    return base ** p.numerator


def power(base: Expr, p: Fraction | int) -> Expr:
    p = Fraction(p)
    if p == 0:
        return ONE
    if p == 1:
        return base
    if isinstance(base, Const):
        exact = _rational_root(base.value, p)
        if exact is not None:
            return const(exact)
    if isinstance(base, Pow) and p.denominator == 1:
        return power(base.base, base.exponent * p)
    if isinstance(base, Mul) and p.denominator == 1:
        return mul(*(power(f, p) for f in base.factors))
    return _intern(("^", base, p), lambda: Pow(base, p))


def _func(fname: str, arg: Expr) -> Expr:
    if isinstance(arg, Const) and arg.value == 0:
        if fname in ("sin",):
            return ZERO
        if fname in ("exp", "cos"):
            return ONE
    if fname == "log" and arg is ONE:
        return ZERO
    if fname == "log" and isinstance(arg, Func) and arg.fname == "exp":
        return arg.arg
    return _intern(("f", fname, arg), lambda: Func(fname, arg))


def exp(e) -> Expr:
    return _func("exp", as_expr(e))


def log(e) -> Expr:
    return _func("log", as_expr(e))


def sin(e) -> Expr:
    return _func("sin", as_expr(e))


def cos(e) -> Expr:
    return _func("cos", as_expr(e))


def sqrt(e) -> Expr:
    return power(as_expr(e), Fraction(1, 2))


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Chart:
    """Ordered coordinate names plus an optional positivity guard."""

    coords: tuple[str, ...]
    guard: Expr | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        if not self.coords:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"duplicate coordinate names in {self.coords}")
        for name in self.coords:
            if name == "pi" or name in _FUNC_NAMES:
                raise ValueError(f"reserved name used as coordinate: {name}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name: str) -> int:
        return self.coords.index(name)

    def variables(self) -> tuple[Expr, ...]:
        return tuple(var(c) for c in self.coords)

    def parse(self, text: str, extra_vars: Sequence[str] = ()) -> Expr:
        return parse(text, self, extra_vars)


# ---------------------------------------------------------------------------
# parsing

_FUNC_NAMES = ("exp", "log", "sqrt", "sin", "cos")


class _Parser:
    def __init__(self, text: str, names: set[str] | None):
        self.text = text
        self.names = names
        self.pos = 0
        self._skip()

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, ch: str) -> bool:
        if self.peek() == ch:
            self.pos += 1
            self._skip()
            return True
        return False

    def expect(self, ch: str):
        if not self.eat(ch):
            found = self.peek() or "end of input"
            raise ParseError(f"expected {ch!r}, found {found!r}", self.pos)

    def parse(self) -> Expr:
        e = self.expr()
        if self.pos != len(self.text):
            raise ParseError(f"unexpected character {self.peek()!r}", self.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            if self.eat("+"):
                e = e + self.term()
            elif self.eat("-"):
                e = e - self.term()
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            if self.eat("*"):
                e = e * self.factor()
            elif self.eat("/"):
                e = e / self.factor()
            else:
                return e

    def factor(self) -> Expr:
        negate = self.eat("-")
        e = self.atom()
        if self.eat("^"):
            e = power(e, self.exponent())
        return -e if negate else e

    def integer(self) -> int:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if start == self.pos:
            raise ParseError("expected an integer", start)
        value = int(self.text[start:self.pos])
        self._skip()
        return value

    def rational(self) -> Fraction:
        sign = -1 if self.eat("-") else 1
        num = self.integer()
        den = 1
        if self.eat("/"):
            at = self.pos
            den = self.integer()
            if den == 0:
                raise ParseError("zero denominator in exponent", at)
        return sign * Fraction(num, den)

    def exponent(self) -> Fraction:
        if self.eat("("):
            q = self.rational()
            self.expect(")")
            return q
        # Without parentheses only an integer is taken, so x^2/3 means (x^2)/3.
        if self.peek() == "-":
            self.eat("-")
            return Fraction(-self.integer())
        if self.peek().isdigit():
            return Fraction(self.integer())
        raise ParseError("exponent must be a rational constant", self.pos)

    def number(self) -> Expr:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if self.peek() == ".":
            self.pos += 1
            while self.peek().isdigit():
                self.pos += 1
        if self.peek() in ("e", "E") and self.pos + 1 < len(self.text) and (
            self.text[self.pos + 1].isdigit() or self.text[self.pos + 1] in "+-"
        ):
            self.pos += 2
            while self.peek().isdigit():
                self.pos += 1
        lexeme = self.text[start:self.pos]
        self._skip()
        try:
            return const(Fraction(lexeme))
        except ValueError:
            raise ParseError(f"malformed number {lexeme!r}", start) from None

    def atom(self) -> Expr:
        ch = self.peek()
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch == "(":
            self.eat("(")
            e = self.expr()
            self.expect(")")
            return e
        if ch.isalpha() or ch == "_":
            start = self.pos
            while self.peek().isalnum() or self.peek() == "_":
                self.pos += 1
            name = self.text[start:self.pos]
            self._skip()
            if name in _FUNC_NAMES:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return sqrt(arg) if name == "sqrt" else _func(name, arg)
            if name == "pi":
                return pi
            if self.names is not None and name not in self.names:
                raise ParseError(f"unknown identifier {name!r}", start)
            return var(name)
        if not ch:
            raise ParseError("unexpected end of input", self.pos)
        raise ParseError(f"unexpected character {ch!r}", self.pos)


def parse(text: str, chart: Chart | None = None, extra_vars: Sequence[str] = ()) -> Expr:
    """Parse ``text``; identifiers must be chart coordinates or ``extra_vars``.

    With ``chart=None`` and no ``extra_vars`` any identifier is accepted.
    """
    names: set[str] | None = None
    if chart is not None or extra_vars:
        names = set(extra_vars)
        if chart is not None:
            names.update(chart.coords)
    return _Parser(text, names).parse()


# ---------------------------------------------------------------------------
# printing


def _fmt_const(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _fmt_exponent(p: Fraction) -> str:
    if p.denominator == 1 and p > 0:
        return str(p.numerator)
    return f"({_fmt_const(p)})"


def to_text(e: Expr) -> str:
    return _text(e, 0)


# precedence: 0 sum, 1 product, 2 power base
def _text(e: Expr, ctx: int) -> str:
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        if (e.value < 0 or e.value.denominator != 1) and ctx >= 1:
            return f"({s})"
        return s
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.fname}({_text(e.arg, 0)})"
    if isinstance(e, Pow):
        if e.exponent == Fraction(1, 2):
            return f"sqrt({_text(e.base, 0)})"
        return f"{_text(e.base, 2)}^{_fmt_exponent(e.exponent)}"
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.terms):
            c, core = _split_coeff(t)
            if i > 0 and c < 0:
                parts.append(" - " + _text(_scaled(-c, core), 1))
            elif i > 0:
                parts.append(" + " + _text(t, 1))
            else:
                parts.append(_text(t, 1) if c >= 0 else "-" + _text(_scaled(-c, core), 1))
        s = "".join(parts)
        return f"({s})" if ctx >= 1 else s
    if isinstance(e, Mul):
        c, core = _split_coeff(e)
        factors = core.factors if isinstance(core, Mul) else (core,)
        num = [f for f in factors if not (isinstance(f, Pow) and f.exponent < 0)]
        den = [power(f.base, -f.exponent) for f in factors if isinstance(f, Pow) and f.exponent < 0]
        cnum, cden = abs(c.numerator), c.denominator
        num_txt = [_text(f, 1 if len(num) == 1 and not den and cnum == 1 else 2 if isinstance(f, Pow) else 1) for f in num]
        if cnum != 1 or not num_txt:
            num_txt.insert(0, str(cnum))
        s = "*".join(num_txt)
        den_txt = [_text(f, 1) for f in den]
        if cden != 1:
            den_txt.insert(0, str(cden))
        if den_txt:
            d = "*".join(den_txt)
            s = f"{s}/{d}" if len(den_txt) == 1 else f"{s}/({d})"
        if c < 0:
            s = "-" + s
            return f"({s})" if ctx >= 1 else s
        return f"({s})" if ctx >= 2 else s
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# differentiation and substitution


def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``name``."""
    if name not in e._vars:
        return ZERO
    cached = e._dcache.get(name)
    if cached is not None:
        return cached
    if isinstance(e, Var):
        d = ONE
    elif isinstance(e, Add):
        d = add(*(differentiate(t, name) for t in e.terms))
    elif isinstance(e, Mul):
        parts = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = differentiate(f, name)
            if df is ZERO:
                continue
            parts.append(mul(*fs[:i], df, *fs[i + 1:]))
        d = add(*parts)
    elif isinstance(e, Pow):
        d = mul(const(e.exponent), power(e.base, e.exponent - 1), differentiate(e.base, name))
    elif isinstance(e, Func):
        du = differentiate(e.arg, name)
        if e.fname == "exp":
            d = mul(e, du)
        elif e.fname == "log":
            d = mul(du, power(e.arg, -1))
        elif e.fname == "sin":
            d = mul(cos(e.arg), du)
        else:
            d = neg(mul(sin(e.arg), du))
    else:
        d = ZERO
    e._dcache[name] = d
    return d


def substitute(e: Expr, mapping: Mapping[str, Expr | Number]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    m = {k: as_expr(v) for k, v in mapping.items() if k in e._vars}
    if not m:
        return e
    memo: dict[Expr, Expr] = {}

    def go(n: Expr) -> Expr:
        if not (n._vars & m.keys()):
            return n
        r = memo.get(n)
        if r is not None:
            return r
        if isinstance(n, Var):
            r = m[n.name]
        elif isinstance(n, Add):
            r = add(*(go(t) for t in n.terms))
        elif isinstance(n, Mul):
            r = mul(*(go(f) for f in n.factors))
        elif isinstance(n, Pow):
            r = power(go(n.base), n.exponent)
        elif isinstance(n, Func):
            r = _func(n.fname, go(n.arg))
        else:
            r = n
        memo[n] = r
        return r

    return go(e)


# ---------------------------------------------------------------------------
# numerical evaluation (compiled to straight-line numpy code)


def _topo(roots: Sequence[Expr]) -> list[Expr]:
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for c in reversed(node.children()):
                if id(c) not in seen:
                    stack.append((c, False))
    return order


def _float_str(q: Fraction) -> str:
    return repr(float(q))


def _maxabs(*xs):
    out = np.abs(xs[0])
    for x in xs[1:]:
        out = np.maximum(out, np.abs(x))
    return out


def compile_exprs(roots: Sequence[Expr], varnames: Sequence[str], with_scale: bool = False) -> Callable:
    """Compile expressions to ``f(*values) -> tuple`` over ``varnames``.

    Arguments may be floats or numpy arrays (broadcast). With ``with_scale``
    the function also returns, per root, the elementwise max of |subexpression|.
    """
    index = {n: i for i, n in enumerate(varnames)}
    order = _topo(roots)
    names: dict[int, str] = {}
    lines = []
    tmps = []
    for k, node in enumerate(order):
        if isinstance(node, Const):
            names[id(node)] = f"({_float_str(node.value)})"
            continue
        if isinstance(node, Pi):
            names[id(node)] = "_pi"
            continue
        if isinstance(node, Var):
            if node.name not in index:
                raise KeyError(f"variable {node.name!r} not assigned")
            names[id(node)] = f"a{index[node.name]}"
            continue
        t = f"t{k}"
        if isinstance(node, Add):
            rhs = " + ".join(names[id(c)] for c in node.terms)
        elif isinstance(node, Mul):
            rhs = " * ".join(names[id(c)] for c in node.factors)
        elif isinstance(node, Pow):
            b = names[id(node.base)]
            p = node.exponent
            if p.denominator == 1:
                rhs = f"{b} ** {p.numerator}" if p > 0 else f"1.0 / ({b} ** {-p.numerator})"
            elif p == Fraction(1, 2):
                rhs = f"_sqrt({b})"
            elif p == Fraction(-1, 2):
                rhs = f"1.0 / _sqrt({b})"
            else:
                rhs = f"_power({b}, {_float_str(p)})"
        elif isinstance(node, Func):
            rhs = f"_{node.fname}({names[id(node.arg)]})"
        else:  # pragma: no cover
            raise TypeError(type(node))
        lines.append(f"    {t} = {rhs}")
        names[id(node)] = t
        tmps.append(t)
    args = ", ".join(f"a{i}" for i in range(len(varnames)))
    outs = [names[id(r)] for r in roots]
    body = "\n".join(lines)
    src = f"def _f({args}):\n{body}\n"
    if with_scale:
        # per-root scale: max |node| over the subexpressions of that root
        below: dict[int, set[str]] = {}
        for node in order:
            acc = {names[id(node)]}
            for c in node.children():
                acc |= below[id(c)]
            below[id(node)] = acc
        scales = []
        for j, r in enumerate(roots):
            terms = sorted(below[id(r)])
            src += f"    _s{j} = _maxabs({', '.join(terms)})\n"
            scales.append(f"_s{j}")
        src += f"    return ({', '.join(outs)},), ({', '.join(scales)},)\n"
    else:
        src += f"    return ({', '.join(outs)},)\n"
    env = {
        "_sqrt": np.sqrt,
        "_power": np.power,
        "_exp": np.exp,
        "_log": np.log,
        "_sin": np.sin,
        "_cos": np.cos,
        "_abs": np.abs,
        "_maxabs": _maxabs,
        "_pi": math.pi,
    }
    exec(compile(src, "<poissonmod-expr>", "exec"), env)
    return env["_f"]


def _checked_eval(e: Expr, point: Mapping[str, float]) -> float:
    """Slow recursive evaluation that names the subexpression at fault."""
    memo: dict[Expr, float] = {}

    def go(n: Expr) -> float:
        if n in memo:
            return memo[n]
        if isinstance(n, Const):
            v = float(n.value)
        elif isinstance(n, Pi):
            v = math.pi
        elif isinstance(n, Var):
            v = float(point[n.name])
        elif isinstance(n, Add):
            v = math.fsum(go(t) for t in n.terms)
        elif isinstance(n, Mul):
            v = 1.0
            for f in n.factors:
                v *= go(f)
        elif isinstance(n, Pow):
            b = go(n.base)
            p = n.exponent
            if b == 0 and p < 0:
                raise DomainError("division by zero", n)
            if b < 0 and p.denominator != 1:
                raise DomainError("fractional power of a negative number", n)
            v = b ** int(p) if p.denominator == 1 else b ** float(p)
        elif isinstance(n, Func):
            a = go(n.arg)
            if n.fname == "log":
                if a <= 0:
                    raise DomainError("logarithm of a non-positive number", n)
                v = math.log(a)
            elif n.fname == "exp":
                try:
                    v = math.exp(a)
                except OverflowError:
                    raise DomainError("overflow in exp", n) from None
            elif n.fname == "sin":
                v = math.sin(a)
            else:
                v = math.cos(a)
        else:  # pragma: no cover
            raise TypeError(type(n))
        if not math.isfinite(v):
            raise DomainError("non-finite value", n)
        memo[n] = v
        return v

    return go(e)


def _fn(e: Expr) -> tuple[tuple[str, ...], Callable]:
    if e._fn_cache is None:
        names = tuple(sorted(e._vars))
        e._fn_cache = (names, compile_exprs([e], names))
    return e._fn_cache


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate at a point; raises :class:`DomainError` outside the domain."""
    names, f = _fn(e)
    missing = [n for n in names if n not in point]
    if missing:
        raise KeyError(f"unassigned variables: {missing}")
    with np.errstate(all="ignore"):
        (v,) = f(*(np.float64(point[n]) for n in names))
    v = float(v)
    if not math.isfinite(v):
        _checked_eval(e, point)
        raise DomainError("non-finite value", e)
    return v


def evaluate_many(exprs: Sequence[Expr], point: Mapping[str, np.ndarray | float]) -> list[np.ndarray]:
    """Vectorized evaluation of several expressions; no domain checking."""
    if not exprs:
        return []
    names = sorted(frozenset().union(*(e._vars for e in exprs)))
    f = compile_exprs(list(exprs), names)
    with np.errstate(all="ignore"):
        vals = f(*(np.asarray(point[n], dtype=float) for n in names))
    return [np.asarray(v, dtype=float) for v in vals]


# ---------------------------------------------------------------------------
# randomized zero testing


def _box_sample(rng: np.random.Generator, shape) -> np.ndarray:
    mag = rng.uniform(0.5, 2.0, size=shape)
    sign = np.where(rng.random(size=shape) < 0.5, -1.0, 1.0)
    return mag * sign


def sample_points(
    names: Sequence[str],
    count: int,
    seed: int = 0,
    guard: Expr | None = None,
    exprs: Sequence[Expr] = (),
    max_rounds: int = 50,
) -> dict[str, np.ndarray]:
    """Draw ``count`` points from the default box, satisfying ``guard > 0``
    and making every expression in ``exprs`` finite."""
    rng = np.random.default_rng(seed)
    names = list(names)
    extra = sorted(set().union(*(e._vars for e in exprs), guard._vars if guard is not None else ()) - set(names))
    names += extra
    checks = list(exprs) + ([guard] if guard is not None else [])
    f = compile_exprs(checks, names) if checks else None
    kept: list[np.ndarray] = []
    have = 0
    batch = max(2 * count, 16)
    for _ in range(max_rounds):
        pts = _box_sample(rng, (len(names), batch)) if names else np.zeros((0, batch))
        ok = np.ones(batch, dtype=bool)
        if f is not None:
            with np.errstate(all="ignore"):
                vals = f(*pts)
            for v in vals[: len(exprs)]:
                ok &= np.isfinite(np.broadcast_to(v, (batch,)))
            if guard is not None:
                g = np.broadcast_to(vals[-1], (batch,))
                ok &= np.isfinite(g) & (g > 0)
        if ok.any():
            kept.append(pts[:, ok])
            have += int(ok.sum())
        if have >= count:
            allpts = np.concatenate(kept, axis=1)[:, :count]
            return {n: allpts[i] for i, n in enumerate(names)}
    raise SamplingError(f"found only {have} of {count} valid sample points")


@dataclass(frozen=True)
class ZeroCheck:
    """Outcome of a batched zero test.

    ``worst`` is the largest normalized residual |e(p)| / (1 + scale(p));
    ``point`` is where it occurred (the witness when ``ok`` is false).
    """

    ok: bool
    worst: float
    point: dict[str, float]
    index: int = -1

    def __bool__(self):
        return self.ok


def zero_check(
    exprs: Sequence[Expr],
    trials: int = 32,
    tol: float = 1e-9,
    seed: int = 0,
    guard: Expr | None = None,
    names: Sequence[str] = (),
) -> ZeroCheck:
    """Test several expressions at a shared set of sample points."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    live = [e for e in exprs if e is not ZERO]
    for j, e in enumerate(exprs):
        if isinstance(e, Const) and e is not ZERO:
            # a nonzero constant fails everywhere; report the first sample as witness
            varnames = sorted(set(names) | (guard._vars if guard is not None else set()))
            pts = sample_points(varnames, 1, seed=seed, guard=guard) if varnames else {}
            point = {n: float(np.asarray(pts[n]).ravel()[0]) for n in varnames}
            return ZeroCheck(False, abs(float(e.value)) / (1 + abs(float(e.value))), point, j)
    if not live:
        return ZeroCheck(True, 0.0, {})
    allnames = set(names).union(*(e._vars for e in live))
    if guard is not None:
        allnames |= guard._vars
    varnames = sorted(allnames)
    pts = sample_points(varnames, trials, seed=seed, guard=guard, exprs=live)
    f = compile_exprs(live, varnames, with_scale=True)
    with np.errstate(all="ignore"):
        vals, scales = f(*(pts[n] for n in varnames))
    worst, where, which = 0.0, 0, -1
    for j, (v, sc) in enumerate(zip(vals, scales)):
        v = np.broadcast_to(np.asarray(v, dtype=float), (trials,))
        sc = np.broadcast_to(np.asarray(sc, dtype=float), (trials,))
        r = np.abs(v) / (1.0 + sc)
        r = np.where(np.isfinite(r), r, np.inf)
        k = int(np.argmax(r))
        if r[k] > worst or which < 0:
            worst, where, which = float(r[k]), k, exprs.index(live[j])
    point = {n: float(pts[n][where]) for n in varnames}
    return ZeroCheck(worst <= tol, worst, point, which)


def is_zero(
    e: Expr,
    trials: int = 32,
    tol: float = 1e-9,
    seed: int = 0,
    guard: Expr | None = None,
    chart: Chart | None = None,
) -> bool:
    """Randomized semantic zero test.

    True iff |e(p)| <= tol * (1 + scale(p)) at ``trials`` deterministic
    pseudo-random points, where scale(p) is the largest |subexpression|.
    """
    if guard is None and chart is not None:
        guard = chart.guard
    return zero_check([e], trials=trials, tol=tol, seed=seed, guard=guard).ok


def detect_constant(e: Expr, trials: int = 16, seed: int = 0, guard: Expr | None = None,
                    max_den: int = 1000) -> Expr:
    """Replace ``e`` by a rational constant when it is numerically one.

    The candidate is read off one sample and confirmed with :func:`is_zero`;
    otherwise ``e`` is returned unchanged.
    """
    if isinstance(e, Const) or not e._vars:
        return e
    pts = sample_points(sorted(e._vars), 1, seed=seed, guard=guard, exprs=[e])
    (v,) = evaluate_many([e], pts)
    cand = const(Fraction(float(np.ravel(v)[0])).limit_denominator(max_den))
    if is_zero(e - cand, trials=trials, seed=seed + 1, guard=guard):
        return cand
    return e


def max_abs(e: Expr, trials: int = 32, seed: int = 0, guard: Expr | None = None) -> float:
    """Largest |e| over the sample points used by :func:`is_zero`."""
    if isinstance(e, Const):
        return abs(float(e.value))
    names = sorted(e._vars | (guard._vars if guard is not None else frozenset()))
    pts = sample_points(names, trials, seed=seed, guard=guard, exprs=[e])
    (v,) = evaluate_many([e], pts)
    return float(np.max(np.abs(np.broadcast_to(v, (trials,)))))
