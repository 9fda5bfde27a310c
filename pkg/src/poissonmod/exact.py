"""Exact arithmetic used by the witness searches.

Polynomials are sparse dicts ``{exponent tuple: Fraction}``. To handle
expressions with a single square root (such as a radial distance) we also
work in the quadratic extension Q(x)[s]/(s^2 - q): an element is
``(p0 + p1*s) / den`` with polynomial ``p0, p1, den``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

from . import expr as E

Poly = dict  # tuple[int, ...] -> Fraction


class NonPolynomialInput(ValueError):
    """An expression could not be written over the supported exact field."""


def p_const(c, n: int) -> Poly:
    c = Fraction(c)
    return {(0,) * n: c} if c else {}


def p_var(i: int, n: int) -> Poly:
    m = [0] * n
    m[i] = 1
    return {tuple(m): Fraction(1)}


def p_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, 0) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def p_scale(a: Poly, c) -> Poly:
    c = Fraction(c)
    if not c:
        return {}
    return {m: v * c for m, v in a.items()}


def p_sub(a: Poly, b: Poly) -> Poly:
    return p_add(a, p_scale(b, -1))


def p_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            v = out.get(m, 0) + ca * cb
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def p_pow(a: Poly, k: int, n: int) -> Poly:
    out = p_const(1, n)
    for _ in range(k):
        out = p_mul(out, a)
    return out


def p_deriv(a: Poly, i: int) -> Poly:
    out: Poly = {}
    for m, c in a.items():
        if m[i]:
            mm = list(m)
            mm[i] -= 1
            out[tuple(mm)] = c * m[i]
    return out


def p_degree(a: Poly) -> int:
    return max((sum(m) for m in a), default=-1)


def p_is_const(a: Poly) -> bool:
    return all(sum(m) == 0 for m in a)


def p_normalize(a: Poly) -> tuple[Fraction, Poly]:
    """Split ``a`` as ``lead * monic`` using the largest monomial's coefficient."""
    if not a:
        return Fraction(0), {}
    lead = a[max(a)]
    return lead, p_scale(a, 1 / lead)


def monomials(n: int, max_degree: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(max_degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            m = [0] * n
            for i in combo:
                m[i] += 1
            out.append(tuple(m))
    return out


def p_to_expr(a: Poly, names: Sequence[str]) -> E.Expr:
    terms = []
    for m, c in sorted(a.items()):
        factors = [E.const(c)] + [E.var(names[i]) ** k for i, k in enumerate(m) if k]
        terms.append(E.mul(*factors))
    return E.add(*terms) if terms else E.ZERO


# ---------------------------------------------------------------------------
# quadratic extension


@dataclass(frozen=True)
class Ext:
    """``(p0 + p1*s) / den`` where ``s^2 = q`` (q shared, possibly absent)."""

    p0: Poly
    p1: Poly
    den: Poly

    def is_zero(self) -> bool:
        return not self.p0 and not self.p1


class ExtField:
    """Arithmetic in Q(x1..xn)[s]/(s^2 - q); ``q`` is fixed on first use."""

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        self.n = len(self.names)
        self.q: Poly | None = None
        self.q_expr: E.Expr | None = None

    def one(self) -> Poly:
        return p_const(1, self.n)

    def from_poly(self, p: Poly) -> Ext:
        return Ext(p, {}, self.one())

    def s(self) -> Ext:
        return Ext({}, self.one(), self.one())

    def _reduce(self, p0: Poly, p1: Poly, den: Poly) -> Ext:
        if not p0 and not p1:
            return Ext({}, {}, self.one())
        lead, monic = p_normalize(den)
        return Ext(p_scale(p0, 1 / lead), p_scale(p1, 1 / lead), monic)

    def add(self, a: Ext, b: Ext) -> Ext:
        if a.den == b.den:
            return self._reduce(p_add(a.p0, b.p0), p_add(a.p1, b.p1), a.den)
        return self._reduce(
            p_add(p_mul(a.p0, b.den), p_mul(b.p0, a.den)),
            p_add(p_mul(a.p1, b.den), p_mul(b.p1, a.den)),
            p_mul(a.den, b.den),
        )

    def scale(self, a: Ext, c) -> Ext:
        return self._reduce(p_scale(a.p0, c), p_scale(a.p1, c), a.den)

    def mul(self, a: Ext, b: Ext) -> Ext:
        p0 = p_mul(a.p0, b.p0)
        if a.p1 and b.p1:
            p0 = p_add(p0, p_mul(p_mul(a.p1, b.p1), self.q))
        p1 = p_add(p_mul(a.p0, b.p1), p_mul(a.p1, b.p0))
        return self._reduce(p0, p1, p_mul(a.den, b.den))

    def inv(self, a: Ext) -> Ext:
        if a.is_zero():
            raise ZeroDivisionError("inverse of zero in the exact field")
        if not a.p1:
            return self._reduce(a.den, {}, a.p0)
        # (p0 + p1 s)^{-1} = (p0 - p1 s) / (p0^2 - p1^2 q)
        norm = p_sub(p_mul(a.p0, a.p0), p_mul(p_mul(a.p1, a.p1), self.q))
        if not norm:
            raise NonPolynomialInput("radicand is a perfect square; simplify the input")
        return self._reduce(p_mul(a.p0, a.den), p_scale(p_mul(a.p1, a.den), -1), norm)

    def power(self, a: Ext, k: int) -> Ext:
        base = a if k >= 0 else self.inv(a)
        out = self.from_poly(self.one())
        for _ in range(abs(k)):
            out = self.mul(out, base)
        return out

    def deriv(self, a: Ext, i: int) -> Ext:
        """Partial derivative, using ds/dx_i = (dq/dx_i) s / (2 q)."""
        # numerator u = p0 + p1 s, u' = p0' + p1' s + p1 q' s/(2q)
        if a.p1:
            q = self.q
            dq = p_deriv(q, i)
            two_q = p_scale(q, 2)
            du0 = p_mul(p_deriv(a.p0, i), two_q)
            du1 = p_add(p_mul(p_deriv(a.p1, i), two_q), p_mul(a.p1, dq))
            du = Ext(du0, du1, two_q)
        else:
            du = Ext(p_deriv(a.p0, i), {}, self.one())
        u = Ext(a.p0, a.p1, self.one())
        dd = p_deriv(a.den, i)
        if not dd:
            return self._reduce(du.p0, du.p1, p_mul(du.den, a.den))
        # (u/D)' = u'/D - u D'/D^2
        left = self._reduce(du.p0, du.p1, p_mul(du.den, a.den))
        right = self._reduce(p_mul(u.p0, dd), p_mul(u.p1, dd), p_mul(a.den, a.den))
        return self.add(left, self.scale(right, -1))

    # conversion ------------------------------------------------------------
    def convert(self, e: E.Expr) -> Ext:
        memo: dict[E.Expr, Ext] = {}

        def go(node: E.Expr) -> Ext:
            got = memo.get(node)
            if got is not None:
                return got
            if isinstance(node, E.Const):
                r = self.from_poly(p_const(node.value, self.n))
            elif isinstance(node, E.Var):
                if node.name not in self.names:
                    raise NonPolynomialInput(f"unknown variable {node.name}")
                r = self.from_poly(p_var(self.names.index(node.name), self.n))
            elif isinstance(node, E.Add):
                r = go(node.terms[0])
                for t in node.terms[1:]:
                    r = self.add(r, go(t))
            elif isinstance(node, E.Mul):
                r = go(node.factors[0])
                for f in node.factors[1:]:
                    r = self.mul(r, go(f))
            elif isinstance(node, E.Pow):
                p = node.exponent
                if p.denominator == 1:
                    r = self.power(go(node.base), int(p))
                elif p.denominator == 2:
                    r = self.power(self._sqrt_of(node.base), int(p.numerator))
                else:
                    raise NonPolynomialInput(f"unsupported exponent in {node}")
            else:
                raise NonPolynomialInput(f"transcendental subexpression {node}")
            memo[node] = r
            return r

        return go(e)

    def _sqrt_of(self, base: E.Expr) -> Ext:
        b = self.convert(base)
        if b.p1 or not p_is_const(b.den):
            raise NonPolynomialInput(f"square root of a non-polynomial: {base}")
        poly = p_scale(b.p0, 1 / b.den[(0,) * self.n])
        if self.q is None:
            self.q = poly
            self.q_expr = p_to_expr(poly, self.names)
            return self.s()
        if poly == self.q:
            return self.s()
        ratio = None
        # allow rational multiples c*q only when c is a rational square
        for m, c in poly.items():
            if m in self.q:
                ratio = c / self.q[m]
                break
        if ratio is not None and p_scale(self.q, ratio) == poly:
            root = E._rational_root(ratio, Fraction(1, 2))
            if root is not None:
                return self.scale(self.s(), root)
        raise NonPolynomialInput("more than one independent square root")

    def to_expr(self, a: Ext) -> E.Expr:
        num = p_to_expr(a.p0, self.names)
        if a.p1:
            num = num + p_to_expr(a.p1, self.names) * E.sqrt(self.q_expr)
        return num / p_to_expr(a.den, self.names)


# ---------------------------------------------------------------------------
# rational linear systems


def solve_linear(rows: list[dict[int, Fraction]], rhs: list[Fraction], nvars: int) -> list[Fraction] | None:
    """Solve a sparse rational system exactly.

    ``rows[k]`` maps unknown index to coefficient. Returns one solution
    (free unknowns set to 0) or ``None`` if the system is inconsistent.
    """
    pivots: dict[int, tuple[dict[int, Fraction], Fraction]] = {}
    order: list[int] = []
    for row, b in zip(rows, rhs):
        row = {k: Fraction(v) for k, v in row.items() if v}
        b = Fraction(b)
        # eliminate existing pivots
        changed = True
        while changed:
            changed = False
            for k in list(row):
                if k in pivots and row.get(k):
                    prow, pb = pivots[k]
                    f = row[k]
                    for j, v in prow.items():
                        nv = row.get(j, 0) - f * v
                        if nv:
                            row[j] = nv
                        else:
                            row.pop(j, None)
                    b -= f * pb
                    changed = True
        if not row:
            if b != 0:
                return None
            continue
        k = min(row)
        f = row[k]
        row = {j: v / f for j, v in row.items()}
        b /= f
        # keep pivot rows reduced against the new pivot
        for kk, (prow, pb) in pivots.items():
            g = prow.get(k)
            if g:
                for j, v in row.items():
                    nv = prow.get(j, 0) - g * v
                    if nv:
                        prow[j] = nv
                    else:
                        prow.pop(j, None)
                pivots[kk] = (prow, pb - g * b)
        pivots[k] = (row, b)
        order.append(k)
    x = [Fraction(0)] * nvars
    for k, (prow, pb) in pivots.items():
        # fully reduced: other pivot columns are absent, free columns set to 0
        x[k] = pb
    return x
