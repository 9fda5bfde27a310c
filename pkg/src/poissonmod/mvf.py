"""Multivector fields and differential forms on a coordinate chart.

Both kinds store components on strictly increasing index tuples; the value
on any other ordering follows by antisymmetry. Index tuples are 0-based
positions in ``chart.coords``.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Mapping, Sequence

from . import expr as E
from .expr import Chart, Expr

__all__ = [
    "MultiVectorField",
    "DifferentialForm",
    "ChartMismatch",
    "DegreeError",
    "sort_sign",
    "vector_field",
    "function",
    "one_form",
    "coordinate_vector",
    "wedge",
    "schouten",
    "lie_derivative",
    "exterior_d",
    "interior",
    "pair",
    "apply_vf",
    "determinant",
    "fields_zero",
]


class ChartMismatch(ValueError):
    pass


class DegreeError(ValueError):
    pass


def sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx`` (0 if an index repeats)."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    # insertion sort counting transpositions; tuples are short
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(idx)


class _Graded:
    """Shared storage discipline for multivectors and forms."""

    kind = "graded"

    def __init__(self, chart: Chart, degree: int, components: Mapping[tuple[int, ...], Expr] | None = None):
        # degree above the dimension is allowed only for the zero object
        if degree < 0 or (degree > chart.dim and components and any(
                E.as_expr(v) is not E.ZERO for v in components.values())):
            raise DegreeError(f"degree {degree} out of range for dimension {chart.dim}")
        comps: dict[tuple[int, ...], Expr] = {}
        for key, value in (components or {}).items():
            key = tuple(key)
            if len(key) != degree:
                raise DegreeError(f"index {key} does not have length {degree}")
            sign, skey = sort_sign(key)
            if any(not 0 <= i < chart.dim for i in key):
                raise IndexError(f"index {key} out of range")
            value = E.as_expr(value)
            if sign == 0 or value is E.ZERO:
                continue
            v = comps.get(skey, E.ZERO) + (value if sign > 0 else -value)
            if v is E.ZERO:
                comps.pop(skey, None)
            else:
                comps[skey] = v
        self.chart = chart
        self.degree = degree
        self.components = comps

    def _new(self, degree, comps):
        return type(self)(self.chart, degree, comps)

    def __getitem__(self, idx) -> Expr:
        if isinstance(idx, int):
            idx = (idx,)
        sign, key = sort_sign(idx)
        if sign == 0:
            return E.ZERO
        v = self.components.get(key, E.ZERO)
        return v if sign > 0 else -v

    def _check(self, other: "_Graded"):
        if self.chart != other.chart:
            raise ChartMismatch(f"charts differ: {self.chart.coords} vs {other.chart.coords}")

    def __add__(self, other):
        self._check(other)
        if type(other) is not type(self) or other.degree != self.degree:
            raise DegreeError("can only add objects of the same kind and degree")
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = comps.get(k, E.ZERO) + v
        return self._new(self.degree, comps)

    def __neg__(self):
        return self._new(self.degree, {k: -v for k, v in self.components.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f) -> "_Graded":
        f = E.as_expr(f)
        return self._new(self.degree, {k: f * v for k, v in self.components.items()})

    def __rmul__(self, f):
        return self.scale(f)

    def map_components(self, fn) -> "_Graded":
        return self._new(self.degree, {k: fn(v) for k, v in self.components.items()})

    def subs(self, mapping) -> "_Graded":
        return self.map_components(lambda v: E.substitute(v, mapping))

    def as_function(self) -> Expr:
        if self.degree != 0:
            raise DegreeError("not a degree-0 object")
        return self.components.get((), E.ZERO)

    def as_list(self) -> list[Expr]:
        """Components of a degree-1 object as a dense list."""
        if self.degree != 1:
            raise DegreeError("not a degree-1 object")
        return [self.components.get((i,), E.ZERO) for i in range(self.chart.dim)]

    def is_zero(self, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> bool:
        return fields_zero([self], trials=trials, tol=tol, seed=seed).ok

    def _basis_name(self, key) -> str:
        raise NotImplementedError

    def __str__(self):
        if not self.components:
            return "0"
        parts = []
        for key in sorted(self.components):
            coeff = self.components[key]
            if self.degree == 0:
                parts.append(str(coeff))
            else:
                parts.append(f"({coeff})*{self._basis_name(key)}")
        return " + ".join(parts)

    def __repr__(self):
        return f"{type(self).__name__}(degree={self.degree}, {self})"


class MultiVectorField(_Graded):
    kind = "multivector"

    def _basis_name(self, key):
        return "^".join(f"d/d{self.chart.coords[i]}" for i in key)


class DifferentialForm(_Graded):
    kind = "form"

    def _basis_name(self, key):
        return "^".join(f"d{self.chart.coords[i]}" for i in key)


# ---------------------------------------------------------------------------
# constructors


def function(chart: Chart, f) -> MultiVectorField:
    return MultiVectorField(chart, 0, {(): E.as_expr(f)})


def vector_field(chart: Chart, comps: Sequence) -> MultiVectorField:
    if len(comps) != chart.dim:
        raise DegreeError(f"expected {chart.dim} components, got {len(comps)}")
    return MultiVectorField(chart, 1, {(i,): E.as_expr(c) for i, c in enumerate(comps)})


def one_form(chart: Chart, comps: Sequence) -> DifferentialForm:
    if len(comps) != chart.dim:
        raise DegreeError(f"expected {chart.dim} components, got {len(comps)}")
    return DifferentialForm(chart, 1, {(i,): E.as_expr(c) for i, c in enumerate(comps)})


def coordinate_vector(chart: Chart, name: str, coeff=1) -> MultiVectorField:
    return MultiVectorField(chart, 1, {(chart.index(name),): E.as_expr(coeff)})


def bivector(chart: Chart, entries: Iterable[tuple[str, str, object]]) -> MultiVectorField:
    """Bivector from (i, j, coefficient) triples meaning coefficient * d/di ^ d/dj."""
    comps: dict[tuple[int, int], Expr] = {}
    for i, j, c in entries:
        key = (chart.index(i), chart.index(j))
        if key[0] == key[1]:
            raise DegreeError(f"repeated index in bivector entry {i},{j}")
        sign, skey = sort_sign(key)
        c = E.as_expr(c)
        comps[skey] = comps.get(skey, E.ZERO) + (c if sign > 0 else -c)
    return MultiVectorField(chart, 2, comps)


# ---------------------------------------------------------------------------
# algebra


def _merge(I: tuple[int, ...], J: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    return sort_sign(I + J)


def wedge(A: _Graded, B: _Graded) -> _Graded:
    """Exterior product of two multivectors or two forms."""
    A._check(B)
    if type(A) is not type(B):
        raise TypeError("wedge needs two objects of the same kind")
    deg = A.degree + B.degree
    if deg > A.chart.dim:
        raise DegreeError(f"degree {deg} exceeds dimension {A.chart.dim}")
    comps: dict[tuple[int, ...], Expr] = {}
    for I, a in A.components.items():
        for J, b in B.components.items():
            sign, K = _merge(I, J)
            if sign == 0:
                continue
            term = a * b
            comps[K] = comps.get(K, E.ZERO) + (term if sign > 0 else -term)
    return type(A)(A.chart, deg, comps)


def _right_derivatives(A: MultiVectorField, i: int):
    """Right derivative by the odd coordinate zeta_i: yields (I minus i, sign*coeff)."""
    p = A.degree
    for I, a in A.components.items():
        if i in I:
            k = I.index(i)
            rest = I[:k] + I[k + 1:]
            yield rest, (a if (p - 1 - k) % 2 == 0 else -a)


def schouten(A: MultiVectorField, B: MultiVectorField) -> MultiVectorField:
    """Schouten-Nijenhuis bracket in coordinates.

    Uses [P,Q] = sum_i dP/dzeta_i ^ dQ/dx_i - (-1)^((p-1)(q-1)) dQ/dzeta_i ^ dP/dx_i
    with right derivatives in the odd variables. On vector fields this is
    the Lie bracket, and [pi, h] = -X_h.
    """
    A._check(B)
    if not isinstance(A, MultiVectorField) or not isinstance(B, MultiVectorField):
        raise TypeError("schouten takes two multivector fields")
    p, q = A.degree, B.degree
    deg = p + q - 1
    if deg < 0:
        return MultiVectorField(A.chart, 0, {})
    if deg > A.chart.dim:
        return MultiVectorField(A.chart, deg, {})
    names = A.chart.coords
    comps: dict[tuple[int, ...], Expr] = {}

    def accumulate(P, Q, outer_sign):
        for i in range(A.chart.dim):
            dQ = {J: E.differentiate(b, names[i]) for J, b in Q.components.items()}
            dQ = {J: v for J, v in dQ.items() if v is not E.ZERO}
            if not dQ:
                continue
            for rest, a in _right_derivatives(P, i):
                for J, b in dQ.items():
                    sign, K = _merge(rest, J)
                    if sign == 0:
                        continue
                    term = a * b
                    s = sign * outer_sign
                    comps[K] = comps.get(K, E.ZERO) + (term if s > 0 else -term)

    accumulate(A, B, 1)
    accumulate(B, A, -1 if ((p - 1) * (q - 1)) % 2 == 0 else 1)
    return MultiVectorField(A.chart, deg, comps)


def exterior_d(w: DifferentialForm) -> DifferentialForm:
    n = w.chart.dim
    if w.degree == n:
        return DifferentialForm(w.chart, n + 1, {})
    names = w.chart.coords
    comps: dict[tuple[int, ...], Expr] = {}
    for I, a in w.components.items():
        for j in range(n):
            if j in I:
                continue
            da = E.differentiate(a, names[j])
            if da is E.ZERO:
                continue
            sign, K = sort_sign((j,) + I)
            comps[K] = comps.get(K, E.ZERO) + (da if sign > 0 else -da)
    return DifferentialForm(w.chart, w.degree + 1, comps)


def differential(chart: Chart, f) -> DifferentialForm:
    return exterior_d(DifferentialForm(chart, 0, {(): E.as_expr(f)}))


def interior(X: MultiVectorField, w: DifferentialForm) -> DifferentialForm:
    """Contraction of a vector field into the first slot of a form."""
    X._check(w)
    if X.degree != 1:
        raise DegreeError("interior product needs a vector field")
    if w.degree == 0:
        return DifferentialForm(w.chart, 0, {})
    comps: dict[tuple[int, ...], Expr] = {}
    for I, a in w.components.items():
        for k, i in enumerate(I):
            xi = X.components.get((i,))
            if xi is None:
                continue
            rest = I[:k] + I[k + 1:]
            term = xi * a
            comps[rest] = comps.get(rest, E.ZERO) + (term if k % 2 == 0 else -term)
    return DifferentialForm(w.chart, w.degree - 1, comps)


def lie_derivative(X: MultiVectorField, T: _Graded) -> _Graded:
    """Lie derivative along a vector field (Cartan formula on forms)."""
    X._check(T)
    if X.degree != 1:
        raise DegreeError("Lie derivative needs a vector field")
    if isinstance(T, MultiVectorField):
        return schouten(X, T)
    if T.degree == 0:
        f = T.as_function()
        return DifferentialForm(T.chart, 0, {(): apply_vf(X, f)})
    return interior(X, exterior_d(T)) + exterior_d(interior(X, T))


def pair(w: DifferentialForm, A: MultiVectorField) -> Expr:
    """Full contraction <w, A> with <dx^I, d/dx^I> = 1 on increasing I."""
    w._check(A)
    if w.degree != A.degree:
        raise DegreeError(f"degree mismatch: form {w.degree}, multivector {A.degree}")
    terms = [a * A.components[I] for I, a in w.components.items() if I in A.components]
    return E.add(*terms) if terms else E.ZERO


def apply_vf(X: MultiVectorField, f: Expr) -> Expr:
    """X(f) = sum_i X^i df/dx^i."""
    names = X.chart.coords
    terms = [c * E.differentiate(f, names[I[0]]) for I, c in X.components.items()]
    return E.add(*terms) if terms else E.ZERO


def bivector_eval(P: MultiVectorField, alpha: Sequence[Expr], beta: Sequence[Expr]) -> Expr:
    """P(alpha, beta) for a bivector and two covectors given as component lists."""
    terms = []
    for (i, j), c in P.components.items():
        terms.append(c * (alpha[i] * beta[j] - alpha[j] * beta[i]))
    return E.add(*terms) if terms else E.ZERO


def determinant(M: Sequence[Sequence[Expr]]) -> Expr:
    """Determinant of a square matrix of expressions (cofactor expansion with memo)."""
    n = len(M)
    if n == 0:
        return E.ONE
    memo: dict[tuple[int, tuple[int, ...]], Expr] = {}

    def minor(row: int, cols: tuple[int, ...]) -> Expr:
        if row == n:
            return E.ONE
        key = (row, cols)
        if key in memo:
            return memo[key]
        terms = []
        for k, c in enumerate(cols):
            entry = E.as_expr(M[row][c])
            if entry is E.ZERO:
                continue
            sub = minor(row + 1, cols[:k] + cols[k + 1:])
            if sub is E.ZERO:
                continue
            t = entry * sub
            terms.append(t if k % 2 == 0 else -t)
        r = E.add(*terms) if terms else E.ZERO
        memo[key] = r
        return r

    return minor(0, tuple(range(n)))


def fields_zero(objs: Sequence[_Graded], trials: int = 32, tol: float = 1e-9, seed: int = 0) -> E.ZeroCheck:
    """Batched is_zero over every component of several fields (shared chart guard)."""
    exprs: list[Expr] = []
    guard = None
    for o in objs:
        exprs.extend(o.components.values())
        guard = guard or o.chart.guard
    return E.zero_check(exprs, trials=trials, tol=tol, seed=seed, guard=guard)


def all_index_tuples(n: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(n), k))
