"""Poisson structures on a chart.

Conventions used throughout the package:

* ``{f, g} = pi(df, dg) = sum pi^{ij} d_i f d_j g``
* ``<beta, sharp(alpha)> = pi(alpha, beta)``, so ``sharp(alpha)^j = sum_i pi^{ij} alpha_i``
* ``X_h = sharp(dh) = {h, .}``
* the Schouten bracket is normalised so that ``[pi, h] = -X_h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as E
from . import mvf as M
from .exact import Ext, ExtField, NonPolynomialInput, monomials, p_mul, solve_linear
from .expr import Chart, Expr

__all__ = [
    "JacobiFailed",
    "SecondOrderResidue",
    "NonPositiveDensity",
    "NoWitness",
    "NonPolynomialInput",
    "PoissonStructure",
    "VolumeDensity",
    "LieAlgebraData",
    "make_poisson",
    "hamiltonian_vf",
    "bracket_1forms",
    "modular_vf",
    "linear_poisson",
    "adjoint_character",
    "hamiltonian_witness",
    "witness_search",
]


class JacobiFailed(ValueError):
    def __init__(self, message: str, point: Mapping[str, float], residual: float):
        super().__init__(f"{message} (residual {residual:.3g} at {dict(point)})")
        self.point = dict(point)
        self.residual = residual


class SecondOrderResidue(ArithmeticError):
    pass


class NonPositiveDensity(ValueError):
    pass


@dataclass(frozen=True)
class NoWitness:
    """No hamiltonian found up to ``cap``; this is inconclusive, not a proof."""

    cap: int


class PoissonStructure:
    """A bivector whose Jacobi identity has been checked."""

    def __init__(self, bivector: M.MultiVectorField, checked: bool = True, residual: float = 0.0):
        self.bivector = bivector
        self.chart = bivector.chart
        self.jacobi_ok = checked
        self.jacobi_residual = residual

    @property
    def dim(self) -> int:
        return self.chart.dim

    def entry(self, i: int, j: int) -> Expr:
        return self.bivector[(i, j)]

    def matrix(self) -> list[list[Expr]]:
        n = self.dim
        return [[self.entry(i, j) if i != j else E.ZERO for j in range(n)] for i in range(n)]

    def sharp(self, alpha: M.DifferentialForm | Sequence[Expr]) -> M.MultiVectorField:
        a = alpha.as_list() if isinstance(alpha, M.DifferentialForm) else [E.as_expr(c) for c in alpha]
        n = self.dim
        comps = []
        for j in range(n):
            terms = [self.entry(i, j) * a[i] for i in range(n) if i != j and a[i] is not E.ZERO]
            comps.append(E.add(*terms) if terms else E.ZERO)
        return M.vector_field(self.chart, comps)

    def bracket(self, f, g) -> Expr:
        f, g = E.as_expr(f), E.as_expr(g)
        names = self.chart.coords
        df = [E.differentiate(f, c) for c in names]
        dg = [E.differentiate(g, c) for c in names]
        return M.bivector_eval(self.bivector, df, dg)

    def hamiltonian_vf(self, h) -> M.MultiVectorField:
        h = E.as_expr(h)
        return self.sharp([E.differentiate(h, c) for c in self.chart.coords])

    def __repr__(self):
        return f"PoissonStructure({self.bivector})"


def make_poisson(B: M.MultiVectorField, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> PoissonStructure:
    """Validate the Jacobi identity [B, B] = 0 and wrap ``B``."""
    if B.degree != 2:
        raise M.DegreeError("a Poisson structure is a bivector")
    check = M.fields_zero([M.schouten(B, B)], trials=trials, tol=tol, seed=seed)
    if not check.ok:
        raise JacobiFailed("Jacobi identity fails", check.point, check.worst)
    return PoissonStructure(B, True, check.worst)


def hamiltonian_vf(pi: PoissonStructure, h) -> M.MultiVectorField:
    return pi.hamiltonian_vf(h)


def d_pi(pi: PoissonStructure, A: M.MultiVectorField) -> M.MultiVectorField:
    """Poisson coboundary d_pi A = [pi, A]."""
    return M.schouten(pi.bivector, A)


def bracket_1forms(pi: PoissonStructure, alpha: M.DifferentialForm, beta: M.DifferentialForm) -> M.DifferentialForm:
    """[alpha, beta] = L_{sharp alpha} beta - L_{sharp beta} alpha - d pi(alpha, beta)."""
    Xa = pi.sharp(alpha)
    Xb = pi.sharp(beta)
    pab = M.bivector_eval(pi.bivector, alpha.as_list(), beta.as_list())
    return M.lie_derivative(Xa, beta) - M.lie_derivative(Xb, alpha) - M.differential(pi.chart, pab)


# ---------------------------------------------------------------------------
# volumes and modular fields


class VolumeDensity:
    """mu = rho dx^1 ^ ... ^ dx^n with rho > 0 on the chart's domain."""

    def __init__(self, chart: Chart, rho=1, check: bool = True, seed: int = 0, trials: int = 32):
        self.chart = chart
        self.rho = E.as_expr(rho)
        if check:
            self.check_positive(seed=seed, trials=trials)

    def check_positive(self, seed: int = 0, trials: int = 32) -> None:
        if isinstance(self.rho, E.Const):
            if self.rho.value <= 0:
                raise NonPositiveDensity(f"density {self.rho} is not positive")
            return
        pts = E.sample_points(self.chart.coords, trials, seed=seed, guard=self.chart.guard, exprs=[self.rho])
        (v,) = E.evaluate_many([self.rho], pts)
        v = np.broadcast_to(v, (trials,))
        bad = np.flatnonzero(~(v > 0))
        if bad.size:
            k = int(bad[0])
            where = {n: float(pts[n][k]) for n in self.chart.coords}
            raise NonPositiveDensity(f"density {self.rho} is not positive at {where}")

    def scaled(self, g) -> "VolumeDensity":
        return VolumeDensity(self.chart, self.rho * E.as_expr(g), check=False)

    def __repr__(self):
        return f"VolumeDensity({self.rho})"


def divergence(X: M.MultiVectorField, rho: VolumeDensity) -> Expr:
    """div_rho X = (1/rho) sum_j d_j(rho X^j), so that L_X mu = div(X) mu."""
    names = X.chart.coords
    r = rho.rho
    terms = []
    for I, c in X.components.items():
        terms.append(E.differentiate(c, names[I[0]]))
        if r is not E.ONE:
            terms.append(c * log_derivative(r, names[I[0]]))
    return E.add(*terms) if terms else E.ZERO


def log_derivative(r: Expr, name: str) -> Expr:
    """d_name(r) / r, split over products, powers and exponentials so that
    density factors such as exp(p) cancel structurally."""
    if isinstance(r, E.Const):
        return E.ZERO
    if isinstance(r, E.Mul):
        return E.add(*(log_derivative(f, name) for f in r.factors))
    if isinstance(r, E.Pow):
        return E.const(r.exponent) * log_derivative(r.base, name)
    if isinstance(r, E.Func) and r.fname == "exp":
        return E.differentiate(r.arg, name)
    return E.differentiate(r, name) / r


def modular_vf(pi: PoissonStructure, rho: VolumeDensity, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> M.MultiVectorField:
    """Modular vector field X_mu: L_{X_f} mu = X_mu(f) mu.

    The operator f -> div(X_f) has second-order part sum pi^{ij} d_i d_j f,
    whose symmetric coefficients must cancel; that is checked explicitly.
    """
    if rho.chart != pi.chart:
        raise M.ChartMismatch("density and structure live on different charts")
    n = pi.dim
    sym = [pi.entry(i, j) + pi.entry(j, i) for i in range(n) for j in range(i + 1, n)]
    check = E.zero_check(sym, trials=trials, tol=tol, seed=seed, guard=pi.chart.guard)
    if not check.ok:
        raise SecondOrderResidue(f"second-order part does not vanish at {check.point}")
    names = pi.chart.coords
    r = rho.rho
    comps = []
    logs = [E.ZERO if r is E.ONE else log_derivative(r, x) for x in names]
    for i in range(n):
        terms = []
        for j in range(n):
            if j != i:
                terms.append(E.differentiate(pi.entry(i, j), names[j]))
                terms.append(pi.entry(i, j) * logs[j])
        comps.append(E.add(*terms) if terms else E.ZERO)
    return M.vector_field(pi.chart, comps)


# ---------------------------------------------------------------------------
# Lie algebras and linear structures


class LieAlgebraData:
    """Structure constants ``c[(i, j, k)] = c^k_{ij}``, 0-based, antisymmetric in i, j."""

    def __init__(self, dim: int, constants: Mapping[tuple[int, int, int], object] | None = None):
        if dim < 0:
            raise ValueError("dimension must be non-negative")
        c: dict[tuple[int, int, int], Fraction] = {}
        for (i, j, k), v in (constants or {}).items():
            if not (0 <= i < dim and 0 <= j < dim and 0 <= k < dim):
                raise IndexError(f"structure-constant index {(i, j, k)} out of range")
            v = Fraction(v)
            if i == j:
                if v:
                    raise ValueError(f"c^{k}_{{{i}{i}}} must vanish")
                continue
            c[(i, j, k)] = c.get((i, j, k), 0) + v
            c.setdefault((j, i, k), Fraction(0))
        # complete or check antisymmetry
        for (i, j, k), v in list(c.items()):
            w = c.get((j, i, k), Fraction(0))
            if v and w and w != -v:
                raise ValueError(f"structure constants not antisymmetric at {(i, j, k)}")
            if v and not w:
                c[(j, i, k)] = -v
        self.dim = dim
        self.c = {key: v for key, v in c.items() if v}
        self._check_jacobi()

    def const(self, i: int, j: int, k: int) -> Fraction:
        return self.c.get((i, j, k), Fraction(0))

    def _check_jacobi(self) -> None:
        d = self.dim
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    for m in range(d):
                        # [[e_i,e_j],e_k] + cyclic, coefficient of e_m
                        s = Fraction(0)
                        for l in range(d):
                            s += self.const(i, j, l) * self.const(l, k, m)
                            s += self.const(j, k, l) * self.const(l, i, m)
                            s += self.const(k, i, l) * self.const(l, j, m)
                        if s:
                            raise JacobiFailed(
                                "structure constants violate the Jacobi identity", {"i": i, "j": j, "k": k}, float(s)
                            )

    def is_abelian(self) -> bool:
        return not self.c

    @classmethod
    def from_brackets(cls, dim: int, brackets: Mapping[tuple[int, int], Mapping[int, object]]) -> "LieAlgebraData":
        """From ``{(i, j): {k: c}}`` meaning [e_i, e_j] = sum_k c e_k."""
        return cls(dim, {(i, j, k): v for (i, j), row in brackets.items() for k, v in row.items()})


def adjoint_character(g: LieAlgebraData) -> list[Fraction]:
    """theta_0(e_i) = tr(ad e_i) = sum_j c^j_{ij}."""
    return [sum((g.const(i, j, j) for j in range(g.dim)), Fraction(0)) for i in range(g.dim)]


def linear_poisson(g: LieAlgebraData, coords: Sequence[str] | None = None) -> PoissonStructure:
    """Lie-Poisson structure pi^{ij} = sum_k c^k_{ij} x_k on the dual of g."""
    coords = tuple(coords) if coords else tuple(f"x{i + 1}" for i in range(g.dim))
    chart = Chart(coords)
    xs = chart.variables()
    comps = {}
    for i in range(g.dim):
        for j in range(i + 1, g.dim):
            terms = [E.const(g.const(i, j, k)) * xs[k] for k in range(g.dim) if g.const(i, j, k)]
            if terms:
                comps[(i, j)] = E.add(*terms)
    return make_poisson(M.MultiVectorField(chart, 2, comps))


# ---------------------------------------------------------------------------
# witness search


def witness_search(
    chart: Chart,
    operator: Callable[[ExtField, Ext], list[Ext]],
    target: Sequence[Expr],
    degree_cap: int,
    prepare: Callable[[ExtField], None] | None = None,
) -> Expr | NoWitness:
    """Find h (polynomial, or polynomial in one square root) with operator(h) = target.

    ``operator`` must be linear over the rationals. The ansatz is
    h = h0 + h1*s with deg h0, h1 <= degree_cap, where s is the square root
    appearing in the inputs (if any). Coefficients are found by exact
    rational elimination, so a NoWitness verdict is exact at the cap.
    """
    field_ = ExtField(chart.coords)
    if prepare is not None:
        prepare(field_)
    tgt = [field_.convert(E.as_expr(t)) for t in target]
    n = chart.dim
    mons = monomials(n, degree_cap)
    basis: list[Ext] = [field_.from_poly({m: Fraction(1)}) for m in mons]
    if field_.q is not None:
        basis += [Ext({}, {m: Fraction(1)}, field_.one()) for m in mons]
    images = [operator(field_, b) for b in basis]
    rows: list[dict[int, Fraction]] = []
    rhs: list[Fraction] = []
    for comp in range(len(tgt)):
        terms = [(k, images[k][comp]) for k in range(len(basis)) if not images[k][comp].is_zero()]
        t = tgt[comp]
        dens: list[dict] = []
        for _, v in terms + [(-1, t)]:
            if not v.is_zero() and v.den not in dens:
                dens.append(v.den)

        def lift(v: Ext) -> tuple[dict, dict]:
            f = field_.one()
            for d in dens:
                if d != v.den:
                    f = p_mul(f, d)
            return p_mul(v.p0, f), p_mul(v.p1, f)

        eqs: dict[tuple[int, tuple], dict[int, Fraction]] = {}
        eq_rhs: dict[tuple[int, tuple], Fraction] = {}
        for k, v in terms:
            for part, poly in enumerate(lift(v)):
                for m, c in poly.items():
                    eqs.setdefault((part, m), {})[k] = c
        if not t.is_zero():
            for part, poly in enumerate(lift(t)):
                for m, c in poly.items():
                    eqs.setdefault((part, m), {})
                    eq_rhs[(part, m)] = c
        for key, row in eqs.items():
            rows.append(row)
            rhs.append(eq_rhs.get(key, Fraction(0)))
    sol = solve_linear(rows, rhs, len(basis))
    if sol is None:
        return NoWitness(degree_cap)
    h = field_.from_poly({})
    for k, c in enumerate(sol):
        if c:
            h = field_.add(h, field_.scale(basis[k], c))
    return field_.to_expr(h)


def _ext_matrix(field_: ExtField, pi: PoissonStructure) -> list[list[Ext]]:
    return [[field_.convert(pi.entry(i, j)) if i != j else field_.from_poly({}) for j in range(pi.dim)] for i in range(pi.dim)]


def ext_hamiltonian(field_: ExtField, P: list[list[Ext]], h: Ext) -> list[Ext]:
    """Components of X_h computed in the exact field."""
    n = len(P)
    dh = [field_.deriv(h, i) for i in range(n)]
    out = []
    for j in range(n):
        acc = field_.from_poly({})
        for i in range(n):
            if not P[i][j].is_zero() and not dh[i].is_zero():
                acc = field_.add(acc, field_.mul(P[i][j], dh[i]))
        out.append(acc)
    return out


def hamiltonian_witness(pi: PoissonStructure, X: M.MultiVectorField, degree_cap: int = 5) -> Expr | NoWitness:
    """Search for h with X = X_h among polynomials of degree <= degree_cap.

    Raises NonPolynomialInput for inputs outside polynomials extended by a
    single square root.
    """
    if X.degree != 1:
        raise M.DegreeError("X must be a vector field")
    if X.chart != pi.chart:
        raise M.ChartMismatch("X and pi live on different charts")
    if not X.components:
        return E.ZERO
    cache: dict[str, list[list[Ext]]] = {}

    def prepare(field_: ExtField):
        # convert pi first so that its square root (if any) fixes the extension
        cache["P"] = _ext_matrix(field_, pi)

    def op(field_: ExtField, h: Ext) -> list[Ext]:
        return ext_hamiltonian(field_, cache["P"], h)

    return witness_search(pi.chart, op, X.as_list(), degree_cap, prepare)
