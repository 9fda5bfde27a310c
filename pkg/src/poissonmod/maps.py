"""Poisson maps and the pullback algebroid phi^*T^*N.

The pullback algebroid is never built as an object. We only expose what the
calculations need: the anchor on pulled-back forms, the bracket identity on
generators, and the degree 0 and 1 differentials.
"""

from __future__ import annotations

from typing import Sequence

from . import expr as E
from . import mvf as M
from .exact import Ext, ExtField
from .expr import Chart, Expr
from .poisson import (
    NoWitness,
    PoissonStructure,
    VolumeDensity,
    bracket_1forms,
    ext_hamiltonian,
    modular_vf,
    witness_search,
    _ext_matrix,
)

__all__ = [
    "NotPoissonMap",
    "SmoothMap",
    "VectorFieldAlongMap",
    "poisson_map_residual",
    "check_poisson_map",
    "pullback_form",
    "pullback_anchor",
    "algebroid_diff0",
    "algebroid_diff1",
    "map_modular_vf",
    "check_composition",
    "exactness_witness",
    "closedness_residuals",
    "generator_forms",
]


class NotPoissonMap(ValueError):
    pass


class SmoothMap:
    """phi: source -> target given by target-dimension many source expressions."""

    def __init__(self, source: Chart, target: Chart, components: Sequence):
        comps = [E.as_expr(c) for c in components]
        if len(comps) != target.dim:
            raise ValueError(f"map needs {target.dim} components, got {len(comps)}")
        allowed = set(source.coords)
        for c in comps:
            extra = c.free_vars - allowed
            if extra:
                raise ValueError(f"map component {c} uses non-source variables {sorted(extra)}")
        self.source = source
        self.target = target
        self.components = comps
        self._jac: list[list[Expr]] | None = None

    @classmethod
    def identity(cls, chart: Chart) -> "SmoothMap":
        return cls(chart, chart, list(chart.variables()))

    def jacobian(self) -> list[list[Expr]]:
        """J[a][i] = d phi^a / d x^i."""
        if self._jac is None:
            self._jac = [[E.differentiate(c, x) for x in self.source.coords] for c in self.components]
        return self._jac

    def pull(self, e) -> Expr:
        """e o phi for an expression over target coordinates."""
        return E.substitute(E.as_expr(e), dict(zip(self.target.coords, self.components)))

    def push(self, X: M.MultiVectorField) -> "VectorFieldAlongMap":
        """dphi . X as a vector field along phi."""
        if X.chart != self.source:
            raise M.ChartMismatch("vector field is not on the source chart")
        J = self.jacobian()
        xs = X.as_list()
        comps = []
        for a in range(self.target.dim):
            terms = [J[a][i] * xs[i] for i in range(self.source.dim) if xs[i] is not E.ZERO and J[a][i] is not E.ZERO]
            comps.append(E.add(*terms) if terms else E.ZERO)
        return VectorFieldAlongMap(self, comps)

    def along(self, Y: M.MultiVectorField) -> "VectorFieldAlongMap":
        """Y o phi for a vector field on the target."""
        if Y.chart != self.target:
            raise M.ChartMismatch("vector field is not on the target chart")
        return VectorFieldAlongMap(self, [self.pull(c) for c in Y.as_list()])

    def compose(self, other: "SmoothMap") -> "SmoothMap":
        """other o self."""
        if other.source != self.target:
            raise M.ChartMismatch("maps are not composable")
        return SmoothMap(self.source, other.target, [self.pull(c) for c in other.components])

    def __repr__(self):
        return f"SmoothMap({self.source.coords} -> {self.target.coords}: {[str(c) for c in self.components]})"


class VectorFieldAlongMap:
    """A section of phi^*TN: target-direction components over source coordinates."""

    def __init__(self, phi: SmoothMap, components: Sequence):
        comps = [E.as_expr(c) for c in components]
        if len(comps) != phi.target.dim:
            raise ValueError(f"expected {phi.target.dim} components, got {len(comps)}")
        self.phi = phi
        self.components = comps

    def __add__(self, other: "VectorFieldAlongMap"):
        return VectorFieldAlongMap(self.phi, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorFieldAlongMap"):
        return VectorFieldAlongMap(self.phi, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return VectorFieldAlongMap(self.phi, [-a for a in self.components])

    def pair(self, alpha: Sequence[Expr]) -> Expr:
        """<P, alpha o phi> for target covector components already pulled back."""
        return E.add(*(p * a for p, a in zip(self.components, alpha)))

    def check_zero(self, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> E.ZeroCheck:
        return E.zero_check(self.components, trials=trials, tol=tol, seed=seed, guard=self.phi.source.guard)

    def is_zero(self, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> bool:
        return self.check_zero(trials, tol, seed).ok

    def __str__(self):
        names = self.phi.target.coords
        parts = [f"({c})*d/d{names[a]}" for a, c in enumerate(self.components) if c is not E.ZERO]
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"VectorFieldAlongMap({self})"


def _check_charts(phi: SmoothMap, piM: PoissonStructure, piN: PoissonStructure | None = None):
    if piM.chart != phi.source:
        raise M.ChartMismatch("source structure does not match the map's source chart")
    if piN is not None and piN.chart != phi.target:
        raise M.ChartMismatch("target structure does not match the map's target chart")


def poisson_map_residual(phi: SmoothMap, piM: PoissonStructure, piN: PoissonStructure) -> dict[tuple[int, int], Expr]:
    """R^{ab} = sum pi_M^{ij} d_i phi^a d_j phi^b - pi_N^{ab} o phi for a < b."""
    _check_charts(phi, piM, piN)
    out = {}
    for a in range(phi.target.dim):
        for b in range(a + 1, phi.target.dim):
            lhs = piM.bracket(phi.components[a], phi.components[b])
            out[(a, b)] = lhs - phi.pull(piN.entry(a, b))
    return out


def check_poisson_map(
    phi: SmoothMap, piM: PoissonStructure, piN: PoissonStructure, trials: int = 32, tol: float = 1e-9, seed: int = 0
) -> bool:
    res = poisson_map_residual(phi, piM, piN)
    return E.zero_check(list(res.values()), trials=trials, tol=tol, seed=seed, guard=phi.source.guard).ok


def pullback_form(phi: SmoothMap, alpha: M.DifferentialForm) -> M.DifferentialForm:
    """(phi^* alpha)_i = sum_a (alpha_a o phi) d_i phi^a for a target 1-form."""
    if alpha.chart != phi.target:
        raise M.ChartMismatch("form is not on the target chart")
    if alpha.degree != 1:
        raise M.DegreeError("only 1-forms are pulled back here")
    J = phi.jacobian()
    a = [phi.pull(c) for c in alpha.as_list()]
    comps = []
    for i in range(phi.source.dim):
        terms = [a[k] * J[k][i] for k in range(phi.target.dim) if a[k] is not E.ZERO and J[k][i] is not E.ZERO]
        comps.append(E.add(*terms) if terms else E.ZERO)
    return M.one_form(phi.source, comps)


def pullback_anchor(phi: SmoothMap, piM: PoissonStructure, alpha: M.DifferentialForm) -> M.MultiVectorField:
    """Anchor of the pullback algebroid on phi^*alpha: pi_M^sharp(phi^* alpha)."""
    _check_charts(phi, piM)
    return piM.sharp(pullback_form(phi, alpha))


def algebroid_diff0(phi: SmoothMap, piM: PoissonStructure, f, alpha: M.DifferentialForm) -> Expr:
    """<d_A f, phi^*alpha> = anchor(phi^*alpha)(f)."""
    return M.apply_vf(pullback_anchor(phi, piM, alpha), E.as_expr(f))


def algebroid_diff1(
    phi: SmoothMap,
    piM: PoissonStructure,
    piN: PoissonStructure,
    P: VectorFieldAlongMap,
    alpha: M.DifferentialForm,
    beta: M.DifferentialForm,
) -> Expr:
    """dP(phi^*a, phi^*b) = rho(a)<P,b> - rho(b)<P,a> - <P,[a,b]_N>, all along phi."""
    _check_charts(phi, piM, piN)
    a_pulled = [phi.pull(c) for c in alpha.as_list()]
    b_pulled = [phi.pull(c) for c in beta.as_list()]
    ab = bracket_1forms(piN, alpha, beta)
    ab_pulled = [phi.pull(c) for c in ab.as_list()]
    term1 = M.apply_vf(pullback_anchor(phi, piM, alpha), P.pair(b_pulled))
    term2 = M.apply_vf(pullback_anchor(phi, piM, beta), P.pair(a_pulled))
    return term1 - term2 - P.pair(ab_pulled)


def generator_forms(chart: Chart) -> list[M.DifferentialForm]:
    return [M.DifferentialForm(chart, 1, {(a,): E.ONE}) for a in range(chart.dim)]


def closedness_residuals(
    phi: SmoothMap, piM: PoissonStructure, piN: PoissonStructure, P: VectorFieldAlongMap
) -> list[Expr]:
    """dP on all pairs of coordinate generators (db^a, db^b), a < b."""
    gens = generator_forms(phi.target)
    out = []
    for a in range(len(gens)):
        for b in range(a + 1, len(gens)):
            out.append(algebroid_diff1(phi, piM, piN, P, gens[a], gens[b]))
    return out


def map_modular_vf(
    phi: SmoothMap,
    piM: PoissonStructure,
    piN: PoissonStructure,
    rhoM: VolumeDensity,
    rhoN: VolumeDensity,
    check: bool = True,
    trials: int = 32,
    tol: float = 1e-9,
    seed: int = 0,
) -> VectorFieldAlongMap:
    """X_{mu,nu} = dphi . X_mu - X_nu o phi."""
    _check_charts(phi, piM, piN)
    if check:
        res = poisson_map_residual(phi, piM, piN)
        zc = E.zero_check(list(res.values()), trials=trials, tol=tol, seed=seed, guard=phi.source.guard)
        if not zc.ok:
            raise NotPoissonMap(f"map is not Poisson (residual {zc.worst:.3g} at {zc.point})")
    XM = modular_vf(piM, rhoM)
    XN = modular_vf(piN, rhoN)
    return phi.push(XM) - phi.along(XN)


def check_composition(
    phi: SmoothMap,
    psi: SmoothMap,
    piM: PoissonStructure,
    piN: PoissonStructure,
    piQ: PoissonStructure,
    rhoM: VolumeDensity,
    rhoN: VolumeDensity,
    rhoQ: VolumeDensity,
) -> VectorFieldAlongMap:
    """Residual X_{mu,lambda} - (dpsi . X_{mu,nu} + X_{nu,lambda} o phi) along psi o phi."""
    comp = phi.compose(psi)
    X_ml = map_modular_vf(comp, piM, piQ, rhoM, rhoQ)
    X_mn = map_modular_vf(phi, piM, piN, rhoM, rhoN)
    X_nl = map_modular_vf(psi, piN, piQ, rhoN, rhoQ)
    Jpsi = psi.jacobian()
    comps = []
    for c in range(psi.target.dim):
        pushed = E.add(*(phi.pull(Jpsi[c][a]) * X_mn.components[a] for a in range(phi.target.dim)))
        comps.append(X_ml.components[c] - pushed - phi.pull(X_nl.components[c]))
    return VectorFieldAlongMap(comp, comps)


def exactness_witness(
    phi: SmoothMap, piM: PoissonStructure, P: VectorFieldAlongMap, degree_cap: int = 5
) -> Expr | NoWitness:
    """Search for f with P = d_A f = -dphi . X_f (bounded polynomial degree)."""
    _check_charts(phi, piM)
    if all(c is E.ZERO for c in P.components):
        return E.ZERO
    cache: dict[str, object] = {}

    def prepare(field_: ExtField):
        cache["P"] = _ext_matrix(field_, piM)
        cache["J"] = [[field_.convert(c) for c in row] for row in phi.jacobian()]

    def op(field_: ExtField, f: Ext) -> list[Ext]:
        Xf = ext_hamiltonian(field_, cache["P"], f)
        out = []
        for row in cache["J"]:
            acc = field_.from_poly({})
            for Ji, Xi in zip(row, Xf):
                if not Ji.is_zero() and not Xi.is_zero():
                    acc = field_.add(acc, field_.mul(Ji, Xi))
            out.append(field_.scale(acc, -1))
        return out

    return witness_search(phi.source, op, P.components, degree_cap, prepare)
