"""Infinitesimal group actions, quotient volumes and moment maps.

Actions are given by generator vector fields plus structure constants; the
quotient chart and the invariant quotient map are supplied by the user.
The group itself carries the zero Poisson structure, so moment maps are
ordinary ones: xi_M = sharp(d<kappa, xi>).

Sign conventions: generators satisfy [xi^i, xi^j] = -sum_k c^k_ij xi^k, the
same relation as the hamiltonian fields of an equivariant moment map with
{kappa_i, kappa_j} = -sum_k c^k_ij kappa_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import expr as E
from . import mvf as M
from .expr import Chart, Expr
from .maps import SmoothMap, VectorFieldAlongMap, exactness_witness, map_modular_vf, poisson_map_residual
from .poisson import (
    LieAlgebraData,
    NoWitness,
    PoissonStructure,
    VolumeDensity,
    adjoint_character,
    divergence,
    make_poisson,
    modular_vf,
)

__all__ = [
    "ActionError",
    "DegenerateFrame",
    "NonInvariantDensity",
    "RankDeficientLevel",
    "GroupAction",
    "MomentMap",
    "ActionReport",
    "validate_action",
    "quotient_volume",
    "action_modular_rep",
    "check_moment",
    "moment_target",
    "moment_modular_residual",
    "ham_quotient_verify",
    "sample_level_set",
]


class ActionError(ValueError):
    pass


class DegenerateFrame(ArithmeticError):
    pass


class NonInvariantDensity(ValueError):
    pass


class RankDeficientLevel(ArithmeticError):
    pass


class GroupAction:
    """Generators xi^1..xi^d of a g-action on (chart, pi) with a quotient map."""

    def __init__(
        self,
        pi: PoissonStructure,
        algebra: LieAlgebraData,
        generators: Sequence[M.MultiVectorField],
        quotient_map: SmoothMap,
        quotient_pi: PoissonStructure,
        pairing=1,
    ):
        if len(generators) != algebra.dim:
            raise ActionError(f"{algebra.dim}-dimensional algebra needs {algebra.dim} generators")
        for g in generators:
            if g.chart != pi.chart or g.degree != 1:
                raise ActionError("generators must be vector fields on the structure's chart")
        if quotient_map.source != pi.chart or quotient_map.target != quotient_pi.chart:
            raise ActionError("quotient map does not connect the given charts")
        self.pi = pi
        self.chart = pi.chart
        self.algebra = algebra
        self.generators = list(generators)
        self.phi = quotient_map
        self.quotient_pi = quotient_pi
        self.pairing = E.as_expr(pairing)

    @property
    def d(self) -> int:
        return self.algebra.dim

    def generator_matrix(self) -> list[list[Expr]]:
        """Xi[i][k] = k-th generator's i-th component (n x d)."""
        cols = [g.as_list() for g in self.generators]
        return [[cols[k][i] for k in range(self.d)] for i in range(self.chart.dim)]


@dataclass
class MomentMap:
    """Components kappa_i = <kappa, e_i> on the ambient chart."""

    components: list[Expr]

    def __post_init__(self):
        self.components = [E.as_expr(c) for c in self.components]


@dataclass
class ActionReport:
    residuals: dict[str, float] = field(default_factory=dict)
    failures: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def record(self, name: str, check: E.ZeroCheck) -> None:
        self.residuals[name] = check.worst
        if not check.ok:
            self.failures[name] = check.point

    def raise_if_failed(self) -> None:
        if self.failures:
            name, point = next(iter(self.failures.items()))
            raise ActionError(f"invariant {name!r} fails at {point}")


def validate_action(
    act: GroupAction, trials: int = 32, tol: float = 1e-9, seed: int = 0, rank_tol: float = 1e-8
) -> ActionReport:
    """Check structure constants, invariance of pi and phi, Poisson-ness of phi, rank."""
    rep = ActionReport()
    g = act.algebra
    guard = act.chart.guard
    gens = act.generators
    comm = []
    for i in range(g.dim):
        for j in range(i + 1, g.dim):
            lhs = M.schouten(gens[i], gens[j])
            for k in range(g.dim):
                c = g.const(i, j, k)
                if c:
                    lhs = lhs + gens[k].scale(E.const(c))
            comm.extend(lhs.components.values())
    rep.record("structure_constants", E.zero_check(comm, trials, tol, seed, guard, act.chart.coords))
    inv = []
    for x in gens:
        inv.extend(M.schouten(x, act.pi.bivector).components.values())
    rep.record("pi_invariance", E.zero_check(inv, trials, tol, seed, guard, act.chart.coords))
    proj = []
    for x in gens:
        proj.extend(act.phi.push(x).components)
    rep.record("phi_invariance", E.zero_check(proj, trials, tol, seed, guard, act.chart.coords))
    pm = list(poisson_map_residual(act.phi, act.pi, act.quotient_pi).values())
    rep.record("phi_poisson", E.zero_check(pm, trials, tol, seed, guard, act.chart.coords))
    if g.dim:
        Xi = act.generator_matrix()
        pts = E.sample_points(act.chart.coords, trials, seed=seed, guard=guard)
        flat = [e for row in Xi for e in row]
        vals = E.evaluate_many(flat, pts)
        arr = np.array([np.broadcast_to(v, (trials,)) for v in vals]).reshape(act.chart.dim, g.dim, trials)
        smin = np.array([np.linalg.svd(arr[:, :, s], compute_uv=False)[-1] for s in range(trials)])
        worst = int(np.argmin(smin))
        rep.residuals["generator_rank"] = float(smin[worst])
        if smin[worst] <= rank_tol:
            rep.failures["generator_rank"] = {n: float(pts[n][worst]) for n in act.chart.coords}
    return rep


# ---------------------------------------------------------------------------
# quotient volume


def _frame_density(act: GroupAction) -> tuple[Expr, Expr]:
    """det [[Xi^T],[D phi]] and det(Xi^T Xi)."""
    Xi = act.generator_matrix()
    n, d = act.chart.dim, act.d
    top = [[Xi[i][k] for i in range(n)] for k in range(d)]
    A = top + [list(row) for row in act.phi.jacobian()]
    if len(A) != n:
        raise DegenerateFrame(f"dim g ({d}) + dim quotient ({act.phi.target.dim}) != {n}")
    gram = [[E.add(*(Xi[i][a] * Xi[i][b] for i in range(n))) for b in range(d)] for a in range(d)]
    return M.determinant(A), M.determinant(gram)


def _orient(rho: Expr, chart: Chart, seed: int = 0, trials: int = 64) -> Expr:
    """Return rho or -rho, whichever is positive on the samples."""
    if isinstance(rho, E.Const):
        if rho.value == 0:
            raise DegenerateFrame("frame determinant vanishes")
        return rho if rho.value > 0 else -rho
    pts = E.sample_points(chart.coords, trials, seed=seed, guard=chart.guard, exprs=[rho])
    (v,) = E.evaluate_many([rho], pts)
    v = np.broadcast_to(v, (trials,))
    if np.all(v > 0):
        return rho
    if np.all(v < 0):
        return -rho
    raise DegenerateFrame("frame determinant changes sign or vanishes on the domain")


def quotient_volume(act: GroupAction, nu: VolumeDensity, seed: int = 0) -> VolumeDensity:
    """Density of mu = (mu_G ^ phi^*nu) / <mu_G, xi^1 ^ ... ^ xi^d>.

    Evaluating mu on the frame (xi, horizontal lifts) shows that mu_G drops
    out: rho = (nu o phi) * det[[Xi^T],[D phi]] / det(Xi^T Xi).
    """
    if nu.chart != act.phi.target:
        raise ActionError("nu must live on the quotient chart")
    detA, gram = _frame_density(act)
    rho = act.phi.pull(nu.rho) * detA / gram if act.d else act.phi.pull(nu.rho) * detA
    rho = E.detect_constant(_orient(rho, act.chart, seed), guard=act.chart.guard)
    return VolumeDensity(act.chart, rho, check=False)


@dataclass
class ActionModularResult:
    field: M.MultiVectorField
    density: VolumeDensity
    projectable: E.ZeroCheck
    related: E.ZeroCheck
    quotient_field: M.MultiVectorField


def action_modular_rep(
    act: GroupAction, nu: VolumeDensity, trials: int = 64, tol: float = 1e-9, seed: int = 0
) -> ActionModularResult:
    """X_mu for the quotient volume, with projectability and relatedness residuals."""
    mu = quotient_volume(act, nu, seed=seed)
    X = modular_vf(act.pi, mu)
    proj = []
    for x in act.generators:
        proj.extend(act.phi.push(M.schouten(x, X)).components)
    projectable = E.zero_check(proj, trials, tol, seed, act.chart.guard)
    Xmn = map_modular_vf(act.phi, act.pi, act.quotient_pi, mu, nu, check=False)
    related = Xmn.check_zero(trials, tol, seed)
    return ActionModularResult(X, mu, projectable, related, modular_vf(act.quotient_pi, nu))


# ---------------------------------------------------------------------------
# moment maps


def check_moment(act: GroupAction, kappa: MomentMap, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> bool:
    """xi^i = sharp(d kappa_i) for every generator."""
    if len(kappa.components) != act.d:
        raise ActionError(f"moment map needs {act.d} components")
    res = []
    for x, k in zip(act.generators, kappa.components):
        res.extend((x - act.pi.hamiltonian_vf(k)).components.values())
    return E.zero_check(res, trials, tol, seed, act.chart.guard).ok


def moment_target(g: LieAlgebraData, coords: Sequence[str] | None = None) -> PoissonStructure:
    """Target structure for moment maps: {k_i, k_j} = -sum_k c^k_ij k_k."""
    coords = tuple(coords) if coords else tuple(f"k{i + 1}" for i in range(g.dim))
    ch = Chart(coords)
    ks = ch.variables()
    comps = {}
    for i in range(g.dim):
        for j in range(i + 1, g.dim):
            terms = [E.const(-g.const(i, j, k)) * ks[k] for k in range(g.dim) if g.const(i, j, k)]
            if terms:
                comps[(i, j)] = E.add(*terms)
    return make_poisson(M.MultiVectorField(ch, 2, comps))


@dataclass
class MomentResidual:
    field: VectorFieldAlongMap
    theta0: list[Fraction]
    constant: list[Fraction] | None
    sign: int | None
    residual: float
    witness: Expr | NoWitness | None


def moment_modular_residual(
    kappa: MomentMap,
    pi: PoissonStructure,
    rhoM: VolumeDensity,
    g: LieAlgebraData,
    generators: Sequence[M.MultiVectorField] | None = None,
    degree_cap: int = 3,
    trials: int = 32,
    tol: float = 1e-9,
    seed: int = 0,
) -> MomentResidual:
    """The modular field of kappa: M -> g^* (Lebesgue on g^*), compared with theta_0.

    ``sign`` is +1 or -1 when the field equals +theta_0 or -theta_0
    (0 when theta_0 = 0 and the field vanishes, None if neither).
    For unimodular g an exactness witness is searched at ``degree_cap``.
    """
    if generators is None:
        generators = [pi.hamiltonian_vf(k) for k in kappa.components]
    guard = pi.chart.guard
    div = [divergence(x, rhoM) for x in generators]
    chk = E.zero_check(div, trials, tol, seed, guard)
    if not chk.ok:
        raise NonInvariantDensity(f"density is not invariant under generator {chk.index + 1} (at {chk.point})")
    target = moment_target(g)
    kmap = SmoothMap(pi.chart, target.chart, kappa.components)
    X = map_modular_vf(kmap, pi, target, rhoM, VolumeDensity(target.chart, 1), trials=trials, tol=tol, seed=seed)
    theta = adjoint_character(g)
    constant = None
    if all(isinstance(c, E.Const) for c in X.components):
        constant = [c.value for c in X.components]
    sign = None
    res = float("inf")
    for s in (1, -1):
        diff = [c - E.const(s * t) for c, t in zip(X.components, theta)]
        zc = E.zero_check(diff, trials, tol, seed, guard)
        if zc.ok:
            sign = s if any(theta) else 0
            res = zc.worst
            break
        res = min(res, zc.worst)
    if constant is not None and sign is not None and sign != 0:
        # exact rational confirmation of the constant part
        if constant != [sign * t for t in theta]:
            sign = None
    witness = None
    if not any(theta):
        witness = exactness_witness(kmap, pi, X, degree_cap)
    return MomentResidual(X, theta, constant, sign, res, witness)


# ---------------------------------------------------------------------------
# hamiltonian quotients


def sample_level_set(
    kappa: MomentMap,
    chart: Chart,
    level: Sequence[float],
    count: int = 200,
    seed: int = 0,
    newton_steps: int = 50,
    tol: float = 1e-12,
    rank_tol: float = 1e-8,
) -> np.ndarray:
    """Points on kappa = level by Gauss-Newton projection of box samples (n x count)."""
    names = chart.coords
    d = len(kappa.components)
    if d == 0:
        pts = E.sample_points(names, count, seed=seed, guard=chart.guard)
        return np.array([np.broadcast_to(pts[n], (count,)) for n in names], dtype=float)
    jac = [[E.differentiate(k, x) for x in names] for k in kappa.components]
    fk = E.compile_exprs(kappa.components, names)
    fj = E.compile_exprs([e for row in jac for e in row], names)
    pts = E.sample_points(names, count, seed=seed, guard=chart.guard)
    X = np.array([pts[n] for n in names], dtype=float)
    target = np.asarray(level, dtype=float).reshape(d, 1)
    for _ in range(newton_steps):
        with np.errstate(all="ignore"):
            F = np.array([np.broadcast_to(v, (count,)) for v in fk(*X)]) - target
            J = np.array([np.broadcast_to(v, (count,)) for v in fj(*X)]).reshape(d, len(names), count)
        if np.max(np.abs(F)) < tol:
            break
        for s in range(count):
            Js = J[:, :, s]
            step, *_ = np.linalg.lstsq(Js, F[:, s], rcond=None)
            X[:, s] -= step
    with np.errstate(all="ignore"):
        F = np.array([np.broadcast_to(v, (count,)) for v in fk(*X)]) - target
        J = np.array([np.broadcast_to(v, (count,)) for v in fj(*X)]).reshape(d, len(names), count)
    if not np.all(np.isfinite(F)) or np.max(np.abs(F)) > 1e-9:
        raise E.SamplingError("Newton projection onto the level set did not converge")
    for s in range(count):
        sv = np.linalg.svd(J[:, :, s], compute_uv=False)
        if sv[-1] <= rank_tol:
            raise RankDeficientLevel(f"d kappa has rank < {d} at {dict(zip(names, X[:, s]))}")
    return X


def _form_on_vectors(form: M.DifferentialForm, comps_vals: dict, V: np.ndarray) -> float:
    """form(v_1..v_k) with component values given and V of shape (dim, k)."""
    total = 0.0
    for I, val in comps_vals.items():
        total += val * np.linalg.det(V[list(I), :])
    return total


@dataclass
class HamQuotientReport:
    density: Expr
    field: M.MultiVectorField
    tangency: float
    relatedness: float
    samples: int
    level_error: float


def ham_quotient_verify(
    act: GroupAction,
    kappa: MomentMap,
    tau: M.DifferentialForm,
    level: Sequence[float],
    samples: int = 200,
    seed: int = 0,
    test_functions: Sequence[Expr] | None = None,
    density: Expr | None = None,
) -> HamQuotientReport:
    """Check that X_mubar is tangent to the level set and related to X_tau.

    mubar = (mu_G ^ phi^*tau ^ dkappa_1 ^ ... ^ dkappa_d) / <mu_G, xi^1..xi^d>.
    With psi = contraction of dx^1..dx^n by the generators, the numerator
    form equals T * psi on the level set, and mubar = T dx^1..dx^n.
    Relatedness uses the reduced modular field computed independently:
    X_tau(f) = (L_{X_f} tau)(V) / tau(V) for V spanning the reduced tangent space.
    """
    if not act.algebra.is_abelian():
        raise ActionError("hamiltonian quotients are only supported for abelian algebras")
    if len(kappa.components) != act.d:
        raise ActionError(f"moment map needs {act.d} components")
    Q = act.phi.target
    n, d = act.chart.dim, act.d
    k = n - 2 * d
    if tau.chart != Q or tau.degree != k:
        raise ActionError(f"tau must be a {k}-form on the quotient chart")
    names = act.chart.coords
    # numerator form omega = phi^*tau ^ dkappa_1 ^ ... ^ dkappa_d
    J = act.phi.jacobian()
    pulled = {}
    for I, c in tau.components.items():
        # phi^*(dy^I) has components det of rows I of J over column sets
        for cols in M.all_index_tuples(n, k):
            sub = [[J[a][i] for i in cols] for a in I]
            det = M.determinant(sub)
            if det is not E.ZERO:
                pulled[cols] = pulled.get(cols, E.ZERO) + act.phi.pull(c) * det
    omega = M.DifferentialForm(act.chart, k, pulled)
    for kc in kappa.components:
        omega = M.wedge(omega, M.differential(act.chart, kc))
    # psi_J = det[xi^1..xi^d | e_J]
    Xi = act.generator_matrix()
    psi = {}
    for Jt in M.all_index_tuples(n, n - d):
        mat = [[Xi[i][a] for a in range(d)] + [E.ONE if i == j else E.ZERO for j in Jt] for i in range(n)]
        v = M.determinant(mat)
        if v is not E.ZERO:
            psi[Jt] = v
    num = E.add(*(omega[Jt] * v for Jt, v in psi.items()))
    den = E.add(*(v * v for v in psi.values()))
    T = num / den if density is None else E.as_expr(density)
    X = modular_vf(act.pi, VolumeDensity(act.chart, T, check=False))
    pts = sample_level_set(kappa, act.chart, level, samples, seed=seed)
    point = {nm: pts[i] for i, nm in enumerate(names)}
    # (a) tangency
    dk = [M.apply_vf(X, kc) for kc in kappa.components]
    tang = np.array([np.broadcast_to(v, (samples,)) for v in E.evaluate_many(dk, point)])
    tangency = float(np.max(np.abs(tang))) if tang.size else 0.0
    # also check that omega is basic-compatible: contraction by generators vanishes
    # (b) relatedness
    if test_functions is None:
        qs = Q.variables()
        test_functions = list(qs) + [qs[0] * qs[-1] + qs[0] ** 2, qs[-1] ** 3 - qs[0]]
    Jphi = np.array([np.broadcast_to(v, (samples,)) for v in E.evaluate_many([e for row in J for e in row], point)])
    Jphi = Jphi.reshape(Q.dim, n, samples)
    Jk = [[E.differentiate(kc, x) for x in names] for kc in kappa.components]
    Jkv = np.array([np.broadcast_to(v, (samples,)) for v in E.evaluate_many([e for row in Jk for e in row], point)])
    Jkv = Jkv.reshape(d, n, samples)
    imgs = [np.broadcast_to(v, (samples,)) for v in E.evaluate_many(act.phi.components, point)]
    qpoint = {nm: imgs[i] for i, nm in enumerate(Q.coords)}
    tau_vals = {I: np.broadcast_to(v, (samples,)) for I, v in zip(tau.components, E.evaluate_many(list(tau.components.values()), qpoint))}
    worst = 0.0
    for f in test_functions:
        lhs_e = M.apply_vf(X, act.phi.pull(f))
        Lt = M.lie_derivative(act.quotient_pi.hamiltonian_vf(f), tau)
        lhs = np.broadcast_to(E.evaluate_many([lhs_e], point)[0], (samples,))
        Lvals = {I: np.broadcast_to(v, (samples,)) for I, v in zip(Lt.components, E.evaluate_many(list(Lt.components.values()), qpoint))}
        for s in range(samples):
            # kernel of d kappa, pushed forward, spans the reduced tangent space
            if d:
                _, sv, vt = np.linalg.svd(Jkv[:, :, s])
                ker = vt[d:].T
            else:
                ker = np.eye(n)
            img = Jphi[:, :, s] @ ker
            u, sv2, _ = np.linalg.svd(img)
            V = u[:, :k]
            t_at = {I: v[s] for I, v in tau_vals.items()}
            l_at = {I: v[s] for I, v in Lvals.items()}
            tv = _form_on_vectors(tau, t_at, V)
            if abs(tv) < 1e-12:
                raise DegenerateFrame("tau vanishes on the reduced tangent space")
            rhs = _form_on_vectors(Lt, l_at, V) / tv
            worst = max(worst, abs(lhs[s] - rhs) / (1.0 + abs(rhs)))
    lvl = [np.broadcast_to(v, (samples,)) for v in E.evaluate_many(kappa.components, point)]
    level_err = float(max(np.max(np.abs(v - l)) for v, l in zip(lvl, level))) if lvl else 0.0
    return HamQuotientReport(T, X, tangency, worst, samples, level_err)
