"""Poisson submanifolds given as coordinate zero sets, and their holonomy.

N is the common zero set of some coordinates (the transverse ones). The
conormal bundle is spanned by the dx^m of transverse coordinates and carries
the connection nabla_alpha beta = [alpha, beta]. Transporting a conormal
frame along a cotangent path and dualizing gives the linear holonomy on the
normal bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as E
from . import mvf as M
from .expr import Chart, Expr
from .paths import CotangentPath, Piece, integrate, validate, compatibility_residual
from .poisson import PoissonStructure, VolumeDensity, bracket_1forms, make_poisson, modular_vf

__all__ = [
    "NotPoissonSubmanifold",
    "ConormalLeak",
    "SubmanifoldSpec",
    "HolonomyResult",
    "IdentityReport",
    "restrict_poisson",
    "relative_modular_vf",
    "transport",
    "verify_holonomy_identity",
    "conormal_abelian_check",
]


class NotPoissonSubmanifold(ValueError):
    pass


class ConormalLeak(ArithmeticError):
    pass


class SubmanifoldSpec:
    """N = {x^m = 0 for m transverse} inside ``chart``."""

    def __init__(self, chart: Chart, transverse: Sequence[str]):
        transverse = tuple(transverse)
        for name in transverse:
            if name not in chart.coords:
                raise ValueError(f"unknown transverse coordinate {name!r}")
        if len(set(transverse)) != len(transverse):
            raise ValueError("transverse coordinates repeat")
        self.chart = chart
        self.transverse = transverse
        self.transverse_idx = tuple(chart.index(m) for m in transverse)
        self.tangential = tuple(c for c in chart.coords if c not in transverse)
        self.tangential_idx = tuple(chart.index(c) for c in self.tangential)
        self.zero = {m: E.ZERO for m in transverse}
        guard = E.substitute(chart.guard, self.zero) if chart.guard is not None else None
        if guard is not None and isinstance(guard, E.Const):
            if guard.value <= 0:
                raise ValueError("the domain guard excludes N entirely")
            guard = None
        self.induced_chart = Chart(self.tangential, guard) if self.tangential else None
        # guard on the ambient chart that only uses tangential coordinates
        self.ambient_guard = guard

    @property
    def codim(self) -> int:
        return len(self.transverse)

    def restrict(self, e) -> Expr:
        return E.substitute(E.as_expr(e), self.zero)

    def tangent_residuals(self, pi: PoissonStructure) -> dict[tuple[int, int], Expr]:
        """pi^{jm}|_N for every j and transverse m; all must vanish."""
        out = {}
        for m in self.transverse_idx:
            for j in range(self.chart.dim):
                if j == m or (j in self.transverse_idx and j < m):
                    continue
                out[(j, m)] = self.restrict(pi.entry(j, m))
        return out

    def __repr__(self):
        return f"SubmanifoldSpec(transverse={self.transverse})"


def _zero_check(exprs, guard, trials=32, tol=1e-9, seed=0):
    return E.zero_check(exprs, trials=trials, tol=tol, seed=seed, guard=guard)


def check_submanifold(pi: PoissonStructure, N: SubmanifoldSpec, tol: float = 1e-9, seed: int = 0) -> None:
    """Raise NotPoissonSubmanifold unless sharp(dx^m) vanishes on N for transverse m.

    Vanishing of the transverse-transverse entries alone is not enough: the
    tangential entries pi^{jm} must vanish too, otherwise Hamiltonian flows
    of x^m leave N.
    """
    if pi.chart != N.chart:
        raise M.ChartMismatch("submanifold and structure live on different charts")
    res = N.tangent_residuals(pi)
    keys = list(res)
    chk = _zero_check([res[k] for k in keys], N.ambient_guard, tol=tol, seed=seed)
    if not chk.ok:
        j, m = keys[chk.index]
        names = N.chart.coords
        raise NotPoissonSubmanifold(
            f"component pi^({names[j]},{names[m]}) = {res[(j, m)]} does not vanish on N (at {chk.point})"
        )


def restrict_poisson(pi: PoissonStructure, N: SubmanifoldSpec) -> PoissonStructure:
    """The induced Poisson structure on N's chart."""
    check_submanifold(pi, N)
    if N.induced_chart is None:
        raise ValueError("N is a point; there is no induced chart")
    ch = N.induced_chart
    comps = {}
    for a, i in enumerate(N.tangential_idx):
        for b, j in enumerate(N.tangential_idx):
            if a < b:
                v = N.restrict(pi.entry(i, j))
                if v is not E.ZERO:
                    comps[(a, b)] = v
    return make_poisson(M.MultiVectorField(ch, 2, comps))


def lift_tangential(N: SubmanifoldSpec, X: M.MultiVectorField) -> M.MultiVectorField:
    """A vector field on N's chart viewed as an ambient field (zero normal part)."""
    comps = {(N.tangential_idx[a],): c for (a,), c in X.components.items()}
    return M.MultiVectorField(N.chart, 1, comps)


def relative_modular_vf(
    pi: PoissonStructure, rhoM: VolumeDensity, rhoN: VolumeDensity | None, N: SubmanifoldSpec
) -> M.MultiVectorField:
    """X_mu|_N - X_nu as an ambient vector field with components on N.

    With no transverse coordinates (N open) this is X_mu - X_nu for the two
    densities on the same chart.
    """
    check_submanifold(pi, N)
    XM = modular_vf(pi, rhoM).map_components(N.restrict)
    if N.induced_chart is None:
        return XM
    if rhoN is None:
        rhoN = VolumeDensity(N.induced_chart, 1)
    if N.codim == 0:
        # same chart; reinterpret the density on the ambient chart
        XN = modular_vf(pi, VolumeDensity(pi.chart, rhoN.rho, check=False))
        return XM - XN
    piN = restrict_poisson(pi, N)
    XN = lift_tangential(N, modular_vf(piN, VolumeDensity(N.induced_chart, rhoN.rho, check=False)))
    return XM - XN


@dataclass
class HolonomyResult:
    matrix: np.ndarray
    det: float
    ode_error: float
    leak: float
    conormal: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.matrix.size and not abs(self.det) > 1e-300:
            raise ArithmeticError("holonomy matrix is singular")


def _piece_extension(N, path, piece, extension):
    """Components of the 1-form field alpha_t (in x and t) for one piece."""
    if extension is None:
        return [E.as_expr(c) for c in piece.covector]
    return [E.as_expr(c) for c in extension]


def _connection(pi, N, path, piece, extension, tol):
    """G[m'][m](t) as expressions in t, plus a leak expression list."""
    alpha = M.one_form(pi.chart, _piece_extension(N, path, piece, extension))
    sub = path.substitution(piece)
    rows = []
    leaks = []
    for m in N.transverse_idx:
        dxm = M.DifferentialForm(pi.chart, 1, {(m,): E.ONE})
        br = bracket_1forms(pi, alpha, dxm).as_list()
        along = [E.substitute(c, sub) for c in br]
        rows.append([along[mp] for mp in N.transverse_idx])
        leaks.extend(along[j] for j in N.tangential_idx)
    # G[m'][m] = coefficient of dx^{m'} in [alpha, dx^m]
    k = N.codim
    G = [[rows[m][mp] for m in range(k)] for mp in range(k)]
    return G, leaks


def _eval_grid(exprs: list[Expr], param: str, ts: np.ndarray) -> np.ndarray:
    vals = E.evaluate_many(exprs, {param: ts}) if exprs else []
    out = np.array([np.broadcast_to(v, ts.shape) for v in vals], dtype=float)
    if out.size and not np.all(np.isfinite(out)):
        raise E.DomainError("connection coefficients are not finite along the path")
    return out


def _rk4(Gvals: np.ndarray, k: int, steps: int) -> np.ndarray:
    """Integrate C' = -G(t) C with G sampled at t_0, t_{1/2}, t_1, ... (2*steps+1 points)."""
    C = np.eye(k)
    h = 1.0 / steps
    for s in range(steps):
        G0 = Gvals[:, 2 * s].reshape(k, k)
        G1 = Gvals[:, 2 * s + 1].reshape(k, k)
        G2 = Gvals[:, 2 * s + 2].reshape(k, k)
        k1 = -G0 @ C
        k2 = -G1 @ (C + 0.5 * h * k1)
        k3 = -G1 @ (C + 0.5 * h * k2)
        k4 = -G2 @ (C + h * k3)
        C = C + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return C


def transport(
    pi: PoissonStructure,
    N: SubmanifoldSpec,
    path: CotangentPath,
    extension: Sequence | None = None,
    steps: int = 1000,
    tol: float = 1e-8,
    check_path: bool = True,
) -> HolonomyResult:
    """Linear holonomy of N along a cotangent path lying in N.

    ``extension`` gives the components of a 1-form field in (x, t) whose
    value along gamma(t) is a(t); by default the covector a(t) is extended
    as constant in space. Only single-piece paths accept an extension.
    """
    check_submanifold(pi, N)
    k = N.codim
    if k == 0:
        return HolonomyResult(np.zeros((0, 0)), 1.0, 0.0, 0.0, np.zeros((0, 0)))
    if check_path:
        res = compatibility_residual(path, pi)
        if res > tol:
            raise ValueError(f"not a cotangent path for this structure (residual {res:.3g})")
        ts = np.linspace(0, 1, 101)
        for piece in path.pieces:
            off = _eval_grid([piece.base[m] for m in N.transverse_idx], path.param, ts)
            if off.size and np.max(np.abs(off)) > tol:
                raise ValueError("base curve leaves N")
    if extension is not None and len(path.pieces) != 1:
        raise ValueError("an extension can only be given for a single-piece path")
    C_total = np.eye(k)
    C_half = np.eye(k)
    leak = 0.0
    for piece in path.pieces:
        if extension is not None:
            ext = [E.as_expr(c) for c in extension]
            mismatch = [E.substitute(c, path.substitution(piece)) - a for c, a in zip(ext, piece.covector)]
            gap = _eval_grid(mismatch, path.param, np.linspace(0, 1, 101))
            if gap.size and np.max(np.abs(gap)) > tol:
                raise ValueError(f"extension differs from the covector along the path by {np.max(np.abs(gap)):.3g}")
        G, leaks = _connection(pi, N, path, piece, extension, tol)
        ts = np.linspace(0.0, 1.0, 2 * steps + 1)
        Gvals = _eval_grid([g for row in G for g in row], path.param, ts)
        if leaks:
            lv = _eval_grid(leaks, path.param, ts)
            leak = max(leak, float(np.max(np.abs(lv))) if lv.size else 0.0)
        C_total = _rk4(Gvals, k, steps) @ C_total
        half = max(1, steps // 2)
        C_half = _rk4(Gvals[:, ::2], k, half) @ C_half if steps % 2 == 0 else C_total
    if leak > tol:
        raise ConormalLeak(f"bracket with the conormal frame has tangential part {leak:.3g}")
    h = np.linalg.inv(C_total).T
    det = float(np.linalg.det(h))
    det_half = float(1.0 / np.linalg.det(C_half))
    return HolonomyResult(h, det, abs(det - det_half), leak, C_total)


@dataclass
class IdentityReport:
    det: float
    integral: float
    loop_residual: float | None
    open_residual: float
    quad_error: float
    ode_error: float


def normal_density_ratio(N: SubmanifoldSpec, rhoM: VolumeDensity, rhoN: VolumeDensity | None) -> Expr:
    """r = rho_M / rho_N on N: the induced density on the normal bundle."""
    r = N.restrict(rhoM.rho)
    if rhoN is not None:
        r = r / rhoN.rho
    return r


def verify_holonomy_identity(
    pi: PoissonStructure,
    N: SubmanifoldSpec,
    rhoM: VolumeDensity,
    rhoN: VolumeDensity | None,
    path: CotangentPath,
    extension: Sequence | None = None,
    steps: int = 1000,
    panels: int = 64,
    order: int = 8,
) -> IdentityReport:
    """Compare ODE transport with quadrature of the relative modular field.

    For loops: det h = exp(integral). For open paths the determinant is taken
    relative to the normal densities rho_M/rho_N at the two endpoints.
    """
    hol = transport(pi, N, path, extension=extension, steps=steps)
    X = relative_modular_vf(pi, rhoM, rhoN, N)
    integral, qerr = integrate(X, path, panels=panels, order=order)
    expected = math.exp(integral)
    loop_res = abs(hol.det - expected) / expected if path.is_loop else None
    r = normal_density_ratio(N, rhoM, rhoN)
    start = dict(zip(pi.chart.coords, map(float, path.start())))
    end = dict(zip(pi.chart.coords, map(float, path.end())))
    det_vol = hol.det * E.evaluate(r, end) / E.evaluate(r, start) if r.free_vars else hol.det
    open_res = abs(det_vol - expected) / expected
    return IdentityReport(hol.det, integral, loop_res, open_res, qerr, hol.ode_error)


def conormal_abelian_check(pi: PoissonStructure, N: SubmanifoldSpec, tol: float = 1e-9, seed: int = 0) -> bool:
    """True iff [dx^m, dx^m'] restricted to N has no conormal part."""
    check_submanifold(pi, N)
    names = pi.chart.coords
    exprs = []
    for a, m in enumerate(N.transverse_idx):
        for mp in N.transverse_idx[a + 1:]:
            # [dx^m, dx^m'] = d pi^{m m'}
            p = pi.entry(m, mp)
            exprs.extend(N.restrict(E.differentiate(p, names[k])) for k in N.transverse_idx)
    if not exprs:
        return True
    return _zero_check(exprs, N.ambient_guard, tol=tol, seed=seed).ok
