"""Cotangent paths and path integrals of vector fields along them.

A cotangent path is a covector curve a(t) over a base curve gamma(t) with
sharp(a) = dgamma/dt. Paths produced by concatenation are piecewise; every
piece is parametrized by t in [0, 1] and integrated separately, so corners
never fall inside a quadrature panel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as E
from . import mvf as M
from .expr import Chart, Expr
from .maps import SmoothMap, VectorFieldAlongMap, map_modular_vf
from .poisson import PoissonStructure, VolumeDensity

__all__ = [
    "PathError",
    "CotangentPath",
    "Piece",
    "validate",
    "compatibility_residual",
    "path_integral",
    "integrate",
    "modular_character",
    "concat",
    "reverse",
    "reparametrize",
]

PARAM = "t"


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    base: tuple[Expr, ...]
    covector: tuple[Expr, ...]


class CotangentPath:
    """Piecewise closed-form cotangent path.

    ``base`` has one expression in ``t`` per chart coordinate; ``covector`` has
    one per covector component. The covector usually lives on the same chart,
    but for paths in a pullback algebroid it has the target dimension.
    """

    def __init__(
        self,
        chart: Chart,
        base: Sequence | None = None,
        covector: Sequence | None = None,
        loop: bool = False,
        pieces: Sequence[Piece] | None = None,
        param: str = PARAM,
    ):
        self.chart = chart
        self.param = param
        if pieces is None:
            if base is None or covector is None:
                raise PathError("need base and covector curves")
            pieces = [Piece(tuple(E.as_expr(b) for b in base), tuple(E.as_expr(c) for c in covector))]
        self.pieces = list(pieces)
        for pc in self.pieces:
            if len(pc.base) != chart.dim:
                raise PathError(f"base curve needs {chart.dim} components, got {len(pc.base)}")
            for e in pc.base + pc.covector:
                extra = e.free_vars - {param}
                if extra:
                    raise PathError(f"path expression {e} depends on {sorted(extra)}, not only on {param}")
        dims = {len(pc.covector) for pc in self.pieces}
        if len(dims) != 1:
            raise PathError("pieces disagree on covector dimension")
        self.covector_dim = dims.pop()
        self.is_loop = loop
        if loop:
            gap = np.max(np.abs(self.start() - self.end()))
            if gap > 1e-9:
                raise PathError(f"loop does not close: endpoint gap {gap:.3g}")

    def _eval_base(self, piece: Piece, t) -> np.ndarray:
        vals = E.evaluate_many(list(piece.base), {self.param: np.asarray(t, dtype=float)})
        return np.array([np.broadcast_to(v, np.shape(t)) for v in vals], dtype=float)

    def start(self) -> np.ndarray:
        return self._eval_base(self.pieces[0], 0.0)

    def end(self) -> np.ndarray:
        return self._eval_base(self.pieces[-1], 1.0)

    def base_point(self, piece: int, t: float) -> dict[str, float]:
        vals = self._eval_base(self.pieces[piece], float(t))
        return dict(zip(self.chart.coords, map(float, vals)))

    def substitution(self, piece: Piece) -> dict[str, Expr]:
        return dict(zip(self.chart.coords, piece.base))

    def __len__(self):
        return len(self.pieces)

    def __repr__(self):
        return f"CotangentPath(pieces={len(self.pieces)}, loop={self.is_loop})"


def _anchor_exprs(piece: Piece, path: CotangentPath, pi: PoissonStructure, phi: SmoothMap | None) -> list[Expr]:
    """Anchor of the covector along the base curve, as expressions in t."""
    cov = list(piece.covector)
    if phi is not None:
        J = phi.jacobian()
        cov = [E.add(*(J[a][i] * cov[a] for a in range(phi.target.dim))) for i in range(phi.source.dim)]
        # J depends on source coordinates; the base substitution below handles it
    elif len(cov) != path.chart.dim:
        raise PathError("covector dimension differs from the chart; pass the map")
    n = pi.dim
    sub = path.substitution(piece)
    out = []
    for j in range(n):
        terms = [E.substitute(pi.entry(i, j), sub) * E.substitute(cov[i], sub) for i in range(n) if i != j]
        out.append(E.add(*terms) if terms else E.ZERO)
    return out


def compatibility_residual(
    path: CotangentPath, pi: PoissonStructure, grid: int = 200, phi: SmoothMap | None = None
) -> float:
    """max over the grid of |anchor(a) - dgamma/dt| (sup norm)."""
    if pi.chart != path.chart:
        raise M.ChartMismatch("path and structure live on different charts")
    ts = np.linspace(0.0, 1.0, grid + 1)
    worst = 0.0
    for piece in path.pieces:
        anchor = _anchor_exprs(piece, path, pi, phi)
        vel = [E.differentiate(b, path.param) for b in piece.base]
        diffs = [a - v for a, v in zip(anchor, vel)]
        vals = E.evaluate_many(diffs, {path.param: ts})
        for v in vals:
            v = np.broadcast_to(v, ts.shape)
            if not np.all(np.isfinite(v)):
                raise E.DomainError("non-finite value while validating the path")
            worst = max(worst, float(np.max(np.abs(v))))
    return worst


def validate(
    path: CotangentPath, pi: PoissonStructure, grid: int = 200, tol: float = 1e-8, phi: SmoothMap | None = None
) -> bool:
    """True iff anchor(a) = dgamma/dt on the grid within ``tol``."""
    return compatibility_residual(path, pi, grid, phi) <= tol


# ---------------------------------------------------------------------------
# quadrature


def _gauss_nodes(panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _quad(f: Callable[[np.ndarray], np.ndarray], panels: int, order: int) -> float:
    nodes, weights = _gauss_nodes(panels, order)
    vals = np.broadcast_to(np.asarray(f(nodes), dtype=float), nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise E.DomainError("integrand is not finite along the path")
    return float(np.dot(weights, vals))


def _integrand(X, piece: Piece, path: CotangentPath) -> Expr:
    if isinstance(X, VectorFieldAlongMap):
        comps = X.components
        if X.phi.source != path.chart:
            raise M.ChartMismatch("vector field along a map must have the path's chart as source")
    else:
        if X.degree != 1:
            raise M.DegreeError("path integrals take vector fields")
        if X.chart != path.chart:
            raise M.ChartMismatch("vector field and path live on different charts")
        comps = X.as_list()
    if len(comps) != path.covector_dim:
        raise PathError(f"vector field has {len(comps)} components, covector has {path.covector_dim}")
    sub = path.substitution(piece)
    terms = [E.substitute(c, sub) * a for c, a in zip(comps, piece.covector) if c is not E.ZERO and a is not E.ZERO]
    return E.add(*terms) if terms else E.ZERO


def integrate(X, path: CotangentPath, panels: int = 64, order: int = 8) -> tuple[float, float]:
    """(value, error estimate) of the integral of <X|gamma, a> dt over the path.

    The estimate is the difference against a run with half the panels.
    """
    total = 0.0
    coarse = 0.0
    for piece in path.pieces:
        e = _integrand(X, piece, path)
        if isinstance(e, E.Const):
            total += float(e.value)
            coarse += float(e.value)
            continue
        f = E.compile_exprs([e], [path.param])

        def g(ts, f=f):
            with np.errstate(all="ignore"):
                return f(ts)[0]

        total += _quad(g, panels, order)
        coarse += _quad(g, max(1, panels // 2), order)
    return total, abs(total - coarse)


def path_integral(X, path: CotangentPath, quadrature_order: int = 8, panels: int = 64) -> float:
    return integrate(X, path, panels=panels, order=quadrature_order)[0]


def modular_character(
    phi: SmoothMap,
    piM: PoissonStructure,
    piN: PoissonStructure,
    rhoM: VolumeDensity,
    rhoN: VolumeDensity,
    path: CotangentPath,
    panels: int = 64,
    order: int = 8,
) -> float:
    """exp(2 * integral of X_{mu,nu}) along a path in the pullback algebroid."""
    X = map_modular_vf(phi, piM, piN, rhoM, rhoN)
    value, _ = integrate(X, path, panels=panels, order=order)
    return math.exp(2.0 * value)


# ---------------------------------------------------------------------------
# composition of paths


def concat(a1: CotangentPath, a2: CotangentPath, tol: float = 1e-9) -> CotangentPath:
    if a1.chart != a2.chart or a1.param != a2.param:
        raise PathError("paths live on different charts")
    if a1.covector_dim != a2.covector_dim:
        raise PathError("paths have different covector dimensions")
    gap = float(np.max(np.abs(a1.end() - a2.start())))
    if gap > tol:
        raise PathError(f"endpoint mismatch: gap {gap:.3g}")
    pieces = a1.pieces + a2.pieces
    closes = float(np.max(np.abs(a1.start() - a2.end()))) <= tol
    return CotangentPath(a1.chart, pieces=pieces, loop=closes, param=a1.param)


def _reverse_piece(piece: Piece, param: str) -> Piece:
    s = E.var(param)
    flip = {param: 1 - s}
    return Piece(
        tuple(E.substitute(b, flip) for b in piece.base),
        tuple(-E.substitute(c, flip) for c in piece.covector),
    )


def reverse(a: CotangentPath) -> CotangentPath:
    """Opposite orientation: base gamma(1-t) and covector -a(1-t)."""
    pieces = [_reverse_piece(p, a.param) for p in reversed(a.pieces)]
    return CotangentPath(a.chart, pieces=pieces, loop=a.is_loop, param=a.param)


def reparametrize(a: CotangentPath, tau: Expr) -> CotangentPath:
    """Pull back by a monotone map tau: [0,1] -> [0,1] (tau(0)=0, tau(1)=1).

    The covector is multiplied by dtau/dt so the result is again a cotangent path.
    """
    dtau = E.differentiate(tau, a.param)
    sub = {a.param: tau}
    pieces = [
        Piece(
            tuple(E.substitute(b, sub) for b in p.base),
            tuple(E.substitute(c, sub) * dtau for c in p.covector),
        )
        for p in a.pieces
    ]
    return CotangentPath(a.chart, pieces=pieces, loop=a.is_loop, param=a.param)
