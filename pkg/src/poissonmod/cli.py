"""Manifest-driven command-line front end.

A manifest is a JSON file describing a chart, a Poisson bivector and any of
the optional blocks (map, submanifold, path, action, moment, ham). Every
subcommand reads the blocks it needs, runs the corresponding check and
prints a report. Exit codes: 0 pass, 1 fail, 2 input error, 3 numerical
failure, 4 inconclusive.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import expr as E
from . import mvf as M
from .exact import NonPolynomialInput
from .expr import Chart, Expr
from .fixtures import DEFAULT_TOLERANCES, emit_fixtures
from .holonomy import (
    ConormalLeak,
    NotPoissonSubmanifold,
    SubmanifoldSpec,
    conormal_abelian_check,
    relative_modular_vf,
    verify_holonomy_identity,
)
from .maps import NotPoissonMap, SmoothMap, closedness_residuals, map_modular_vf, poisson_map_residual
from .paths import CotangentPath, PathError, compatibility_residual, integrate
from .poisson import (
    JacobiFailed,
    LieAlgebraData,
    NonPositiveDensity,
    NoWitness,
    PoissonStructure,
    SecondOrderResidue,
    VolumeDensity,
    hamiltonian_witness,
    make_poisson,
    modular_vf,
)
from .reduction import (
    ActionError,
    GroupAction,
    MomentMap,
    NonInvariantDensity,
    action_modular_rep,
    ham_quotient_verify,
    moment_modular_residual,
    validate_action,
)

__all__ = ["ManifestError", "Tolerances", "Report", "run", "main", "field_text", "COMMANDS", "EXIT_CODES"]

EXIT_CODES = {"pass": 0, "fail": 1, "input": 2, "numerical": 3, "inconclusive": 4}
TEXT_LIMIT = 400


class ManifestError(ValueError):
    """Invalid manifest; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Tolerances:
    """zero_tol bounds sampled symbolic identities; ode_tol bounds quadrature and ODE results."""

    zero_tol: float = DEFAULT_TOLERANCES["zero_tol"]
    ode_tol: float = DEFAULT_TOLERANCES["ode_tol"]
    grid: int = DEFAULT_TOLERANCES["grid"]
    trials: int = DEFAULT_TOLERANCES["trials"]
    seed: int = DEFAULT_TOLERANCES["seed"]
    steps: int = DEFAULT_TOLERANCES["steps"]
    degree_cap: int = DEFAULT_TOLERANCES["degree_cap"]
    panels: int = DEFAULT_TOLERANCES["panels"]

    @classmethod
    def from_manifest(cls, block: dict | None) -> "Tolerances":
        block = block or {}
        if not isinstance(block, dict):
            raise ManifestError("tolerances", "must be an object")
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in block.items():
            if k not in known:
                raise ManifestError(f"tolerances.{k}", "unknown tolerance")
            try:
                kw[k] = float(v) if k in ("zero_tol", "ode_tol") else int(v)
            except (TypeError, ValueError):
                raise ManifestError(f"tolerances.{k}", f"not a number: {v!r}") from None
        return cls(**kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Report:
    command: str
    verdict: str
    residuals: dict[str, float] = field(default_factory=dict)
    witness: dict[str, str] = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    version: str = __version__

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "verdict": self.verdict,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "witness": dict(self.witness),
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
            "version": self.version,
        }

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]


# ---------------------------------------------------------------------------
# rendering


def _clip(text: str) -> str:
    return text if len(text) <= TEXT_LIMIT else text[: TEXT_LIMIT - 3] + "..."


def field_text(components: Sequence[Expr], names: Sequence[str]) -> str:
    """Render a vector field as e.g. ``-∂b`` or ``x*∂y + (1 + z)*∂z``."""
    terms = []
    for c, n in zip(components, names):
        if c is E.ZERO:
            continue
        if c is E.ONE:
            terms.append(f"∂{n}")
        elif c == E.const(-1):
            terms.append(f"-∂{n}")
        else:
            t = E.to_text(c)
            if isinstance(c, (E.Add,)):
                t = f"({t})"
            terms.append(f"{t}*∂{n}")
    if not terms:
        return "0"
    text = terms[0]
    for t in terms[1:]:
        text += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
    return _clip(text)


def _num(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# manifest loading


def _expect(block: dict, key: str, where: str, kind=None):
    if not isinstance(block, dict):
        raise ManifestError(where, "must be an object")
    if key not in block:
        raise ManifestError(f"{where}.{key}" if where else key, "missing")
    val = block[key]
    if kind is not None and not isinstance(val, kind):
        raise ManifestError(f"{where}.{key}" if where else key, f"expected {getattr(kind, '__name__', kind)}")
    return val


def _parse(text, chart: Chart, where: str, extra: Sequence[str] = ()) -> Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text) if isinstance(text, float) else str(text)
    if not isinstance(text, str):
        raise ManifestError(where, f"expected an expression string, got {type(text).__name__}")
    try:
        return E.parse(text, chart, extra_vars=extra)
    except E.ParseError as exc:
        raise ManifestError(where, f"{exc} (at character {exc.position})") from None


def _chart(coords, guard, where: str) -> Chart:
    if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
        raise ManifestError(where, "must be a list of names")
    try:
        ch = Chart(tuple(coords))
    except ValueError as exc:
        raise ManifestError(where, str(exc)) from None
    if guard is None:
        return ch
    g = _parse(guard, ch, where.rsplit(".", 1)[0] + ".guard" if "." in where else "guard")
    return Chart(ch.coords, g)


def _bivector(chart: Chart, entries, where: str) -> M.MultiVectorField:
    if not isinstance(entries, list):
        raise ManifestError(where, "must be a list of {i, j, expr}")
    triples = []
    for k, ent in enumerate(entries):
        loc = f"{where}[{k}]"
        i = _expect(ent, "i", loc, str)
        j = _expect(ent, "j", loc, str)
        for nm, key in ((i, "i"), (j, "j")):
            if nm not in chart.coords:
                raise ManifestError(f"{loc}.{key}", f"{nm!r} is not a coordinate of the chart")
        if i == j:
            raise ManifestError(loc, "diagonal entry of an antisymmetric bivector")
        triples.append((i, j, _parse(_expect(ent, "expr", loc), chart, f"{loc}.expr")))
    return M.bivector(chart, triples)


def _expr_list(chart: Chart, items, where: str, length: int | None = None, extra=()) -> list[Expr]:
    if not isinstance(items, list):
        raise ManifestError(where, "must be a list of expressions")
    if length is not None and len(items) != length:
        raise ManifestError(where, f"expected {length} entries, got {len(items)}")
    return [_parse(t, chart, f"{where}[{k}]", extra) for k, t in enumerate(items)]


def _density(chart: Chart, text, where: str, tol: Tolerances) -> VolumeDensity:
    rho = _parse("1" if text is None else text, chart, where)
    try:
        return VolumeDensity(chart, rho, seed=tol.seed, trials=tol.trials)
    except NonPositiveDensity as exc:
        raise ManifestError(where, str(exc)) from None


class Loaded:
    """Lazily built objects of a manifest; each accessor names its block on error."""

    def __init__(self, manifest: dict, tol: Tolerances):
        if not isinstance(manifest, dict):
            raise ManifestError("", "manifest must be a JSON object")
        self.m = manifest
        self.tol = tol
        self.chart = _chart(_expect(manifest, "coordinates", ""), manifest.get("guard"), "coordinates")
        self._pi = None

    def block(self, name: str) -> dict:
        b = self.m.get(name)
        if b is None:
            raise ManifestError(name, "block required by this subcommand is missing")
        if not isinstance(b, dict):
            raise ManifestError(name, "must be an object")
        return b

    def bivector(self) -> M.MultiVectorField:
        return _bivector(self.chart, _expect(self.m, "poisson", "", list), "poisson")

    def structure(self, chart: Chart | None = None, entries=None, where="poisson") -> PoissonStructure:
        if chart is None:
            if self._pi is None:
                self._pi = self._make(self.bivector(), "poisson")
            return self._pi
        return self._make(_bivector(chart, entries, where), where)

    def _make(self, B, where) -> PoissonStructure:
        try:
            return make_poisson(B, trials=self.tol.trials, tol=self.tol.zero_tol, seed=self.tol.seed)
        except JacobiFailed as exc:
            raise ManifestError(where, f"not a Poisson structure: {exc}") from None

    def volume(self) -> VolumeDensity:
        return _density(self.chart, self.m.get("volume"), "volume", self.tol)

    def map_block(self, block: dict, where: str) -> tuple[SmoothMap, PoissonStructure, VolumeDensity]:
        target = _chart(_expect(block, "target_coordinates", where), block.get("target_guard"), f"{where}.target_coordinates")
        comps = _expr_list(self.chart, _expect(block, "components", where), f"{where}.components", target.dim)
        phi = SmoothMap(self.chart, target, comps)
        piN = self.structure(target, block.get("target_poisson", []), f"{where}.target_poisson")
        rhoN = _density(target, block.get("target_volume"), f"{where}.target_volume", self.tol)
        return phi, piN, rhoN

    def map(self):
        return self.map_block(self.block("map"), "map")

    def submanifold(self) -> tuple[SubmanifoldSpec, VolumeDensity | None]:
        b = self.block("submanifold")
        trans = _expect(b, "transverse", "submanifold", list)
        try:
            N = SubmanifoldSpec(self.chart, trans)
        except ValueError as exc:
            raise ManifestError("submanifold.transverse", str(exc)) from None
        rhoN = None
        if N.induced_chart is not None:
            rhoN = _density(N.induced_chart, b.get("submanifold_volume"), "submanifold.submanifold_volume", self.tol)
        return N, rhoN

    def path(self, covector_dim: int | None = None) -> tuple[CotangentPath, list[Expr] | None, dict]:
        b = self.block("path")
        base = _expr_list(self.chart, _expect(b, "base", "path"), "path.base", self.chart.dim, extra=("t",))
        cov = _expr_list(self.chart, _expect(b, "covector", "path"), "path.covector", covector_dim, extra=("t",))
        loop = b.get("loop", False)
        if not isinstance(loop, bool):
            raise ManifestError("path.loop", "must be true or false")
        try:
            path = CotangentPath(self.chart, base, cov, loop=loop)
        except PathError as exc:
            raise ManifestError("path", str(exc)) from None
        ext = None
        if b.get("extension") is not None:
            ext = _expr_list(self.chart, b["extension"], "path.extension", self.chart.dim, extra=("t",))
        return path, ext, b

    def action(self) -> GroupAction:
        b = self.block("action")
        gens_raw = _expect(b, "generators", "action", list)
        d = len(gens_raw)
        consts = {}
        for k, row in enumerate(b.get("structure_constants", [])):
            loc = f"action.structure_constants[{k}]"
            if not isinstance(row, list) or len(row) != 4:
                raise ManifestError(loc, "expected [i, j, k, value] with 1-based indices")
            i, j, kk = row[:3]
            if not all(isinstance(v, int) and 1 <= v <= d for v in (i, j, kk)):
                raise ManifestError(loc, f"indices must be integers in 1..{d}")
            try:
                consts[(i - 1, j - 1, kk - 1)] = Fraction(str(row[3]))
            except (ValueError, ZeroDivisionError):
                raise ManifestError(loc, f"bad value {row[3]!r}") from None
        try:
            g = LieAlgebraData(d, consts)
        except (ValueError, JacobiFailed) as exc:
            raise ManifestError("action.structure_constants", str(exc)) from None
        gens = [
            M.vector_field(self.chart, _expr_list(self.chart, v, f"action.generators[{k}]", self.chart.dim))
            for k, v in enumerate(gens_raw)
        ]
        q = b.get("quotient")
        if q is None:
            raise ManifestError("action.quotient", "missing")
        phi, piQ, rhoQ = self.map_block(q, "action.quotient")
        pairing = _parse(b.get("pairing", "1"), self.chart, "action.pairing")
        try:
            act = GroupAction(self.structure(), g, gens, phi, piQ, pairing)
        except ActionError as exc:
            raise ManifestError("action", str(exc)) from None
        act.quotient_volume_density = rhoQ
        return act

    def moment(self, d: int) -> MomentMap:
        b = self.block("moment")
        return MomentMap(_expr_list(self.chart, _expect(b, "components", "moment"), "moment.components", d))

    def ham(self, Q: Chart, k: int) -> tuple[M.DifferentialForm, list[float]]:
        b = self.block("ham")
        comps = {}
        for n, ent in enumerate(_expect(b, "tau", "ham", list)):
            loc = f"ham.tau[{n}]"
            idx = _expect(ent, "indices", loc, list)
            if len(idx) != k or any(i not in Q.coords for i in idx):
                raise ManifestError(f"{loc}.indices", f"expected {k} coordinates of the quotient chart")
            ints = [Q.index(i) for i in idx]
            sign, key = M.sort_sign(ints)
            if sign == 0:
                raise ManifestError(f"{loc}.indices", "repeated index")
            c = _parse(_expect(ent, "expr", loc), Q, f"{loc}.expr")
            comps[key] = comps.get(key, E.ZERO) + (c if sign > 0 else -c)
        level = _expect(b, "level", "ham")
        if not isinstance(level, list):
            level = [level]
        try:
            level = [float(Fraction(str(v))) for v in level]
        except (ValueError, ZeroDivisionError):
            raise ManifestError("ham.level", "must be numbers") from None
        return M.DifferentialForm(Q, k, comps), level


# ---------------------------------------------------------------------------
# subcommands


def _zc(exprs, tol: Tolerances, guard=None) -> E.ZeroCheck:
    return E.zero_check(list(exprs), tol.trials, tol.zero_tol, tol.seed, guard)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def cmd_jacobi(L: Loaded, rep: Report) -> None:
    B = L.bivector()
    J = M.schouten(B, B)
    chk = _zc(J.components.values(), L.tol, L.chart.guard) if J.components else None
    rep.residuals["schouten_pi_pi"] = chk.worst if chk else 0.0
    ok = chk is None or chk.ok
    if not ok:
        rep.witness["failure_point"] = json.dumps(chk.point)
    rep.verdict = _verdict(ok)


def cmd_modular(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    X = modular_vf(pi, L.volume(), trials=L.tol.trials, tol=L.tol.zero_tol, seed=L.tol.seed)
    rep.witness["modular_vf"] = field_text(X.as_list(), L.chart.coords)
    chk = _zc(X.as_list(), L.tol, L.chart.guard)
    rep.witness["vanishes"] = "yes" if chk.ok else "no"
    rep.verdict = "pass"


def cmd_ham_witness(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    vf = L.m.get("vector_field")
    if vf is not None:
        X = M.vector_field(L.chart, _expr_list(L.chart, vf, "vector_field", L.chart.dim))
    else:
        X = modular_vf(pi, L.volume(), trials=L.tol.trials, tol=L.tol.zero_tol, seed=L.tol.seed)
    rep.witness["target"] = field_text(X.as_list(), L.chart.coords)
    try:
        h = hamiltonian_witness(pi, X, L.tol.degree_cap)
    except NonPolynomialInput as exc:
        raise ManifestError("vector_field" if vf is not None else "poisson", str(exc)) from None
    if isinstance(h, NoWitness):
        rep.witness["no_witness_up_to_degree"] = str(h.cap)
        rep.verdict = "inconclusive"
        return
    rep.witness["hamiltonian"] = _clip(E.to_text(h))
    chk = _zc((X - pi.hamiltonian_vf(h)).as_list(), L.tol, L.chart.guard)
    rep.residuals["x_minus_xh"] = chk.worst
    rep.verdict = _verdict(chk.ok)


def cmd_check_map(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    phi, piN, _ = L.map()
    res = list(poisson_map_residual(phi, pi, piN).values())
    chk = _zc(res, L.tol, L.chart.guard) if res else None
    rep.residuals["poisson_map"] = chk.worst if chk else 0.0
    ok = chk is None or chk.ok
    if not ok:
        rep.witness["failure_point"] = json.dumps(chk.point)
    rep.verdict = _verdict(ok)


def cmd_map_modular(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    phi, piN, rhoN = L.map()
    try:
        X = map_modular_vf(phi, pi, piN, L.volume(), rhoN, trials=L.tol.trials, tol=L.tol.zero_tol, seed=L.tol.seed)
    except NotPoissonMap as exc:
        raise ManifestError("map", str(exc)) from None
    rep.witness["map_modular_vf"] = field_text(X.components, phi.target.coords)
    rep.witness["vanishes"] = "yes" if X.check_zero(L.tol.trials, L.tol.zero_tol, L.tol.seed).ok else "no"
    closed = closedness_residuals(phi, pi, piN, X)
    chk = _zc(closed, L.tol, L.chart.guard) if closed else None
    rep.residuals["closedness"] = chk.worst if chk else 0.0
    rep.verdict = _verdict(chk is None or chk.ok)


def _integrand_field(L: Loaded, b: dict, pi: PoissonStructure):
    if b.get("integrand") is not None:
        return M.vector_field(L.chart, _expr_list(L.chart, b["integrand"], "path.integrand", L.chart.dim))
    return modular_vf(pi, L.volume(), trials=L.tol.trials, tol=L.tol.zero_tol, seed=L.tol.seed)


def cmd_path_integral(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    path, _, b = L.path(L.chart.dim)
    compat = compatibility_residual(path, pi, L.tol.grid)
    rep.residuals["compatibility"] = compat
    ok = compat <= L.tol.zero_tol
    X = _integrand_field(L, b, pi)
    value, qerr = integrate(X, path, panels=L.tol.panels)
    rep.residuals["quadrature_error"] = qerr
    ok &= qerr <= L.tol.ode_tol
    rep.witness["integral"] = _num(value)
    if b.get("hamiltonian") is not None:
        h = _parse(b["hamiltonian"], L.chart, "path.hamiltonian")
        Ih, herr = integrate(pi.hamiltonian_vf(h), path, panels=L.tol.panels)
        start = dict(zip(L.chart.coords, map(float, path.start())))
        end = dict(zip(L.chart.coords, map(float, path.end())))
        delta = E.evaluate(h, end) - E.evaluate(h, start)
        # with X_h = sharp(dh) the integral along a cotangent path is -(h(end) - h(start))
        rep.residuals["endpoint"] = abs(Ih + delta)
        rep.witness["hamiltonian_integral"] = _num(Ih)
        rep.witness["hamiltonian_increment"] = _num(delta)
        ok &= rep.residuals["endpoint"] <= L.tol.ode_tol
    rep.verdict = _verdict(ok)


def cmd_character(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    phi, piN, rhoN = L.map()
    path, _, _ = L.path(phi.target.dim)
    compat = compatibility_residual(path, pi, L.tol.grid, phi=phi)
    rep.residuals["compatibility"] = compat
    try:
        X = map_modular_vf(phi, pi, piN, L.volume(), rhoN, trials=L.tol.trials, tol=L.tol.zero_tol, seed=L.tol.seed)
    except NotPoissonMap as exc:
        raise ManifestError("map", str(exc)) from None
    value, qerr = integrate(X, path, panels=L.tol.panels)
    rep.residuals["quadrature_error"] = qerr
    rep.witness["integral"] = _num(value)
    rep.witness["character"] = _num(math.exp(2.0 * value))
    rep.verdict = _verdict(compat <= L.tol.zero_tol and qerr <= L.tol.ode_tol)


def cmd_rel_modular(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    N, rhoN = L.submanifold()
    X = relative_modular_vf(pi, L.volume(), rhoN, N)
    rep.witness["relative_modular_vf"] = field_text(X.as_list(), L.chart.coords)
    normal = [X.as_list()[m] for m in N.transverse_idx]
    tangent = _zc(normal, L.tol, N.ambient_guard).ok if normal else True
    rep.witness["tangent_to_N"] = "yes" if tangent else "no"
    abelian = conormal_abelian_check(pi, N, tol=L.tol.zero_tol, seed=L.tol.seed)
    rep.witness["conormal_abelian"] = "yes" if abelian else "no"
    res = list(N.tangent_residuals(pi).values())
    rep.residuals["poisson_submanifold"] = _zc(res, L.tol, N.ambient_guard).worst if res else 0.0
    rep.verdict = "pass"


def cmd_holonomy(L: Loaded, rep: Report) -> None:
    pi = L.structure()
    N, rhoN = L.submanifold()
    path, ext, _ = L.path(L.chart.dim)
    compat = compatibility_residual(path, pi, L.tol.grid)
    rep.residuals["compatibility"] = compat
    if compat > L.tol.zero_tol:
        raise ManifestError("path", f"not a cotangent path (residual {compat:.3g})")
    r = verify_holonomy_identity(pi, N, L.volume(), rhoN, path, extension=ext, steps=L.tol.steps, panels=L.tol.panels)
    identity = r.loop_residual if r.loop_residual is not None else r.open_residual
    rep.residuals["identity"] = identity
    rep.residuals["step_halving"] = r.ode_error
    rep.residuals["quadrature_error"] = r.quad_error
    rep.witness["det_h"] = _num(r.det)
    rep.witness["integral"] = _num(r.integral)
    rep.witness["exp_integral"] = _num(math.exp(r.integral))
    rep.verdict = _verdict(all(v <= L.tol.ode_tol for v in (identity, r.ode_error, r.quad_error)))


def cmd_quotient(L: Loaded, rep: Report) -> None:
    act = L.action()
    tol = L.tol
    va = validate_action(act, tol.trials, tol.zero_tol, tol.seed)
    for k, v in va.residuals.items():
        if k == "generator_rank":
            rep.witness["min_generator_singular_value"] = _num(v)
        else:
            rep.residuals[k] = v
    if not va.ok:
        rep.witness["failed"] = ", ".join(va.failures)
        rep.verdict = "fail"
        return
    res = action_modular_rep(act, act.quotient_volume_density, trials=2 * tol.trials, tol=tol.zero_tol, seed=tol.seed)
    rep.witness["density"] = _clip(E.to_text(res.density.rho))
    rep.witness["modular_vf"] = field_text(res.field.as_list(), L.chart.coords)
    rep.witness["quotient_modular_vf"] = field_text(res.quotient_field.as_list(), act.phi.target.coords)
    rep.residuals["projectable"] = res.projectable.worst
    rep.residuals["related"] = res.related.worst
    rep.verdict = _verdict(res.projectable.ok and res.related.ok)


def cmd_moment_check(L: Loaded, rep: Report) -> None:
    act = L.action()
    kappa = L.moment(act.d)
    tol = L.tol
    res = []
    for x, k in zip(act.generators, kappa.components):
        res.extend((x - act.pi.hamiltonian_vf(k)).as_list())
    chk = _zc(res, tol, L.chart.guard)
    rep.residuals["moment"] = chk.worst
    if not chk.ok:
        rep.verdict = "fail"
        return
    mr = moment_modular_residual(
        kappa, act.pi, L.volume(), act.algebra, act.generators,
        degree_cap=tol.degree_cap, trials=tol.trials, tol=tol.zero_tol, seed=tol.seed,
    )
    rep.witness["kappa_modular_vf"] = field_text(mr.field.components, [f"k{i + 1}" for i in range(act.d)])
    rep.witness["theta0"] = json.dumps([str(t) for t in mr.theta0])
    if mr.constant is not None:
        rep.witness["constant"] = json.dumps([str(t) for t in mr.constant])
    rep.witness["sign"] = str(mr.sign)
    if mr.witness is not None:
        rep.witness["exactness"] = (
            f"none up to degree {mr.witness.cap}" if isinstance(mr.witness, NoWitness) else _clip(E.to_text(mr.witness))
        )
    if mr.sign is None:
        rep.witness["character_mismatch"] = _num(mr.residual)
        rep.verdict = "fail"
        return
    rep.residuals["character_match"] = mr.residual
    rep.verdict = "pass"


def cmd_ham_quotient(L: Loaded, rep: Report) -> None:
    act = L.action()
    kappa = L.moment(act.d)
    Q = act.phi.target
    tau, level = L.ham(Q, L.chart.dim - 2 * act.d)
    if len(level) != act.d:
        raise ManifestError("ham.level", f"expected {act.d} values")
    r = ham_quotient_verify(act, kappa, tau, level, samples=max(200, L.tol.grid), seed=L.tol.seed)
    rep.residuals["tangency"] = r.tangency
    rep.residuals["relatedness"] = r.relatedness
    rep.residuals["level_error"] = r.level_error
    rep.witness["samples"] = str(r.samples)
    rep.verdict = _verdict(all(v <= L.tol.ode_tol for v in (r.tangency, r.relatedness, r.level_error)))


COMMANDS: dict[str, Callable[[Loaded, Report], None]] = {
    "jacobi": cmd_jacobi,
    "modular": cmd_modular,
    "ham-witness": cmd_ham_witness,
    "check-map": cmd_check_map,
    "map-modular": cmd_map_modular,
    "path-integral": cmd_path_integral,
    "character": cmd_character,
    "rel-modular": cmd_rel_modular,
    "holonomy": cmd_holonomy,
    "quotient": cmd_quotient,
    "moment-check": cmd_moment_check,
    "ham-quotient": cmd_ham_quotient,
}

_INPUT_ERRORS = (
    ManifestError,
    E.ParseError,
    M.ChartMismatch,
    M.DegreeError,
    NotPoissonSubmanifold,
    PathError,
    ActionError,
    NonPolynomialInput,
    NonInvariantDensity,
    NonPositiveDensity,
    NotPoissonMap,
    JacobiFailed,
)
_NUMERICAL_ERRORS = (E.DomainError, E.SamplingError, ConormalLeak, SecondOrderResidue, ArithmeticError, np.linalg.LinAlgError)


def _apply_overrides(tol: Tolerances, overrides: dict | None) -> Tolerances:
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(tol, k, v)
    return tol


def run(command: str, manifest: dict | str | Path, overrides: dict | None = None) -> tuple[Report, int, str | None]:
    """Run one subcommand; returns the report, the exit code and an error message.

    ``manifest`` is a parsed dict or a path to a JSON file.
    """
    if command not in COMMANDS:
        raise KeyError(f"unknown subcommand {command!r}")
    rep = Report(command, "fail")
    try:
        if not isinstance(manifest, dict):
            try:
                manifest = json.loads(Path(manifest).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ManifestError("--manifest", str(exc)) from None
            except json.JSONDecodeError as exc:
                raise ManifestError("--manifest", f"invalid JSON: {exc}") from None
        tol = _apply_overrides(
            Tolerances.from_manifest(manifest.get("tolerances") if isinstance(manifest, dict) else None), overrides
        )
        rep.tolerances = tol.as_dict()
        rep.seed = tol.seed
        L = Loaded(manifest, tol)
        COMMANDS[command](L, rep)
        bad = [k for k, v in rep.residuals.items() if not math.isfinite(v)]
        if bad:
            rep.verdict = "fail"
            return rep, EXIT_CODES["numerical"], f"numerical failure: residual {bad[0]} is not finite"
        return rep, rep.exit_code, None
    except _INPUT_ERRORS as exc:
        rep.verdict = "fail"
        return rep, EXIT_CODES["input"], f"input error: {exc}"
    except _NUMERICAL_ERRORS as exc:
        rep.verdict = "fail"
        return rep, EXIT_CODES["numerical"], f"numerical failure: {exc}"


def _print_human(rep: Report, out) -> None:
    print(f"{rep.command}: {rep.verdict}", file=out)
    for k, v in rep.residuals.items():
        print(f"  residual {k} = {v:.3e}", file=out)
    for k, v in rep.witness.items():
        print(f"  {k}: {v}", file=out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poissonmod", description="Modular classes of Poisson structures, maps and quotients.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--manifest", required=True, help="path to a JSON manifest")
        s.add_argument("--tol", type=float, help="override tolerances.zero_tol")
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--steps", type=int, help="RK4 steps for holonomy")
        s.add_argument("--panels", type=int, help="quadrature panels")
        s.add_argument("--degree", type=int, help="witness search degree cap")
        s.add_argument("--json", action="store_true", help="print the report as JSON")
    e = sub.add_parser("emit-fixtures", help="write the bundled example manifests")
    e.add_argument("directory")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "emit-fixtures":
        try:
            for path in emit_fixtures(args.directory):
                print(path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CODES["input"]
        return 0
    overrides = {
        "zero_tol": args.tol,
        "trials": args.trials,
        "seed": args.seed,
        "steps": args.steps,
        "panels": args.panels,
        "degree_cap": args.degree,
    }
    rep, code, err = run(args.command, args.manifest, overrides)
    if err is not None:
        print(err, file=sys.stderr)
        return code
    if args.json:
        print(json.dumps(rep.as_dict(), indent=2, ensure_ascii=False))
    else:
        _print_human(rep, sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
