"""Shared builders and hypothesis strategies for the test suite."""

from __future__ import annotations

import itertools

from hypothesis import settings, strategies as st

from poissonmod import expr as E
from poissonmod import mvf as M
from poissonmod.expr import Chart
from poissonmod.poisson import make_poisson

settings.register_profile("suite", max_examples=20, deadline=None, derandomize=True)
settings.load_profile("suite")


def monomials(n: int, max_degree: int) -> list[tuple[int, ...]]:
    return [m for m in itertools.product(range(max_degree + 1), repeat=n) if sum(m) <= max_degree]


def poly_from(names, coeffs: dict[tuple[int, ...], int]) -> E.Expr:
    vs = [E.var(n) for n in names]
    terms = []
    for mono, c in coeffs.items():
        t = E.const(c)
        for v, k in zip(vs, mono):
            if k:
                t = t * v**k
        terms.append(t)
    return E.add(*terms) if terms else E.ZERO


@st.composite
def polynomials(draw, names, max_degree: int = 3, max_terms: int = 4, nonzero: bool = False):
    monos = monomials(len(names), max_degree)
    chosen = draw(st.lists(st.sampled_from(monos), min_size=1 if nonzero else 0, max_size=max_terms, unique=True))
    coeffs = {m: draw(st.integers(-3, 3).filter(bool)) for m in chosen}
    return poly_from(names, coeffs)


@st.composite
def multivectors(draw, chart: Chart, degree: int, max_degree: int = 2):
    comps = {}
    for idx in M.all_index_tuples(chart.dim, degree):
        if draw(st.booleans()):
            comps[idx] = draw(polynomials(chart.coords, max_degree, 3))
    return M.MultiVectorField(chart, degree, comps)


def chart(*names, guard: str | None = None) -> Chart:
    ch = Chart(names)
    return Chart(names, ch.parse(guard)) if guard else ch


def structure(ch: Chart, entries):
    return make_poisson(M.bivector(ch, [(i, j, ch.parse(e) if isinstance(e, str) else e) for i, j, e in entries]))


def fields_equal(A, B, **kw) -> bool:
    return M.fields_zero([A - B], **kw).ok


# reusable structures
R2 = chart("a", "b")
LINEAR_R2 = structure(R2, [("a", "b", "a")])
XY = chart("x", "y")
TWO_DIM = structure(XY, [("x", "y", "x")])
R4 = chart("x", "y", "z", "w")
SYMPLECTIC_R4 = structure(R4, [("x", "y", "1"), ("z", "w", "1")])
LEAF_R4 = structure(R4, [("x", "y", "x"), ("z", "w", "1")])
R3 = chart("x", "y", "z")
R3_ACTION = structure(R3, [("x", "y", "x"), ("y", "z", "1")])
SPHERE_CHART = chart("x", "y", "z", guard="x^2 + y^2 + z^2")
SPHERE = structure(SPHERE_CHART, [("x", "y", "(x^2+y^2+z^2)^(1/2)")])
SO3 = structure(R3, [("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")])
