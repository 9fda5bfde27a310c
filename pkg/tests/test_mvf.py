import pytest
from hypothesis import given, settings, strategies as st

from helpers import (
    LEAF_R4,
    LINEAR_R2,
    R3,
    R4,
    SO3,
    SPHERE,
    SYMPLECTIC_R4,
    TWO_DIM,
    R3_ACTION,
    fields_equal,
    multivectors,
    polynomials,
)
from poissonmod import expr as E
from poissonmod import mvf as M
from poissonmod.poisson import VolumeDensity, d_pi, modular_vf

x, y, z, w = R4.variables()


def dx(name, chart=R4):
    return M.coordinate_vector(chart, name)


def test_wedge_examples():
    B = M.wedge(dx("x"), dx("y"))
    assert B.degree == 2 and B.components == {(0, 1): E.ONE}
    A = M.vector_field(R4, [x, y, 1, 0])
    assert M.wedge(A, A).is_zero()
    assert M.wedge(M.coordinate_vector(R4, "x", x), dx("y"))[(0, 1)] is x
    assert M.wedge(dx("y"), dx("x"))[(0, 1)] == E.const(-1)


@given(multivectors(R3, 1), multivectors(R3, 2))
def test_wedge_graded_commutative(A, B):
    assert fields_equal(M.wedge(A, B), M.wedge(B, A).scale((-1) ** (A.degree * B.degree)))


def test_degree_overflow_and_chart_mismatch():
    with pytest.raises(M.DegreeError):
        M.wedge(M.MultiVectorField(R3, 2, {(0, 1): E.ONE}), M.MultiVectorField(R3, 2, {(1, 2): E.ONE}))
    with pytest.raises(M.ChartMismatch):
        M.wedge(dx("x"), M.coordinate_vector(R3, "x"))


def test_schouten_examples():
    assert fields_equal(M.schouten(dx("x"), M.coordinate_vector(R4, "y", x)), dx("y"))
    B = M.wedge(dx("x"), dx("y"))
    assert M.schouten(B, B).is_zero()
    P = LEAF_R4.bivector
    assert M.schouten(P, P).is_zero()


def test_schouten_is_lie_bracket():
    X = M.vector_field(R3, [R3.parse("x*y"), R3.parse("z^2"), R3.parse("x")])
    Y = M.vector_field(R3, [R3.parse("y"), R3.parse("x*z"), R3.parse("1")])
    f = R3.parse("x^2*y + z")
    lhs = M.apply_vf(M.schouten(X, Y), f)
    rhs = M.apply_vf(X, M.apply_vf(Y, f)) - M.apply_vf(Y, M.apply_vf(X, f))
    assert E.is_zero(lhs - rhs)


def _gsign(p, q):
    return (-1) ** ((p - 1) * (q - 1))


@settings(max_examples=12)
@given(st.integers(0, 3), st.integers(0, 3), st.data())
def test_schouten_graded_antisymmetry(p, q, data):
    if p + q == 0:
        return
    A = data.draw(multivectors(R3, p))
    B = data.draw(multivectors(R3, q))
    assert fields_equal(M.schouten(A, B), M.schouten(B, A).scale(-_gsign(p, q)))


@settings(max_examples=8)
@given(st.integers(1, 2), st.integers(1, 2), st.integers(0, 2), st.data())
def test_schouten_graded_jacobi(p, q, r, data):
    A = data.draw(multivectors(R3, p, 2))
    B = data.draw(multivectors(R3, q, 2))
    C = data.draw(multivectors(R3, r, 2))
    total = (
        M.schouten(A, M.schouten(B, C)).scale(_gsign(p, r))
        + M.schouten(B, M.schouten(C, A)).scale(_gsign(q, p))
        + M.schouten(C, M.schouten(A, B)).scale(_gsign(r, q))
    )
    assert M.fields_zero([total]).ok


@settings(max_examples=6)
@given(st.data())
def test_schouten_graded_jacobi_four_dimensions(data):
    A = data.draw(multivectors(R4, 2, 1))
    B = data.draw(multivectors(R4, 1, 2))
    C = data.draw(multivectors(R4, 3, 1))
    total = (
        M.schouten(A, M.schouten(B, C)).scale(_gsign(2, 3))
        + M.schouten(B, M.schouten(C, A)).scale(_gsign(1, 2))
        + M.schouten(C, M.schouten(A, B)).scale(_gsign(3, 1))
    )
    assert M.fields_zero([total]).ok


@given(multivectors(R3, 1), multivectors(R3, 2), polynomials(R3.coords, 2, 3))
def test_schouten_leibniz(X, B, f):
    lhs = M.schouten(X, B.scale(f))
    rhs = M.schouten(X, B).scale(f) + B.scale(M.apply_vf(X, f))
    assert fields_equal(lhs, rhs)


@pytest.mark.parametrize("pi", [LINEAR_R2, TWO_DIM, SYMPLECTIC_R4, LEAF_R4, R3_ACTION, SO3, SPHERE])
def test_d_pi_squared_vanishes(pi):
    ch = pi.chart
    v = ch.variables()
    for A in (
        M.function(ch, v[0] ** 2 * v[-1] + v[0]),
        M.vector_field(ch, [v[(i + 1) % ch.dim] * v[i] for i in range(ch.dim)]),
        M.MultiVectorField(ch, 2, {(0, 1): v[-1] ** 2}),
    ):
        assert M.fields_zero([d_pi(pi, d_pi(pi, A))]).ok


def test_modular_field_is_poisson():
    X = modular_vf(LINEAR_R2, VolumeDensity(LINEAR_R2.chart, 1))
    assert d_pi(LINEAR_R2, X).is_zero()


def test_lie_derivative_examples():
    xdy = M.one_form(R4, [0, x, 0, 0])
    assert fields_equal(M.lie_derivative(dx("x"), xdy), M.one_form(R4, [0, 1, 0, 0]))
    dxf = M.one_form(R4, [1, 0, 0, 0])
    assert fields_equal(M.lie_derivative(M.coordinate_vector(R4, "x", x), dxf), dxf)
    R2c = LINEAR_R2.chart
    vol = M.DifferentialForm(R2c, 2, {(0, 1): E.ONE})
    assert M.lie_derivative(M.coordinate_vector(R2c, "b"), vol).is_zero()


def test_lie_derivative_on_multivectors_is_schouten():
    X = M.vector_field(R3, [R3.parse("y"), R3.parse("x*z"), 0])
    B = M.MultiVectorField(R3, 2, {(0, 2): R3.parse("x*y")})
    assert fields_equal(M.lie_derivative(X, B), M.schouten(X, B))


@given(multivectors(R3, 1), polynomials(R3.coords, 3, 4))
def test_cartan_on_exact_forms(X, f):
    df = M.differential(R3, f)
    lhs = M.lie_derivative(X, df)
    rhs = M.differential(R3, M.apply_vf(X, f))
    assert fields_equal(lhs, rhs)


@given(polynomials(R3.coords, 3, 4))
def test_exterior_d_squared(f):
    assert M.exterior_d(M.differential(R3, f)).is_zero()


def test_pair_examples():
    vol = M.DifferentialForm(R4, 2, {(0, 1): E.ONE})
    assert M.pair(vol, M.wedge(dx("x"), dx("y"))) is E.ONE
    assert M.pair(M.one_form(R4, [1, 0, 0, 0]), M.coordinate_vector(R4, "y", x)) is E.ZERO
    assert M.pair(M.one_form(R3, [0, 0, 1]), M.coordinate_vector(R3, "z")) is E.ONE
    with pytest.raises(M.DegreeError):
        M.pair(vol, dx("x"))


def test_sign_sorted_storage():
    B = M.bivector(R4, [("y", "x", x)])
    assert B.components == {(0, 1): -x}
    assert B[(1, 0)] is x


def test_determinant():
    m = [[x, y], [z, w]]
    assert E.is_zero(M.determinant(m) - (x * w - y * z))
