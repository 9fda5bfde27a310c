from fractions import Fraction

import pytest
from hypothesis import given, settings

from helpers import LINEAR_R2, R3, R3_ACTION, R4, SO3, SYMPLECTIC_R4, chart, fields_equal, polynomials, structure
from poissonmod import expr as E
from poissonmod import mvf as M
from poissonmod.cli import Loaded, Tolerances
from poissonmod.fixtures import fixture
from poissonmod.holonomy import SubmanifoldSpec, relative_modular_vf
from poissonmod.maps import SmoothMap
from poissonmod.poisson import (
    LieAlgebraData,
    NoWitness,
    VolumeDensity,
    d_pi,
    hamiltonian_witness,
    make_poisson,
    modular_vf,
)
from poissonmod.reduction import (
    ActionError,
    DegenerateFrame,
    GroupAction,
    MomentMap,
    NonInvariantDensity,
    action_modular_rep,
    check_moment,
    ham_quotient_verify,
    moment_modular_residual,
    moment_target,
    quotient_volume,
    validate_action,
)

ABELIAN1 = LieAlgebraData(1)
R2 = LINEAR_R2.chart
AB = chart("a", "b")
ZERO_AB = make_poisson(M.MultiVectorField(AB, 2, {}))


def vol(ch, rho=1):
    return VolumeDensity(ch, rho)


def zero_structure(ch):
    return make_poisson(M.MultiVectorField(ch, 2, {}))


# the translation example on R^3
R3_TRANSLATION = GroupAction(
    R3_ACTION, ABELIAN1, [M.coordinate_vector(R3, "z")], SmoothMap(R3, R2, [E.var("x"), E.var("y")]), LINEAR_R2
)

# rotation of the symplectic plane; the quotient coordinate is kappa itself
PLANE = chart("x", "y", guard="x^2 + y^2")
SYMPLECTIC_PLANE = structure(PLANE, [("x", "y", "1")])
LEVEL = chart("r")
ROTATION = GroupAction(
    SYMPLECTIC_PLANE,
    ABELIAN1,
    [M.vector_field(PLANE, [PLANE.parse("-y"), PLANE.parse("x")])],
    SmoothMap(PLANE, LEVEL, [PLANE.parse("(x^2 + y^2)/2")]),
    zero_structure(LEVEL),
)

# rotation about the z axis for the rigid body structure
SO3_GUARDED = structure(chart("x", "y", "z", guard="x^2 + y^2"), [("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")])
_C = SO3_GUARDED.chart
SO3_ROTATION = GroupAction(
    SO3_GUARDED,
    ABELIAN1,
    [M.vector_field(_C, [_C.parse("-y"), _C.parse("x"), 0])],
    SmoothMap(_C, AB, [_C.parse("(x^2 + y^2)/2"), _C.parse("z")]),
    ZERO_AB,
)

# translation along x on symplectic R^4
BCD = chart("b", "c", "d")
R4_TRANSLATION = GroupAction(
    SYMPLECTIC_R4,
    ABELIAN1,
    [M.coordinate_vector(R4, "x")],
    SmoothMap(R4, BCD, [E.var("y"), E.var("z"), E.var("w")]),
    structure(BCD, [("c", "d", "1")]),
)


def hopf():
    loaded = Loaded(fixture("ex-ham-S1-R4"), Tolerances())
    act = loaded.action()
    tau, level = loaded.ham(act.phi.target, 2)
    return act, loaded.moment(1), tau, level


@pytest.mark.parametrize("act", [R3_TRANSLATION, ROTATION, SO3_ROTATION, R4_TRANSLATION])
def test_valid_actions(act):
    rep = validate_action(act)
    assert rep.ok, rep.failures
    assert rep.residuals["generator_rank"] > 1e-3


def test_hopf_action_is_valid():
    act, *_ = hopf()
    assert validate_action(act).ok


def test_wrong_structure_constants_reported():
    ch = chart("x", "y", "z")
    pi = zero_structure(ch)
    g = LieAlgebraData(2, {(0, 1, 1): 1})
    act = GroupAction(pi, g, [M.coordinate_vector(ch, "x"), M.coordinate_vector(ch, "y")],
                      SmoothMap(ch, chart("u"), [E.var("z")]), zero_structure(chart("u")))
    rep = validate_action(act)
    assert "structure_constants" in rep.failures
    assert set(rep.failures["structure_constants"]) == {"x", "y", "z"}
    with pytest.raises(ActionError, match="structure_constants"):
        rep.raise_if_failed()


def test_generator_convention_on_two_dim_algebra():
    # c^2_12 = 1 requires [xi1, xi2] = -xi2
    ch = chart("x", "y", "z")
    g = LieAlgebraData(2, {(0, 1, 1): 1})
    xi1 = M.vector_field(ch, [0, ch.parse("y"), 0])
    xi2 = M.coordinate_vector(ch, "y")
    assert fields_equal(M.schouten(xi1, xi2), xi2.scale(-1))
    act = GroupAction(zero_structure(ch), g, [xi1, xi2], SmoothMap(ch, chart("u"), [E.var("x")]),
                      zero_structure(chart("u")))
    assert "structure_constants" not in validate_action(act).failures


def test_non_invariant_structure_reported():
    act = GroupAction(R3_ACTION, ABELIAN1, [M.coordinate_vector(R3, "x")],
                      SmoothMap(R3, chart("u"), [E.var("z")]), zero_structure(chart("u")))
    rep = validate_action(act)
    assert "pi_invariance" in rep.failures and "phi_invariance" not in rep.failures


def test_action_shape_errors():
    with pytest.raises(ActionError):
        GroupAction(R3_ACTION, LieAlgebraData(2), [M.coordinate_vector(R3, "z")], R3_TRANSLATION.phi, LINEAR_R2)
    with pytest.raises(ActionError):
        GroupAction(R3_ACTION, ABELIAN1, [M.coordinate_vector(R2, "a")], R3_TRANSLATION.phi, LINEAR_R2)


# quotient volumes


def test_quotient_volume_translation():
    assert quotient_volume(R3_TRANSLATION, vol(R2)).rho is E.ONE


def test_quotient_volume_rotation():
    assert quotient_volume(ROTATION, vol(LEVEL)).rho is E.ONE
    assert quotient_volume(SO3_ROTATION, vol(AB)).rho is E.ONE


def test_quotient_volume_scales_with_nu():
    mu = quotient_volume(R3_TRANSLATION, vol(R2, R2.parse("1 + a^2")))
    assert E.is_zero(mu.rho - R3.parse("1 + x^2"))


def test_quotient_volume_ignores_pairing():
    act = GroupAction(R3_ACTION, ABELIAN1, R3_TRANSLATION.generators, R3_TRANSLATION.phi, LINEAR_R2,
                      pairing=R3.parse("2 + x^2"))
    assert quotient_volume(act, vol(R2)).rho is E.ONE


def test_quotient_volume_trivial_group():
    phi = SmoothMap(R2, R2, [R2.parse("a"), R2.parse("2*b + a^2")])
    act = GroupAction(LINEAR_R2, LieAlgebraData(0), [], phi, structure(R2, [("a", "b", "2*a")]))
    mu = quotient_volume(act, vol(R2, R2.parse("1 + b^2")))
    assert E.is_zero(mu.rho - 2 * phi.pull(R2.parse("1 + b^2")))
    res = action_modular_rep(act, vol(R2, R2.parse("1 + b^2")))
    assert fields_equal(res.field, modular_vf(LINEAR_R2, mu))


def test_degenerate_frame():
    # the generator is tangent to the fibres of phi only up to a dimension mismatch
    act = GroupAction(R3_ACTION, ABELIAN1, R3_TRANSLATION.generators,
                      SmoothMap(R3, chart("u"), [E.var("x")]), zero_structure(chart("u")))
    with pytest.raises(DegenerateFrame):
        quotient_volume(act, vol(chart("u")))


# modular representative of the action


def test_translation_modular_rep():
    res = action_modular_rep(R3_TRANSLATION, vol(R2))
    assert fields_equal(res.field, M.coordinate_vector(R3, "y", -1))
    assert fields_equal(res.quotient_field, M.coordinate_vector(R2, "b", -1))
    assert res.projectable.ok and res.related.ok


@pytest.mark.parametrize("act,nu", [
    (R3_TRANSLATION, vol(R2)),
    (R3_TRANSLATION, vol(R2, R2.parse("exp(a*b)"))),
    (ROTATION, vol(LEVEL, LEVEL.parse("1 + r^2"))),
    (SO3_ROTATION, vol(AB)),
    (R4_TRANSLATION, vol(BCD)),
])
def test_map_modular_field_of_quotient_vanishes(act, nu):
    res = action_modular_rep(act, nu, trials=64, tol=1e-9)
    assert res.projectable.ok and res.projectable.worst < 1e-9
    assert res.related.ok and res.related.worst < 1e-9


def test_symplectic_translation_is_unimodular():
    assert action_modular_rep(R4_TRANSLATION, vol(BCD)).field.is_zero()


def test_hopf_quotient_related():
    act, *_ = hopf()
    res = action_modular_rep(act, vol(act.phi.target), trials=64)
    assert res.related.ok and res.projectable.ok


def test_independence_of_quotient_volume_choice():
    # rescaling nu by exp(q) moves X_mu by an invariant hamiltonian field
    q = R2.parse("a*b + b^2")
    base = action_modular_rep(R3_TRANSLATION, vol(R2)).field
    moved = action_modular_rep(R3_TRANSLATION, vol(R2, E.exp(q))).field
    h = hamiltonian_witness(R3_ACTION, base - moved, 3)
    assert not isinstance(h, NoWitness)
    assert E.is_zero(M.apply_vf(R3_TRANSLATION.generators[0], h))
    assert M.fields_zero([base - moved - R3_ACTION.hamiltonian_vf(h)]).ok


@given(f=polynomials(("x", "y"), 2, 3), g=polynomials(("x", "y"), 2, 3), h=polynomials(("x", "y", "z"), 2, 3))
@settings(max_examples=10)
def test_d_pi_preserves_projectability(f, g, h):
    # A projectable for the z translation: its x, y components do not depend on z
    A = M.vector_field(R3, [f, g, h])
    L = M.schouten(M.coordinate_vector(R3, "z"), d_pi(R3_ACTION, A))
    # phi = (x, y), so the pushforward of the bivector L is its (x, y) component
    assert E.zero_check([L[(0, 1)]]).ok


# moment maps


def test_check_moment_rotation():
    assert check_moment(ROTATION, MomentMap([PLANE.parse("(x^2 + y^2)/2")]))
    assert not check_moment(ROTATION, MomentMap([0]))
    assert not check_moment(ROTATION, MomentMap([PLANE.parse("-(x^2 + y^2)/2")]))


def test_check_moment_rigid_body():
    assert check_moment(SO3_ROTATION, MomentMap([_C.parse("-z")]))


def test_check_moment_diagonal_circle():
    act, kappa, *_ = hopf()
    assert check_moment(act, kappa)
    with pytest.raises(ActionError):
        check_moment(act, MomentMap([0, 0]))


def test_moment_target_sign():
    g = LieAlgebraData(2, {(0, 1, 1): 1})
    t = moment_target(g)
    k1, k2 = t.chart.variables()
    assert E.is_zero(t.bracket(k1, k2) + k2)


def test_moment_residual_abelian_rotation():
    kappa = MomentMap([PLANE.parse("(x^2 + y^2)/2")])
    res = moment_modular_residual(kappa, SYMPLECTIC_PLANE, vol(PLANE), ABELIAN1)
    assert res.theta0 == [0] and res.sign == 0
    assert res.field.is_zero()


T_AFF = chart("l", "u", "pl", "pu")
T_AFF_PI = structure(T_AFF, [("l", "pl", "1"), ("u", "pu", "1")])
AFF = LieAlgebraData(2, {(0, 1, 1): 1})
AFF_KAPPA = MomentMap([T_AFF.parse("-(pl + u*pu)"), T_AFF.parse("-pu")])


def test_moment_residual_affine_model():
    res = moment_modular_residual(AFF_KAPPA, T_AFF_PI, vol(T_AFF), AFF)
    assert res.theta0 == [Fraction(1), Fraction(0)]
    assert res.constant == [Fraction(1), Fraction(0)]
    assert res.sign == 1 and res.residual == 0.0
    assert res.witness is None


def test_affine_model_generators_represent_algebra():
    gens = [T_AFF_PI.hamiltonian_vf(k) for k in AFF_KAPPA.components]
    assert fields_equal(M.schouten(gens[0], gens[1]), gens[1].scale(-1))
    t = moment_target(AFF)
    # the moment map is a Poisson map onto the linear structure
    for i, j in ((0, 1),):
        lhs = T_AFF_PI.bracket(AFF_KAPPA.components[i], AFF_KAPPA.components[j])
        rhs = SmoothMap(T_AFF, t.chart, AFF_KAPPA.components).pull(t.bracket(*t.chart.variables()))
        assert E.is_zero(lhs - rhs)


def test_moment_residual_translation_model():
    ch = chart("q", "p")
    pi = structure(ch, [("q", "p", "1")])
    res = moment_modular_residual(MomentMap([ch.parse("p")]), pi, vol(ch), ABELIAN1)
    assert res.sign == 0 and res.field.is_zero()
    assert res.witness is E.ZERO


def test_non_invariant_density():
    with pytest.raises(NonInvariantDensity):
        moment_modular_residual(AFF_KAPPA, T_AFF_PI, vol(T_AFF, T_AFF.parse("exp(l)")), AFF)
    kappa = MomentMap([PLANE.parse("(x^2 + y^2)/2")])
    with pytest.raises(NonInvariantDensity):
        moment_modular_residual(kappa, SYMPLECTIC_PLANE, vol(PLANE, PLANE.parse("exp(x)")), ABELIAN1)


# hamiltonian quotients


def test_ham_quotient_diagonal_circle():
    act, kappa, tau, level = hopf()
    rep = ham_quotient_verify(act, kappa, tau, level, samples=200)
    assert rep.samples >= 200
    assert rep.tangency < 1e-6 and rep.relatedness < 1e-6
    assert rep.level_error < 1e-9


@pytest.mark.parametrize("density", ["1 + x^2", "x^2 + y^2 + 1/10"])
def test_ham_quotient_detects_wrong_density(density):
    act, kappa, tau, level = hopf()
    rep = ham_quotient_verify(act, kappa, tau, level, samples=50, density=act.chart.parse(density))
    assert max(rep.tangency, rep.relatedness) > 1e-3


def test_ham_quotient_rejects_nonabelian():
    act = GroupAction(T_AFF_PI, AFF, [T_AFF_PI.hamiltonian_vf(k) for k in AFF_KAPPA.components],
                      SmoothMap(T_AFF, chart("v"), [T_AFF.parse("l")]), zero_structure(chart("v")))
    with pytest.raises(ActionError):
        ham_quotient_verify(act, AFF_KAPPA, M.DifferentialForm(chart("v"), 0, {(): E.ONE}), [1, 1])


# translation of q1 on T*R^2: the reduced space {p1 = 0} sits in the quotient as a coordinate slice
TR2 = chart("q1", "p1", "q2", "p2")
TR2_PI = structure(TR2, [("q1", "p1", "1"), ("q2", "p2", "1")])
Q3 = chart("s", "q", "p")
TR2_ACTION = GroupAction(
    TR2_PI,
    ABELIAN1,
    [M.coordinate_vector(TR2, "q1", -1)],
    SmoothMap(TR2, Q3, [E.var("p1"), E.var("q2"), E.var("p2")]),
    structure(Q3, [("q", "p", "1")]),
)


def test_translation_reduction_and_relative_class():
    kappa = MomentMap([TR2.parse("p1")])
    assert validate_action(TR2_ACTION).ok and check_moment(TR2_ACTION, kappa)
    tau = M.DifferentialForm(Q3, 2, {(1, 2): Q3.parse("1 + s^2")})
    rep = ham_quotient_verify(TR2_ACTION, kappa, tau, [0.0], samples=50)
    assert rep.tangency < 1e-9 and rep.relatedness < 1e-9
    # the relative modular field of the reduced space inside the quotient is hamiltonian
    rel = relative_modular_vf(TR2_ACTION.quotient_pi, vol(Q3, Q3.parse("1 + s^2")), None, SubmanifoldSpec(Q3, ["s"]))
    h = hamiltonian_witness(TR2_ACTION.quotient_pi, rel, 3)
    assert not isinstance(h, NoWitness)


def test_ham_quotient_trivial_group():
    act = GroupAction(LINEAR_R2, LieAlgebraData(0), [], SmoothMap.identity(R2), LINEAR_R2)
    tau = M.DifferentialForm(R2, 2, {(0, 1): R2.parse("1 + a^2")})
    rep = ham_quotient_verify(act, MomentMap([]), tau, [], samples=20)
    assert E.is_zero(rep.density - R2.parse("1 + a^2"))
    assert rep.tangency == 0.0 and rep.relatedness < 1e-12
