import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ermakit.audit import random_angular_potential
from ermakit.ermakov import (
    ConstraintViolated, ErmakovError, NegativeRadicand, OscillatorSolution, PinneyCoefficients,
    QuadratureFailure, RayReidPair, ZeroRho, cartesian_extras, cartesian_system, chart_for, ep_system,
    ermakov_nd_system, j_identity_form, lewis_invariant, lewis_law, nd_chart, oscillator_pair_system,
    pinney_superposition, ray_reid_invariant, ray_reid_quadrature, ray_reid_system, sl2_invariants, wronskian,
)
from ermakit.expr import Jet, equal_on_samples, parse
from ermakit.integrate import IntegratorSettings, integrate, monitor

SETTINGS = IntegratorSettings(rtol=1e-10, atol=1e-12, t_end=10.0)


def test_ep_oracle_and_invariants():
    s = ep_system()
    tr = integrate(s.field(), (0.0, [1.0], [0.0]), SETTINGS)
    assert np.max(np.abs(tr.q[:, 0] - np.sqrt(1 + tr.times ** 2))) <= 1e-7
    laws = {l.name: l for l in sl2_invariants(s)}
    for name, value in (("I1", 0.5), ("I2", 0.0), ("I3", 0.5), ("J", 1.0)):
        vals = laws[name].values(tr.times, tr.q, tr.v)
        assert np.max(np.abs(vals - value)) <= 1e-8, name


def test_j_is_one_for_ep():
    s = ep_system()
    J = sl2_invariants(s)[-1]
    assert equal_on_samples(J.expr, 1, s.sample_domain(), tol=1e-10).equal


def test_time_dependent_frequency():
    s = ep_system("1/(1 + t)^2")
    tr = integrate(s.field(), (0.0, [1.0], [0.0]), IntegratorSettings(t_end=2.0))
    assert tr.status == "complete"


def test_lewis_pairing_from_state_and_expression():
    s = oscillator_pair_system("1 + 0.5*cos(t)")
    tr = integrate(s.field(), (0.0, [0.3, 1.2], [1.0, 0.1]), SETTINGS)
    law = lewis_law(s.jet)
    vals = law.values(tr.times, tr.q, tr.v)
    assert np.max(np.abs(vals - vals[0])) <= 1e-8
    i = len(tr) // 2
    direct = lewis_invariant((tr.q[i, 0], tr.v[i, 0]), (tr.q[i, 1], tr.v[i, 1]))
    assert direct == pytest.approx(vals[i], rel=1e-14)
    with pytest.raises(ZeroRho):
        lewis_invariant((1.0, 0.0), (0.0, 1.0))


def test_pinney_free_case_against_closed_form():
    t = np.linspace(0, 10, 101)
    sol = pinney_superposition("1", "t", (1.0, 1.0, 0.0), "0")
    assert np.allclose(sol(t), np.sqrt(1 + t ** 2), atol=1e-14)
    assert np.max(np.abs(sol.residual(t))) <= 1e-8


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.booleans())
def test_pinney_constraint_gates_the_residual(c1, c2, negative):
    t = np.linspace(0, 10, 101)
    r1, r2 = OscillatorSolution.from_expr("cos(2*t)"), OscillatorSolution.from_expr("sin(2*t)")
    W = wronskian(r1, r2)
    rad = c1 * c2 - W ** -2
    if rad <= 0.01:
        # no real c3 (or only c3 ~ 0): c3 = 0 is accepted exactly when c1 c2 = W^-2
        if abs(rad) > 1e-10:
            with pytest.raises(ConstraintViolated):
                pinney_superposition(r1, r2, (c1, c2, 0.0), "4")
        return
    c3 = math.sqrt(rad) * (-1 if negative else 1)
    good = pinney_superposition(r1, r2, (c1, c2, c3), "4")
    assert np.max(np.abs(good.residual(t))) <= 1e-8
    # a perturbed c3 either breaks positivity of the radicand or leaves a visible residual
    bad = pinney_superposition(r1, r2, (c1, c2, c3 + 0.1), "4", check=False)
    try:
        assert np.max(np.abs(bad.residual(t))) >= 1e-3
    except NegativeRadicand:
        pass


def test_pinney_checks():
    with pytest.raises(ConstraintViolated):
        pinney_superposition("1", "t", (1.0, 1.0, 1.0), "0")
    with pytest.raises(ConstraintViolated):
        PinneyCoefficients(1, 1, 0, 0.0).check()
    sol = pinney_superposition("cos(t)", "sin(t)", (1.0, 1.0, 1.5), "1", check=False)
    with pytest.raises(NegativeRadicand):
        sol(np.linspace(0, 3, 31))


def test_pinney_from_samples_matches_expression():
    t = np.linspace(0, 3, 3001)
    r1 = OscillatorSolution.from_samples(t, np.cos(t), -np.sin(t))
    r2 = OscillatorSolution.from_samples(t, np.sin(t), np.cos(t))
    sol = pinney_superposition(r1, r2, (1.0, 1.0, 0.0), "1")
    assert np.allclose(sol(t), 1.0, atol=1e-12)


def test_ray_reid_quadrature_spot_value():
    pair = RayReidPair.of("1", "2")
    assert abs(ray_reid_quadrature(pair, 2.0) - 0.75) <= 1e-10
    assert ray_reid_quadrature(pair, 1.0) == 0.0


def test_ray_reid_invariant_is_conserved():
    pair = RayReidPair.of("1", "2")
    fld = ray_reid_system(pair, "0")
    law = ray_reid_invariant(pair, fld.jet)
    tr = integrate(fld, (0.0, [1.0, 2.0], [0.1, -0.2]), SETTINGS)
    assert monitor(tr, [law])["I_rayreid"].scaled <= 1e-7


def test_ray_reid_quadrature_failure():
    pair = RayReidPair.of("1", "1")
    with pytest.raises(QuadratureFailure):
        ray_reid_quadrature(pair, -1.0)


@pytest.mark.parametrize("n,name", [(2, "polar"), (3, "nd"), (3, "spherical"), (4, "nd"), (5, "nd")])
@pytest.mark.parametrize("seed", [1, 2])
def test_j_identity_for_arbitrary_potential(n, name, seed):
    ch = chart_for(n, name)
    s = ermakov_nd_system(n, random_angular_potential(ch, seed), ch)
    J = sl2_invariants(s)[-1]
    assert equal_on_samples(J.expr, j_identity_form(s), s.sample_domain(), tol=1e-10).equal


def test_j_identity_cartesian():
    s = cartesian_system("1/x^2 + 1/y^2 + 1/z^2", 3)
    J = sl2_invariants(s)[-1]
    assert equal_on_samples(J.expr, j_identity_form(s), s.sample_domain(), tol=1e-10).equal


def test_nd_chart_first_components():
    ch = nd_chart(3)
    x = ch.to_cartesian([2.0, 0.3, 0.4])
    assert np.allclose(x, [2 * math.sin(0.3), 2 * math.cos(0.3) * math.sin(0.4), 2 * math.cos(0.3) * math.cos(0.4)])
    with pytest.raises(ErmakovError):
        nd_chart(1)


def test_angular_potential_must_be_bound():
    with pytest.raises(ErmakovError):
        ermakov_nd_system(2, "V0 + sin(theta)", chart_for(2, "polar"))


def test_discovered_cartesian_invariants():
    jet = Jet.make(["x", "y", "z"])
    s = cartesian_system(parse("1/x^2 + 1/(y^2 + z^2)", jet.table()), jet=jet)
    names = {l.name for l in cartesian_extras(s)}
    assert {"L_yz", "E_x", "E_yz"} <= names
    assert "L_xy" not in names
    free = cartesian_system(parse("1/y^2", Jet.make(["x", "y"]).table()), 2)
    assert "p_x" in {l.name for l in cartesian_extras(free)}
