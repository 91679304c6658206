import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ermakit.audit import CATALOG_GUARD, initial_conditions
from ermakit.catalog import catalog
from ermakit.ermakov import angular_domain, angular_kinetic, chart_for
from ermakit.expr import HALF, Jet, add, equal_on_samples, mul, parse, power
from ermakit.integrate import integrate, IntegratorSettings, monitor
from ermakit.mechanics import (
    SingularMassMatrix, derive_system, euler_lagrange, hamiltonian, identity_chart, pullback_kinetic,
)
from ermakit.symmetry import ConservationLaw

CHARTS = [(2, "polar"), (2, "nd"), (3, "nd"), (3, "spherical"), (4, "nd")]
ENTRIES = [e for n in (2, 3, 4) for e in catalog(n)]


def _domain(chart):
    dom = angular_domain(chart)
    dom.update({s.name: (-1.0, 1.0) for s in chart.jet.v})
    dom["t"] = (0.0, 1.0)
    return dom


def test_free_particle_has_zero_acceleration():
    jet = Jet.make(["x", "y", "z"])
    L = mul(HALF, add(*[power(v, 2) for v in jet.v]))
    assert all(a.is_zero for a in euler_lagrange(L, jet))


def test_oscillator_equation():
    jet = Jet.make(["x"])
    L = parse("(x_dot^2 - 4*x^2)/2", jet.table())
    (acc,) = euler_lagrange(L, jet)
    assert equal_on_samples(acc, parse("-4*x", jet.table()), {"x": (-2, 2)}).equal


def test_energy_function():
    jet = Jet.make(["x"])
    L = parse("x_dot^2/2 - x^4", jet.table())
    H = hamiltonian(L, jet)
    dom = {"x": (-2, 2), "x_dot": (-2, 2)}
    assert equal_on_samples(H, parse("x_dot^2/2 + x^4", jet.table()), dom).equal


def test_missing_kinetic_term_is_singular():
    jet = Jet.make(["x", "y"])
    L = parse("x_dot^2/2 - y^2", jet.table())
    with pytest.raises(SingularMassMatrix):
        euler_lagrange(L, jet)


def test_coupled_block_is_solved():
    # a 2x2 velocity coupling against a numerical solve
    jet = Jet.make(["x", "y"])
    L = parse("x_dot^2 + x_dot*y_dot + y_dot^2 - x^2*y^2", jet.table())
    s = derive_system(L, jet)
    f = s.field()
    q, v = np.array([0.7, 1.3]), np.array([0.2, -0.4])
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    rhs = np.array([-2 * q[0] * q[1] ** 2, -2 * q[0] ** 2 * q[1]])
    assert np.allclose(f.accel(0.0, q, v), np.linalg.solve(M, rhs), atol=1e-14)


@pytest.mark.parametrize("n,name", CHARTS)
def test_pullback_matches_nested_angular_form(n, name):
    ch = chart_for(n, name)
    rho, rhod = ch.jet.q[0], ch.jet.v[0]
    nested = add(power(rhod, 2), mul(power(rho, 2), angular_kinetic(ch)))
    assert equal_on_samples(pullback_kinetic(ch), nested, _domain(ch), tol=1e-10).equal


@pytest.mark.parametrize("entry", ENTRIES, ids=lambda e: e.id)
def test_chart_consistency_of_catalog_lagrangians(entry):
    ch = entry.chart_object()
    cart = entry.cartesian_system()
    rho = ch.jet.q[0]
    lhs = mul(HALF, add(pullback_kinetic(ch), mul(-1, power(rho, -2), entry.bound_angular())))
    v = equal_on_samples(lhs, ch.compose(cart.lagrangian), _domain(ch), tol=1e-10, guard=CATALOG_GUARD)
    assert v.equal, (v.max_scaled_deviation, v.worst_point)


@pytest.mark.parametrize("entry", [e for e in ENTRIES if e.dimension <= 3], ids=lambda e: e.id)
def test_energy_is_conserved_along_catalog_trajectories(entry):
    s = entry.cartesian_system()
    H = ConservationLaw("H", s.jet, s.hamiltonian)
    (ic,) = initial_conditions(s, 1, seed=11, chart=entry.chart_object())
    traj = integrate(s.field(), ic, IntegratorSettings(rtol=1e-10, atol=1e-12, t_end=10.0))
    assert traj.status == "complete"
    assert monitor(traj, [H])["H"].max_rel <= 1e-7


@pytest.mark.parametrize("n,name", CHARTS)
@given(data=st.data())
def test_chart_round_trip(n, name, data):
    lo, hi = 0.25, math.pi / 2 - 0.25
    q = [data.draw(st.floats(0.5, 2.0))] + [data.draw(st.floats(lo, hi)) for _ in range(n - 1)]
    v = [data.draw(st.floats(-1.0, 1.0)) for _ in range(n)]
    ch = chart_for(n, name)
    x, xd = ch.to_cartesian(q, v)
    q2, v2 = ch.from_cartesian(x, xd)
    assert np.allclose(q2, q, atol=1e-12)
    assert np.allclose(v2, v, atol=1e-10)


def test_identity_chart_composes_trivially():
    ch = identity_chart(["x", "y"])
    e = parse("x*y_dot", ch.jet.table())
    assert ch.compose(e) == e
