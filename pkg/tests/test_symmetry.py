import pytest

from ermakit.audit import generic_2d_system, initial_conditions, random_angular_potential
from ermakit.ermakov import chart_for, ep_system, ermakov_nd_system
from ermakit.expr import ONE, ZERO, Jet, equal_on_samples, mul, parse, power
from ermakit.integrate import IntegratorSettings, integrate, monitor
from ermakit.mechanics import hamiltonian
from ermakit.symmetry import (
    GeneratorField, NoFit, SymmetryError, UncertifiedGenerator, certify, fit_boundary_term,
    lie_symmetry_residual, noether_integral, noether_residual, sl2_generators,
)


def _systems():
    yield "ep", ep_system()
    yield "2d", generic_2d_system()
    for n, name in ((3, "nd"), (4, "nd"), (3, "spherical")):
        ch = chart_for(n, name)
        yield f"{n}d-{name}", ermakov_nd_system(n, random_angular_potential(ch, seed=5), ch)


SYSTEMS = list(_systems())


@pytest.mark.parametrize("label,system", SYSTEMS, ids=[s[0] for s in SYSTEMS])
def test_sl2_triple_is_lie_and_noether(label, system):
    for X, G in sl2_generators(system.jet, system.kind):
        lie = lie_symmetry_residual(X, system)
        noe = noether_residual(X, G, system.lagrangian, system=system)
        assert lie.max_abs <= 1e-10, (X.name, lie.point)
        assert noe.max_abs <= 1e-10, (X.name, noe.point)


def test_time_translation_integral_is_the_energy():
    s = ep_system()
    X1, G1 = sl2_generators(s.jet)[0]
    cert = certify(X1, G1, s.lagrangian, system=s)
    law = noether_integral(cert, s.lagrangian)
    assert law.expr == hamiltonian(s.lagrangian, s.jet)
    assert law.provenance == "noether"


def test_boundary_terms_are_recovered():
    s = ep_system()
    rho = s.jet.q[0]
    expected = [ZERO, ZERO, mul(0.5, power(rho, 2))]
    dom = s.sample_domain()
    for (X, _), G in zip(sl2_generators(s.jet), expected):
        cert = fit_boundary_term(X, s.lagrangian, system=s)
        v = equal_on_samples(cert.G, G, dom, tol=1e-10)
        assert v.equal, (X.name, str(cert.G))


def test_scaling_alone_is_rejected():
    s = ep_system()
    rho = s.jet.q[0]
    X = GeneratorField(s.jet, ZERO, (rho,), "scale")
    r = lie_symmetry_residual(X, s)
    assert r.max_abs > 1e-3
    # residual is 4 rho^-3 at every sampled point
    assert equal_on_samples(mul(r.exprs[0], power(rho, 3)), 4, s.sample_domain(), tol=1e-8).equal
    with pytest.raises((NoFit, UncertifiedGenerator)):
        fit_boundary_term(X, s.lagrangian, system=s)


def test_wrong_boundary_term_is_not_certified():
    s = ep_system()
    X3, _ = sl2_generators(s.jet)[2]
    with pytest.raises(UncertifiedGenerator):
        certify(X3, ZERO, s.lagrangian, system=s)


def test_velocity_dependent_generator_is_refused():
    jet = Jet.make(["q"])
    with pytest.raises(SymmetryError):
        GeneratorField(jet, ONE, (jet.v[0],))


def test_cartesian_representation():
    from ermakit.ermakov import cartesian_system
    jet = Jet.make(["x", "y"])
    s = cartesian_system(parse("1/x^2 + 2/y^2", jet.table()), jet=jet)
    for X, G in sl2_generators(s.jet, "cartesian"):
        assert lie_symmetry_residual(X, s).ok()
        assert noether_residual(X, G, s.lagrangian, system=s).ok()


def test_noether_integrals_are_conserved():
    s = generic_2d_system()
    laws = [noether_integral(certify(X, G, s.lagrangian, system=s), s.lagrangian)
            for X, G in sl2_generators(s.jet)]
    for ic in initial_conditions(s, 2, seed=8, chart=s.chart):
        traj = integrate(s.field(), ic, IntegratorSettings(rtol=1e-10, atol=1e-12, t_end=10.0))
        rep = monitor(traj, laws)
        assert all(d.scaled <= 1e-7 for d in rep.laws.values()), {k: d.scaled for k, d in rep.laws.items()}
