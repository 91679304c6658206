"""Verification harness: conservation, symmetry, identity and catalog audits,
negative controls, and the checks that adjudicate printed claims.

Every check is registered under a stable id with its expected verdict. A
printed claim that does not survive evaluation gets the verdict
``refuted-claim`` together with a counterexample; the set of such ids is
fixed in :data:`LEDGERED_ERRATA`, so an unexpected refutation is a failure.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .catalog import PotentialEntry, catalog, find_entry
from .ermakov import (
    ANGLE_BOX, RADIUS_BOX, EPFrequency, RayReidPair, angular_domain, chart_for, ep_system,
    ermakov_nd_system, j_identity_form, lewis_law, oscillator_pair_system, pinney_superposition,
    OscillatorSolution, ray_reid_invariant, ray_reid_quadrature, ray_reid_system, sl2_invariants, transport,
)
from .expr import (
    DEFAULT_SEED, Expr, add, as_expr, cos, differentiate, equal_on_samples, lambdify,
    max_abs_on_samples, mul, parse, power, sin, substitute, to_text,
)
from .integrate import IntegrationError, IntegratorSettings, integrate, integrate_fixed, monitor
from .mechanics import CoordinateChart, LagrangianSystem
from .symmetry import (
    GeneratorField, certify, lie_symmetry_residual, noether_integral, noether_residual, sl2_generators,
)

PASS, FAIL, REFUTED = "pass", "fail", "refuted-claim"

RESIDUAL_TOL = 1e-10
DRIFT_TOL = 1e-7
IDENTITY_TOL_TRIG = 1e-12
IDENTITY_TOL_CHART = 1e-10
CATALOG_GUARD = 0.05
N_INITIAL = 5
PROBE_2D = {"t": 0.7, "rho": 2.0, "theta": 0.3, "rho_dot": 0.5, "theta_dot": 0.25}
PROBE_3D = {"rho": 1.0, "theta": math.pi / 4, "phi": math.pi / 3}

LEDGERED_ERRATA = {
    "theta-equation-form": "theta-equation-form",
    "j-reduced-form": "j-reduced-form",
    "vf-simplified-sign": "vf-simplified-sign",
    "vf-cartesian": "vf-vg-reduction-swap",
    "angular-momentum-exponent": "angular-momentum-exponent",
    "vd-j2-coefficient": "vd-j2-coefficient",
}


def default_settings() -> IntegratorSettings:
    return IntegratorSettings(method="adaptive45", rtol=1e-10, atol=1e-12, t_end=10.0)


@dataclass
class AuditOutcome:
    check_id: str
    verdict: str
    metrics: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    notes: list = field(default_factory=list)
    kind: str = "check"
    errata: str | None = None
    counterexample: dict | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


# ---------------------------------------------------------------------------
# initial conditions


def initial_conditions(system: LagrangianSystem, k: int = N_INITIAL, seed: int = DEFAULT_SEED,
                       chart: CoordinateChart | None = None) -> list:
    """Seeded box: rho in [0.5, 2], angles in [0.2, pi/2 - 0.2], velocities in [-1, 1].

    With ``chart`` given and a Cartesian system, the box is drawn in chart
    variables and mapped to Cartesian positions and velocities.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        if chart is not None:
            q = np.array([rng.uniform(*RADIUS_BOX)] + [rng.uniform(*ANGLE_BOX) for _ in range(chart.n - 1)])
            v = rng.uniform(-1.0, 1.0, chart.n)
            if system.kind == "cartesian":
                q, v = chart.to_cartesian(q, v)
        else:
            dom = system.sample_domain()
            q = np.array([rng.uniform(*dom[s.name]) for s in system.jet.q])
            v = np.array([rng.uniform(*dom[s.name]) for s in system.jet.v])
        out.append((0.0, np.asarray(q, float), np.asarray(v, float)))
    return out


# ---------------------------------------------------------------------------
# core audits


def conservation_audit(system, laws, initial_conditions, settings: IntegratorSettings | None = None, *,
                       check_id: str = "conservation", seed: int = DEFAULT_SEED, tol: float = DRIFT_TOL,
                       keep_reports: bool = False) -> AuditOutcome:
    """Integrate from each initial condition and require every law's drift to stay within ``tol``.

    Drift is the scaled drift max|I(t) - I(0)| / max(|I(0)|, 1); the relative
    drift with denominator max(|I(0)|, 1e-12) is reported alongside.
    """
    settings = settings or default_settings()
    fld = system.field() if hasattr(system, "field") else system
    per_law = {law.name: {"max_abs": 0.0, "max_rel": 0.0, "scaled": 0.0, "initial": []} for law in laws}
    runs, notes, reports = [], [], []
    ok = True
    for ic in initial_conditions:
        t0, q0, v0 = ic
        try:
            traj = integrate(fld, (t0, q0, v0), settings)
        except IntegrationError as exc:
            ok = False
            notes.append(f"integration from q={list(q0)} v={list(v0)} failed: {exc}")
            runs.append({"q0": list(q0), "v0": list(v0), "status": type(exc).__name__})
            continue
        rep = monitor(traj, laws)
        reports.append(rep)
        runs.append({"q0": list(q0), "v0": list(v0), "status": traj.status, "steps": traj.accepted,
                     "rejected": traj.rejected})
        for name, d in rep.laws.items():
            m = per_law[name]
            if d.error:
                ok = False
                notes.append(f"{name}: {d.error}")
                continue
            m["max_abs"] = max(m["max_abs"], d.max_abs)
            m["max_rel"] = max(m["max_rel"], d.max_rel)
            m["scaled"] = max(m["scaled"], d.scaled)
            m["initial"].append(d.initial)
    for name, m in per_law.items():
        if not m["scaled"] <= tol:
            ok = False
    out = AuditOutcome(check_id, PASS if ok else FAIL, {"laws": per_law, "runs": runs, "tolerance": tol,
                                                        "t_end": settings.t_end, "rtol": settings.rtol},
                       seed, notes, kind="conservation")
    if keep_reports:
        out.reports = reports
    return out


def symmetry_audit(system, generators, *, check_id: str = "symmetry", n: int = 200, seed: int = DEFAULT_SEED,
                   guard: float = 1e-3, tol: float = RESIDUAL_TOL, lagrangian: Expr | None = None) -> AuditOutcome:
    """Sampled Lie residual and, when a boundary term is given, Noether residual for each generator."""
    L = lagrangian if lagrangian is not None else getattr(system, "lagrangian", None)
    metrics = {}
    ok = True
    for X, G in generators:
        name = X.name or str(X)
        lie = lie_symmetry_residual(X, system, n=n, guard=guard, seed=seed)
        m = {"lie": lie.max_scaled, "lie_abs": lie.max_abs}
        ok &= lie.max_scaled <= tol
        if G is not None and L is not None:
            nr = noether_residual(X, G, L, system=system, n=n, guard=guard, seed=seed)
            m["noether"] = nr.max_scaled
            m["noether_abs"] = nr.max_abs
            ok &= nr.max_scaled <= tol
        metrics[name] = m
    return AuditOutcome(check_id, PASS if ok else FAIL, {"generators": metrics, "tolerance": tol, "samples": n},
                        seed, kind="symmetry")


def identity_audit(lhs: Expr, rhs: Expr, chart: CoordinateChart | None = None, n: int = 200,
                   tol: float = IDENTITY_TOL_CHART, seed: int = DEFAULT_SEED, *, check_id: str = "identity",
                   domain: dict | None = None, probe: dict | None = None, errata: str | None = None,
                   guard: float = 1e-3) -> AuditOutcome:
    """Compare ``lhs`` (chart variables) with ``rhs`` composed with the chart map.

    Without a chart both sides live in the same variables. On failure the
    verdict is ``refuted-claim`` with a counterexample: the ``probe`` point
    when given, otherwise the worst sampled point.
    """
    if chart is not None:
        rhs_c = chart.compose(rhs)
        domain = domain or angular_domain(chart)
    else:
        rhs_c = rhs
    if domain is None:
        raise ValueError("identity_audit needs a chart or a domain")
    v = equal_on_samples(lhs, rhs_c, domain, n=n, tol=tol, guard=guard, seed=seed)
    metrics = {"max_scaled_deviation": v.max_scaled_deviation, "max_abs_deviation": v.max_abs_deviation,
               "samples": v.samples_used, "rejected": v.samples_rejected, "tolerance": tol}
    out = AuditOutcome(check_id, PASS if v.equal else REFUTED, metrics, seed, kind="identity", errata=errata)
    if not v.equal:
        if probe is not None:
            syms = sorted((lhs.free_symbols | rhs_c.free_symbols), key=lambda s: s.name)
            f = lambdify((lhs, rhs_c), syms)
            a, b = f(*[probe[s.name] for s in syms])
            point = {s.name: probe[s.name] for s in syms}
        else:
            a, b, point = v.lhs_at_worst, v.rhs_at_worst, v.worst_point
        out.counterexample = {"point": point, "lhs": float(a), "rhs": float(b), "deviation": abs(float(a) - float(b))}
    return out


def onshell_claim_audit(claimed: Expr, system: LagrangianSystem, *, check_id: str, errata: str | None = None,
                        n: int = 200, seed: int = DEFAULT_SEED, tol: float = RESIDUAL_TOL,
                        guard: float = 1e-3) -> AuditOutcome:
    """A claimed first integral must have vanishing on-shell time derivative; refuted with a witness otherwise."""
    from .symmetry import ConservationLaw
    law = ConservationLaw("claim", system.jet, claimed)
    d = law.onshell_derivative(system.accelerations)
    worst, point = max_abs_on_samples([d], system.sample_domain(), n, guard=guard, seed=seed)
    out = AuditOutcome(check_id, PASS if worst <= tol else REFUTED,
                       {"max_abs_onshell_derivative": worst, "tolerance": tol, "samples": n}, seed,
                       kind="claim", errata=errata)
    if worst > tol:
        out.counterexample = {"point": point, "lhs": worst, "rhs": 0.0, "deviation": worst,
                              "meaning": "d/dt of the claimed invariant on shell"}
    return out


def catalog_audit(entry: PotentialEntry, seed: int = DEFAULT_SEED, settings: IntegratorSettings | None = None,
                  n_initial: int = N_INITIAL) -> AuditOutcome:
    """(a) SL(2,R) residuals, (b) extra generators, (c) drift of every invariant, (d) chart identity.

    Errata claims about an entry are separate checks; the entry itself is
    audited with its corrected invariants.
    """
    ang = entry.angular_system()
    cart = entry.cartesian_system()
    chart = entry.chart_object()
    parts = {}
    parts["sl2_angular"] = symmetry_audit(ang, sl2_generators(ang.jet, "radial"), seed=seed,
                                          check_id=f"{entry.id}/sl2-angular")
    parts["sl2_cartesian"] = symmetry_audit(cart, sl2_generators(cart.jet, "cartesian"), seed=seed,
                                            guard=CATALOG_GUARD, check_id=f"{entry.id}/sl2-cartesian")
    parts["extra_generators"] = symmetry_audit(cart, entry.bound_generators(), seed=seed, guard=CATALOG_GUARD,
                                               check_id=f"{entry.id}/extra-generators")
    laws = sl2_invariants(cart, seed=seed) + entry.bound_invariants()
    ics = initial_conditions(cart, n_initial, seed, chart=chart)
    parts["conservation"] = conservation_audit(cart, laws, ics, settings, seed=seed,
                                               check_id=f"{entry.id}/conservation")
    lhs = mul(power(chart.jet.q[0], -2), entry.bound_angular())
    parts["identity"] = identity_audit(lhs, entry.bound_cartesian(), chart, seed=seed,
                                       check_id=f"{entry.id}/identity")
    ok = all(p.verdict == PASS for p in parts.values())
    metrics = {k: {"verdict": p.verdict, **p.metrics} for k, p in parts.items()}
    notes = [n for p in parts.values() for n in p.notes] + list(entry.notes)
    if entry.errata:
        notes.append("errata claims checked separately: " + ", ".join(entry.errata))
    return AuditOutcome(f"catalog:{entry.id}", PASS if ok else FAIL, metrics, seed, notes, kind="catalog")


# ---------------------------------------------------------------------------
# fixtures


def generic_2d_system(V="2 + sin(theta)") -> LagrangianSystem:
    return ermakov_nd_system(2, V, chart_for(2, "polar"))


def random_angular_potential(chart: CoordinateChart, seed: int) -> Expr:
    """Seeded trigonometric polynomial 2 + sum_k (a_k sin th_k + b_k cos th_k) + c cos(th_1 - th_last)."""
    rng = np.random.default_rng(seed)
    th = chart.jet.q[1:]
    terms = [as_expr(2.0)]
    for s in th:
        a, b = rng.uniform(-0.5, 0.5, 2)
        terms += [mul(float(a), sin(s)), mul(float(b), cos(s))]
    if len(th) > 1:
        terms.append(mul(float(rng.uniform(-0.5, 0.5)), cos(add(th[0], mul(-1, th[-1])))))
    return add(*terms)


def _sl2_with_terms(system):
    return sl2_generators(system.jet, system.kind)


# ---------------------------------------------------------------------------
# registered checks


def check_ep_oracle(seed=DEFAULT_SEED) -> AuditOutcome:
    s = ep_system()
    laws = sl2_invariants(s, seed=seed)
    traj = integrate(s.field(), (0.0, [1.0], [0.0]), default_settings())
    oracle = np.sqrt(1.0 + traj.times ** 2)
    err = float(np.max(np.abs(traj.q[:, 0] - oracle)))
    rep = monitor(traj, laws)
    expected = {"I1": 0.5, "I2": 0.0, "I3": 0.5, "J": 1.0}
    dev = {}
    for law in laws:
        vals = law.values(traj.times, traj.q, traj.v)
        dev[law.name] = float(np.max(np.abs(vals - expected[law.name])))
    ok = err <= 1e-7 and all(d <= 1e-8 for d in dev.values())
    return AuditOutcome("cons-ep-oracle", PASS if ok else FAIL,
                        {"max_oracle_error": err, "max_deviation_from_oracle_values": dev,
                         "drift": {k: v.scaled for k, v in rep.laws.items()}, "steps": traj.accepted},
                        seed, kind="conservation")


def check_lewis(seed=DEFAULT_SEED) -> AuditOutcome:
    s = oscillator_pair_system("1")
    law = lewis_law(s.jet)
    traj = integrate(s.field(), (0.0, [0.0, 1.0], [1.0, 0.0]), default_settings())
    vals = law.values(traj.times, traj.q, traj.v)
    dev = float(np.max(np.abs(vals - 0.5)))
    return AuditOutcome("cons-lewis", PASS if dev <= 1e-8 else FAIL,
                        {"J0": float(vals[0]), "max_deviation_from_half": dev}, seed, kind="conservation")


def check_pinney(seed=DEFAULT_SEED) -> AuditOutcome:
    t = np.linspace(0.0, 10.0, 201)
    sol = pinney_superposition("1", "t", (1.0, 1.0, 0.0), "0")
    res0 = float(np.max(np.abs(sol.residual(t))))
    traj = integrate(ep_system().field(), (0.0, [1.0], [0.0]), default_settings())
    dev = float(np.max(np.abs(sol(traj.times) - traj.q[:, 0])))
    rng = np.random.default_rng(seed)
    w = EPFrequency.of("1")
    r1, r2 = OscillatorSolution.from_expr("cos(t)"), OscillatorSolution.from_expr("sin(t)")
    good, bad = 0.0, np.inf
    for _ in range(20):
        c1, c2 = rng.uniform(1.0, 3.0, 2)
        c3 = math.sqrt(c1 * c2 - 1.0)
        good = max(good, float(np.max(np.abs(pinney_superposition(r1, r2, (c1, c2, c3), w).residual(t)))))
        pert = pinney_superposition(r1, r2, (c1, c2, c3 + 0.1), w, check=False)
        bad = min(bad, float(np.max(np.abs(pert.residual(t)))))
    ok = res0 <= 1e-8 and dev <= 1e-6 and good <= 1e-8 and bad >= 1e-3
    return AuditOutcome("pinney-superposition", PASS if ok else FAIL,
                        {"residual_free": res0, "max_dev_from_integrated": dev,
                         "max_residual_constrained": good, "min_residual_perturbed": float(bad)},
                        seed, kind="conservation")


def check_generic_2d(seed=DEFAULT_SEED) -> AuditOutcome:
    s = generic_2d_system()
    laws = sl2_invariants(s, seed=seed)
    return conservation_audit(s, laws, initial_conditions(s, N_INITIAL, seed, chart=s.chart),
                              check_id="cons-2d-generic", seed=seed)


def check_rayreid(seed=DEFAULT_SEED) -> AuditOutcome:
    pair = RayReidPair.of("1", "2")
    fld = ray_reid_system(pair, "0")
    law = ray_reid_invariant(pair, fld.jet)
    out = conservation_audit(fld, [law], [(0.0, np.array([1.0, 2.0]), np.array([0.1, -0.2]))],
                             check_id="cons-rayreid", seed=seed)
    spot = ray_reid_quadrature(pair, 2.0)
    out.metrics["quadrature_1_to_2"] = spot
    if abs(spot - 0.75) > 1e-10:
        out.verdict = FAIL
    return out


def check_4d_axis(seed=DEFAULT_SEED) -> AuditOutcome:
    entry = find_entry("prop-axis-4d")
    s = entry.angular_system()
    laws = sl2_invariants(s, seed=seed) + [transport(l, s.chart) for l in entry.bound_invariants()]
    return conservation_audit(s, laws, initial_conditions(s, N_INITIAL, seed, chart=s.chart),
                              check_id="cons-4d-axis", seed=seed)


def check_integrator_order(seed=DEFAULT_SEED) -> AuditOutcome:
    fld = ep_system().field()
    errs = []
    for h in (0.1, 0.05):
        tr = integrate_fixed(fld, (0.0, [1.0], [0.0]), IntegratorSettings(method="fixed4", h=h, t_end=10.0))
        errs.append(float(np.max(np.abs(tr.q[:, 0] - np.sqrt(1 + tr.times ** 2)))))
    ratio = errs[0] / errs[1]
    return AuditOutcome("integrator-order", PASS if 12 <= ratio <= 20 else FAIL,
                        {"h": [0.1, 0.05], "errors": errs, "ratio": ratio}, seed, kind="integrator")


def _sym_sl2(n, seed):
    if n == 1:
        s = ep_system()
    else:
        ch = chart_for(n, "polar" if n == 2 else "nd")
        s = ermakov_nd_system(n, random_angular_potential(ch, seed), ch)
    out = symmetry_audit(s, _sl2_with_terms(s), check_id=f"sym-{'ep' if n == 1 else f'{n}d'}-sl2", seed=seed)
    if n > 1:
        out.notes.append(f"V = {to_text(s.potential)}")
    return out


def check_sym_ep(seed=DEFAULT_SEED):
    return _sym_sl2(1, seed)


def check_sym_2d(seed=DEFAULT_SEED):
    return _sym_sl2(2, seed)


def check_sym_3d(seed=DEFAULT_SEED):
    return _sym_sl2(3, seed)


def check_sym_4d(seed=DEFAULT_SEED):
    return _sym_sl2(4, seed)


def _phi_system(V):
    ch = chart_for(3, "nd")
    return ermakov_nd_system(3, V, ch)


def _phi_generator(s):
    return GeneratorField(s.jet, 0, (0, 0, 1), "d_phi")


def check_sym_phi(seed=DEFAULT_SEED):
    s = _phi_system("2 + sin(theta)")
    return symmetry_audit(s, [(_phi_generator(s), 0)], check_id="sym-3d-phi", seed=seed)


def check_control_phi_vd(seed=DEFAULT_SEED):
    """d_phi must not be a symmetry when V depends on phi (V_D)."""
    s = _phi_system("1/(cos(theta)*sin(phi))^2")
    inner = symmetry_audit(s, [(_phi_generator(s), 0)], check_id="d_phi on V_D", seed=seed)
    worst = max(m["lie"] for m in inner.metrics["generators"].values())
    ok = inner.verdict == FAIL and worst >= 1e3 * RESIDUAL_TOL
    return AuditOutcome("control-phi-vd", PASS if ok else FAIL,
                        {"inner_verdict": inner.verdict, "max_residual": worst}, seed,
                        ["negative control: expected the symmetry audit to fail"], kind="control")


def check_control_scaling(seed=DEFAULT_SEED):
    """rho d_rho alone is not a Lie symmetry of the EP equation; its residual is 4 rho^-3."""
    s = ep_system()
    X = GeneratorField(s.jet, 0, (s.jet.q[0],), "rho d_rho")
    res = lie_symmetry_residual(X, s, seed=seed)
    rho = s.jet.q[0]
    diff = add(res.exprs[0], mul(-4, power(rho, -3)))
    rel = equal_on_samples(mul(diff, power(rho, 3)), 0, s.sample_domain(), seed=seed)
    ok = res.max_abs > RESIDUAL_TOL and rel.max_abs_deviation / 4 <= 1e-8
    return AuditOutcome("control-scaling-only", PASS if ok else FAIL,
                        {"max_residual": res.max_abs, "relative_error_vs_4rho^-3": rel.max_abs_deviation / 4},
                        seed, ["negative control: expected rejection"], kind="control")


def check_control_angmom(seed=DEFAULT_SEED):
    """V0(1 + 0.1 sin 3 theta): rho^2 theta_dot drifts while the SL(2,R) integrals stay conserved."""
    s = generic_2d_system("1 + 0.1*sin(3*theta)")
    from .symmetry import ConservationLaw
    rho, th = s.jet.q
    L = ConservationLaw("rho^2 theta_dot", s.jet, mul(power(rho, 2), s.jet.v[1]))
    laws = sl2_invariants(s, seed=seed)
    ics = initial_conditions(s, N_INITIAL, seed, chart=s.chart)
    inner = conservation_audit(s, laws + [L], ics, check_id="perturbed", seed=seed, keep_reports=True)
    angmom = min(r.laws[L.name].max_abs for r in inner.reports)
    sl2_ok = all(inner.metrics["laws"][l.name]["scaled"] <= DRIFT_TOL for l in laws)
    ok = angmom >= 1e-3 and angmom >= 1e3 * DRIFT_TOL and sl2_ok
    return AuditOutcome("control-angmom-2d", PASS if ok else FAIL,
                        {"min_angular_momentum_drift": angmom,
                         "sl2_drift": {l.name: inner.metrics["laws"][l.name]["scaled"] for l in laws}},
                        seed, ["negative control: angular momentum must drift"], kind="control")


# identities

def _nd3():
    return chart_for(3, "nd")


def _sp3():
    return chart_for(3, "spherical")


def _angles_domain(chart):
    return {s.name: ANGLE_BOX for s in chart.jet.q[1:]}


def _rho2(chart, V):
    return mul(power(chart.jet.q[0], -2), V)


def check_vc_cartesian(seed=DEFAULT_SEED):
    ch = _nd3()
    x = ch.cartesian.q[0]
    return identity_audit(_rho2(ch, find_entry("3d-angular-VC").bound_angular()), power(x, -2), ch, seed=seed,
                          check_id="vc-cartesian")


def check_vd_cartesian(seed=DEFAULT_SEED):
    ch = _nd3()
    y = ch.cartesian.q[1]
    return identity_audit(_rho2(ch, find_entry("3d-angular-VD").bound_angular()), power(y, -2), ch, seed=seed,
                          check_id="vd-cartesian")


def _xz(ch):
    x, _, z = ch.cartesian.q
    return power(add(power(x, 2), power(z, 2)), -1)


def check_vg_cartesian(seed=DEFAULT_SEED):
    ch = _sp3()
    out = identity_audit(_rho2(ch, find_entry("3d-angular-VG").bound_angular()), _xz(ch), ch, seed=seed,
                         check_id="vg-cartesian")
    nd = _nd3()
    VG_nd = substitute(find_entry("3d-angular-VG").angular_form, {"theta": nd.jet.q[1], "phi": nd.jet.q[2]})
    other = identity_audit(_rho2(nd, VG_nd), _xz(nd), nd, seed=seed)
    out.metrics["recursive_chart_scaled_deviation"] = other.metrics["max_scaled_deviation"]
    out.notes.append("holds in the sin^2 chart; in the recursive chart it holds only on theta = pi/4")
    return out


def check_vf_cartesian(seed=DEFAULT_SEED):
    ch = _sp3()
    out = identity_audit(_rho2(ch, find_entry("3d-angular-VF").bound_angular()), _xz(ch), ch, seed=seed,
                         check_id="vf-cartesian", probe=PROBE_3D, errata=LEDGERED_ERRATA["vf-cartesian"])
    out.notes.append("the reduction to (x^2 + z^2)^-1 belongs to V_G; V_F reduces to (x^2 + y^2)^-1")
    return out


def check_vf_closed_form(seed=DEFAULT_SEED):
    ch = _sp3()
    th, ph = ch.jet.q[1:]
    closed = parse("1/(1 - cos(phi)^2*sin(theta)^2)", ch.jet.table())
    return identity_audit(find_entry("3d-angular-VF").bound_angular(), closed, None, n=1000, tol=IDENTITY_TOL_TRIG,
                          seed=seed, domain=_angles_domain(ch), check_id="vf-closed-form")


def check_vg_closed_form(seed=DEFAULT_SEED):
    ch = _sp3()
    printed = parse("(1 - sin(phi)^2*sin(theta)^2)^(-1)", ch.jet.table())
    return identity_audit(find_entry("3d-angular-VG").bound_angular(), printed, None, n=1000, tol=IDENTITY_TOL_TRIG,
                          seed=seed, domain=_angles_domain(ch), check_id="vg-closed-form")


def check_vf_sign(seed=DEFAULT_SEED):
    ch = _sp3()
    printed = parse("(cos(phi)^2*sin(theta)^2 - 1)^(-1)", ch.jet.table())
    out = identity_audit(find_entry("3d-angular-VF").bound_angular(), printed, None, n=1000, tol=IDENTITY_TOL_TRIG,
                         seed=seed, domain=_angles_domain(ch), check_id="vf-simplified-sign",
                         probe={"theta": math.pi / 4, "phi": math.pi / 3}, errata="vf-simplified-sign")
    if out.counterexample and out.counterexample["deviation"] < 1:
        out.verdict = FAIL
        out.notes.append("expected a sign error with deviation >= 1")
    return out


def check_vb_vc_same(seed=DEFAULT_SEED):
    ch = chart_for(2, "polar")
    th = ch.jet.q[1]
    VB = find_entry("2d-VB").bound_angular()
    VC = parse("1/sin(theta)^2", ch.jet.table())
    shifted = substitute(VB, {th: add(th, -math.pi / 2)})
    return identity_audit(VC, shifted, None, tol=IDENTITY_TOL_TRIG, seed=seed, domain={"theta": ANGLE_BOX},
                          check_id="vb-vc-same")


def _j_identity(n, seed):
    ch = chart_for(n, "polar" if n == 2 else "nd")
    s = ermakov_nd_system(n, random_angular_potential(ch, seed), ch)
    J = sl2_invariants(s, seed=seed)[3].expr
    return identity_audit(J, j_identity_form(s), None, seed=seed, domain=s.sample_domain(),
                          check_id=f"j-identity-{n}d")


def check_j_2d(seed=DEFAULT_SEED):
    return _j_identity(2, seed)


def check_j_3d(seed=DEFAULT_SEED):
    return _j_identity(3, seed)


def check_j_4d(seed=DEFAULT_SEED):
    return _j_identity(4, seed)


def check_theta_equation(seed=DEFAULT_SEED):
    """Printed theta equation: theta_ddot = -2 rho theta_dot + V'(theta)/(2 rho^4)."""
    s = generic_2d_system()
    rho, th = s.jet.q
    rd, thd = s.jet.v
    printed = add(mul(-2, rho, thd), mul(differentiate(s.potential, th), 0.5, power(rho, -4)))
    out = identity_audit(s.accelerations[1], printed, None, seed=seed, domain=s.sample_domain(),
                         check_id="theta-equation-form", probe=PROBE_2D, errata="theta-equation-form")
    out.notes.append("derived: theta_ddot = -2 rho_dot theta_dot / rho - V'(theta) / (2 rho^4)")
    return out


def check_j_reduced(seed=DEFAULT_SEED):
    s = generic_2d_system()
    J = sl2_invariants(s, seed=seed)[3].expr
    rho, rd = s.jet.q[0], s.jet.v[0]
    printed = mul(0.5, add(power(rd, 2), power(rho, -2)))
    out = identity_audit(J, printed, None, seed=seed, domain=s.sample_domain(), check_id="j-reduced-form",
                         probe=PROBE_2D, errata="j-reduced-form")
    out.notes.append("derived: 4 I1 I3 - I2^2 = rho^4 theta_dot^2 + V(theta); identically 1 for the scalar equation")
    return out


def check_angmom_exponent(seed=DEFAULT_SEED):
    """Printed rho^2 sin^2(theta) phi_dot^2 versus the Noether integral of d_phi."""
    s = _phi_system("2 + sin(theta)")
    rho, th, ph = s.jet.q
    cert = certify(_phi_generator(s), 0, s.lagrangian, system=s, seed=seed)
    derived = noether_integral(cert, s.lagrangian, "L_phi")
    printed = mul(power(rho, 2), power(sin(th), 2), power(s.jet.v[2], 2))
    out = onshell_claim_audit(printed, s, check_id="angular-momentum-exponent", errata="angular-momentum-exponent",
                              seed=seed)
    d = derived.onshell_derivative(s.accelerations)
    out.metrics["derived_form"] = to_text(derived.expr)
    out.metrics["derived_max_abs_onshell_derivative"] = max_abs_on_samples([d], s.sample_domain(), seed=seed)[0]
    sp = ermakov_nd_system(3, "2 + sin(theta)", chart_for(3, "spherical"))
    rho_s, th_s, _ = sp.jet.q
    native = onshell_claim_audit(mul(power(rho_s, 2), power(sin(th_s), 2), power(sp.jet.v[2], 2)), sp,
                                 check_id="native", seed=seed)
    out.metrics["sin2_chart_max_abs_onshell_derivative"] = native.metrics["max_abs_onshell_derivative"]
    out.notes.append("the printed form is not conserved in either chart; the conjugate momentum is linear in phi_dot")
    return out


def check_vd_j2(seed=DEFAULT_SEED):
    e = find_entry("2d-VD")
    s = e.cartesian_system()
    y = s.jet.q[1]
    V1 = e.parameters["V1"]
    printed = mul(0.5, add(power(s.jet.v[1], 2), mul(V1, power(y, -2))))
    out = onshell_claim_audit(printed, s, check_id="vd-j2-coefficient", errata="vd-j2-coefficient", seed=seed)
    out.notes.append("with V2 in place of V1 the integral is conserved (see catalog:2d-VD)")
    return out


def _catalog_check(entry_id):
    def run(seed=DEFAULT_SEED):
        return catalog_audit(find_entry(entry_id), seed=seed)
    run.__name__ = f"catalog_{entry_id}"
    return run


@dataclass(frozen=True)
class Check:
    id: str
    kind: str
    run: Callable
    expected: str = PASS


def _catalog_ids():
    return [e.id for n in (2, 3, 4) for e in catalog(n)]


def registry() -> dict:
    checks = [
        Check("cons-ep-oracle", "conservation", check_ep_oracle),
        Check("cons-lewis", "conservation", check_lewis),
        Check("pinney-superposition", "conservation", check_pinney),
        Check("cons-2d-generic", "conservation", check_generic_2d),
        Check("cons-rayreid", "conservation", check_rayreid),
        Check("cons-4d-axis", "conservation", check_4d_axis),
        Check("integrator-order", "integrator", check_integrator_order),
        Check("sym-ep-sl2", "symmetry", check_sym_ep),
        Check("sym-2d-sl2", "symmetry", check_sym_2d),
        Check("sym-3d-sl2", "symmetry", check_sym_3d),
        Check("sym-4d-sl2", "symmetry", check_sym_4d),
        Check("sym-3d-phi", "symmetry", check_sym_phi),
        Check("control-phi-vd", "control", check_control_phi_vd),
        Check("control-scaling-only", "control", check_control_scaling),
        Check("control-angmom-2d", "control", check_control_angmom),
        Check("vc-cartesian", "identity", check_vc_cartesian),
        Check("vd-cartesian", "identity", check_vd_cartesian),
        Check("vg-cartesian", "identity", check_vg_cartesian),
        Check("vf-closed-form", "identity", check_vf_closed_form),
        Check("vg-closed-form", "identity", check_vg_closed_form),
        Check("vb-vc-same", "identity", check_vb_vc_same),
        Check("j-identity-2d", "identity", check_j_2d),
        Check("j-identity-3d", "identity", check_j_3d),
        Check("j-identity-4d", "identity", check_j_4d),
        Check("vf-cartesian", "identity", check_vf_cartesian, REFUTED),
        Check("vf-simplified-sign", "identity", check_vf_sign, REFUTED),
        Check("theta-equation-form", "identity", check_theta_equation, REFUTED),
        Check("j-reduced-form", "identity", check_j_reduced, REFUTED),
        Check("angular-momentum-exponent", "claim", check_angmom_exponent, REFUTED),
        Check("vd-j2-coefficient", "claim", check_vd_j2, REFUTED),
    ]
    checks += [Check(f"catalog:{eid}", "catalog", _catalog_check(eid)) for eid in _catalog_ids()]
    return {c.id: c for c in checks}


def _run_one(check_id: str, seed: int) -> AuditOutcome:
    chk = registry()[check_id]
    try:
        out = chk.run(seed=seed)
    except Exception as exc:  # a crashing check is reported, never hidden
        out = AuditOutcome(check_id, FAIL, {}, seed, [f"{type(exc).__name__}: {exc}"], kind=chk.kind)
    out.check_id = check_id
    return out


def run_checks(ids, seed: int = DEFAULT_SEED, jobs: int = 1) -> list:
    ids = sorted(ids)
    if jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, ids, [seed] * len(ids)))
    else:
        results = [_run_one(i, seed) for i in ids]
    return sorted(results, key=lambda o: o.check_id)


def run_all(seed: int = DEFAULT_SEED, jobs: int = 1) -> list:
    return run_checks(list(registry()), seed, jobs)


@dataclass
class Summary:
    outcomes: list
    unexpected: list
    refuted: list

    @property
    def ok(self) -> bool:
        return not self.unexpected


def summarize(outcomes) -> Summary:
    reg = registry()
    unexpected, refuted = [], []
    for o in outcomes:
        expected = reg[o.check_id].expected if o.check_id in reg else PASS
        if o.verdict == REFUTED:
            refuted.append(o.check_id)
            if expected != REFUTED or LEDGERED_ERRATA.get(o.check_id) != o.errata or o.counterexample is None:
                unexpected.append(o.check_id)
        elif o.verdict != expected:
            unexpected.append(o.check_id)
    return Summary(outcomes, unexpected, refuted)


def report_json(outcomes) -> str:
    s = summarize(outcomes)
    doc = {
        "checks": {o.check_id: o.to_dict() for o in outcomes},
        "refuted_claims": s.refuted,
        "unexpected": s.unexpected,
        "ledgered_errata": LEDGERED_ERRATA,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def report_table(outcomes) -> str:
    s = summarize(outcomes)
    w = max([len(o.check_id) for o in outcomes] + [8])
    lines = [f"{'check':<{w}}  {'verdict':<13}  detail"]
    for o in outcomes:
        flag = "  UNEXPECTED" if o.check_id in s.unexpected else ""
        detail = ""
        if o.counterexample:
            c = o.counterexample
            detail = f"lhs={c['lhs']:.7g} rhs={c['rhs']:.7g}"
        elif o.notes and o.verdict != PASS:
            detail = o.notes[0][:80]
        lines.append(f"{o.check_id:<{w}}  {o.verdict:<13}  {detail}{flag}")
    lines.append(f"{len(outcomes)} checks, {len(s.refuted)} refuted claims, {len(s.unexpected)} unexpected")
    return "\n".join(lines)
