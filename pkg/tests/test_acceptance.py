"""Acceptance criteria 1-12, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (also when run as a script:
``python3 tests/test_acceptance.py``).
"""

import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

import ermakit.audit as A
from ermakit.catalog import find_entry
from ermakit.ermakov import (
    RayReidPair, chart_for, ep_system, ermakov_nd_system, oscillator_pair_system, pinney_superposition,
    ray_reid_invariant, ray_reid_quadrature, ray_reid_system, sl2_invariants, transport, lewis_law,
)
from ermakit.expr import add, equal_on_samples, mul, parse, power
from ermakit.integrate import IntegratorSettings, integrate, integrate_fixed, monitor
from ermakit.symmetry import GeneratorField, lie_symmetry_residual, noether_residual, sl2_generators

SEED = 42
SETTINGS = IntegratorSettings(method="adaptive45", rtol=1e-10, atol=1e-12, t_end=10.0)


def _worst_drift(outcome):
    return max(v["scaled"] for v in outcome.metrics["laws"].values())


def criterion_1():
    s = ep_system()
    tr = integrate(s.field(), (0.0, [1.0], [0.0]), SETTINGS)
    err = float(np.max(np.abs(tr.q[:, 0] - np.sqrt(1 + tr.times ** 2))))
    laws = {l.name: l for l in sl2_invariants(s, seed=SEED)}
    dev = {k: float(np.max(np.abs(laws[k].values(tr.times, tr.q, tr.v) - v)))
           for k, v in (("I1", 0.5), ("I2", 0.0), ("I3", 0.5))}
    ok = err <= 1e-7 and max(dev.values()) <= 1e-8
    return ok, f"max|rho - sqrt(1+t^2)| = {err:.2e}, invariant deviations {max(dev.values()):.2e}"


def criterion_2():
    s = oscillator_pair_system("1")
    tr = integrate(s.field(), (0.0, [0.0, 1.0], [1.0, 0.0]), SETTINGS)
    vals = lewis_law(s.jet).values(tr.times, tr.q, tr.v)
    dev = float(np.max(np.abs(vals - 0.5)))
    return dev <= 1e-8, f"max|J - 1/2| = {dev:.2e}"


def criterion_3():
    t = np.linspace(0.0, 10.0, 401)
    sol = pinney_superposition("1", "t", (1.0, 1.0, 0.0), "0")
    res = float(np.max(np.abs(sol.residual(t))))
    tr = integrate(ep_system().field(), (0.0, [1.0], [0.0]), SETTINGS)
    dev = float(np.max(np.abs(sol(tr.times) - tr.q[:, 0])))
    rng = np.random.default_rng(SEED)
    good, bad = 0.0, math.inf
    for _ in range(20):
        c1, c2 = rng.uniform(1.0, 3.0, 2)
        c3 = math.sqrt(c1 * c2 - 1.0)
        good = max(good, float(np.max(np.abs(pinney_superposition("1", "t", (c1, c2, c3), "0").residual(t)))))
        pert = pinney_superposition("1", "t", (c1, c2, c3 + 0.1), "0", check=False)
        bad = min(bad, float(np.max(np.abs(pert.residual(t)))))
    ok = res <= 1e-8 and dev <= 1e-6 and good <= 1e-8 and bad >= 1e-3
    return ok, (f"residual {res:.2e}, deviation from integration {dev:.2e}, "
                f"constrained residual {good:.2e}, perturbed residual >= {bad:.2e}")


def criterion_4():
    s = A.generic_2d_system("2 + sin(theta)")
    noether = max(noether_residual(X, G, s.lagrangian, system=s, n=200).max_abs for X, G in sl2_generators(s.jet))
    laws = sl2_invariants(s, seed=SEED)
    cons = A.conservation_audit(s, laws, A.initial_conditions(s, 5, SEED, chart=s.chart), SETTINGS, seed=SEED)
    rho, th = s.jet.q
    closed = add(mul(power(rho, 4), power(s.jet.v[1], 2)), parse("2 + sin(theta)", s.jet.table()))
    ident = equal_on_samples(laws[3].expr, closed, s.sample_domain(), tol=1e-10, seed=SEED)
    drift = _worst_drift(cons)
    ok = noether <= 1e-10 and drift <= 1e-7 and ident.equal
    return ok, f"Noether residual {noether:.2e}, drift {drift:.2e}, J identity {ident.max_scaled_deviation:.2e}"


def criterion_5():
    worst = 0.0
    for eid in ("2d-VA", "2d-VB", "2d-VD", "2d-VE"):
        e = find_entry(eid)
        s = e.cartesian_system()
        out = A.conservation_audit(s, e.bound_invariants(), A.initial_conditions(s, 5, SEED, chart=e.chart_object()),
                                   SETTINGS, seed=SEED)
        worst = max(worst, _worst_drift(out))
    ctl = A.check_control_angmom(SEED)
    angmom = ctl.metrics["min_angular_momentum_drift"]
    sl2 = max(ctl.metrics["sl2_drift"].values())
    ok = worst <= 1e-7 and angmom >= 1e-3 and sl2 <= 1e-7
    return ok, f"extra invariants drift {worst:.2e}; control: angular momentum {angmom:.2e}, I1-I3/J {sl2:.2e}"


def criterion_6():
    closed = A.check_vf_closed_form(SEED)
    sign = A.check_vf_sign(SEED)
    vc, vd = A.check_vc_cartesian(SEED), A.check_vd_cartesian(SEED)
    vg, vf = A.check_vg_cartesian(SEED), A.check_vf_cartesian(SEED)
    ce = vf.counterexample or {}
    ok = (closed.verdict == A.PASS and closed.metrics["samples"] == 1000
          and closed.metrics["tolerance"] == 1e-12
          and sign.verdict == A.REFUTED and sign.counterexample["deviation"] >= 1
          and vc.verdict == A.PASS and vd.verdict == A.PASS
          and vg.verdict == A.PASS and vf.verdict == A.REFUTED
          and ce.get("point") == A.PROBE_3D
          and abs(ce.get("lhs", 0) - 1.142857) < 5e-7 and abs(ce.get("rhs", 0) - 1.6) < 1e-12)
    return ok, (f"(a) closed form {closed.metrics['max_scaled_deviation']:.1e}, sign deviation "
                f"{sign.counterexample['deviation']:.3f}; (b) {vc.verdict}/{vd.verdict}; "
                f"(c) V_G {vg.verdict}, V_F {ce.get('lhs', math.nan):.6f} vs {ce.get('rhs', math.nan):.6f}")


def criterion_7():
    outs = {eid: A.catalog_audit(find_entry(eid), seed=SEED) for eid in ("3d-VA", "3d-VB", "3d-VE1", "3d-VE2")}
    drift = max(max(o.metrics["conservation"]["laws"][name]["scaled"] for name, *_ in find_entry(eid).extra_invariants)
                for eid, o in outs.items())
    ok = all(o.verdict == A.PASS for o in outs.values()) and drift <= 1e-7
    return ok, f"{sum(o.verdict == A.PASS for o in outs.values())}/4 entries pass, extra invariants drift {drift:.2e}"


def criterion_8():
    t0 = time.perf_counter()
    e = find_entry("prop-axis-4d")
    assert [e.parameters[f"V{i}"] for i in range(1, 5)] == [1.0, 2.0, 3.0, 4.0]
    s = e.angular_system()
    laws = sl2_invariants(s, seed=SEED) + [transport(l, s.chart) for l in e.bound_invariants()]
    out = A.conservation_audit(s, laws, A.initial_conditions(s, 5, SEED, chart=s.chart), SETTINGS, seed=SEED)
    elapsed = time.perf_counter() - t0
    drift = _worst_drift(out)
    ok = len(laws) == 8 and drift <= 1e-7 and elapsed <= 10.0
    return ok, f"{len(laws)} invariants, drift {drift:.2e}, runtime {elapsed:.2f} s"


def criterion_9():
    worst = 0.0
    for n in (1, 2, 3, 4):
        if n == 1:
            s = ep_system()
        else:
            ch = chart_for(n, "polar" if n == 2 else "nd")
            s = ermakov_nd_system(n, A.random_angular_potential(ch, SEED + n), ch)
        for X, _ in sl2_generators(s.jet, s.kind):
            worst = max(worst, lie_symmetry_residual(X, s, seed=SEED).max_abs)
    s = ep_system()
    rho = s.jet.q[0]
    res = lie_symmetry_residual(GeneratorField(s.jet, 0, (rho,), "scale"), s, seed=SEED)
    ratio = equal_on_samples(mul(res.exprs[0], power(rho, 3), 0.25), 1, s.sample_domain(), seed=SEED)
    ok = worst <= 1e-10 and res.max_abs > 1e-10 and ratio.max_abs_deviation <= 1e-8
    return ok, (f"SL(2,R) residual {worst:.2e}; scaling residual {res.max_abs:.2f}, "
                f"relative error vs 4 rho^-3 {ratio.max_abs_deviation:.2e}")


def criterion_10():
    pair = RayReidPair.of("1", "2")
    fld = ray_reid_system(pair, "0")
    tr = integrate(fld, (0.0, [1.0, 2.0], [0.1, -0.2]), SETTINGS)
    drift = monitor(tr, [ray_reid_invariant(pair, fld.jet)])["I_rayreid"]
    spot = ray_reid_quadrature(pair, 2.0)
    ok = tr.status == "complete" and drift.scaled <= 1e-7 and abs(spot - 0.75) <= 1e-10
    return ok, f"drift {drift.scaled:.2e}, quadrature {spot!r}"


def criterion_11():
    errs = []
    for h in (0.1, 0.05):
        tr = integrate_fixed(ep_system().field(), (0.0, [1.0], [0.0]),
                             IntegratorSettings(method="fixed4", h=h, t_end=10.0))
        errs.append(float(np.max(np.abs(tr.q[:, 0] - np.sqrt(1 + tr.times ** 2)))))
    ratio = errs[0] / errs[1]
    return 12 <= ratio <= 20, f"error ratio h/(h/2) = {ratio:.3f}"


def criterion_12():
    with tempfile.TemporaryDirectory() as d:
        report = Path(d) / "report.json"
        proc = subprocess.run([sys.executable, "-m", "ermakit.cli", "audit", "all", "--report", str(report)],
                              capture_output=True, text=True)
        doc = json.loads(report.read_text())
    refuted = sorted(doc["refuted_claims"])
    ok = proc.returncode == 0 and refuted == sorted(A.LEDGERED_ERRATA) and doc["unexpected"] == []
    return ok, f"exit {proc.returncode}, refuted {refuted}, unexpected {doc['unexpected']}"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def _line(i, ok, detail):
    return f"criterion {i:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.parametrize("i", sorted(CRITERIA))
def test_criterion(i, capsys):
    ok, detail = CRITERIA[i]()
    with capsys.disabled():
        print("\n" + _line(i, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, fn in CRITERIA.items():
        ok, detail = fn()
        failed += not ok
        print(_line(i, ok, detail))
    sys.exit(1 if failed else 0)
