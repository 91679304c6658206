import json

import pytest

import ermakit.audit as A
from ermakit.catalog import catalog


@pytest.fixture(scope="module")
def outcomes():
    return A.run_all()


def test_no_unexpected_outcomes(outcomes):
    s = A.summarize(outcomes)
    assert s.unexpected == []
    assert s.ok


def test_refuted_set_matches_ledger(outcomes):
    refuted = [o for o in outcomes if o.verdict == A.REFUTED]
    assert sorted(o.check_id for o in refuted) == sorted(A.LEDGERED_ERRATA)
    for o in refuted:
        assert o.errata == A.LEDGERED_ERRATA[o.check_id]
        assert o.counterexample is not None


def test_every_entry_erratum_has_exactly_one_refuted_outcome(outcomes):
    flags = [x for n in (2, 3, 4) for e in catalog(n) for x in e.errata]
    errata = [o.errata for o in outcomes if o.verdict == A.REFUTED]
    for flag in flags:
        assert errata.count(flag) == 1, flag


def test_catalog_checks_all_pass(outcomes):
    cat = [o for o in outcomes if o.kind == "catalog"]
    assert len(cat) == sum(len(catalog(n)) for n in (2, 3, 4))
    assert all(o.verdict == A.PASS for o in cat)


def test_controls_are_separated(outcomes):
    by = {o.check_id: o for o in outcomes}
    m = by["control-angmom-2d"].metrics
    assert m["min_angular_momentum_drift"] >= 1e3 * A.DRIFT_TOL
    assert by["control-phi-vd"].metrics["max_residual"] >= 1e3 * A.RESIDUAL_TOL


@pytest.mark.parametrize("check_id", ["cons-2d-generic", "vf-cartesian", "sym-3d-sl2", "catalog:2d-VD"])
def test_same_seed_same_metrics(check_id):
    a = A.run_checks([check_id], seed=7)[0].to_dict()
    b = A.run_checks([check_id], seed=7)[0].to_dict()
    assert a == b


def test_initial_conditions_are_in_the_box():
    s = A.generic_2d_system()
    for t0, q, v in A.initial_conditions(s, 20, seed=3, chart=s.chart):
        assert 0.5 <= q[0] <= 2.0
        assert 0.2 <= q[1] <= 1.5707963267948966 - 0.2
        assert all(-1 <= x <= 1 for x in v)


def test_identity_audit_verdicts():
    from ermakit.expr import parse
    ok = A.identity_audit(parse("sin(x)^2 + cos(x)^2"), parse("1"), domain={"x": (0, 3)}, check_id="pyth")
    assert ok.verdict == A.PASS
    bad = A.identity_audit(parse("sin(x)^2"), parse("1"), domain={"x": (0, 3)}, check_id="bad",
                           errata="made-up")
    assert bad.verdict == A.REFUTED and bad.counterexample is not None
    # a refutation that nobody ledgered is an unexpected outcome
    plain = A.identity_audit(parse("sin(x)^2"), parse("1"), domain={"x": (0, 3)}, check_id="bad")
    assert A.summarize([plain]).unexpected == ["bad"]


def test_exceptions_become_failures(monkeypatch):
    boom = A.Check("boom", "check", lambda seed=0: 1 / 0)
    monkeypatch.setattr(A, "registry", lambda: {"boom": boom})
    out = A._run_one("boom", 0)
    assert out.verdict == A.FAIL
    assert "ZeroDivisionError" in out.notes[0]


def test_report_json_is_parseable(outcomes):
    doc = json.loads(A.report_json(outcomes))
    assert doc["unexpected"] == []
    assert set(doc["refuted_claims"]) == set(A.LEDGERED_ERRATA)
    assert "6 refuted" in A.report_table(outcomes)


def test_parallel_matches_serial():
    ids = ["cons-lewis", "vf-simplified-sign", "j-identity-2d"]
    serial = [o.to_dict() for o in A.run_checks(ids, seed=5, jobs=1)]
    parallel = [o.to_dict() for o in A.run_checks(ids, seed=5, jobs=2)]
    assert serial == parallel
