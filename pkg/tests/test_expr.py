import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ermakit.expr import (
    ExprSyntaxError, InsufficientSamples, Jet, JetOverflow, UnboundSymbol, add, as_expr, cos,
    differentiate, equal_on_samples, evaluate, lambdify, mul, parse, power, sample_points, sin,
    to_text, total_derivative,
)

X = parse("x")
Y = parse("y")
DOMAIN = {"x": (0.5, 2.0), "y": (0.5, 2.0)}


def _leaves():
    return st.one_of(st.just(X), st.just(Y),
                     st.integers(-3, 3).filter(lambda k: k != 0).map(as_expr),
                     st.sampled_from([0.5, 1.5, -0.25]).map(as_expr))


# powers are applied to positive bases so that every tree is smooth on DOMAIN
def _safe(children):
    pos = st.one_of(st.just(X), st.just(Y), children.map(lambda e: add(3, sin(e))))
    return st.one_of(
        st.tuples(children, children).map(lambda p: add(*p)),
        st.tuples(children, children).map(lambda p: mul(*p)),
        st.tuples(pos, st.sampled_from([2, 3, -1, 0.5, -1.5])).map(lambda p: power(*p)),
        children.map(sin),
        children.map(cos),
    )


exprs = st.recursive(_leaves(), _safe, max_leaves=6)
points = st.fixed_dictionaries({"x": st.floats(0.6, 1.9), "y": st.floats(0.6, 1.9)})


def test_parse_precedence():
    e = parse("1 + 2*x^2 - y/4")
    assert evaluate(e, {"x": 3.0, "y": 8.0}) == pytest.approx(17.0)
    assert evaluate(parse("-x^2"), {"x": 3.0}) == pytest.approx(-9.0)
    assert evaluate(parse("2^-1"), {}) == pytest.approx(0.5)


def test_parse_functions_and_pi():
    e = parse("sin(pi/6) + cos(0)")
    assert evaluate(e, {}) == pytest.approx(1.5)


def test_syntax_error_points_at_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + * 2")
    assert info.value.position == 4
    assert "^" in str(info.value)


def test_strict_parse_rejects_unknown_names():
    jet = Jet.make(["rho"])
    parse("rho_dot^2", jet.table(), strict=True)
    with pytest.raises(Exception):
        parse("rho + q", jet.table(), strict=True)


def test_unbound_symbol_on_evaluation():
    with pytest.raises(UnboundSymbol):
        evaluate(parse("x + y"), {"x": 1.0})


def test_known_derivatives():
    x = X
    cases = [
        (sin(power(x, 2)), mul(2, x, cos(power(x, 2)))),
        (power(x, -1), mul(-1, power(x, -2))),
        (mul(x, power(Y, 3)), power(Y, 3)),
        (power(x, 0.5), mul(0.5, power(x, -0.5))),
    ]
    for e, d in cases:
        assert equal_on_samples(differentiate(e, x), d, DOMAIN, tol=1e-12).equal


def test_total_derivative_uses_chain_rule():
    jet = Jet.make(["q"])
    q, qd = jet.q[0], jet.v[0]
    e = mul(jet.t, power(q, 2))
    d = total_derivative(e, jet)
    expected = add(power(q, 2), mul(2, jet.t, q, qd))
    dom = {"t": (0, 1), "q": (0.5, 2), "q_dot": (-1, 1)}
    assert equal_on_samples(d, expected, dom, tol=1e-12).equal
    with pytest.raises(JetOverflow):
        total_derivative(jet.a[0], jet)


def test_sampling_respects_denominator_guard():
    e = power(add(X, -1), -1)
    syms, pts, rejected = sample_points([e], {"x": (0.5, 1.5)}, 100, guard=0.2, seed=3)
    assert np.all(np.abs(pts[:, 0] - 1.0) >= 0.2)
    assert rejected > 0


def test_sampling_gives_up_on_empty_domain():
    e = power(add(X, -1), -1)
    with pytest.raises(InsufficientSamples):
        sample_points([e], {"x": (0.95, 1.05)}, 10, guard=0.2, seed=0)


def test_inequality_is_detected():
    v = equal_on_samples(sin(X), add(X, mul(-1 / 6, power(X, 3))), DOMAIN, tol=1e-10)
    assert not v.equal
    assert v.max_abs_deviation > 1e-4
    assert v.lhs_at_worst == pytest.approx(math.sin(v.worst_point["x"]))


@given(exprs, points)
def test_round_trip_through_text(e, p):
    back = parse(to_text(e))
    a, b = evaluate(e, p), evaluate(back, p)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(exprs, points)
def test_compiled_matches_tree_evaluation(e, p):
    f = lambdify([e], [X, Y])
    assert f(p["x"], p["y"])[0] == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)


@given(exprs, points)
def test_central_difference_error_is_second_order(e, p):
    d = differentiate(e, X)
    exact = evaluate(d, p)
    y = p["y"]

    def fd(h):
        lo = evaluate(e, {"x": p["x"] - h, "y": y})
        hi = evaluate(e, {"x": p["x"] + h, "y": y})
        return (hi - lo) / (2 * h)

    # the truncation error must dominate rounding for the ratio to be visible
    h = 1e-2
    e1, e2 = fd(h) - exact, fd(h / 2) - exact
    scale = max(1.0, abs(exact))
    assume(abs(e1) > 1e-7 * scale)
    assert 3.5 <= e1 / e2 <= 4.5
    # Richardson estimate of C, then the bound at h = 1e-5
    C = abs(e1 - e2) / (h ** 2 - (h / 2) ** 2)
    small = 1e-5
    assert abs(fd(small) - exact) <= 2 * C * small ** 2 + 1e-9 * scale


@given(exprs, exprs, st.floats(-3, 3), st.floats(-3, 3))
def test_differentiation_is_linear(e1, e2, a, b):
    lhs = differentiate(add(mul(a, e1), mul(b, e2)), X)
    rhs = add(mul(a, differentiate(e1, X)), mul(b, differentiate(e2, X)))
    assert equal_on_samples(lhs, rhs, DOMAIN, n=50, tol=1e-12).equal


@given(exprs, st.integers(0, 2 ** 32 - 1))
def test_identity_verdicts_are_deterministic(e, seed):
    other = add(e, mul(1e-9, X))
    v1 = equal_on_samples(e, other, DOMAIN, n=30, seed=seed)
    v2 = equal_on_samples(e, other, DOMAIN, n=30, seed=seed)
    assert v1 == v2
