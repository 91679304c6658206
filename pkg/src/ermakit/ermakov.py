"""Ermakov-type systems: the Ermakov-Pinney equation, the Lewis pairing, Pinney
superposition, the Ray-Reid pair and the Hamiltonian Ermakov system in any
dimension together with its named first integrals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _quad

from .expr import (
    HALF, MINUS_ONE, ONE, ZERO, Expr, Jet, Symbol, add, as_expr, cached_lambdify, cos,
    differentiate, max_abs_on_samples, mul, parse, power, sin, substitute,
)
from .integrate import ExprField
from .mechanics import CoordinateChart, LagrangianSystem, derive_system
from .symmetry import (
    TOL, ConservationLaw, certify, noether_integral, sl2_generators,
)

ANGLE_BOX = (0.2, math.pi / 2 - 0.2)
RADIUS_BOX = (0.5, 2.0)


class ErmakovError(Exception):
    pass


class ZeroRho(ErmakovError):
    pass


class ConstraintViolated(ErmakovError):
    pass


class NegativeRadicand(ErmakovError):
    pass


class QuadratureFailure(ErmakovError, ArithmeticError):
    """Raised for a singular or non-convergent quadrature; monitors report it per law."""


# ---------------------------------------------------------------------------
# charts


def _angle_names(n):
    if n == 2:
        return ["theta"]
    if n == 3:
        return ["theta", "phi"]
    return [f"theta{k}" for k in range(1, n)]


def _cartesian_names(n):
    if n == 2:
        return ["x", "y"]
    if n == 3:
        return ["x", "y", "z"]
    return [f"x{k}" for k in range(1, n + 1)]


def nd_chart(n: int) -> CoordinateChart:
    """Recursive angular chart.

    x1 = rho sin(th1), xk = rho cos(th1)...cos(th_{k-1}) sin(th_k) for k < n,
    xn = rho cos(th1)...cos(th_{n-1}). For n = 3 this is
    (x, y, z) = (rho sin th, rho cos th sin phi, rho cos th cos phi).
    """
    if n < 2:
        raise ErmakovError("need n >= 2")
    jet = Jet.make(["rho"] + _angle_names(n))
    cart = Jet.make(_cartesian_names(n))
    rho, th = jet.q[0], jet.q[1:]
    comps = []
    prefix = rho
    for k in range(n - 1):
        comps.append(mul(prefix, sin(th[k])))
        prefix = mul(prefix, cos(th[k]))
    comps.append(prefix)
    guards = (rho,) + tuple(cos(a) for a in th[:-1])

    def inverse(x):
        x = np.asarray(x, dtype=float)
        r = math.sqrt(float(np.dot(x, x)))
        angles = []
        for k in range(n - 2):
            tail = math.sqrt(float(np.dot(x[k + 1:], x[k + 1:])))
            angles.append(math.atan2(x[k], tail))
        angles.append(math.atan2(x[n - 2], x[n - 1]))
        return [r] + angles

    return CoordinateChart(f"nd{n}", jet, cart, tuple(comps), guards, inverse)


def polar_chart() -> CoordinateChart:
    """(x, y) = (rho cos th, rho sin th)."""
    jet = Jet.make(["rho", "theta"])
    cart = Jet.make(["x", "y"])
    rho, th = jet.q
    return CoordinateChart("polar", jet, cart, (mul(rho, cos(th)), mul(rho, sin(th))), (rho,),
                           lambda x: [math.hypot(x[0], x[1]), math.atan2(x[1], x[0])])


def spherical_chart() -> CoordinateChart:
    """(x, y, z) = (rho cos th, rho sin th sin phi, rho sin th cos phi): the sin^2(th) phi_dot^2 convention."""
    jet = Jet.make(["rho", "theta", "phi"])
    cart = Jet.make(["x", "y", "z"])
    rho, th, ph = jet.q
    comps = (mul(rho, cos(th)), mul(rho, sin(th), sin(ph)), mul(rho, sin(th), cos(ph)))

    def inverse(x):
        r = math.sqrt(float(np.dot(x, x)))
        return [r, math.acos(x[0] / r), math.atan2(x[1], x[2])]

    return CoordinateChart("spherical", jet, cart, comps, (rho, sin(th)), inverse)


def angular_kinetic(chart: CoordinateChart) -> Expr:
    """Angular part A of the kinetic form rho_dot^2 + rho^2 A, in closed nested form."""
    th = chart.jet.q[1:]
    thd = chart.jet.v[1:]
    if chart.name == "spherical":
        return add(power(thd[0], 2), mul(power(sin(th[0]), 2), power(thd[1], 2)))
    if chart.name == "polar" or chart.name.startswith("nd"):
        form = power(thd[-1], 2)
        for k in range(len(th) - 2, -1, -1):
            form = add(power(thd[k], 2), mul(power(cos(th[k]), 2), form))
        return form
    raise ErmakovError(f"no closed angular form for chart {chart.name}")


def chart_for(n: int, name: str | None = None) -> CoordinateChart:
    if name in (None, "nd", f"nd{n}"):
        return nd_chart(n)
    if name == "polar":
        return polar_chart()
    if name == "spherical":
        return spherical_chart()
    raise ErmakovError(f"unknown chart {name!r}")


def angular_domain(chart: CoordinateChart, box=ANGLE_BOX) -> dict:
    dom = {chart.jet.q[0].name: RADIUS_BOX}
    for s in chart.jet.q[1:]:
        dom[s.name] = box
    return dom


# ---------------------------------------------------------------------------
# Ermakov-Pinney


@dataclass(frozen=True)
class EPFrequency:
    """omega^2(t) as an expression in the symbol ``t``."""

    omega_sq: Expr = ZERO

    @classmethod
    def of(cls, w) -> "EPFrequency":
        if isinstance(w, EPFrequency):
            return w
        if w is None:
            return cls()
        if isinstance(w, str):
            return cls(parse(w, {"t": Jet.make([]).t}, strict=True))
        return cls(as_expr(w))

    def on(self, t: Symbol) -> Expr:
        return substitute(self.omega_sq, {"t": t})

    def __call__(self, t) -> float:
        f = cached_lambdify(self.omega_sq, (Symbol("t", "time"),))
        return float(f(float(t))[0])

    @property
    def autonomous(self) -> bool:
        return not any(s.name == "t" for s in self.omega_sq.free_symbols)


def ep_system(w=None) -> LagrangianSystem:
    """L = (rho_dot^2 - omega^2(t) rho^2 - rho^-2)/2, giving rho'' = -omega^2 rho + rho^-3."""
    w = EPFrequency.of(w)
    jet = Jet.make(["rho"])
    rho, = jet.q
    rd, = jet.v
    L = mul(HALF, add(power(rd, 2), mul(MINUS_ONE, w.on(jet.t), power(rho, 2)), mul(MINUS_ONE, power(rho, -2))))
    return derive_system(L, jet, name="ermakov-pinney", kind="radial", domain={"rho": RADIUS_BOX},
                         potential=power(rho, -2))


def lewis_invariant(x_state, rho_state) -> float:
    """J = ((rho x' - rho' x)^2 + (x/rho)^2) / 2."""
    x, xd = x_state
    rho, rhod = rho_state
    if rho == 0:
        raise ZeroRho("rho must be non-zero")
    return 0.5 * ((rho * xd - rhod * x) ** 2 + (x / rho) ** 2)


def oscillator_pair_system(w=None) -> LagrangianSystem:
    """Oscillator x'' = -omega^2 x co-integrated with the Ermakov-Pinney equation for rho."""
    w = EPFrequency.of(w)
    jet = Jet.make(["x", "rho"])
    x, rho = jet.q
    xd, rd = jet.v
    om = w.on(jet.t)
    L = mul(HALF, add(power(xd, 2), mul(MINUS_ONE, om, power(x, 2)), power(rd, 2),
                      mul(MINUS_ONE, om, power(rho, 2)), mul(MINUS_ONE, power(rho, -2))))
    return derive_system(L, jet, name="oscillator+ermakov-pinney", domain={"x": (-1.0, 1.0), "rho": RADIUS_BOX},
                         guards=(rho,))


def lewis_law(jet: Jet) -> ConservationLaw:
    """Expression form of J on the (x, rho) jet of :func:`oscillator_pair_system`."""
    x, rho = jet.q
    xd, rd = jet.v
    J = mul(HALF, add(power(add(mul(rho, xd), mul(MINUS_ONE, rd, x)), 2), power(mul(x, power(rho, -1)), 2)))
    return ConservationLaw("J_lewis", jet, J, "named", description="Ermakov-Lewis invariant")


# ---------------------------------------------------------------------------
# Pinney superposition


class OscillatorSolution:
    """Sampler t -> (value, derivative) for a solution of x'' + omega^2 x = 0."""

    def __init__(self, fn: Callable):
        self._fn = fn

    def __call__(self, t):
        return self._fn(t)

    @classmethod
    def from_expr(cls, e, t: Symbol | None = None) -> "OscillatorSolution":
        e = parse(e, {"t": Symbol("t", "time")}) if isinstance(e, str) else as_expr(e)
        t = t or Symbol("t", "time")
        f = cached_lambdify((e, differentiate(e, t)), (t,), backend="numpy")

        def fn(tt):
            a, b = f(np.asarray(tt, dtype=float))
            shape = np.shape(tt)
            return np.broadcast_to(a, shape).astype(float), np.broadcast_to(b, shape).astype(float)

        out = cls(fn)
        out.expr = e
        return out

    @classmethod
    def from_samples(cls, times, values, derivs) -> "OscillatorSolution":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        derivs = np.asarray(derivs, dtype=float)

        def fn(tt):
            tt = np.asarray(tt, dtype=float)
            return np.interp(tt, times, values), np.interp(tt, times, derivs)

        return cls(fn)


@dataclass(frozen=True)
class PinneyCoefficients:
    c1: float
    c2: float
    c3: float
    W: float

    @property
    def violation(self) -> float:
        """|c1 c2 - c3^2 - W^-2|."""
        return abs(self.c1 * self.c2 - self.c3 ** 2 - self.W ** -2)

    def check(self, tol: float = 1e-10):
        if self.W == 0:
            raise ConstraintViolated("Wronskian is zero: the oscillator solutions are dependent")
        if self.violation > tol:
            raise ConstraintViolated(
                f"c1*c2 - c3^2 = {self.c1 * self.c2 - self.c3 ** 2:.12g} but W^-2 = {self.W ** -2:.12g}")


def wronskian(rho1: OscillatorSolution, rho2: OscillatorSolution, t: float = 0.0) -> float:
    a, ad = rho1(t)
    b, bd = rho2(t)
    return float(a * bd - ad * b)


class PinneySolution:
    """rho = sqrt(c1 rho1^2 + c2 rho2^2 + 2 c3 rho1 rho2) with analytic derivatives."""

    def __init__(self, rho1, rho2, c: PinneyCoefficients, w: EPFrequency):
        self.rho1, self.rho2, self.c, self.w = rho1, rho2, c, w

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        a, ad = self.rho1(t)
        b, bd = self.rho2(t)
        c = self.c
        Q = c.c1 * a * a + c.c2 * b * b + 2 * c.c3 * a * b
        if np.any(Q <= 0):
            raise NegativeRadicand("c1 rho1^2 + c2 rho2^2 + 2 c3 rho1 rho2 is not positive on the window")
        return t, a, ad, b, bd, Q

    def __call__(self, t):
        return np.sqrt(self._parts(t)[-1])

    def derivatives(self, t):
        """(rho, rho_dot, rho_ddot), using rho_i'' = -omega^2 rho_i."""
        t, a, ad, b, bd, Q = self._parts(t)
        c = self.c
        om = np.vectorize(self.w.__call__)(t) if not self.w.autonomous else self.w(0.0)
        add_ = -om * a
        bdd = -om * b
        dQ = 2 * (c.c1 * a * ad + c.c2 * b * bd + c.c3 * (ad * b + a * bd))
        ddQ = 2 * (c.c1 * (ad * ad + a * add_) + c.c2 * (bd * bd + b * bdd)
                   + c.c3 * (add_ * b + 2 * ad * bd + a * bdd))
        rho = np.sqrt(Q)
        rhod = dQ / (2 * rho)
        rhodd = (0.5 * ddQ - rhod * rhod) / rho
        return rho, rhod, rhodd

    def residual(self, t):
        """rho'' + omega^2 rho - rho^-3 at the requested times."""
        rho, _, rhodd = self.derivatives(t)
        t = np.asarray(t, dtype=float)
        om = np.vectorize(self.w.__call__)(t) if not self.w.autonomous else self.w(0.0)
        return rhodd + om * rho - rho ** -3


def pinney_superposition(rho1, rho2, c, w=None, *, check: bool = True) -> PinneySolution:
    """Nonlinear superposition of two oscillator solutions.

    ``c`` is a :class:`PinneyCoefficients` or a ``(c1, c2, c3)`` triple, in
    which case the Wronskian is measured from the samplers at t = 0. The
    constraint c1 c2 - c3^2 = W^-2 is enforced unless ``check`` is false.
    """
    w = EPFrequency.of(w)
    rho1 = rho1 if isinstance(rho1, OscillatorSolution) else OscillatorSolution.from_expr(rho1)
    rho2 = rho2 if isinstance(rho2, OscillatorSolution) else OscillatorSolution.from_expr(rho2)
    if not isinstance(c, PinneyCoefficients):
        c1, c2, c3 = c
        c = PinneyCoefficients(float(c1), float(c2), float(c3), wronskian(rho1, rho2))
    if check:
        c.check()
    return PinneySolution(rho1, rho2, c, w)


# ---------------------------------------------------------------------------
# Ray-Reid


U = Symbol("u", "parameter")


@dataclass(frozen=True)
class RayReidPair:
    """f(u), g(u) as expressions in the symbol ``u``; ``u0`` is the quadrature base point."""

    f: Expr
    g: Expr
    u0: float = 1.0

    @classmethod
    def of(cls, f, g, u0: float = 1.0) -> "RayReidPair":
        conv = lambda e: parse(e, {"u": U}, strict=True) if isinstance(e, str) else as_expr(e)
        return cls(conv(f), conv(g), float(u0))

    def integrand(self) -> Expr:
        return add(mul(U, self.f), mul(MINUS_ONE, power(U, -3), self.g))


def ray_reid_system(pair: RayReidPair, w=None) -> ExprField:
    """x'' = -omega^2 x + f(y/x)/x^3, y'' = -omega^2 y + g(y/x)/y^3 (not Lagrangian in general)."""
    w = EPFrequency.of(w)
    jet = Jet.make(["x", "y"])
    x, y = jet.q
    ratio = mul(y, power(x, -1))
    fx = substitute(pair.f, {U: ratio})
    gy = substitute(pair.g, {U: ratio})
    om = w.on(jet.t)
    ax = add(mul(MINUS_ONE, om, x), mul(fx, power(x, -3)))
    ay = add(mul(MINUS_ONE, om, y), mul(gy, power(y, -3)))
    return ExprField(jet, (ax, ay), guards=(x, y))


def ray_reid_quadrature(pair: RayReidPair, u: float, tol: float = 1e-10) -> float:
    """Integral of u f(u) - u^-3 g(u) from u0 to u (QUADPACK adaptive Gauss-Kronrod)."""
    f = cached_lambdify(pair.integrand(), (U,))
    g = lambda s: f(s)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            val, err = _quad.quad(g, pair.u0, float(u), epsabs=1e-13, epsrel=1e-13, limit=200)
        except Exception as exc:  # scipy IntegrationWarning or domain errors in the integrand
            raise QuadratureFailure(f"quadrature from {pair.u0} to {u} failed: {exc}") from None
    if err > tol:
        raise QuadratureFailure(f"quadrature error estimate {err:.2e} exceeds {tol:.0e}")
    return float(val)


def ray_reid_invariant(pair: RayReidPair, jet: Jet | None = None) -> ConservationLaw:
    """I = (x y' - x' y)^2 / 2 + integral^{y/x} (u f(u) - u^-3 g(u)) du."""
    jet = jet or Jet.make(["x", "y"])

    def value(t, q, v):
        x, y = q
        xd, yd = v
        if x == 0:
            raise QuadratureFailure("x = 0: ratio y/x undefined")
        return 0.5 * (x * yd - xd * y) ** 2 + ray_reid_quadrature(pair, y / x)

    return ConservationLaw("I_rayreid", jet, None, "named", func=value,
                           description="generalised Ermakov-Lewis invariant")


# ---------------------------------------------------------------------------
# Hamiltonian Ermakov systems


def ermakov_nd_system(n: int, V, chart: CoordinateChart | None = None, box=ANGLE_BOX) -> LagrangianSystem:
    """L = (rho_dot^2 + rho^2 A - V(angles)/rho^2)/2 with A the chart's angular kinetic form."""
    chart = chart or nd_chart(n)
    if chart.n != n:
        raise ErmakovError(f"chart {chart.name} has dimension {chart.n}, not {n}")
    jet = chart.jet
    V = parse(V, jet.table()) if isinstance(V, str) else as_expr(V)
    bad = [s.name for s in V.free_symbols if s not in jet.q[1:]]
    if bad:
        raise ErmakovError(f"angular potential depends on {bad}; bind parameters first")
    rho, rd = jet.q[0], jet.v[0]
    L = mul(HALF, add(power(rd, 2), mul(power(rho, 2), angular_kinetic(chart)), mul(MINUS_ONE, V, power(rho, -2))))
    return derive_system(L, jet, name=f"ermakov-{n}d", kind="radial", chart=chart,
                         domain=angular_domain(chart, box), potential=V)


def cartesian_system(V, n: int | None = None, jet: Jet | None = None, box=(0.5, 2.0)) -> LagrangianSystem:
    """L = (|x_dot|^2 - V(x))/2 in flat Cartesian coordinates."""
    if jet is None:
        jet = Jet.make(_cartesian_names(n))
    V = parse(V, jet.table()) if isinstance(V, str) else as_expr(V)
    bad = [s.name for s in V.free_symbols if s not in jet.q]
    if bad:
        raise ErmakovError(f"Cartesian potential depends on {bad}; bind parameters first")
    L = mul(HALF, add(*[power(v, 2) for v in jet.v], mul(MINUS_ONE, V)))
    return derive_system(L, jet, name=f"cartesian-{jet.n}d", kind="cartesian",
                         domain={s.name: box for s in jet.q}, potential=V)


def j_identity_form(system: LagrangianSystem) -> Expr:
    """Closed form of 4 I1 I3 - I2^2 (r^4 A + V for radial charts, |x|^2|x_dot|^2 - (x.x_dot)^2 + |x|^2 V)."""
    jet = system.jet
    if system.kind == "radial":
        rho = jet.q[0]
        if system.chart is None:
            return ONE
        return add(mul(power(rho, 4), angular_kinetic(system.chart)), system.potential)
    if system.kind == "cartesian":
        r2 = add(*[power(x, 2) for x in jet.q])
        v2 = add(*[power(v, 2) for v in jet.v])
        xv = add(*[mul(x, v) for x, v in zip(jet.q, jet.v)])
        return add(mul(r2, v2), mul(MINUS_ONE, power(xv, 2)), mul(r2, system.potential))
    raise ErmakovError("closed J form needs a radial or Cartesian system")


def sl2_invariants(system: LagrangianSystem, seed: int = 42) -> list:
    """I1 = H, I2, I3 from the certified SL(2,R) Noether symmetries, plus J = 4 I1 I3 - I2^2."""
    laws = []
    for (X, G), name in zip(sl2_generators(system.jet, system.kind), ("I1", "I2", "I3")):
        cert = certify(X, G, system.lagrangian, system=system, seed=seed)
        laws.append(noether_integral(cert, system.lagrangian, name))
    I1, I2, I3 = (law.expr for law in laws)
    J = add(mul(4, I1, I3), mul(MINUS_ONE, power(I2, 2)))
    laws.append(ConservationLaw("J", system.jet, J, "named", description="4 I1 I3 - I2^2"))
    return laws


def transport(law: ConservationLaw, chart: CoordinateChart) -> ConservationLaw:
    """Rewrite a Cartesian law in chart variables."""
    if law.expr is None:
        raise ErmakovError(f"{law.name} has no expression to transport")
    return ConservationLaw(law.name, chart.jet, chart.compose(law.expr), law.provenance,
                           law.certificate, description=law.description)


def cartesian_extras(system: LagrangianSystem, seed: int = 42) -> list:
    """Linear and quadratic first integrals suggested by the structure of V.

    Candidates are translation momenta (V independent of x_i), rotation
    momenta (V invariant under the i-j rotation, checked on samples) and
    energies of the separable groups of V. Only candidates whose on-shell
    time derivative vanishes on samples are returned.
    """
    if system.kind != "cartesian" or system.potential is None:
        return []
    jet = system.jet
    V = system.potential
    dom = system.sample_domain()
    names = jet.names
    cands = []
    free = V.free_symbols
    for x, v in zip(jet.q, jet.v):
        if x not in free:
            cands.append(ConservationLaw(f"p_{x.name}", jet, v, "named", description="translation momentum"))
    for i in range(jet.n):
        for j in range(i + 1, jet.n):
            xi, xj = jet.q[i], jet.q[j]
            if xi not in free and xj not in free:
                continue
            rot = add(mul(xi, differentiate(V, xj)), mul(MINUS_ONE, xj, differentiate(V, xi)))
            if max_abs_on_samples([rot], dom, 50, seed=seed)[0] <= TOL:
                Lij = add(mul(xi, jet.v[j]), mul(MINUS_ONE, xj, jet.v[i]))
                cands.append(ConservationLaw(f"L_{names[i]}{names[j]}", jet, Lij, "named",
                                             description="rotation momentum"))
    terms = V.args if V.__class__.__name__ == "Add" else (V,)
    groups: list = []
    for term in terms:
        syms = {s for s in term.free_symbols if s in jet.q}
        merged = [g for g in groups if g[0] & syms]
        new_syms, new_terms = set(syms), [term]
        for g in merged:
            groups.remove(g)
            new_syms |= g[0]
            new_terms += g[1]
        groups.append((new_syms, new_terms))
    if len(groups) > 1:
        for syms, gterms in groups:
            if not syms:
                continue
            idx = [k for k, s in enumerate(jet.q) if s in syms]
            E = mul(HALF, add(*[power(jet.v[k], 2) for k in idx], *gterms))
            label = "".join(names[k] for k in idx)
            cands.append(ConservationLaw(f"E_{label}", jet, E, "named", description="separable-group energy"))
    out = []
    for law in cands:
        d = law.onshell_derivative(system.accelerations)
        if max_abs_on_samples([d], dom, 50, seed=seed)[0] <= TOL:
            out.append(law)
    return out


def named_invariants(system: LagrangianSystem, entry=None, seed: int = 42) -> list:
    """I1-I3 and J, plus the extra invariants of ``entry`` (or discovered ones for Cartesian systems)."""
    laws = sl2_invariants(system, seed=seed)
    if entry is not None:
        extras = entry.bound_invariants()
        if system.kind == "radial":
            if system.chart is None:
                raise ErmakovError("angular system without a chart cannot take Cartesian invariants")
            extras = [transport(law, system.chart) for law in extras]
        laws += extras
    elif system.kind == "cartesian":
        laws += cartesian_extras(system, seed=seed)
    return laws
