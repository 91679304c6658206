"""Potential catalog for Hamiltonian Ermakov systems.

Each entry stores its angular potential V(angles) in a named chart, the
Cartesian potential rho^-2 V, the point symmetries beyond SL(2,R) and the
extra first integrals. Extras are written in Cartesian coordinates, where they
are simplest, and transported to the angular chart on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .expr import (
    HALF, MINUS_ONE, ONE, ZERO, Expr, Jet, Symbol, add, as_expr, mul, parse, power, substitute, to_text,
)
from .ermakov import (
    ErmakovError, _cartesian_names, cartesian_system, chart_for, ermakov_nd_system,
)
from .symmetry import ConservationLaw, GeneratorField

PARAMS_2D = {"V0": 1.0, "V1": 0.5, "V2": 1.5}
PARAMS_3D = {"V0": 1.0, "V1": 0.5, "V2": 1.5, "V3": 2.0, "alpha": 1.0, "beta": 0.5, "gamma": 0.3}


def _p(name: str) -> Symbol:
    return Symbol(name, "parameter")


@dataclass(frozen=True)
class ExtraGenerator:
    """Point symmetry eta^i d/dx^i (no time component) with boundary term G, in Cartesian coordinates."""

    name: str
    eta: tuple
    G: Expr = ZERO


@dataclass(frozen=True)
class PotentialEntry:
    id: str
    dimension: int
    chart: str
    angular_form: Expr
    cartesian_form: Expr
    parameters: dict = field(default_factory=dict)
    extra_generators: tuple = ()
    extra_invariants: tuple = ()
    errata: tuple = ()
    notes: tuple = ()
    aliases: tuple = ()
    family: str = "literal"

    # -- jets and binding -------------------------------------------------

    def cartesian_jet(self) -> Jet:
        return Jet.make(_cartesian_names(self.dimension))

    def chart_object(self):
        return chart_for(self.dimension, self.chart)

    def _binding(self) -> dict:
        return {_p(k): v for k, v in self.parameters.items()}

    def bound_angular(self) -> Expr:
        return substitute(self.angular_form, self._binding())

    def bound_cartesian(self) -> Expr:
        return substitute(self.cartesian_form, self._binding())

    def bound_invariants(self) -> list:
        jet = self.cartesian_jet()
        b = self._binding()
        return [ConservationLaw(name, jet, substitute(e, b), "named", description=desc)
                for name, e, desc in self.extra_invariants]

    def bound_generators(self) -> list:
        jet = self.cartesian_jet()
        b = self._binding()
        return [(GeneratorField(jet, ZERO, tuple(substitute(as_expr(c), b) for c in g.eta), g.name),
                 substitute(g.G, b)) for g in self.extra_generators]

    # -- systems ----------------------------------------------------------

    def angular_system(self):
        return ermakov_nd_system(self.dimension, self.bound_angular(), self.chart_object())

    def cartesian_system(self):
        return cartesian_system(self.bound_cartesian(), jet=self.cartesian_jet())

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dimension": self.dimension,
            "family": self.family,
            "chart": self.chart,
            "angular_form": to_text(self.angular_form),
            "cartesian_form": to_text(self.cartesian_form),
            "parameters": dict(self.parameters),
            "extra_generators": [
                {"name": g.name, "eta": [to_text(as_expr(c)) for c in g.eta], "G": to_text(g.G)}
                for g in self.extra_generators],
            "extra_invariants": [{"name": n, "expr": to_text(e), "description": d}
                                 for n, e, d in self.extra_invariants],
            "errata": list(self.errata),
            "notes": list(self.notes),
            "aliases": list(self.aliases),
        }


def entry_from_dict(d: dict) -> PotentialEntry:
    """Inverse of :meth:`PotentialEntry.to_dict`."""
    n = int(d["dimension"])
    chart = chart_for(n, d["chart"])
    cart = Jet.make(_cartesian_names(n))
    ctab = cart.table()
    return PotentialEntry(
        id=d["id"], dimension=n, chart=d["chart"], family=d.get("family", "literal"),
        angular_form=parse(d["angular_form"], chart.jet.table()),
        cartesian_form=parse(d["cartesian_form"], ctab),
        parameters=dict(d.get("parameters", {})),
        extra_generators=tuple(ExtraGenerator(g["name"], tuple(parse(c, ctab) for c in g["eta"]),
                                              parse(g["G"], ctab)) for g in d.get("extra_generators", [])),
        extra_invariants=tuple((i["name"], parse(i["expr"], ctab), i.get("description", ""))
                               for i in d.get("extra_invariants", [])),
        errata=tuple(d.get("errata", [])), notes=tuple(d.get("notes", [])), aliases=tuple(d.get("aliases", [])),
    )


def catalog_json(entries) -> str:
    return json.dumps([e.to_dict() for e in entries], indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# building blocks (Cartesian)


def _translation(jet: Jet, direction, label=None):
    eta = tuple(as_expr(c) for c in direction)
    mom = add(*[mul(c, v) for c, v in zip(eta, jet.v)])
    if label is None:
        k = next(i for i, c in enumerate(eta) if not c.is_zero)
        label = jet.names[k]
    return ExtraGenerator(f"d_{label}", eta), (f"p_{label}", mom, "translation momentum")


def _rotation(jet: Jet, i: int, j: int):
    n = jet.n
    eta = [ZERO] * n
    eta[i] = mul(MINUS_ONE, jet.q[j])
    eta[j] = jet.q[i]
    lab = jet.names[i] + jet.names[j]
    L = add(mul(jet.q[i], jet.v[j]), mul(MINUS_ONE, jet.q[j], jet.v[i]))
    return ExtraGenerator(f"rot_{lab}", tuple(eta)), (f"L_{lab}", L, "rotation momentum")


def _energy(jet: Jet, idx, potential: Expr, label=None):
    label = label or "".join(jet.names[k] for k in idx)
    E = mul(HALF, add(*[power(jet.v[k], 2) for k in idx], potential))
    return (f"E_{label}", E, "partial energy")


def _directional_energy(jet: Jet, normal, V0: Expr, label="u"):
    """E = (u_dot^2/|a|^2 + V0/u^2)/2 for u = a.x, the energy of the motion normal to the level sets of u."""
    a = [as_expr(c) for c in normal]
    u = add(*[mul(c, x) for c, x in zip(a, jet.q)])
    ud = add(*[mul(c, v) for c, v in zip(a, jet.v)])
    norm2 = add(*[power(c, 2) for c in a])
    E = mul(HALF, add(mul(power(ud, 2), power(norm2, -1)), mul(V0, power(u, -2))))
    return (f"E_{label}", E, "directional energy")


def _axis(jet, k, V):
    return mul(V, power(jet.q[k], -2))


def _angular_of(chart, cart_form: Expr) -> Expr:
    """rho^-2 V(angles) = V(x) with V homogeneous of degree -2: V(angles) = V(x(rho=1, angles))."""
    rho = chart.jet.q[0]
    mapping = {x: substitute(m, {rho: ONE}) for x, m in zip(chart.cartesian.q, chart.map_to_cartesian)}
    return substitute(cart_form, mapping)


def _entry(id, n, chart_name, angular, cart, params, gens=(), invs=(), **kw):
    return PotentialEntry(id=id, dimension=n, chart=chart_name, angular_form=angular, cartesian_form=cart,
                          parameters=dict(params), extra_generators=tuple(gens), extra_invariants=tuple(invs), **kw)


# ---------------------------------------------------------------------------
# two dimensions (polar chart)


def _catalog_2d() -> list:
    jet = Jet.make(["x", "y"])
    x, y = jet.q
    V0, V1, V2 = _p("V0"), _p("V1"), _p("V2")
    ch = chart_for(2, "polar")
    tab = dict(ch.jet.table(), V0=V0, V1=V1, V2=V2)
    A = lambda s: parse(s, tab, strict=True)
    out = []

    g, inv = _rotation(jet, 0, 1)
    out.append(_entry("2d-VA", 2, "polar", A("V0"), mul(V0, power(add(power(x, 2), power(y, 2)), -1)),
                      {"V0": 1.0}, [g], [inv], notes=("L_xy equals rho^2 theta_dot",)))

    g, inv = _translation(jet, (0, 1))
    out.append(_entry("2d-VB", 2, "polar", A("V0/cos(theta)^2"), _axis(jet, 0, V0), {"V0": 1.0}, [g],
                      [_energy(jet, [0], _axis(jet, 0, V0)), inv], aliases=("2d-VC",),
                      notes=("V_C(theta) = V_B(theta - pi/2): the same potential with x and y exchanged",
                             "printed second invariant y_dot^2 is the square of p_y")))

    out.append(_entry("2d-VD", 2, "polar", A("V1/cos(theta)^2 + V2/sin(theta)^2"),
                      add(_axis(jet, 0, V1), _axis(jet, 1, V2)), {"V1": 0.5, "V2": 1.5}, [],
                      [_energy(jet, [0], _axis(jet, 0, V1)), _energy(jet, [1], _axis(jet, 1, V2))],
                      errata=("vd-j2-coefficient",)))

    # V_E: u = alpha y - x with alpha = V1; translation along (alpha, 1) leaves u fixed.
    u = add(mul(V1, y), mul(MINUS_ONE, x))
    g, inv = _translation(jet, (V1, 1), label="E")
    out.append(_entry("2d-VE", 2, "polar", A("V0*(V1*sin(theta) - cos(theta))^(-2)"), mul(V0, power(u, -2)),
                      {"V0": 1.0, "V1": 0.5}, [g], [inv, _directional_energy(jet, (-1, V1), V0)],
                      notes=("printed J(X, X_dot) has the wrong sign on the potential and lacks 1/(1+alpha^2);"
                             " replaced by the directional energy",
                             "printed I(X, X_dot, Y_dot) replaced by the translation momentum alpha x_dot + y_dot")))
    return out


# ---------------------------------------------------------------------------
# three dimensions


def _catalog_3d_angular() -> list:
    """The printed angular list; A-E in the recursive chart, F and G in the sin^2 convention."""
    jet = Jet.make(["x", "y", "z"])
    x, y, z = jet.q
    V0 = _p("V0")
    nd = chart_for(3, "nd")
    sp = chart_for(3, "spherical")
    A = lambda s, ch: parse(s, dict(ch.jet.table(), V0=V0), strict=True)
    sq = lambda *s: add(*[power(a, 2) for a in s])
    out = []

    gens, invs = zip(*[_rotation(jet, 0, 1), _rotation(jet, 1, 2), _rotation(jet, 0, 2)])
    out.append(_entry("3d-angular-VA", 3, "nd", A("V0", nd), mul(V0, power(sq(x, y, z), -1)), {"V0": 1.0},
                      gens, invs, errata=("angular-momentum-exponent",)))

    g1, i1 = _translation(jet, (1, 0, 0))
    g2, i2 = _rotation(jet, 1, 2)
    out.append(_entry("3d-angular-VB", 3, "nd", A("V0/cos(theta)^2", nd), mul(V0, power(sq(y, z), -1)), {"V0": 1.0},
                      [g1, g2], [i1, i2]))

    for eid, text, k in (("3d-angular-VC", "V0/sin(theta)^2", 0),
                         ("3d-angular-VD", "V0/(cos(theta)*sin(phi))^2", 1),
                         ("3d-angular-VE", "V0/(cos(theta)*cos(phi))^2", 2)):
        others = [i for i in range(3) if i != k]
        gt = [_translation(jet, tuple(1 if i == o else 0 for i in range(3))) for o in others]
        gr = _rotation(jet, *others)
        out.append(_entry(eid, 3, "nd", A(text, nd), _axis(jet, k, V0), {"V0": 1.0},
                          [g for g, _ in gt] + [gr[0]],
                          [inv for _, inv in gt] + [gr[1], _energy(jet, [k], _axis(jet, k, V0))]))

    VF = "8/(cos(2*phi - 2*theta) + cos(2*phi + 2*theta) + 2*cos(2*theta) - 2*cos(2*phi) + 6)"
    VG = "8/(2*cos(2*phi) + 2*cos(2*theta) - cos(2*phi - 2*theta) - cos(2*phi + 2*theta) + 6)"
    g1, i1 = _translation(jet, (0, 0, 1))
    g2, i2 = _rotation(jet, 0, 1)
    out.append(_entry("3d-angular-VF", 3, "spherical", A(VF, sp), power(sq(x, y), -1), {}, [g1, g2], [i1, i2],
                      errata=("vf-simplified-sign", "vf-vg-reduction-swap"),
                      notes=("original form equals 1/(1 - cos(phi)^2 sin(theta)^2)",
                             "reduces to 1/(x^2 + y^2) in the sin^2 chart; the printed (x^2+z^2)^-1 belongs to V_G",
                             "in the recursive chart no axis-aligned reduction exists")))
    g1, i1 = _translation(jet, (0, 1, 0))
    g2, i2 = _rotation(jet, 0, 2)
    out.append(_entry("3d-angular-VG", 3, "spherical", A(VG, sp), power(sq(x, z), -1), {}, [g1, g2], [i1, i2],
                      notes=("original form equals 1/(1 - sin(phi)^2 sin(theta)^2)",)))
    return out


def _catalog_3d_classified() -> list:
    jet = Jet.make(["x", "y", "z"])
    x, y, z = jet.q
    V0, V1, V2, V3 = (_p(s) for s in ("V0", "V1", "V2", "V3"))
    al, be, ga = _p("alpha"), _p("beta"), _p("gamma")
    nd = chart_for(3, "nd")
    P = PARAMS_3D
    out = []

    cart = add(_axis(jet, 0, V1), _axis(jet, 1, V2), _axis(jet, 2, V3))
    out.append(_entry("3d-VA", 3, "nd", _angular_of(nd, cart), cart, {k: P[k] for k in ("V1", "V2", "V3")}, [],
                      [_energy(jet, [k], _axis(jet, k, V)) for k, V in enumerate((V1, V2, V3))]))

    planar = mul(V0, power(add(power(x, 2), power(y, 2)), -1))
    cart = add(planar, _axis(jet, 2, V1))
    g, inv = _rotation(jet, 0, 1)
    out.append(_entry("3d-VB", 3, "nd", _angular_of(nd, cart), cart, {"V0": P["V0"], "V1": P["V1"]}, [g],
                      [inv, _energy(jet, [0, 1], planar), _energy(jet, [2], _axis(jet, 2, V1))]))

    # u = alpha x - beta y - gamma z: translations orthogonal to the normal and the rotation about it.
    normal = (al, mul(MINUS_ONE, be), mul(MINUS_ONE, ga))
    u = add(*[mul(c, s) for c, s in zip(normal, jet.q)])
    cart = mul(V0, power(u, -2))
    g1, i1 = _translation(jet, (be, al, 0), label="E1a")
    g2, i2 = _translation(jet, (ga, 0, al), label="E1b")
    # rotation about the normal: eta = normal x position
    eta = (add(mul(normal[1], z), mul(MINUS_ONE, normal[2], y)),
           add(mul(normal[2], x), mul(MINUS_ONE, normal[0], z)),
           add(mul(normal[0], y), mul(MINUS_ONE, normal[1], x)))
    Ln = add(*[mul(c, v) for c, v in zip(eta, jet.v)])
    out.append(_entry("3d-VE1", 3, "nd", _angular_of(nd, cart), cart,
                      {k: P[k] for k in ("V0", "alpha", "beta", "gamma")},
                      [g1, g2, ExtraGenerator("rot_normal", eta)],
                      [i1, i2, ("L_normal", Ln, "rotation momentum about the normal"),
                       _directional_energy(jet, normal, V0)],
                      notes=("first of the two entries printed as V_E",)))

    u2 = add(mul(al, x), mul(MINUS_ONE, be, y))
    cart = add(mul(V0, power(u2, -2)), _axis(jet, 2, V1))
    g, inv = _translation(jet, (be, al, 0), label="E2")
    out.append(_entry("3d-VE2", 3, "nd", _angular_of(nd, cart), cart,
                      {k: P[k] for k in ("V0", "V1", "alpha", "beta")}, [g],
                      [inv, _directional_energy(jet, (al, mul(MINUS_ONE, be), 0), V0),
                       _energy(jet, [2], _axis(jet, 2, V1))],
                      notes=("second of the two entries printed as V_E",)))
    return out


# ---------------------------------------------------------------------------
# n dimensions


def proposition_families(n: int) -> list:
    """The four families of the n-dimensional classification, with fixed illustrative parameters.

    central: V0/|x|^2. axis: sum_i V_i/x_i^2 with V_i = i. block: V0/(x1^2 + x2^2)
    plus axis terms on the remaining coordinates. directional: V0/(a.x)^2 with
    a = (1, -1/2, 0, ...) plus axis terms off the support of a.
    """
    if n < 2:
        raise ErmakovError("need n >= 2")
    jet = Jet.make(_cartesian_names(n))
    nd = chart_for(n, "nd")
    q = jet.q
    Vs = [_p(f"V{i}") for i in range(n + 1)]
    out = []

    cart = mul(Vs[0], power(add(*[power(s, 2) for s in q]), -1))
    rots = [_rotation(jet, i, j) for i in range(n) for j in range(i + 1, n)]
    out.append(_entry(f"prop-central-{n}d", n, "nd", _angular_of(nd, cart), cart, {"V0": 1.0},
                      [g for g, _ in rots], [inv for _, inv in rots], family="central"))

    terms = [_axis(jet, k, Vs[k + 1]) for k in range(n)]
    out.append(_entry(f"prop-axis-{n}d", n, "nd", _angular_of(nd, add(*terms)), add(*terms),
                      {f"V{i}": float(i) for i in range(1, n + 1)}, [],
                      [_energy(jet, [k], terms[k]) for k in range(n)], family="axis"))

    if n >= 3:
        planar = mul(Vs[0], power(add(power(q[0], 2), power(q[1], 2)), -1))
        rest = [_axis(jet, k, Vs[k + 1]) for k in range(2, n)]
        cart = add(planar, *rest)
        g, inv = _rotation(jet, 0, 1)
        params = {"V0": 1.0} | {f"V{k + 1}": float(k + 1) for k in range(2, n)}
        out.append(_entry(f"prop-block-{n}d", n, "nd", _angular_of(nd, cart), cart, params, [g],
                          [inv, _energy(jet, [0, 1], planar)] + [_energy(jet, [k], rest[k - 2]) for k in range(2, n)],
                          family="block"))

    a = (ONE, as_expr(-0.5)) + (ZERO,) * (n - 2)
    u = add(*[mul(c, s) for c, s in zip(a, q)])
    rest = [_axis(jet, k, Vs[k + 1]) for k in range(2, n)]
    cart = add(mul(Vs[0], power(u, -2)), *rest)
    g, inv = _translation(jet, (0.5, 1) + (0,) * (n - 2), label="dir")
    params = {"V0": 1.0} | {f"V{k + 1}": float(k + 1) for k in range(2, n)}
    out.append(_entry(f"prop-directional-{n}d", n, "nd", _angular_of(nd, cart), cart, params, [g],
                      [inv, _directional_energy(jet, a, Vs[0])] + [_energy(jet, [k], rest[k - 2]) for k in range(2, n)],
                      family="directional",
                      notes=("printed form read as V0/(a.x)^2 plus axis terms off the support of a",)))
    return out


def catalog(n: int) -> list:
    """Entries for dimension n: the literal 2D and 3D lists, or the Proposition families for n >= 4."""
    if n == 2:
        return _catalog_2d()
    if n == 3:
        return _catalog_3d_angular() + _catalog_3d_classified()
    if n >= 4:
        return proposition_families(n)
    raise ErmakovError("catalog needs n >= 2")


def find_entry(entry_id: str, extra_dims=(4,)) -> PotentialEntry:
    for n in (2, 3) + tuple(extra_dims):
        for e in catalog(n):
            if entry_id == e.id or entry_id in e.aliases:
                return e
    m = entry_id.rsplit("-", 1)[-1]
    if entry_id.startswith("prop-") and m.endswith("d") and m[:-1].isdigit():
        for e in proposition_families(int(m[:-1])):
            if e.id == entry_id:
                return e
    raise KeyError(entry_id)
