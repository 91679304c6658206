"""Lagrangian mechanics on expression trees.

Equations of motion are always derived from the Lagrangian: the mass matrix
is inverted symbolically when it splits into 1x1 and 2x2 blocks, otherwise the
acceleration field falls back to a numeric linear solve at each evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import (
    MINUS_ONE, Expr, Jet, add, denominators, differentiate, lambdify, mul,
    power, substitute, total_derivative,
)
from .integrate import AccelerationField, ExprField, NumericSolveField


class MechanicsError(Exception):
    pass


class SingularMassMatrix(MechanicsError):
    pass


class NumericInversionRequired(MechanicsError):
    """The mass matrix has a block larger than 2x2; no symbolic inverse is attempted."""


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class CoordinateChart:
    """Map from chart coordinates to Cartesian coordinates.

    ``guards`` are chart expressions whose magnitude must stay away from zero
    (the radius, cos(theta) for the recursive angular charts, ...).
    """

    name: str
    jet: Jet
    cartesian: Jet
    map_to_cartesian: tuple
    guards: tuple = ()
    inverse: Callable | None = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.jet.n

    def velocity_map(self) -> tuple:
        """Cartesian velocities as expressions in chart positions and velocities."""
        return tuple(total_derivative(x, self.jet) for x in self.map_to_cartesian)

    def compose(self, e: Expr) -> Expr:
        """Rewrite a Cartesian expression (positions, velocities, time) in chart variables."""
        mapping = {self.cartesian.t: self.jet.t}
        for x, xm in zip(self.cartesian.q, self.map_to_cartesian):
            mapping[x] = xm
        for xd, vm in zip(self.cartesian.v, self.velocity_map()):
            mapping[xd] = vm
        return substitute(e, mapping)

    def to_cartesian(self, q, v=None):
        args = self.jet.q
        fx = lambdify(self.map_to_cartesian, args)
        x = np.array(fx(*q), dtype=float)
        if v is None:
            return x
        jac = self.jacobian(q)
        return x, jac @ np.asarray(v, dtype=float)

    def jacobian(self, q) -> np.ndarray:
        exprs = [differentiate(xm, s) for xm in self.map_to_cartesian for s in self.jet.q]
        f = lambdify(exprs, self.jet.q)
        return np.array(f(*q), dtype=float).reshape(self.n, self.n)

    def from_cartesian(self, x, xdot=None):
        if self.inverse is None:
            raise MechanicsError(f"chart {self.name} has no inverse")
        q = np.asarray(self.inverse(np.asarray(x, dtype=float)), dtype=float)
        if xdot is None:
            return q
        return q, np.linalg.solve(self.jacobian(q), np.asarray(xdot, dtype=float))


def identity_chart(names: Sequence[str]) -> CoordinateChart:
    jet = Jet.make(names)
    return CoordinateChart("identity", jet, jet, tuple(jet.q), (), inverse=lambda x: x)


def pullback_kinetic(chart: CoordinateChart) -> Expr:
    """Cartesian |xdot|^2 written in chart velocities: sum_k (D_t x_k(q))^2."""
    return add(*[power(vx, 2) for vx in chart.velocity_map()])


# ---------------------------------------------------------------------------
# Euler-Lagrange machinery


def mass_matrix(L: Expr, jet: Jet) -> tuple:
    n = jet.n
    dv = [differentiate(L, v) for v in jet.v]
    return tuple(tuple(differentiate(dv[i], jet.v[j]) for j in range(n)) for i in range(n))


def momenta(L: Expr, jet: Jet) -> tuple:
    return tuple(differentiate(L, v) for v in jet.v)


def euler_lagrange_rhs(L: Expr, jet: Jet) -> tuple:
    """dL/dq^i - sum_j (d2L/dv^i dq^j) v^j - d2L/dv^i dt, i.e. M @ qddot for each i."""
    out = []
    for i, vi in enumerate(jet.v):
        p = differentiate(L, vi)
        terms = [differentiate(L, jet.q[i]), mul(MINUS_ONE, differentiate(p, jet.t))]
        for qj, vj in zip(jet.q, jet.v):
            terms.append(mul(MINUS_ONE, vj, differentiate(p, qj)))
        out.append(add(*terms))
    return tuple(out)


def _blocks(M, n):
    """Connected components of the structural non-zero pattern."""
    seen = [False] * n
    blocks = []
    for i in range(n):
        if seen[i]:
            continue
        comp, stack = [], [i]
        seen[i] = True
        while stack:
            k = stack.pop()
            comp.append(k)
            for j in range(n):
                if not seen[j] and not (M[k][j].is_zero and M[j][k].is_zero):
                    seen[j] = True
                    stack.append(j)
        blocks.append(sorted(comp))
    return blocks


def euler_lagrange(L: Expr, jet: Jet) -> tuple:
    """Accelerations Omega^i with qddot^i = Omega^i reproducing d/dt(dL/dv) = dL/dq."""
    n = jet.n
    M = mass_matrix(L, jet)
    rhs = euler_lagrange_rhs(L, jet)
    omega = [None] * n
    for block in _blocks(M, n):
        if len(block) == 1:
            i = block[0]
            if M[i][i].is_zero:
                raise SingularMassMatrix(f"no kinetic term for {jet.q[i].name}")
            omega[i] = mul(rhs[i], power(M[i][i], -1))
        elif len(block) == 2:
            i, j = block
            det = add(mul(M[i][i], M[j][j]), mul(MINUS_ONE, M[i][j], M[j][i]))
            if det.is_zero:
                raise SingularMassMatrix(f"degenerate kinetic block ({jet.q[i].name}, {jet.q[j].name})")
            inv = power(det, -1)
            omega[i] = mul(inv, add(mul(M[j][j], rhs[i]), mul(MINUS_ONE, M[i][j], rhs[j])))
            omega[j] = mul(inv, add(mul(M[i][i], rhs[j]), mul(MINUS_ONE, M[j][i], rhs[i])))
        else:
            raise NumericInversionRequired(f"kinetic block of size {len(block)}")
    return tuple(omega)


def hamiltonian(L: Expr, jet: Jet) -> Expr:
    """Energy function sum_i v^i dL/dv^i - L."""
    return add(*[mul(v, differentiate(L, v)) for v in jet.v], mul(MINUS_ONE, L))


def on_shell(e: Expr, jet: Jet, accelerations: Sequence[Expr]) -> Expr:
    return substitute(e, dict(zip(jet.a, accelerations)))


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    """Coordinates plus Lagrangian, with every derived quantity precomputed.

    ``kind`` is ``"radial"`` when the first coordinate is the radius of a
    radial-angular chart, ``"cartesian"`` for flat Cartesian coordinates and
    ``"generic"`` otherwise; it selects the form of the SL(2,R) generators.
    ``domain`` holds sampling intervals for every state symbol.
    """

    name: str
    jet: Jet
    lagrangian: Expr
    mass_matrix: tuple
    momenta: tuple
    hamiltonian: Expr
    accelerations: tuple | None
    el_rhs: tuple
    guards: tuple
    kind: str = "generic"
    chart: CoordinateChart | None = None
    domain: dict = field(default_factory=dict)
    potential: Expr | None = None

    @property
    def n(self) -> int:
        return self.jet.n

    def field(self) -> AccelerationField:
        if self.accelerations is not None:
            return ExprField(self.jet, self.accelerations, self.guards)
        return NumericSolveField(self.jet, self.mass_matrix, self.el_rhs, self.guards)

    def sample_domain(self, t_range=(0.0, 2.0)) -> dict:
        dom = {self.jet.t.name: t_range}
        dom.update(self.domain)
        for s in self.jet.q:
            dom.setdefault(s.name, (0.5, 2.0))
        for s in self.jet.v:
            dom.setdefault(s.name, (-1.0, 1.0))
        return dom

    def residual_of_accelerations(self) -> tuple:
        """M @ Omega - rhs, symbolic (zero when the derivation is right)."""
        if self.accelerations is None:
            raise MechanicsError("accelerations are solved numerically")
        n = self.n
        return tuple(
            add(*[mul(self.mass_matrix[i][j], self.accelerations[j]) for j in range(n)],
                mul(MINUS_ONE, self.el_rhs[i]))
            for i in range(n))


def derive_system(L: Expr, jet: Jet, *, name: str = "", kind: str = "generic",
                  chart: CoordinateChart | None = None, domain: dict | None = None,
                  potential: Expr | None = None, guards: Sequence[Expr] | None = None) -> LagrangianSystem:
    M = mass_matrix(L, jet)
    rhs = euler_lagrange_rhs(L, jet)
    try:
        omega = euler_lagrange(L, jet)
    except NumericInversionRequired:
        omega = None
    if guards is None:
        src = omega if omega is not None else tuple(m for row in M for m in row) + rhs
        guards = tuple(denominators(*src))
        if chart is not None:
            extra = [g for g in chart.guards if g not in guards]
            guards = tuple(guards) + tuple(extra)
    return LagrangianSystem(
        name=name or "system",
        jet=jet,
        lagrangian=L,
        mass_matrix=M,
        momenta=momenta(L, jet),
        hamiltonian=hamiltonian(L, jet),
        accelerations=omega,
        el_rhs=rhs,
        guards=tuple(guards),
        kind=kind,
        chart=chart,
        domain=dict(domain or {}),
        potential=potential,
    )
