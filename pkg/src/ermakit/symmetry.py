"""Point symmetries: prolongation, the Lie condition, the Noether condition,
boundary-term fitting and Noether first integrals.

Symmetry conditions are certified by sampling guard-respecting states rather
than by symbolic zero reduction, which keeps every certificate falsifiable
without trigonometric canonicalisation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .expr import (
    HALF, MINUS_ONE, ONE, ZERO, ACCELERATION, VELOCITY, DEFAULT_GUARD, DEFAULT_SEED, Expr,
    Jet, add, as_expr, cached_lambdify, differentiate, lambdify, mul, power,
    residual_on_samples, sample_points,
    substitute, total_derivative,
)
from .mechanics import LagrangianSystem, hamiltonian, on_shell

SAMPLES = 200
TOL = 1e-10
CERTIFY_TOL = 1e-8


class SymmetryError(Exception):
    pass


class NoFit(SymmetryError):
    def __init__(self, residual, message=""):
        super().__init__(message or f"no boundary term in the basis (best residual {residual:.3e})")
        self.residual = residual


class UncertifiedGenerator(SymmetryError):
    pass


class DegenerateBasisWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GeneratorField:
    """Point-symmetry candidate xi d/dt + eta^i d/dq^i."""

    jet: Jet
    xi: Expr
    eta: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "xi", as_expr(self.xi))
        object.__setattr__(self, "eta", tuple(as_expr(e) for e in self.eta))
        if len(self.eta) != self.jet.n:
            raise SymmetryError(f"generator needs {self.jet.n} eta components, got {len(self.eta)}")
        for e in (self.xi,) + self.eta:
            if any(s.role in (VELOCITY, ACCELERATION) for s in e.free_symbols):
                raise SymmetryError(f"{e} depends on velocities: not a point symmetry")

    def __str__(self):
        parts = []
        if not self.xi.is_zero:
            parts.append(f"({self.xi})*d/d{self.jet.t.name}")
        for q, e in zip(self.jet.q, self.eta):
            if not e.is_zero:
                parts.append(f"({e})*d/d{q.name}")
        return " + ".join(parts) or "0"


@dataclass(frozen=True, eq=False)
class NoetherCertificate:
    generator: GeneratorField
    G: Expr
    residual_bound: float


@dataclass(frozen=True, eq=False)
class ConservationLaw:
    """A function of (t, q, qdot); either an expression or a numeric evaluator.

    ``provenance`` is ``"noether"``, ``"named"`` or ``"user"``.
    """

    name: str
    jet: Jet
    expr: Expr | None = None
    provenance: str = "user"
    certificate: NoetherCertificate | None = None
    func: Callable | None = None
    description: str = ""

    def __post_init__(self):
        if self.expr is None and self.func is None:
            raise SymmetryError("a conservation law needs an expression or an evaluator")

    def values(self, t, q, v):
        """Vectorised evaluation: ``t`` of shape (N,), ``q``/``v`` of shape (N, n)."""
        t = np.asarray(t, dtype=float)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.func is not None:
            return np.array([self.func(ti, qi, vi) for ti, qi, vi in zip(t, q, v)], dtype=float)
        f = cached_lambdify(self.expr, self.jet.state_symbols, backend="numpy")
        out = f(t, *q.T, *v.T)[0]
        return np.broadcast_to(np.asarray(out, dtype=float), t.shape)

    def __call__(self, t, q, v) -> float:
        if self.func is not None:
            return float(self.func(t, np.asarray(q, float), np.asarray(v, float)))
        f = cached_lambdify(self.expr, self.jet.state_symbols)
        return float(f(t, *q, *v)[0])

    def bind(self, values: dict) -> "ConservationLaw":
        if self.expr is None or not values:
            return self
        return replace(self, expr=substitute(self.expr, values))

    def onshell_derivative(self, accelerations: Sequence[Expr]) -> Expr:
        if self.expr is None:
            raise SymmetryError(f"{self.name} has no expression")
        return on_shell(total_derivative(self.expr, self.jet), self.jet, accelerations)


@dataclass(frozen=True)
class Residual:
    exprs: tuple
    max_abs: float
    point: dict = field(default_factory=dict)
    samples: int = 0
    max_scaled: float = 0.0

    def ok(self, tol: float = TOL) -> bool:
        return self.max_scaled <= tol


# ---------------------------------------------------------------------------
# prolongation and conditions


def prolong(X: GeneratorField, order: int = 2) -> tuple:
    """First (and second) prolongation coefficients; accelerations kept symbolic.

    Returns ``(eta1,)`` for ``order=1`` and ``(eta1, eta2)`` for ``order=2``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    jet = X.jet
    dxi = total_derivative(X.xi, jet)
    eta1 = tuple(add(total_derivative(e, jet), mul(MINUS_ONE, v, dxi)) for e, v in zip(X.eta, jet.v))
    if order == 1:
        return (eta1,)
    eta2 = tuple(add(total_derivative(e1, jet), mul(MINUS_ONE, a, dxi)) for e1, a in zip(eta1, jet.a))
    return eta1, eta2


def apply_prolonged(X: GeneratorField, F: Expr, eta1=None) -> Expr:
    """X^[1] F = xi F_t + eta^i F_q^i + eta1^i F_v^i."""
    jet = X.jet
    if eta1 is None:
        (eta1,) = prolong(X, 1)
    terms = [mul(X.xi, differentiate(F, jet.t))]
    free = F.free_symbols
    for q, v, e, e1 in zip(jet.q, jet.v, X.eta, eta1):
        if q in free:
            terms.append(mul(e, differentiate(F, q)))
        if v in free:
            terms.append(mul(e1, differentiate(F, v)))
    return add(*terms)


def _accelerations(system_or_field):
    if isinstance(system_or_field, LagrangianSystem):
        if system_or_field.accelerations is None:
            raise SymmetryError("system has no symbolic accelerations")
        return system_or_field.accelerations, system_or_field
    return tuple(system_or_field), None


def _domain(system, jet, domain):
    if domain is not None:
        return domain
    if system is not None:
        return system.sample_domain()
    dom = {jet.t.name: (0.0, 2.0)}
    for s in jet.q:
        dom[s.name] = (0.5, 2.0)
    for s in jet.v:
        dom[s.name] = (-1.0, 1.0)
    return dom


def _sampled(exprs, domain, n, guard, seed):
    m, sc, pt = residual_on_samples(exprs, domain, n, guard, seed)
    return Residual(tuple(exprs), m, pt, n, sc)


def lie_symmetry_residual(X: GeneratorField, system, *, domain=None, n: int = SAMPLES,
                          guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED) -> Residual:
    """eta2^i - X^[1](Omega^i) with qddot -> Omega, sampled over the guard domain."""
    omega, sys_ = _accelerations(system)
    jet = X.jet
    eta1, eta2 = prolong(X, 2)
    res = []
    for i in range(jet.n):
        lhs = on_shell(eta2[i], jet, omega)
        res.append(add(lhs, mul(MINUS_ONE, apply_prolonged(X, omega[i], eta1))))
    return _sampled(res, _domain(sys_, jet, domain), n, guard, seed)


def noether_residual(X: GeneratorField, G, L: Expr, *, domain=None, system=None, n: int = SAMPLES,
                     guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED) -> Residual:
    """X^[1]L + L D_t(xi) - D_t(G); zero certifies (X, G)."""
    jet = X.jet
    G = as_expr(G)
    expr = add(apply_prolonged(X, L), mul(L, total_derivative(X.xi, jet)),
               mul(MINUS_ONE, total_derivative(G, jet)))
    return _sampled([expr], _domain(system, jet, domain), n, guard, seed)


def default_basis(jet: Jet) -> list:
    """{1, t, t^2, q^i q^j, t q^i q^j}."""
    t = jet.t
    quad = []
    for i in range(jet.n):
        for j in range(i, jet.n):
            quad.append(mul(jet.q[i], jet.q[j]))
    return [ONE, t, power(t, 2)] + quad + [mul(t, b) for b in quad]


def fit_boundary_term(X: GeneratorField, L: Expr, basis: Sequence[Expr] | None = None, *,
                      domain=None, system=None, n: int = SAMPLES, guard: float = DEFAULT_GUARD,
                      seed: int = DEFAULT_SEED, tol: float = CERTIFY_TOL) -> NoetherCertificate:
    """Least-squares G = sum c_k b_k with D_t G = X^[1]L + L D_t(xi) on sampled states.

    Members whose total derivative is redundant are dropped (the constant is
    always dropped, normalising the additive gauge of G to zero). Raises
    :class:`NoFit` when the post-fit residual exceeds ``tol``.
    """
    jet = X.jet
    basis = list(basis) if basis is not None else default_basis(jet)
    target = add(apply_prolonged(X, L), mul(L, total_derivative(X.xi, jet)))
    dbasis = [total_derivative(as_expr(b), jet) for b in basis]
    dom = _domain(system, jet, domain)
    syms, pts, _ = sample_points([target] + dbasis, dom, n, guard, seed)
    f = lambdify([target] + dbasis, syms)
    rows = np.array([f(*p) for p in pts], dtype=float)
    y, A = rows[:, 0], rows[:, 1:]
    keep = []
    dropped = []
    for k in range(A.shape[1]):
        col = A[:, k]
        if np.max(np.abs(col)) == 0.0:
            if not dbasis[k].is_zero:
                dropped.append(k)
            continue
        trial = keep + [k]
        sub = A[:, trial]
        s = np.linalg.svd(sub, compute_uv=False)
        if s[-1] <= 1e-9 * s[0]:
            dropped.append(k)
            continue
        keep = trial
    if dropped:
        warnings.warn(f"dropped redundant basis members {[str(basis[k]) for k in dropped]}",
                      DegenerateBasisWarning, stacklevel=2)
    if keep:
        coef, *_ = np.linalg.lstsq(A[:, keep], y, rcond=None)
    else:
        coef = np.zeros(0)
    fitted = A[:, keep] @ coef if keep else np.zeros_like(y)
    resid = float(np.max(np.abs(fitted - y))) if len(y) else 0.0
    terms = [mul(float(c), as_expr(basis[k])) for c, k in zip(coef, keep) if abs(c) > 1e-12]
    G = add(*terms)
    if resid > tol:
        raise NoFit(resid)
    check = noether_residual(X, G, L, domain=dom, n=n, guard=guard, seed=seed + 1)
    return NoetherCertificate(X, G, max(check.max_scaled, resid))


def certify(X: GeneratorField, G, L: Expr, *, domain=None, system=None, n: int = SAMPLES,
            guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED, tol: float = CERTIFY_TOL) -> NoetherCertificate:
    """Certificate for a known boundary term; raises :class:`UncertifiedGenerator` on failure."""
    r = noether_residual(X, G, L, domain=domain, system=system, n=n, guard=guard, seed=seed)
    if r.max_scaled > tol:
        raise UncertifiedGenerator(f"{X.name or X}: Noether residual {r.max_scaled:.3e} > {tol:.1e}")
    return NoetherCertificate(X, as_expr(G), r.max_scaled)


def noether_integral(cert: NoetherCertificate, L: Expr, name: str = "") -> ConservationLaw:
    """I = xi (v^i dL/dv^i - L) - eta^i dL/dv^i + G."""
    if not cert.residual_bound <= CERTIFY_TOL:
        raise UncertifiedGenerator(f"residual bound {cert.residual_bound:.3e} exceeds {CERTIFY_TOL:.0e}")
    X = cert.generator
    jet = X.jet
    terms = [mul(X.xi, hamiltonian(L, jet))]
    for v, e in zip(jet.v, X.eta):
        terms.append(mul(MINUS_ONE, e, differentiate(L, v)))
    terms.append(cert.G)
    return ConservationLaw(name or X.name or "I", jet, add(*terms), "noether", cert)


def sl2_generators(jet: Jet, kind: str = "radial") -> list:
    """The SL(2,R) triple with boundary terms (0, 0, r^2/2).

    ``kind="radial"``: the first coordinate is the radius rho and the
    generators act on it only. ``kind="cartesian"``: the radial scaling is the
    homothety sum_i x^i d/dx^i.
    """
    t = jet.t
    if kind == "radial":
        rho = jet.q[0]
        scale = (rho,) + (ZERO,) * (jet.n - 1)
        r2 = power(rho, 2)
    elif kind == "cartesian":
        scale = tuple(jet.q)
        r2 = add(*[power(x, 2) for x in jet.q])
    else:
        raise SymmetryError(f"no SL(2,R) representation for chart kind {kind!r}")
    X1 = GeneratorField(jet, ONE, (ZERO,) * jet.n, "X1")
    X2 = GeneratorField(jet, mul(2, t), scale, "X2")
    X3 = GeneratorField(jet, power(t, 2), tuple(mul(t, s) for s in scale), "X3")
    return [(X1, ZERO), (X2, ZERO), (X3, mul(HALF, r2))]
