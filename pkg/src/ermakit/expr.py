"""Minimal symbolic expression kernel.

Trees are built from constants, symbols, sums, products, rational powers,
``sin`` and ``cos``. Construction performs only light canonicalisation
(flattening, constant folding, collection of like terms and like factors,
sorted children) so that structurally equal trees compare equal. There is no
general simplifier: identity questions are settled numerically with
:func:`equal_on_samples`.
"""

from __future__ import annotations

import functools
import math
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

TIME = "time"
COORDINATE = "coordinate"
VELOCITY = "velocity"
ACCELERATION = "acceleration"
PARAMETER = "parameter"
ROLES = (TIME, COORDINATE, VELOCITY, ACCELERATION, PARAMETER)

DEFAULT_SEED = 42
DEFAULT_GUARD = 1e-3


class ExprError(Exception):
    pass


class UnboundSymbol(ExprError):
    def __init__(self, symbol):
        super().__init__(f"symbol {symbol} is not bound")
        self.symbol = symbol


class DomainViolation(ExprError):
    """Evaluation hit a singular point; ``subtree`` is the offending node."""

    def __init__(self, subtree, detail=""):
        msg = f"domain violation in {subtree}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.subtree = subtree


class JetOverflow(ExprError):
    pass


class InsufficientSamples(ExprError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, position, text=""):
        self.position = position
        self.text = text
        pointer = ""
        if text:
            pointer = f"\n  {text}\n  {' ' * position}^"
        super().__init__(f"{message} at position {position}{pointer}")


def default_seed() -> int:
    """Seed used when none is given; ``ERMAKOV_SEED`` overrides it."""
    raw = os.environ.get("ERMAKOV_SEED")
    if raw:
        return int(raw, 0)
    return DEFAULT_SEED


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ("key", "_hash", "_free")

    def _init_key(self, key):
        self.key = key
        self._hash = hash(key)
        self._free = None

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Expr) and self._hash == other._hash and self.key == other.key

    def __ne__(self, other):
        return not self == other

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return mul(MINUS_ONE, self)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Expr({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    @property
    def children(self) -> tuple:
        return ()

    @property
    def free_symbols(self) -> frozenset:
        if self._free is None:
            acc = set()
            for c in self.children:
                acc |= c.free_symbols
            self._free = frozenset(acc)
        return self._free

    def diff(self, s: "Symbol") -> "Expr":
        return differentiate(self, s)

    def subs(self, mapping) -> "Expr":
        return substitute(self, mapping)

    def evaluate(self, binding) -> float:
        return evaluate(self, binding)

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        value = float(value)
        if not math.isfinite(value):
            raise ExprError(f"non-finite constant {value}")
        if value == 0.0:
            value = 0.0  # drop negative zero
        self.value = value
        self._init_key((0, value))
        self._free = frozenset()


class Symbol(Expr):
    """Named leaf. Velocity/acceleration symbols link to the symbol one order lower."""

    __slots__ = ("name", "role", "lower")

    def __init__(self, name: str, role: str = PARAMETER, lower: "Symbol | None" = None):
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if role in (VELOCITY, ACCELERATION) and lower is None:
            raise ValueError(f"{role} symbol {name!r} needs the symbol it differentiates")
        self.name = name
        self.role = role
        self.lower = lower
        self._init_key((1, name))
        self._free = frozenset((self,))


class Add(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = tuple(args)
        self._init_key((4, tuple(a.key for a in self.args)))

    @property
    def children(self):
        return self.args


class Mul(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = tuple(args)
        self._init_key((3, tuple(a.key for a in self.args)))

    @property
    def children(self):
        return self.args


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: Fraction):
        self.base = base
        self.exp = exp
        self._init_key((2, base.key, (exp.numerator, exp.denominator)))

    @property
    def children(self):
        return (self.base,)


class Sin(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        self.arg = arg
        self._init_key((5, arg.key))

    @property
    def children(self):
        return (self.arg,)


class Cos(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        self.arg = arg
        self._init_key((6, arg.key))

    @property
    def children(self):
        return (self.arg,)


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)
HALF = Const(0.5)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, Fraction, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an expression")


def const(value) -> Const:
    return Const(value)


def _as_fraction(e) -> Fraction:
    if isinstance(e, Fraction):
        return e
    if isinstance(e, (int, np.integer)):
        return Fraction(int(e))
    if isinstance(e, Const):
        e = e.value
    if isinstance(e, (float, np.floating)):
        frac = Fraction(float(e)).limit_denominator(10_000)
        if abs(float(frac) - float(e)) > 1e-12:
            raise ExprError(f"exponent {e} is not a small rational")
        return frac
    raise ExprError(f"exponent must be a rational constant, got {e!r}")


# ---------------------------------------------------------------------------
# smart constructors


def _split_coeff(term: Expr):
    """Return (numeric coefficient, tuple of non-constant factors)."""
    if isinstance(term, Const):
        return term.value, ()
    if isinstance(term, Mul):
        if isinstance(term.args[0], Const):
            return term.args[0].value, term.args[1:]
        return 1.0, term.args
    return 1.0, (term,)


def _from_coeff(coeff: float, factors: tuple) -> Expr:
    if coeff == 0.0:
        return ZERO
    if not factors:
        return Const(coeff)
    if coeff == 1.0:
        return factors[0] if len(factors) == 1 else Mul(factors)
    return Mul((Const(coeff),) + tuple(factors))


def add(*terms) -> Expr:
    flat = []
    stack = [as_expr(t) for t in reversed(terms)]
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(reversed(t.args))
        else:
            flat.append(t)
    constant = 0.0
    collected: dict = {}
    order = []
    for t in flat:
        if isinstance(t, Const):
            constant += t.value
            continue
        c, factors = _split_coeff(t)
        k = tuple(f.key for f in factors)
        if k in collected:
            collected[k][0] += c
        else:
            collected[k] = [c, factors]
            order.append(k)
    out = []
    for k in order:
        c, factors = collected[k]
        if c != 0.0:
            out.append(_from_coeff(c, factors))
    if constant != 0.0:
        out.append(Const(constant))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    out.sort(key=lambda e: e.key)
    return Add(out)


def mul(*factors) -> Expr:
    flat = []
    stack = [as_expr(f) for f in reversed(factors)]
    while stack:
        f = stack.pop()
        if isinstance(f, Mul):
            stack.extend(reversed(f.args))
        else:
            flat.append(f)
    coeff = 1.0
    bases: dict = {}
    order = []
    for f in flat:
        if isinstance(f, Const):
            coeff *= f.value
            continue
        if isinstance(f, Pow):
            b, e = f.base, f.exp
        else:
            b, e = f, Fraction(1)
        if b.key in bases:
            bases[b.key][1] += e
        else:
            bases[b.key] = [b, e]
            order.append(b.key)
    if coeff == 0.0:
        return ZERO
    out = []
    again = False
    for k in order:
        b, e = bases[k]
        p = power(b, e)
        if isinstance(p, Const):
            coeff *= p.value
        else:
            if isinstance(p, Mul):
                again = True
            out.append(p)
    if again:
        return mul(Const(coeff), *out)
    if coeff == 0.0:
        return ZERO
    if len(out) == 1 and isinstance(out[0], Add) and coeff != 1.0:
        return add(*[mul(Const(coeff), t) for t in out[0].args])
    out.sort(key=lambda e: e.key)
    return _from_coeff(coeff, tuple(out))


def power(base, exponent) -> Expr:
    base = as_expr(base)
    e = _as_fraction(exponent)
    if e == 0:
        return ONE
    if e == 1:
        return base
    if isinstance(base, Const):
        b = base.value
        if b > 0:
            return Const(b ** float(e))
        if e.denominator == 1 and (b != 0 or e > 0):
            return Const(b ** int(e))
        if b == 0 and e > 0:
            return ZERO
        return Pow(base, e)
    if isinstance(base, Pow) and e.denominator == 1:
        return power(base.base, base.exp * e)
    if isinstance(base, Mul) and e.denominator == 1:
        return mul(*[power(f, e) for f in base.args])
    return Pow(base, e)


def sin(x) -> Expr:
    x = as_expr(x)
    if isinstance(x, Const):
        return Const(math.sin(x.value))
    return Sin(x)


def cos(x) -> Expr:
    x = as_expr(x)
    if isinstance(x, Const):
        return Const(math.cos(x.value))
    return Cos(x)


def sqrt(x) -> Expr:
    return power(x, Fraction(1, 2))


def sum_exprs(items: Iterable) -> Expr:
    return add(*list(items))


def symbols(names: str, role: str = PARAMETER):
    out = tuple(Symbol(n, role) for n in names.replace(",", " ").split())
    return out[0] if len(out) == 1 else out


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """Time symbol plus coordinates with their linked velocities and accelerations."""

    t: Symbol
    q: tuple
    v: tuple
    a: tuple

    @classmethod
    def make(cls, names: Sequence[str], time: str = "t") -> "Jet":
        t = Symbol(time, TIME)
        q = tuple(Symbol(n, COORDINATE) for n in names)
        v = tuple(Symbol(f"{n}_dot", VELOCITY, lower=s) for n, s in zip(names, q))
        a = tuple(Symbol(f"{n}_ddot", ACCELERATION, lower=s) for n, s in zip(names, v))
        return cls(t, q, v, a)

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def names(self) -> tuple:
        return tuple(s.name for s in self.q)

    @property
    def state_symbols(self) -> tuple:
        return (self.t,) + self.q + self.v

    def table(self) -> dict:
        """Name -> symbol for every jet symbol (parser symbol table)."""
        out = {self.t.name: self.t}
        for s in self.q + self.v + self.a:
            out[s.name] = s
        return out


def total_derivative(e: Expr, jet: Jet) -> Expr:
    """d/dt along the jet: accelerations stay symbolic."""
    if any(s in e.free_symbols for s in jet.a):
        raise JetOverflow(f"{e} already contains acceleration symbols")
    terms = [differentiate(e, jet.t)]
    free = e.free_symbols
    for q, v, a in zip(jet.q, jet.v, jet.a):
        if q in free:
            terms.append(mul(v, differentiate(e, q)))
        if v in free:
            terms.append(mul(a, differentiate(e, v)))
    return add(*terms)


# ---------------------------------------------------------------------------
# calculus and substitution


def differentiate(e: Expr, s: Symbol) -> Expr:
    if s not in e.free_symbols:
        return ZERO
    if isinstance(e, Symbol):
        return ONE
    if isinstance(e, Add):
        return add(*[differentiate(a, s) for a in e.args])
    if isinstance(e, Mul):
        terms = []
        args = e.args
        for i, f in enumerate(args):
            if s in f.free_symbols:
                terms.append(mul(*args[:i], differentiate(f, s), *args[i + 1:]))
        return add(*terms)
    if isinstance(e, Pow):
        return mul(Const(float(e.exp)), power(e.base, e.exp - 1), differentiate(e.base, s))
    if isinstance(e, Sin):
        return mul(cos(e.arg), differentiate(e.arg, s))
    if isinstance(e, Cos):
        return mul(MINUS_ONE, sin(e.arg), differentiate(e.arg, s))
    raise TypeError(f"cannot differentiate {type(e).__name__}")


def substitute(e: Expr, mapping: Mapping) -> Expr:
    """Replace symbols (keys may be symbols or names) by expressions or numbers."""
    m = {}
    for k, v in mapping.items():
        name = k.name if isinstance(k, Symbol) else k
        m[name] = as_expr(v)
    if not m:
        return e
    cache: dict = {}

    def rec(x):
        if not any(s.name in m for s in x.free_symbols):
            return x
        hit = cache.get(x.key)
        if hit is not None:
            return hit
        if isinstance(x, Symbol):
            out = m[x.name]
        elif isinstance(x, Add):
            out = add(*[rec(a) for a in x.args])
        elif isinstance(x, Mul):
            out = mul(*[rec(a) for a in x.args])
        elif isinstance(x, Pow):
            out = power(rec(x.base), x.exp)
        elif isinstance(x, Sin):
            out = sin(rec(x.arg))
        elif isinstance(x, Cos):
            out = cos(rec(x.arg))
        else:
            out = x
        cache[x.key] = out
        return out

    return rec(e)


def denominators(*exprs: Expr) -> list:
    """Bases raised to negative powers: the factors that must stay away from zero."""
    seen = {}
    stack = list(exprs)
    while stack:
        x = stack.pop()
        if isinstance(x, Pow) and x.exp < 0:
            seen.setdefault(x.base.key, x.base)
        stack.extend(x.children)
    return [seen[k] for k in sorted(seen)]


def radicands(*exprs: Expr) -> list:
    """Bases raised to non-integer powers: must stay non-negative."""
    seen = {}
    stack = list(exprs)
    while stack:
        x = stack.pop()
        if isinstance(x, Pow) and x.exp.denominator != 1:
            seen.setdefault(x.base.key, x.base)
        stack.extend(x.children)
    return [seen[k] for k in sorted(seen)]


def count_nodes(e: Expr) -> int:
    return 1 + sum(count_nodes(c) for c in e.children)


# ---------------------------------------------------------------------------
# numeric evaluation


def _binding_lookup(binding: Mapping) -> dict:
    out = {}
    for k, v in binding.items():
        out[k.name if isinstance(k, Symbol) else k] = float(v)
    return out


def evaluate(e: Expr, binding: Mapping) -> float:
    """Recursive double-precision evaluation; raises on unbound symbols and singular points."""
    values = _binding_lookup(binding)
    return _eval(e, values)


def _eval(e, values):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Symbol):
        try:
            return values[e.name]
        except KeyError:
            raise UnboundSymbol(e) from None
    if isinstance(e, Add):
        return math.fsum(_eval(a, values) for a in e.args)
    if isinstance(e, Mul):
        out = 1.0
        for a in e.args:
            out *= _eval(a, values)
        return out
    if isinstance(e, Pow):
        b = _eval(e.base, values)
        p = e.exp
        if b == 0.0 and p < 0:
            raise DomainViolation(e, "division by zero")
        if b < 0.0 and p.denominator != 1:
            raise DomainViolation(e, "negative base with fractional exponent")
        try:
            if p.denominator == 1:
                return b ** int(p)
            if p.denominator == 2:
                r = math.sqrt(b)
                return r ** p.numerator
            return b ** float(p)
        except OverflowError:
            raise DomainViolation(e, "overflow") from None
    if isinstance(e, Sin):
        return math.sin(_eval(e.arg, values))
    if isinstance(e, Cos):
        return math.cos(_eval(e.arg, values))
    raise TypeError(type(e).__name__)


def _rpow_math(b, p, q):
    if b < 0.0:
        raise ValueError("negative base with fractional exponent")
    if q == 2:
        return math.sqrt(b) ** p
    return b ** (p / q)


def _rpow_numpy(b, p, q):
    with np.errstate(invalid="ignore"):
        if q == 2:
            return np.sqrt(b) ** p
        return np.power(b, p / q)


class CompiledFunction:
    """Straight-line code for a tuple of expressions with shared subexpressions."""

    def __init__(self, exprs: Sequence[Expr], args: Sequence, backend: str = "math"):
        self.exprs = tuple(as_expr(e) for e in exprs)
        self.args = tuple(args)
        self.backend = backend
        self.source, self._fn = _codegen(self.exprs, self.args, backend)

    def __call__(self, *values):
        if self.backend == "numpy":
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return self._fn(*values)
        try:
            return self._fn(*values)
        except (ZeroDivisionError, ValueError, OverflowError) as err:
            binding = {s.name if isinstance(s, Symbol) else s: v for s, v in zip(self.args, values)}
            for e in self.exprs:
                evaluate(e, binding)  # raises DomainViolation with the offending subtree
            raise DomainViolation(self.exprs[0], str(err)) from None


def lambdify(exprs, args: Sequence, backend: str = "math") -> CompiledFunction:
    """Compile ``exprs`` (one expression or a sequence) into a callable of ``args``."""
    if isinstance(exprs, Expr):
        exprs = (exprs,)
    return CompiledFunction(exprs, args, backend)


@functools.lru_cache(maxsize=512)
def _cached(exprs: tuple, args: tuple, backend: str) -> CompiledFunction:
    return CompiledFunction(exprs, args, backend)


def cached_lambdify(exprs, args: Sequence, backend: str = "math") -> CompiledFunction:
    """:func:`lambdify` memoised on (expressions, arguments, backend)."""
    if isinstance(exprs, Expr):
        exprs = (exprs,)
    return _cached(tuple(exprs), tuple(args), backend)


def _codegen(exprs, args, backend):
    names: dict = {}
    lines = []
    argnames = []
    for i, s in enumerate(args):
        nm = f"a{i}"
        argnames.append(nm)
        key = s.key if isinstance(s, Expr) else Symbol(s).key
        names[key] = nm
    sinf, cosf = ("_sin", "_cos")
    counter = [0]

    def emit(x):
        if x.key in names:
            return names[x.key]
        if isinstance(x, Const):
            return repr(x.value)
        if isinstance(x, Symbol):
            raise UnboundSymbol(x)
        if isinstance(x, Add):
            code = " + ".join(emit(a) for a in x.args)
        elif isinstance(x, Mul):
            code = " * ".join(emit(a) for a in x.args)
        elif isinstance(x, Pow):
            b = emit(x.base)
            p = x.exp
            if p.denominator == 1:
                code = f"{b} ** {int(p)}" if backend == "math" or p > 0 else f"{b} ** ({float(p)!r})"
            else:
                code = f"_rpow({b}, {p.numerator}, {p.denominator})"
        elif isinstance(x, Sin):
            code = f"{sinf}({emit(x.arg)})"
        elif isinstance(x, Cos):
            code = f"{cosf}({emit(x.arg)})"
        else:
            raise TypeError(type(x).__name__)
        nm = f"v{counter[0]}"
        counter[0] += 1
        lines.append(f"    {nm} = {code}")
        names[x.key] = nm
        return nm

    outs = [emit(e) for e in exprs]
    body = "\n".join(lines)
    if backend == "numpy":
        ret = ", ".join(f"_bc({o})" for o in outs)
    else:
        ret = ", ".join(outs)
    src = f"def _f({', '.join(argnames)}):\n{body}\n    return ({ret},)\n"
    if backend == "math":
        ns = {"_sin": math.sin, "_cos": math.cos, "_rpow": _rpow_math}
    elif backend == "numpy":
        ns = {"_sin": np.sin, "_cos": np.cos, "_rpow": _rpow_numpy, "_bc": np.asarray}
    else:
        raise ValueError(f"unknown backend {backend!r}")
    exec(compile(src, "<ermakit-codegen>", "exec"), ns)
    return src, ns["_f"]


# ---------------------------------------------------------------------------
# sampled identity testing


@dataclass(frozen=True)
class IdentityVerdict:
    equal: bool
    max_abs_deviation: float
    max_scaled_deviation: float
    samples_used: int
    samples_rejected: int
    seed: int
    tolerance: float
    worst_point: dict = field(default_factory=dict)
    lhs_at_worst: float = 0.0
    rhs_at_worst: float = 0.0


def sample_points(exprs: Sequence[Expr], domain: Mapping, n: int, guard: float = DEFAULT_GUARD,
                  seed: int = DEFAULT_SEED, max_draw_factor: int = 100):
    """Draw ``n`` guard-respecting points for the free symbols of ``exprs``.

    Returns ``(symbols, points, rejected)`` with ``points`` of shape ``(n, len(symbols))``.
    Points are rejected when a denominator factor is smaller than ``guard`` in
    magnitude, when a radicand is negative, or when evaluation fails.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    dom = {(k.name if isinstance(k, Symbol) else k): tuple(map(float, v)) for k, v in domain.items()}
    free = set()
    for e in exprs:
        free |= e.free_symbols
    syms = sorted(free, key=lambda s: s.name)
    for s in syms:
        if s.name not in dom:
            raise UnboundSymbol(s)
    dens = denominators(*exprs)
    rads = radicands(*exprs)
    check_den = lambdify(dens, syms) if dens else None
    check_rad = lambdify(rads, syms) if rads else None
    check_all = lambdify(exprs, syms)
    lo = np.array([dom[s.name][0] for s in syms])
    hi = np.array([dom[s.name][1] for s in syms])
    rng = np.random.default_rng(seed)
    accepted = []
    rejected = 0
    draws = 0
    limit = max_draw_factor * n
    while len(accepted) < n:
        if draws >= limit:
            raise InsufficientSamples(
                f"only {len(accepted)} of {n} points accepted after {draws} draws")
        batch = min(max(n - len(accepted), 16), limit - draws)
        pts = lo + (hi - lo) * rng.random((batch, len(syms)))
        draws += batch
        for p in pts:
            if len(accepted) >= n:
                break
            try:
                if check_den is not None and min(abs(d) for d in check_den(*p)) < guard:
                    rejected += 1
                    continue
                if check_rad is not None and min(check_rad(*p)) < 0.0:
                    rejected += 1
                    continue
                vals = check_all(*p)
                if not all(math.isfinite(v) for v in vals):
                    rejected += 1
                    continue
            except ExprError:
                rejected += 1
                continue
            accepted.append(p)
    return syms, np.array(accepted).reshape(n, len(syms)), rejected


def equal_on_samples(e1, e2, domain: Mapping, n: int = 200, tol: float = 1e-10,
                     guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED) -> IdentityVerdict:
    """Compare two expressions at ``n`` seeded random points of ``domain``.

    The verdict uses the scaled deviation |a - b| / max(1, |a|, |b|), which is
    the absolute deviation for O(1) values and relative near singular walls.
    """
    e1, e2 = as_expr(e1), as_expr(e2)
    syms, pts, rejected = sample_points((e1, e2), domain, n, guard, seed)
    f = lambdify((e1, e2), syms)
    worst = -1.0
    worst_abs = 0.0
    worst_i = 0
    worst_vals = (0.0, 0.0)
    for i, p in enumerate(pts):
        a, b = f(*p)
        d = abs(a - b)
        worst_abs = max(worst_abs, d)
        d /= max(1.0, abs(a), abs(b))
        if d > worst:
            worst, worst_i, worst_vals = d, i, (a, b)
    point = {s.name: float(v) for s, v in zip(syms, pts[worst_i])}
    return IdentityVerdict(
        equal=worst <= tol,
        max_abs_deviation=float(worst_abs),
        max_scaled_deviation=float(worst),
        samples_used=len(pts),
        samples_rejected=rejected,
        seed=seed,
        tolerance=tol,
        worst_point=point,
        lhs_at_worst=float(worst_vals[0]),
        rhs_at_worst=float(worst_vals[1]),
    )


def max_abs_on_samples(exprs: Sequence[Expr], domain: Mapping, n: int = 200,
                       guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED):
    """Largest |value| of any of ``exprs`` over shared samples; returns (max, point)."""
    exprs = [as_expr(e) for e in exprs]
    if all(isinstance(e, Const) for e in exprs):
        return max((abs(e.value) for e in exprs), default=0.0), {}
    syms, pts, _ = sample_points(exprs, domain, n, guard, seed)
    f = lambdify(exprs, syms)
    worst, where = 0.0, pts[0] if len(pts) else ()
    for p in pts:
        m = max(abs(v) for v in f(*p))
        if m > worst:
            worst, where = m, p
    return float(worst), {s.name: float(v) for s, v in zip(syms, where)}


def residual_on_samples(exprs: Sequence[Expr], domain: Mapping, n: int = 200,
                        guard: float = DEFAULT_GUARD, seed: int = DEFAULT_SEED):
    """Sampled size of expressions that should vanish identically.

    Returns ``(max_abs, max_scaled, point)`` where the scaled value divides
    |R| by max(1, sum of |terms|) over the top-level additive terms of R, so
    that cancellation among large terms near a singular wall is judged
    relative to their size.
    """
    exprs = [as_expr(e) for e in exprs]
    if all(isinstance(e, Const) for e in exprs):
        m = max((abs(e.value) for e in exprs), default=0.0)
        return m, m, {}
    syms, pts, _ = sample_points(exprs, domain, n, guard, seed)
    groups = [e.args if isinstance(e, Add) else (e,) for e in exprs]
    flat = [t for g in groups for t in g]
    f = lambdify(flat, syms)
    worst_abs, worst_scaled, where = 0.0, 0.0, pts[0]
    for p in pts:
        vals = f(*p)
        k = 0
        for g in groups:
            part = vals[k:k + len(g)]
            k += len(g)
            r = abs(math.fsum(part))
            sc = r / max(1.0, sum(abs(v) for v in part))
            worst_abs = max(worst_abs, r)
            if sc > worst_scaled:
                worst_scaled, where = sc, p
    return float(worst_abs), float(worst_scaled), {s.name: float(v) for s, v in zip(syms, where)}


# ---------------------------------------------------------------------------
# text: printing and parsing


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt_exp(p: Fraction) -> str:
    if p.denominator == 1 and p > 0:
        return str(p.numerator)
    if p.denominator == 1:
        return f"({p.numerator})"
    return f"({p.numerator}/{p.denominator})"


def to_text(e: Expr) -> str:
    """Infix text accepted back by :func:`parse`."""
    return _text(e, 0)


def _text(e, prec):
    # prec: 0 sum context, 1 product context, 2 power-base context
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        if e.value < 0 and prec > 0:
            return f"({s})"
        return s
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, Sin):
        return f"sin({_text(e.arg, 0)})"
    if isinstance(e, Cos):
        return f"cos({_text(e.arg, 0)})"
    if isinstance(e, Pow):
        return f"{_text(e.base, 2)}^{_fmt_exp(e.exp)}"
    if isinstance(e, Mul):
        c, factors = _split_coeff(e)
        body = "*".join(_text(f, 1) for f in factors)
        if c == 1.0:
            s = body
        elif c == -1.0:
            s = "-" + body
        else:
            s = _fmt_const(c) + "*" + body
        if prec >= 2 or (prec == 1 and c < 0):
            return f"({s})"
        return s
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.args):
            c, factors = _split_coeff(t)
            if i > 0 and c < 0:
                parts.append(" - " + _text(_from_coeff(-c, factors), 1))
            elif i > 0:
                parts.append(" + " + _text(t, 1))
            else:
                parts.append(_text(t, 1) if c >= 0 else "-" + _text(_from_coeff(-c, factors), 1))
        s = "".join(parts)
        return f"({s})" if prec > 0 else s
    raise TypeError(type(e).__name__)


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^(),]))")


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start(m.lastindex)
        if m.group(1):
            out.append(("num", m.group(1), start))
        elif m.group(2):
            out.append(("id", m.group(2), start))
        else:
            op = m.group(3)
            out.append(("op", "^" if op == "**" else op, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, table, strict):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.table = dict(table or {})
        self.strict = strict

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            want = "end of input" if value == "" else repr(value)
            raise ExprSyntaxError(f"expected {want}, found {tok[1]!r}", tok[2], self.text)
        self.i += 1
        return tok

    def parse(self):
        if self.peek()[0] == "end":
            raise ExprSyntaxError("empty expression", 0, self.text)
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2], self.text)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            e = self.unary()
            return -e if tok[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            exp = self.unary()
            if not isinstance(exp, Const):
                raise ExprSyntaxError("exponent must be a constant", tok[2] + 1, self.text)
            try:
                return power(base, _as_fraction(exp))
            except ExprError as err:
                raise ExprSyntaxError(str(err), tok[2] + 1, self.text) from None
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return Const(float(val))
        if kind == "id":
            if self.peek()[1] == "(" and val in ("sin", "cos"):
                self.take("(")
                arg = self.expr()
                self.take(")")
                return sin(arg) if val == "sin" else cos(arg)
            if val in ("sin", "cos"):
                raise ExprSyntaxError(f"{val} needs an argument", pos, self.text)
            if val == "pi":
                return Const(math.pi)
            if val not in self.table:
                if self.strict:
                    raise ExprSyntaxError(f"unknown symbol {val!r}", pos, self.text)
                self.table[val] = Symbol(val, PARAMETER)
            return self.table[val]
        if val == "(":
            e = self.expr()
            self.take(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos, self.text)
        raise ExprSyntaxError(f"unexpected {val!r}", pos, self.text)


def parse(text: str, table: Mapping | None = None, strict: bool = False) -> Expr:
    """Parse infix text (``+ - * / ^``, ``sin``, ``cos``, ``pi``).

    Identifiers resolve through ``table`` (name -> Symbol); unknown names become
    parameter symbols unless ``strict``.
    """
    return _Parser(text, table, strict).parse()
