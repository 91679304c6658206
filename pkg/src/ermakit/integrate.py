"""Numerical integration of second-order acceleration fields with invariant monitoring.

Two one-step methods are provided: classic fixed-step RK4 and the
Dormand-Prince 5(4) embedded pair with a PI step-size controller. Both store
every accepted step (no dense output) and stop cleanly at guard boundaries,
returning the partial trajectory through the raised exception.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import DomainViolation, Expr, ExprError, Jet, denominators, lambdify


class IntegrationError(Exception):
    """Base class; ``trajectory`` holds everything accepted before the failure."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class GuardViolation(IntegrationError):
    pass


class StepLimit(IntegrationError):
    pass


class MinStepUnderflow(IntegrationError):
    pass


# ---------------------------------------------------------------------------
# fields


class AccelerationField:
    """q'' = accel(t, q, v) on ``n`` coordinates, with guard expressions.

    Guards are functions whose magnitude must stay at or above the integrator's
    guard floor and whose sign may not change across a step (radii,
    cos(theta), x for Ray-Reid, ...). ``guard`` returns their signed values.
    """

    def __init__(self, n: int, accel: Callable, guard: Callable | None = None,
                 names: Sequence[str] | None = None):
        self.n = n
        self._accel = accel
        self._guard = guard
        self.names = tuple(names) if names else tuple(f"q{i + 1}" for i in range(n))

    def accel(self, t, q, v) -> np.ndarray:
        return self._accel(t, q, v)

    def guard_values(self, t, q, v) -> np.ndarray:
        if self._guard is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self._guard(t, q, v), dtype=float))

    def guard_min(self, t, q, v) -> float:
        g = self.guard_values(t, q, v)
        return float(np.min(np.abs(g))) if g.size else math.inf

    def rhs(self, t, y):
        n = self.n
        return np.concatenate((y[n:], self.accel(t, y[:n], y[n:])))


class ExprField(AccelerationField):
    """Acceleration field compiled from expressions over a jet."""

    def __init__(self, jet: Jet, accelerations: Sequence[Expr], guards: Sequence[Expr] | None = None):
        self.jet = jet
        self.accelerations = tuple(accelerations)
        if guards is None:
            guards = denominators(*self.accelerations)
        self.guards = tuple(guards)
        args = jet.state_symbols
        fa = lambdify(self.accelerations, args)
        n = jet.n

        def accel(t, q, v):
            return np.array(fa(t, *q, *v), dtype=float)

        gfun = None
        if self.guards:
            fg = lambdify(self.guards, args)

            def gfun(t, q, v):
                try:
                    return fg(t, *q, *v)
                except ExprError:
                    return (0.0,)

        super().__init__(n, accel, gfun, jet.names)


class NumericSolveField(AccelerationField):
    """Euler-Lagrange accelerations by a numeric linear solve at every evaluation."""

    def __init__(self, jet: Jet, mass_matrix, rhs, guards=()):
        self.jet = jet
        n = jet.n
        args = jet.state_symbols
        flat = [mass_matrix[i][j] for i in range(n) for j in range(n)]
        fm = lambdify(flat, args)
        fr = lambdify(rhs, args)

        def accel(t, q, v):
            m = np.array(fm(t, *q, *v), dtype=float).reshape(n, n)
            r = np.array(fr(t, *q, *v), dtype=float)
            try:
                return np.linalg.solve(m, r)
            except np.linalg.LinAlgError as err:
                raise DomainViolation(mass_matrix[0][0], f"singular mass matrix: {err}") from None

        gfun = None
        if guards:
            fg = lambdify(guards, args)

            def gfun(t, q, v):
                try:
                    return fg(t, *q, *v)
                except ExprError:
                    return (0.0,)

        super().__init__(n, accel, gfun, jet.names)


def combine_fields(*fields: AccelerationField) -> AccelerationField:
    """Direct product of independent fields (co-integration on a shared clock)."""
    sizes = [f.n for f in fields]
    offsets = np.cumsum([0] + sizes)
    n = int(offsets[-1])

    def accel(t, q, v):
        return np.concatenate([f.accel(t, q[a:b], v[a:b]) for f, a, b in zip(fields, offsets[:-1], offsets[1:])])

    def guard(t, q, v):
        return np.concatenate([f.guard_values(t, q[a:b], v[a:b]) for f, a, b in zip(fields, offsets[:-1], offsets[1:])])

    names = [nm for f in fields for nm in f.names]
    return AccelerationField(n, accel, guard, names)


# ---------------------------------------------------------------------------
# settings, results


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "adaptive45"
    h: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-12
    t_end: float = 10.0
    max_steps: int = 1_000_000
    guard_floor: float = 1e-6
    min_step: float = 1e-14

    def __post_init__(self):
        if self.method not in ("fixed4", "adaptive45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "fixed4" and not self.h > 0:
            raise ValueError("fixed step needs h > 0")
        if self.method == "adaptive45" and not (0 < self.atol <= self.rtol < 1):
            raise ValueError("need 0 < atol <= rtol < 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class PhaseState:
    t: float
    q: np.ndarray
    v: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    accepted: int = 0
    rejected: int = 0
    status: str = "complete"
    names: tuple = ()

    def __len__(self):
        return len(self.times)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def state(self, i: int) -> PhaseState:
        return PhaseState(float(self.times[i]), self.q[i].copy(), self.v[i].copy())

    def to_csv(self, path, names=None):
        names = names or self.names or tuple(f"q{i + 1}" for i in range(self.n))
        header = ["t"] + list(names) + [f"{nm}_dot" for nm in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, q, v in zip(self.times, self.q, self.v):
                w.writerow([format(float(x), ".17g") for x in (t, *q, *v)])


class _Recorder:
    def __init__(self, t0, y0, n, names):
        self.ts = [float(t0)]
        self.ys = [np.array(y0, dtype=float)]
        self.n = n
        self.names = names
        self.accepted = 0
        self.rejected = 0

    def push(self, t, y):
        self.ts.append(float(t))
        self.ys.append(y)
        self.accepted += 1

    def build(self, status="complete") -> Trajectory:
        ys = np.array(self.ys)
        return Trajectory(np.array(self.ts), ys[:, :self.n].copy(), ys[:, self.n:].copy(),
                          self.accepted, self.rejected, status, tuple(self.names))


def _initial_vector(field, state0):
    if isinstance(state0, PhaseState):
        t0, q, v = state0.t, state0.q, state0.v
    else:
        t0, q, v = state0
    y0 = np.concatenate((np.asarray(q, dtype=float), np.asarray(v, dtype=float)))
    if y0.shape != (2 * field.n,):
        raise ValueError(f"state has {y0.size} entries, field needs {2 * field.n}")
    return float(t0), y0


def _guard_signs(field, t, y):
    try:
        return np.sign(field.guard_values(t, y[:field.n], y[field.n:]))
    except ExprError:
        return None


def _guard_ok(field, t, y, floor, ref=None):
    """Every guard has magnitude >= floor and, given ``ref``, the same sign as at the step start."""
    try:
        g = field.guard_values(t, y[:field.n], y[field.n:])
    except ExprError:
        return False
    if g.size == 0:
        return True
    if not np.all(np.abs(g) >= floor):
        return False
    return ref is None or bool(np.all(np.sign(g) == ref))


def _bisect_to_guard(step, field, t, y, h, floor, tol=1e-12, ref=None):
    """Largest step in (0, h] whose end state still satisfies the guards."""
    lo, hi = 0.0, h
    best = None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            y_mid = step(t, y, mid)
            ok = _guard_ok(field, t + mid, y_mid, floor, ref)
        except ExprError:
            ok = False
        if ok:
            lo, best = mid, y_mid
        else:
            hi = mid
    return lo, best


# ---------------------------------------------------------------------------
# fixed step


def _rk4_step(field, t, y, h):
    k1 = field.rhs(t, y)
    k2 = field.rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = field.rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = field.rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed(field: AccelerationField, state0, settings: IntegratorSettings) -> Trajectory:
    """Classic fourth-order Runge-Kutta with constant step ``settings.h``."""
    t0, y = _initial_vector(field, state0)
    rec = _Recorder(t0, y, field.n, field.names)
    if not _guard_ok(field, t0, y, settings.guard_floor):
        raise GuardViolation("initial state violates a guard", rec.build("guard"))
    span = settings.t_end - t0
    nsteps = max(1, int(math.ceil(span / settings.h - 1e-9)))
    if nsteps > settings.max_steps:
        nsteps_allowed = settings.max_steps
    else:
        nsteps_allowed = nsteps
    step = lambda tt, yy, hh: _rk4_step(field, tt, yy, hh)
    t = t0
    for i in range(nsteps_allowed):
        t_next = t0 + (i + 1) * settings.h if i + 1 < nsteps else settings.t_end
        h = t_next - t
        ref = _guard_signs(field, t, y)
        try:
            y_new = step(t, y, h)
            ok = _guard_ok(field, t_next, y_new, settings.guard_floor, ref)
        except ExprError:
            ok = False
        if not ok:
            dh, y_edge = _bisect_to_guard(step, field, t, y, h, settings.guard_floor, ref=ref)
            if y_edge is not None and dh > 0:
                rec.push(t + dh, y_edge)
            raise GuardViolation(f"guard tripped near t={t + dh:.12g}", rec.build("guard"))
        rec.push(t_next, y_new)
        t, y = t_next, y_new
    if nsteps > nsteps_allowed:
        raise StepLimit(f"step limit {settings.max_steps} reached at t={t:.12g}", rec.build("step_limit"))
    return rec.build()


# ---------------------------------------------------------------------------
# adaptive Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _dp_stages(field, t, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y.copy()
        for j, a in enumerate(_A[i]):
            if a != 0.0:
                yi += h * a * ks[j]
        ks.append(field.rhs(t + _C[i] * h, yi))
    y5 = y + h * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
    err = h * sum(e * k for e, k in zip(_E, ks))
    return y5, err, ks[6]


def _initial_step(field, t0, y0, f0, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    try:
        f1 = field.rhs(t0 + h0, y1)
    except ExprError:
        return h0 * 0.1
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_adaptive(field: AccelerationField, state0, settings: IntegratorSettings) -> Trajectory:
    """Dormand-Prince 5(4) with PI step control; per-step error <= atol + rtol*|y| componentwise."""
    t0, y = _initial_vector(field, state0)
    rec = _Recorder(t0, y, field.n, field.names)
    floor = settings.guard_floor
    if not _guard_ok(field, t0, y, floor):
        raise GuardViolation("initial state violates a guard", rec.build("guard"))
    t_end = settings.t_end
    rtol, atol = settings.rtol, settings.atol
    safety, fac_min, fac_max = 0.9, 0.2, 5.0
    alpha, beta = 0.7 / 5, 0.4 / 5
    f = field.rhs(t0, y)
    h = _initial_step(field, t0, y, f, rtol, atol, t_end - t0)
    err_prev = 1.0
    t = t0
    last_rejected = False

    def take(tt, yy, hh):
        return _dp_stages(field, tt, yy, hh, field.rhs(tt, yy))[0]

    while t < t_end:
        if rec.accepted >= settings.max_steps:
            raise StepLimit(f"step limit {settings.max_steps} reached at t={t:.12g}", rec.build("step_limit"))
        if h < settings.min_step * max(1.0, abs(t)):
            raise MinStepUnderflow(f"step size underflow at t={t:.12g}", rec.build("min_step"))
        final = t + h >= t_end
        if final:
            h = t_end - t
        try:
            y_new, err_vec, f_new = _dp_stages(field, t, y, h, f)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale))
            if not math.isfinite(err):
                raise DomainViolation(None, "non-finite stage")
        except ExprError:
            rec.rejected += 1
            h *= 0.25
            last_rejected = True
            continue
        if err <= 1.0:
            t_new = t_end if final else t + h
            ref = _guard_signs(field, t, y)
            if not _guard_ok(field, t_new, y_new, floor, ref):
                dh, y_edge = _bisect_to_guard(take, field, t, y, h, floor, ref=ref)
                if y_edge is not None and dh > 0:
                    rec.push(t + dh, y_edge)
                raise GuardViolation(f"guard tripped near t={t + dh:.12g}", rec.build("guard"))
            rec.push(t_new, y_new)
            t, y, f = t_new, y_new, f_new
            err = max(err, 1e-10)
            fac = safety * err ** (-alpha) * err_prev ** beta
            fac = min(fac_max, max(fac_min, fac))
            if last_rejected:
                fac = min(fac, 1.0)
            h *= fac
            err_prev = err
            last_rejected = False
        else:
            rec.rejected += 1
            h *= max(fac_min, safety * err ** (-alpha))
            last_rejected = True
    return rec.build()


def integrate(field: AccelerationField, state0, settings: IntegratorSettings | None = None) -> Trajectory:
    settings = settings or IntegratorSettings()
    if settings.method == "fixed4":
        return integrate_fixed(field, state0, settings)
    return integrate_adaptive(field, state0, settings)


# ---------------------------------------------------------------------------
# drift monitoring


@dataclass
class LawDrift:
    name: str
    initial: float = math.nan
    max_abs: float = math.nan
    max_rel: float = math.nan
    scaled: float = math.nan
    time_of_max: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class DriftReport:
    laws: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    times: np.ndarray | None = None

    def __getitem__(self, name) -> LawDrift:
        return self.laws[name]

    def worst_scaled(self) -> float:
        vals = [d.scaled for d in self.laws.values() if d.ok]
        return max(vals) if vals else math.nan

    def to_csv(self, path):
        names = list(self.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + names)
            for i, t in enumerate(self.times):
                w.writerow([format(float(t), ".17g")] + [format(float(self.series[nm][i]), ".17g") for nm in names])


def monitor(traj: Trajectory, laws: Sequence) -> DriftReport:
    """Evaluate each law at every stored state and summarise its drift.

    ``max_rel`` divides by max(|I(0)|, 1e-12); ``scaled`` divides by
    max(|I(0)|, 1), which stays meaningful for laws whose value is near zero.
    Laws that cannot be evaluated are reported with ``error`` set.
    """
    report = DriftReport(times=traj.times)
    for law in laws:
        name = law.name
        try:
            vals = np.asarray(law.values(traj.times, traj.q, traj.v), dtype=float)
            if vals.shape != traj.times.shape:
                vals = np.broadcast_to(vals, traj.times.shape).astype(float)
            if not np.all(np.isfinite(vals)):
                bad = int(np.argmax(~np.isfinite(vals)))
                raise DomainViolation(None, f"non-finite value at t={traj.times[bad]:.12g}")
        except (ExprError, ArithmeticError, ValueError) as err:
            report.laws[name] = LawDrift(name, error=f"EvaluationFailure: {err}")
            continue
        dev = np.abs(vals - vals[0])
        i = int(np.argmax(dev))
        i0 = abs(float(vals[0]))
        report.laws[name] = LawDrift(
            name=name,
            initial=float(vals[0]),
            max_abs=float(dev[i]),
            max_rel=float(dev[i] / max(i0, 1e-12)),
            scaled=float(dev[i] / max(i0, 1.0)),
            time_of_max=float(traj.times[i]),
        )
        report.series[name] = vals - vals[0]
    return report
