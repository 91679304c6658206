"""Command-line front end: ``simulate``, ``audit``, ``pinney``, ``invariants`` and ``catalog``.

Every option can also come from a JSON file given with ``--config``; flags on
the command line win over file values. Exit codes: 0 success, 1 integration or
audit failure, 2 configuration or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import audit as _audit
from .catalog import catalog, catalog_json, find_entry
from .ermakov import (
    ConstraintViolated, EPFrequency, ErmakovError, NegativeRadicand, OscillatorSolution, PinneyCoefficients,
    RayReidPair, _cartesian_names, cartesian_extras, cartesian_system, chart_for, ep_system, ermakov_nd_system,
    pinney_superposition, ray_reid_invariant, ray_reid_system, sl2_invariants, transport,
)
from .expr import ExprError, Jet, default_seed, parse, to_text
from .integrate import IntegrationError, IntegratorSettings, integrate, monitor
from .mechanics import LagrangianSystem

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SYSTEMS = ("ep", "2d", "3d", "nd", "rayreid")

DEFAULTS = {
    "system": "ep",
    "potential": None,
    "dim": None,
    "chart": None,
    "coords": "auto",
    "omega": "0",
    "f": "0",
    "g": "0",
    "u0": 1.0,
    "ic": None,
    "tend": 10.0,
    "method": "adaptive45",
    "h": 1e-3,
    "rtol": 1e-10,
    "atol": 1e-12,
    "max_steps": 1_000_000,
    "invariants": "all",
    "seed": None,
    "traj": "trajectory.csv",
    "drift": "drift.csv",
    "out": "pinney.csv",
    "rho1": "1,0",
    "rho2": "0,1",
    "c": "1,1,0",
    "report": None,
    "jobs": 1,
    "json": None,
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _floats(text, name):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def build_config(args: argparse.Namespace) -> RunConfig:
    vals = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_vals = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(file_vals) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        vals.update(file_vals)
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            vals[k] = v
    if vals["seed"] is None:
        vals["seed"] = default_seed()
    if vals["system"] not in SYSTEMS:
        raise ConfigError(f"unknown system {vals['system']!r}; choose from {', '.join(SYSTEMS)}")
    return RunConfig(vals)


def settings_of(cfg: RunConfig) -> IntegratorSettings:
    try:
        return IntegratorSettings(method=cfg.method, h=float(cfg.h), rtol=float(cfg.rtol), atol=float(cfg.atol),
                                  t_end=float(cfg.tend), max_steps=int(cfg.max_steps))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# system construction


@dataclass
class Setup:
    field: object
    laws: list
    names: tuple
    ic: tuple
    description: str
    system: LagrangianSystem | None = None


def _dimension(cfg) -> int:
    fixed = {"2d": 2, "3d": 3}.get(cfg.system)
    dim = cfg.dim
    if fixed is not None:
        if dim is not None and int(dim) != fixed:
            raise ConfigError(f"system {cfg.system} has dimension {fixed}, not {dim}")
        return fixed
    if dim is None:
        raise ConfigError("system nd needs --dim")
    dim = int(dim)
    if dim < 2:
        raise ConfigError("--dim must be at least 2")
    return dim


def _select(laws, selection):
    if selection in (None, "all"):
        return laws
    want = [s.strip() for s in str(selection).split(",") if s.strip()]
    by = {l.name: l for l in laws}
    missing = [w for w in want if w not in by]
    if missing:
        raise ConfigError(f"unknown invariants {missing}; available: {sorted(by)}")
    return [by[w] for w in want]


def _ic(cfg, n, fallback):
    if cfg.ic is None:
        return fallback
    vals = _floats(cfg.ic, "ic")
    if len(vals) != 2 * n:
        raise ConfigError(f"ic needs {2 * n} numbers (positions then velocities), got {len(vals)}")
    return (0.0, np.array(vals[:n]), np.array(vals[n:]))


def build_setup(cfg: RunConfig) -> Setup:
    seed = int(cfg.seed)
    if cfg.system == "ep":
        s = ep_system(EPFrequency.of(cfg.omega))
        laws = sl2_invariants(s, seed=seed) if EPFrequency.of(cfg.omega).omega_sq.is_zero else []
        return Setup(s.field(), laws, s.jet.names, _ic(cfg, 1, (0.0, np.array([1.0]), np.array([0.0]))),
                     "Ermakov-Pinney", s)
    if cfg.system == "rayreid":
        pair = RayReidPair.of(cfg.f, cfg.g, float(cfg.u0))
        fld = ray_reid_system(pair, cfg.omega)
        laws = [ray_reid_invariant(pair, fld.jet)] if EPFrequency.of(cfg.omega).omega_sq.is_zero else []
        ic = _ic(cfg, 2, (0.0, np.array([1.0, 2.0]), np.array([0.1, -0.2])))
        return Setup(fld, laws, fld.jet.names, ic, "Ray-Reid pair")

    n = _dimension(cfg)
    if cfg.potential is None:
        raise ConfigError(f"system {cfg.system} needs --potential (catalog id or expression)")
    text = str(cfg.potential)
    entry = None
    try:
        entry = find_entry(text)
    except KeyError:
        pass
    if entry is not None:
        if entry.dimension != n:
            raise ConfigError(f"catalog entry {entry.id} has dimension {entry.dimension}, not {n}")
        coords = "cartesian" if cfg.coords == "auto" else cfg.coords
        chart = entry.chart_object()
        if coords == "cartesian":
            s = entry.cartesian_system()
            extras = entry.bound_invariants()
        else:
            s = entry.angular_system()
            extras = [transport(l, chart) for l in entry.bound_invariants()]
        laws = sl2_invariants(s, seed=seed) + extras
        ic = _ic(cfg, n, _audit.initial_conditions(s, 1, seed, chart=chart)[0])
        return Setup(s.field(), _select(laws, cfg.invariants), s.jet.names, ic, f"catalog {entry.id} ({coords})", s)

    chart = chart_for(n, cfg.chart or ("polar" if n == 2 else "nd"))
    cart_names = set(_cartesian_names(n))
    ang_names = {q.name for q in chart.jet.q[1:]}
    V = parse(text, {})
    used = {s.name for s in V.free_symbols}
    if used and used <= cart_names and cfg.coords != "angular":
        s = cartesian_system(V, n)
        laws = sl2_invariants(s, seed=seed) + cartesian_extras(s, seed=seed)
        ic = _ic(cfg, n, _audit.initial_conditions(s, 1, seed, chart=chart)[0])
        return Setup(s.field(), _select(laws, cfg.invariants), s.jet.names, ic, f"Cartesian {n}D", s)
    if used - ang_names:
        raise ConfigError(f"potential uses {sorted(used - ang_names)}: expected angles {sorted(ang_names)} "
                          f"or Cartesian coordinates {sorted(cart_names)}")
    s = ermakov_nd_system(n, parse(text, chart.jet.table(), strict=True), chart)
    laws = sl2_invariants(s, seed=seed)
    ic = _ic(cfg, n, _audit.initial_conditions(s, 1, seed, chart=chart)[0])
    return Setup(s.field(), _select(laws, cfg.invariants), s.jet.names, ic, f"angular {n}D ({chart.name})", s)


# ---------------------------------------------------------------------------
# commands


def _table(rows, headers):
    w = [max(len(str(r[i])) for r in rows + [headers]) for i in range(len(headers))]
    out = ["  ".join(str(h).ljust(w[i]) for i, h in enumerate(headers))]
    out += ["  ".join(str(c).ljust(w[i]) for i, c in enumerate(r)) for r in rows]
    return "\n".join(out)


def cmd_simulate(cfg: RunConfig) -> int:
    setup = build_setup(cfg)
    settings = settings_of(cfg)
    status = EXIT_OK
    try:
        traj = integrate(setup.field, setup.ic, settings)
    except IntegrationError as exc:
        print(f"integration stopped: {exc}", file=sys.stderr)
        traj = exc.trajectory
        status = EXIT_FAIL
        if traj is None:
            return status
    traj.to_csv(cfg.traj, setup.names)
    report = monitor(traj, setup.laws)
    report.to_csv(cfg.drift)
    rows = [(d.name, f"{d.initial:.12g}", f"{d.max_abs:.3e}", f"{d.max_rel:.3e}", d.error or "")
            for d in report.laws.values()]
    print(f"{setup.description}: {len(traj)} states, {traj.accepted} accepted, {traj.rejected} rejected, "
          f"status {traj.status}")
    if rows:
        print(_table(rows, ("law", "initial", "max|dI|", "max rel", "error")))
    if any(d.error for d in report.laws.values()):
        status = EXIT_FAIL
    return status


def cmd_invariants(cfg: RunConfig) -> int:
    setup = build_setup(cfg)
    for law in setup.laws:
        form = to_text(law.expr) if law.expr is not None else law.description or "numeric evaluator"
        print(f"{law.name} = {form}")
    return EXIT_OK


def cmd_catalog(cfg: RunConfig) -> int:
    dims = [int(cfg.dim)] if cfg.dim is not None else [2, 3, 4]
    entries = [e for n in dims for e in catalog(n)]
    text = catalog_json(entries)
    if cfg.json:
        with open(cfg.json, "w") as fh:
            fh.write(text + "\n")
    rows = [(e.id, e.dimension, e.chart, to_text(e.cartesian_form), ",".join(e.errata)) for e in entries]
    print(_table(rows, ("id", "n", "chart", "cartesian form", "errata")))
    return EXIT_OK


def cmd_audit(cfg: RunConfig, scope: list, jobs: int) -> int:
    reg = _audit.registry()
    seed = int(cfg.seed)
    if scope == ["all"]:
        ids = list(reg)
    elif len(scope) == 2 and scope[0] == "catalog":
        cid = f"catalog:{scope[1]}"
        if cid not in reg:
            try:
                cid = f"catalog:{find_entry(scope[1]).id}"
            except KeyError:
                raise ConfigError(f"unknown catalog entry {scope[1]!r}") from None
        ids = [cid]
    elif len(scope) == 2 and scope[0] in ("identity", "check"):
        chk = reg.get(scope[1])
        if chk is None or (scope[0] == "identity" and chk.kind != "identity"):
            raise ConfigError(f"unknown {scope[0]} check {scope[1]!r}")
        ids = [scope[1]]
    else:
        raise ConfigError(f"unknown audit scope {' '.join(scope)!r}; use all | catalog ID | identity ID | check ID")
    outcomes = _audit.run_checks(ids, seed, jobs)
    print(_audit.report_table(outcomes))
    if cfg.report:
        with open(cfg.report, "w") as fh:
            fh.write(_audit.report_json(outcomes) + "\n")
    summary = _audit.summarize(outcomes)
    if scope == ["all"] and sorted(summary.refuted) != sorted(_audit.LEDGERED_ERRATA):
        print("refuted set differs from the ledger", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK if summary.ok else EXIT_FAIL


def _oscillator_samples(omega: EPFrequency, ics, settings):
    """Two oscillator solutions on a fixed grid (classical RK4 at step h)."""
    jet = Jet.make(["r1", "r2"])
    om = omega.on(jet.t)
    from .expr import MINUS_ONE, mul
    from .integrate import ExprField
    fld = ExprField(jet, (mul(MINUS_ONE, om, jet.q[0]), mul(MINUS_ONE, om, jet.q[1])), guards=())
    s = IntegratorSettings(method="fixed4", h=settings.h, t_end=settings.t_end, max_steps=settings.max_steps)
    tr = integrate(fld, (0.0, [ics[0][0], ics[1][0]], [ics[0][1], ics[1][1]]), s)
    return tr


def cmd_pinney(cfg: RunConfig) -> int:
    omega = EPFrequency.of(cfg.omega)
    r1, r2 = _floats(cfg.rho1, "rho1"), _floats(cfg.rho2, "rho2")
    c = _floats(cfg.c, "c")
    if len(r1) != 2 or len(r2) != 2 or len(c) != 3:
        raise ConfigError("rho1 and rho2 take (value, derivative); c takes (c1, c2, c3)")
    W = r1[0] * r2[1] - r1[1] * r2[0]
    coeffs = PinneyCoefficients(*c, W)
    try:
        coeffs.check()
    except ConstraintViolated as exc:
        print(f"constraint violated: {exc} (require c1*c2 - c3^2 = W^-2)", file=sys.stderr)
        return EXIT_FAIL
    settings = settings_of(cfg)
    osc = _oscillator_samples(omega, (r1, r2), settings)
    t = osc.times
    rho1 = OscillatorSolution.from_samples(t, osc.q[:, 0], osc.v[:, 0])
    rho2 = OscillatorSolution.from_samples(t, osc.q[:, 1], osc.v[:, 1])
    sol = pinney_superposition(rho1, rho2, coeffs, omega)
    try:
        rho, rhod, _ = sol.derivatives(t)
        resid = sol.residual(t)
    except NegativeRadicand as exc:
        print(f"superposition undefined: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ep = ep_system(omega)
    s = IntegratorSettings(method="fixed4", h=settings.h, t_end=settings.t_end, max_steps=settings.max_steps)
    try:
        num = integrate(ep.field(), (0.0, [rho[0]], [rhod[0]]), s)
    except IntegrationError as exc:
        print(f"integration stopped: {exc}", file=sys.stderr)
        return EXIT_FAIL
    dev = np.abs(num.q[:, 0] - rho)
    with open(cfg.out, "w") as fh:
        fh.write("t,rho_superposed,rho_integrated,residual\n")
        for row in zip(t, rho, num.q[:, 0], resid):
            fh.write(",".join(format(float(x), ".17g") for x in row) + "\n")
    print(f"W = {W:.12g}, c1*c2 - c3^2 = {c[0] * c[1] - c[2] ** 2:.12g}")
    print(f"max |rho_sup - rho_num| = {float(dev.max()):.3e}")
    print(f"max |rho'' + w^2 rho - rho^-3| = {float(np.abs(resid).max()):.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_system_options(p):
    p.add_argument("--system", choices=SYSTEMS, default=None)
    p.add_argument("--potential", help="catalog id or expression in angles or Cartesian coordinates")
    p.add_argument("--dim", type=int)
    p.add_argument("--chart", choices=("nd", "polar", "spherical"))
    p.add_argument("--coords", choices=("auto", "angular", "cartesian"))
    p.add_argument("--omega", help="omega^2 as an expression in t")
    p.add_argument("--f", help="Ray-Reid f(u)")
    p.add_argument("--g", help="Ray-Reid g(u)")
    p.add_argument("--u0", type=float, help="quadrature base point")
    p.add_argument("--invariants", help="comma-separated law names or 'all'")


def _add_integrator_options(p):
    p.add_argument("--ic", help="positions then velocities, comma separated")
    p.add_argument("--tend", type=float)
    p.add_argument("--method", choices=("adaptive45", "fixed4"))
    p.add_argument("--h", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ermakit", description="Ermakov systems: simulation and audits")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="integrate a system and monitor its invariants")
    _add_system_options(p)
    _add_integrator_options(p)
    p.add_argument("--traj", help="trajectory CSV path")
    p.add_argument("--drift", help="drift CSV path")

    p = sub.add_parser("invariants", parents=[common], help="print symbolic invariants of a system")
    _add_system_options(p)

    p = sub.add_parser("audit", parents=[common], help="run verification checks")
    p.add_argument("scope", nargs="+", help="all | catalog ID | identity ID | check ID")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("pinney", parents=[common], help="Pinney superposition against direct integration")
    p.add_argument("--omega", help="omega^2 as an expression in t")
    p.add_argument("--rho1", help="initial value and derivative of the first oscillator solution")
    p.add_argument("--rho2", help="initial value and derivative of the second oscillator solution")
    p.add_argument("--c", help="c1,c2,c3")
    p.add_argument("--tend", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--out", help="CSV path")

    p = sub.add_parser("catalog", parents=[common], help="list or serialise potential entries")
    p.add_argument("--dim", type=int)
    p.add_argument("--json", help="write the catalog as JSON")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # usage errors (code 2) and --help (code 0)
        return int(exc.code or 0)
    try:
        cfg = build_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "invariants":
            return cmd_invariants(cfg)
        if args.command == "audit":
            return cmd_audit(cfg, args.scope, int(cfg.jobs))
        if args.command == "pinney":
            return cmd_pinney(cfg)
        if args.command == "catalog":
            return cmd_catalog(cfg)
    except (ConfigError, ExprError, ErmakovError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
