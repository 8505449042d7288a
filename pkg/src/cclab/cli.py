"""Command-line driver for the cclab toolkit.

Subcommands: ``cf`` (continued-fraction table), ``returns`` (first-return
times to a resonance arc pair), ``decompose`` (round-trip sweep of the
polar decomposition), ``le`` (finite Lyapunov exponents), ``construct``
(inductive construction with per-level verification), ``destruct``
(platform surgery with per-step decay verification) and ``probe``
(derivative-bound sweeps of composed angle coordinates).

Each run writes one CSV file (plus checkpoints where noted) into --out,
together with ``<command>_manifest.txt`` recording the tool version, every
parameter, timestamps and a pass/fail summary.  CSV bytes are a pure
function of the configuration and the build: floats render with 17
significant digits, randomness is seeded, and all reductions are
index-ordered, so identical configurations reproduce the files exactly
(wall-clock data goes only to the manifest).

Exit status: 0 when every check the run requested passes, 2 for
configuration errors, 3 when a computation-level check fails (details land
in the manifest).
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, construct, destruct
from .cocycle import finite_le, schrodinger
from .kernels import DEN_BITS
from .rotation import (CapExceeded, ResonanceIntervals, continued_fraction,
                       first_return, min_return_time)
from .sl2 import (NonHyperbolic, StepUnderflow, decompose,
                  derivative_bound_probe, fold_half_pi, reconstruct)


class ConfigError(ValueError):
    """Bad command line, config file or parameter combination."""


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _fmt(v):
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_lines(path, lines):
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


class Manifest:
    """Accumulates the run record; finish() writes it and picks the exit
    code.  Parameter lines must cover everything that shapes the CSV so the
    manifest alone reproduces the run."""

    def __init__(self, command, out_dir, params):
        self.command = command
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.lines = [
            "cclab run manifest",
            f"version {__version__}",
            f"command {command}",
            f"started {_now()}",
        ]
        for key, value in params:
            self.lines.append(f"{key} {value}")

    def note(self, line):
        self.lines.append(line)

    def fail(self, message):
        print(f"cclab {self.command}: {message}", file=sys.stderr)
        self.note(f"error {message}")
        return self.finish(False)

    def finish(self, ok):
        self.note(f"status {'pass' if ok else 'fail'}")
        self.note(f"finished {_now()}")
        _write_lines(os.path.join(self.out, f"{self.command}_manifest.txt"),
                     self.lines)
        return 0 if ok else 3


def _read_config(path):
    """Tokens from a key=value file: ``command=NAME`` picks the subcommand,
    booleans (true/false, yes/no, on/off) toggle bare flags, everything
    else becomes ``--key value``.  '#' starts a comment."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    command = None
    toks = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        if key == "command":
            command = val
            continue
        flag = "--" + key.replace("_", "-")
        low = val.lower()
        if low in ("true", "yes", "on"):
            toks.append(flag)
        elif low in ("false", "no", "off"):
            continue
        elif val == "":
            raise ConfigError(f"{path}:{n}: empty value for {key}")
        else:
            toks.extend((flag, val))
    return command, toks


def _expand_config(argv):
    """Splice --config file tokens in front of the explicit flags (so the
    explicit ones win) and resolve the subcommand."""
    rest = []
    command = None
    toks = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config needs a file path")
            cmd, t = _read_config(argv[i + 1])
            i += 2
        elif arg.startswith("--config="):
            cmd, t = _read_config(arg.split("=", 1)[1])
            i += 1
        else:
            rest.append(arg)
            i += 1
            continue
        if cmd is not None:
            if command is not None and cmd != command:
                raise ConfigError(
                    f"config files disagree on the command: {command} vs {cmd}")
            command = cmd
        toks.extend(t)
    if command is None and not toks:
        return rest
    if rest and not rest[0].startswith("-"):
        if command is not None and command != rest[0]:
            raise ConfigError(
                f"command {rest[0]} conflicts with config command {command}")
        return [rest[0]] + toks + rest[1:]
    if command is None:
        raise ConfigError("config file names no command and none was given")
    return [command] + toks + rest


def _threads(args):
    if args.threads is None:
        return os.cpu_count() or 1
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return args.threads


def _omega_of(args, depth=40):
    try:
        return continued_fraction(args.omega, depth=depth)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad --omega {args.omega!r}: {exc}")


def _parse_ell(token):
    if token.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        ell = int(token)
    except ValueError:
        raise ConfigError(f"--l must be a positive integer or 'inf', "
                          f"got {token!r}")
    if ell < 1:
        raise ConfigError("--l must be at least 1")
    return ell


def _parse_potential(expr):
    """``A*B*cos`` as a product of float factors times cos(2 pi x)."""
    parts = [p.strip() for p in expr.split("*")]
    if len(parts) < 2 or parts[-1] != "cos":
        raise ConfigError(
            f'potential must look like "2*3*cos" (float factors ending in '
            f"cos), got {expr!r}")
    prod = 1.0
    for p in parts[:-1]:
        try:
            prod *= float(p)
        except ValueError:
            raise ConfigError(f"bad factor {p!r} in potential {expr!r}")

    def v(x):
        return prod * np.cos(2.0 * np.pi * x)

    return v, prod


# ---------------------------------------------------------------- commands


def _cmd_cf(args):
    omega = _omega_of(args, depth=args.depth)
    man = Manifest("cf", args.out, [
        ("omega", args.omega),
        ("omega_fixed", omega.fixed),
        ("depth", args.depth),
        ("seed", args.seed),
    ])
    rows = [(k, a, p, q) for k, (a, (p, q)) in
            enumerate(zip(omega.partial_quotients, omega.convergents), 1)]
    _write_csv(os.path.join(args.out, "cf.csv"), "k,a_k,p_k,q_k", rows)
    man.note(f"value {omega.value!r}")
    man.note(f"bounded_type_M {omega.bounded_type_M!r}")
    man.note(f"terminated {omega.terminated}")
    man.note(f"quotients {len(omega.partial_quotients)}")
    return man.finish(True)


def _cmd_returns(args):
    omega = _omega_of(args)
    if args.grid < 1:
        raise ConfigError("--grid must be at least 1")
    intervals = ResonanceIntervals(args.q, args.scale)
    man = Manifest("returns", args.out, [
        ("omega", args.omega),
        ("omega_fixed", omega.fixed),
        ("q", args.q),
        ("scale", repr(args.scale)),
        ("grid", args.grid),
        ("cap", args.cap if args.cap is not None else "-"),
        ("seed", args.seed),
    ])
    rows = []
    try:
        for comp in (0, 1):
            for p in intervals.sample_fix(args.grid, comp):
                fwd = first_return(omega, intervals, p, "forward", args.cap)
                bwd = first_return(omega, intervals, p, "backward", args.cap)
                rows.append((comp, p * 0.5 ** DEN_BITS, fwd.time, bwd.time))
        exact = min_return_time(omega, intervals, args.cap)
    except CapExceeded as exc:
        return man.fail(str(exc))
    _write_csv(os.path.join(args.out, "returns.csv"),
               "component,x,forward,backward", rows)
    min_fwd = min(r[2] for r in rows)
    min_bwd = min(r[3] for r in rows)
    man.note(f"min_forward {min_fwd}")
    man.note(f"min_backward {min_bwd}")
    man.note(f"min_exact {exact}")
    ok = min_fwd == min_bwd
    if not ok:
        man.note("check direction_symmetry fail")
    if args.q in omega.denominators():
        floor_ok = min(min_fwd, min_bwd) >= args.q
        man.note(f"check floor_q {_fmt(floor_ok)}")
        ok = ok and floor_ok
    else:
        man.note("check floor_q skipped (q is not a convergent denominator)")
    return man.finish(ok)


def _cmd_decompose(args):
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    if not 0.0 < args.alpha_min <= args.alpha_max:
        raise ConfigError("need 0 < --alpha-min <= --alpha-max")
    man = Manifest("decompose", args.out, [
        ("count", args.count),
        ("alpha_min", repr(args.alpha_min)),
        ("alpha_max", repr(args.alpha_max)),
        ("tol_norm", repr(args.tol_norm)),
        ("tol_angle", repr(args.tol_angle)),
        ("seed", args.seed),
    ])
    rng = np.random.default_rng(args.seed)
    rows = []
    worst_alpha = worst_angle = worst_sum = 0.0
    for j in range(args.count):
        psi = rng.uniform(-math.pi, math.pi)
        alpha = rng.uniform(args.alpha_min, args.alpha_max)
        phi = rng.uniform(0.0, math.pi)
        got = decompose(reconstruct((psi, alpha, phi)))
        a_err = abs(got.alpha - alpha)
        ang = max(abs(fold_half_pi(got.phi - phi)),
                  abs(fold_half_pi(got.psi - psi)))
        s_err = abs(math.remainder(got.psi + got.phi - psi - phi,
                                   2.0 * math.pi))
        worst_alpha = max(worst_alpha, a_err)
        worst_angle = max(worst_angle, ang)
        worst_sum = max(worst_sum, s_err)
        rows.append((j, psi, alpha, phi, a_err, ang, s_err))
    _write_csv(os.path.join(args.out, "decompose.csv"),
               "j,psi,alpha,phi,alpha_err,angle_err,sum_err", rows)
    man.note(f"max_alpha_err {worst_alpha!r}")
    man.note(f"max_angle_err {worst_angle!r}")
    man.note(f"max_sum_err {worst_sum!r}")
    ok = worst_alpha <= args.tol_norm and worst_angle <= args.tol_angle
    man.note(f"check round_trip {_fmt(ok)}")
    return man.finish(ok)


def _cmd_le(args):
    threads = _threads(args)
    if (args.schrodinger is None) == (args.checkpoint is None):
        raise ConfigError("give exactly one of --schrodinger or --checkpoint")
    floor = None
    if args.schrodinger is not None:
        omega = _omega_of(args)
        v, prod = _parse_potential(args.schrodinger)
        c = schrodinger(omega, v, args.energy)
        kind = "schrodinger"
        source = args.schrodinger
        if prod > 2.0:
            # large-coupling floor for A*cos potentials: log of half the
            # amplitude, minus the stated slack
            floor = math.log(prod / 2.0) - 0.05
    else:
        state = construct.load_state(args.checkpoint)
        c = state.cocycle()
        omega = state.omega
        kind = "angle-family"
        source = args.checkpoint
    man = Manifest("le", args.out, [
        ("kind", kind),
        ("source", source),
        ("omega_fixed", omega.fixed),
        ("energy", repr(args.energy)),
        ("n", args.n if args.n is not None else "-"),
        ("grid", args.grid),
        ("per_return", str(args.per_return).lower()),
        ("q", args.q if args.q is not None else "-"),
        ("seed", args.seed),
        ("threads", threads),
    ])
    try:
        if args.per_return:
            if args.q is None:
                raise ConfigError("--per-return needs --q")
            est = finite_le(c, 0, args.grid,
                            restrict=ResonanceIntervals(args.q, 1.0),
                            per_return=True, threads=threads)
        else:
            if args.n is None:
                raise ConfigError("--n is required without --per-return")
            est = finite_le(c, args.n, args.grid, threads=threads)
    except CapExceeded as exc:
        return man.fail(str(exc))
    ok = floor is None or est.value >= floor
    row = (kind, est.n, est.grid_size, est.value, est.mu_lower, est.mu_upper,
           est.min_time if est.min_time is not None else "-",
           est.max_time if est.max_time is not None else "-",
           floor if floor is not None else "-", ok)
    _write_csv(os.path.join(args.out, "le.csv"),
               "kind,n,grid,value,mu_lower,mu_upper,min_time,max_time,"
               "floor,passed", [row])
    man.note(f"value {est.value!r}")
    man.note(f"mu_lower {est.mu_lower!r}")
    man.note(f"mu_upper {est.mu_upper!r}")
    if floor is not None:
        man.note(f"check floor {_fmt(ok)}")
    return man.finish(ok)


def _cmd_construct(args):
    omega = _omega_of(args)
    ell = _parse_ell(args.l)
    threads = _threads(args)
    ckpt = args.checkpoint or os.path.join(args.out, "construction.json")
    man = Manifest("construct", args.out, [
        ("omega", args.omega),
        ("omega_fixed", omega.fixed),
        ("lambda", repr(args.lam)),
        ("l", "inf" if math.isinf(ell) else ell),
        ("a", repr(args.a) if args.a is not None else "-"),
        ("qN", args.q_start),
        ("steps", args.steps),
        ("epsilon", repr(args.epsilon)),
        ("delta", repr(args.delta) if args.delta is not None else "-"),
        ("branch", args.branch),
        ("grid", args.grid),
        ("samples", args.samples),
        ("strict_schedule", str(args.strict_schedule).lower()),
        ("checkpoint", ckpt),
        ("seed", args.seed),
        ("threads", threads),
    ])
    parent = os.path.dirname(ckpt)
    if parent:
        os.makedirs(parent, exist_ok=True)
    try:
        state = construct.run_construction(
            omega, args.lam, ell, args.q_start, args.steps, a=args.a,
            branch=args.branch, delta=args.delta, epsilon=args.epsilon,
            strict=args.strict_schedule, grid=args.grid,
            samples=args.samples, threads=threads, checkpoint=ckpt)
    except (RuntimeError, NonHyperbolic, CapExceeded) as exc:
        return man.fail(str(exc))
    rows = [(r.k, r.q, r.lambda_k, r.flatness, r.separation,
             r.separation_floor, r.growth, math.exp(r.growth), r.ok)
            for r in state.history]
    _write_csv(os.path.join(args.out, "construct.csv"),
               "k,q,lambda_k,flatness,separation,separation_floor,"
               "log_mu_lower,mu_lower,passed", rows)
    for r in state.history:
        man.note(f"level {r.q} lambda_k {r.lambda_k!r} "
                 f"mu_lower {math.exp(r.growth)!r} flatness {r.flatness!r} "
                 f"separation {r.separation!r} ok {_fmt(r.ok)}")
    for q, inc in zip(state.levels[1:], state.increments):
        man.note(f"increment {q} {inc!r}")
    man.note(f"levels {' '.join(str(q) for q in state.levels)}")
    man.note(f"skipped {' '.join(str(q) for q in state.skipped) or '-'}")
    return man.finish(all(r.ok for r in state.history))


def _load_for_destruction(path, args, threads):
    """A destruction state from either checkpoint flavour: resume a
    destruction file, or initialize from a verified construction."""
    try:
        with open(path) as fh:
            kind = json.load(fh).get("format", "")
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint {path} is not JSON: {exc}")
    if kind == "cclab-destruction 1":
        return destruct.load_destruction(path), True
    cstate = construct.load_state(path)
    dstate = destruct.init_destruction(cstate, level=args.level,
                                       samples=args.samples,
                                       delta0=args.delta0, threads=threads)
    return dstate, False


def _cmd_destruct(args):
    threads = _threads(args)
    if args.steps < 1:
        raise ConfigError("--steps must be at least 1")
    path = args.checkpoint or os.path.join(args.out, "construction.json")
    dstate, resumed = _load_for_destruction(path, args, threads)
    man = Manifest("destruct", args.out, [
        ("checkpoint", path),
        ("resumed", str(resumed).lower()),
        ("omega_fixed", dstate.omega.fixed),
        ("lambda", repr(dstate.lam)),
        ("l", "inf" if math.isinf(dstate.ell) else dstate.ell),
        ("level", dstate.level),
        ("steps", args.steps),
        ("delta0", repr(dstate.delta0)),
        ("delta1", repr(dstate.delta1)),
        ("delta2", repr(dstate.delta2)),
        ("grid", args.grid),
        ("platform_grid", args.platform_grid),
        ("samples", args.samples),
        ("nu_floor", args.nu_floor),
        ("seed", args.seed),
        ("threads", threads),
    ])
    reports = list(dstate.decays)
    if not resumed:
        _, _, base = destruct.measure_growth_bounds(dstate, args.samples,
                                                    threads)
        man.note(f"baseline level {base.level} mu_lower {base.mu_lower!r} "
                 f"mu_upper {base.mu_upper!r} ok "
                 f"{_fmt(base.upper_ok and base.lower_ok)}")
        reports.insert(0, base)
        base_ok = base.upper_ok and base.lower_ok
    else:
        man.note(f"resumed at step {dstate.step} level {dstate.level}")
        base_ok = True
    ok = base_ok
    try:
        for _ in range(args.steps):
            dstate, prep = destruct.platform_correction(
                dstate, grid=args.platform_grid, threads=threads)
            man.note(f"platform level {prep.level} next {prep.next_level} "
                     f"c {prep.c!r} height {prep.height!r} "
                     f"fit {prep.fit_residual!r} sum_err {prep.sum_error!r} "
                     f"increment {prep.increment_norm!r}")
            dstate = destruct.destruction_step(
                dstate, grid=args.grid, samples=args.samples,
                nu_floor=args.nu_floor, threads=threads)
            for s in dstate.substeps[-1]:
                if not s.nu_ok:
                    msg = (f"warning nu floor missed at sub-level {s.q}: "
                           f"growth {s.report.growth!r} < "
                           f"log_nu {math.log(s.nu)!r}")
                    man.note(msg)
                    print(f"cclab destruct: {msg}", file=sys.stderr)
            d = dstate.decays[-1]
            man.note(f"step {d.step} level {d.level} "
                     f"mu_lower {d.mu_lower!r} mu_upper {d.mu_upper!r} "
                     f"bound {d.bound_ratio!r} decay {_fmt(d.decay_ok)} "
                     f"bound_ok {_fmt(d.bound_ok)} "
                     f"comparability {_fmt(d.comparability_ok)} "
                     f"floor {_fmt(d.floor_ok)}")
            reports.append(d)
            ok = ok and d.decay_ok and d.bound_ok and d.comparability_ok \
                and d.floor_ok
    except (destruct.GeometryError, NonHyperbolic, RuntimeError,
            CapExceeded) as exc:
        _write_text(os.path.join(args.out, "decay.csv"),
                    destruct.decay_csv(reports))
        destruct.save_destruction(dstate,
                                  os.path.join(args.out, "destruction.json"))
        return man.fail(str(exc))
    _write_text(os.path.join(args.out, "decay.csv"),
                destruct.decay_csv(reports))
    destruct.save_destruction(dstate,
                              os.path.join(args.out, "destruction.json"))
    man.note(f"destruction_checkpoint "
             f"{os.path.join(args.out, 'destruction.json')}")
    return man.finish(ok)


def _cmd_probe(args):
    try:
        orders = tuple(int(t) for t in args.orders.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad --orders {args.orders!r}")
    if not orders or any(o not in (0, 1, 2) for o in orders):
        raise ConfigError("--orders takes a comma list drawn from 0,1,2")
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    if not 0.0 < args.alpha_min <= args.alpha_max:
        raise ConfigError("need 0 < --alpha-min <= --alpha-max")
    if not 100.0 * math.exp(-2.0 * args.alpha_min) < args.gap_max:
        raise ConfigError("alpha-min too small for gap-max: need "
                          "100*exp(-2*alpha_min) < gap_max")
    man = Manifest("probe", args.out, [
        ("which", args.which),
        ("orders", ",".join(str(o) for o in orders)),
        ("count", args.count),
        ("alpha_min", repr(args.alpha_min)),
        ("alpha_max", repr(args.alpha_max)),
        ("gap_max", repr(args.gap_max)),
        ("spread_limit", repr(args.spread_limit)),
        ("seed", args.seed),
    ])
    rng = np.random.default_rng(args.seed)
    rows = []
    ok = True
    check_spread = args.which in ("phi", "psi")
    for order in orders:
        ratios = []
        skipped = 0
        for _ in range(args.count):
            alpha_a = rng.uniform(args.alpha_min, args.alpha_max)
            alpha_b = rng.uniform(args.alpha_min, args.alpha_max)
            lo = 100.0 * math.exp(-2.0 * min(alpha_a, alpha_b)) * (1 + 1e-7)
            u = math.exp(rng.uniform(math.log(lo), math.log(args.gap_max)))
            side = 1.0 if rng.random() < 0.5 else -1.0
            theta = math.pi / 2.0 + side * u
            try:
                measured, ratio = derivative_bound_probe(
                    alpha_a, alpha_b, theta, order, args.which)
            except StepUnderflow:
                skipped += 1
                continue
            ratios.append(ratio)
            rows.append((order, args.which, alpha_a, alpha_b, theta, u,
                         measured, ratio))
        finite = bool(ratios) and all(map(math.isfinite, ratios))
        man.note(f"order {order} kept {len(ratios)} skipped {skipped}")
        if not finite:
            man.note(f"order {order} check finite fail")
            ok = False
            continue
        c_min, c_max = min(ratios), max(ratios)
        spread = c_max / c_min if c_min > 0.0 else math.inf
        man.note(f"order {order} constant {c_max!r} "
                 f"range [{c_min!r}, {c_max!r}] spread {spread!r}")
        if check_spread:
            good = spread <= args.spread_limit
            man.note(f"order {order} check spread {_fmt(good)}")
            ok = ok and good
    _write_csv(os.path.join(args.out, "probe.csv"),
               "order,which,alpha_a,alpha_b,theta,gap,measured,ratio", rows)
    return man.finish(ok)


# ------------------------------------------------------------------ parser


def _add_omega(p):
    p.add_argument("--omega", default="golden",
                   help="rotation number: golden, sqrt2m1, p/q or a decimal "
                        "literal in (0,1) (default: golden)")


def _build_parser():
    top = argparse.ArgumentParser(
        prog="cclab",
        description="Quasi-periodic SL(2,R) cocycle toolkit: continued "
                    "fractions, return times, finite Lyapunov exponents, "
                    "verified constructions and platform surgery.")
    top.add_argument("--version", action="version",
                     version=f"cclab {__version__}")
    sub = top.add_subparsers(dest="command", metavar="COMMAND", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", metavar="DIR",
                        help="directory for CSV, manifest and checkpoint "
                             "files (default: .)")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for randomized sweeps (default: 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores)")
    common.add_argument("--config", metavar="FILE",
                        help="key=value file expanded into flags; "
                             "command=NAME picks the subcommand, explicit "
                             "flags win")

    p = sub.add_parser("cf", parents=[common],
                       help="continued-fraction table of a rotation number")
    _add_omega(p)
    p.add_argument("--depth", type=int, default=40,
                   help="maximum number of partial quotients (default: 40)")
    p.set_defaults(handler=_cmd_cf)

    p = sub.add_parser("returns", parents=[common],
                       help="first-return times to the resonance arc pair")
    _add_omega(p)
    p.add_argument("--q", type=int, default=21,
                   help="level: arcs of half-width 1/(scale*q^2) at 0 and "
                        "1/2 (default: 21)")
    p.add_argument("--scale", type=float, default=1.0,
                   help="width scale C in 1/(C*q^2) (default: 1)")
    p.add_argument("--grid", type=int, default=100,
                   help="sample points per component (default: 100)")
    p.add_argument("--cap", type=int, default=None,
                   help="abort scans beyond this many steps")
    p.set_defaults(handler=_cmd_returns)

    p = sub.add_parser("decompose", parents=[common],
                       help="round-trip sweep of the polar decomposition")
    p.add_argument("--count", type=int, default=10000,
                   help="number of random triples (default: 10000)")
    p.add_argument("--alpha-min", type=float, default=1e-4)
    p.add_argument("--alpha-max", type=float, default=30.0)
    p.add_argument("--tol-norm", type=float, default=1e-10,
                   help="bound on the log-norm error (default: 1e-10)")
    p.add_argument("--tol-angle", type=float, default=1e-8,
                   help="bound on the folded angle errors (default: 1e-8)")
    p.set_defaults(handler=_cmd_decompose)

    p = sub.add_parser("le", parents=[common],
                       help="finite Lyapunov exponent of a cocycle")
    _add_omega(p)
    p.add_argument("--schrodinger", metavar="EXPR",
                   help='potential as float factors times cos, e.g. "2*3*cos"')
    p.add_argument("--energy", type=float, default=0.0,
                   help="energy for the Schrodinger fibre (default: 0)")
    p.add_argument("--checkpoint", metavar="FILE",
                   help="construction checkpoint to measure instead")
    p.add_argument("--n", type=int, default=None,
                   help="number of cocycle steps")
    p.add_argument("--grid", type=int, default=512,
                   help="sampling grid over the circle (default: 512)")
    p.add_argument("--per-return", action="store_true",
                   help="normalize per first-return to the level-q arcs")
    p.add_argument("--q", type=int, default=None,
                   help="level for --per-return sampling")
    p.set_defaults(handler=_cmd_le)

    p = sub.add_parser("construct", parents=[common],
                       help="inductive construction with per-level checks")
    _add_omega(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1000.0,
                   help="stretch factor of the fibre map (default: 1000)")
    p.add_argument("--l", default="1",
                   help="smoothness class: a positive integer, or inf "
                        "with --a (default: 1)")
    p.add_argument("--a", type=float, default=None,
                   help="Gevrey-type exponent for --l inf")
    p.add_argument("--qN", dest="q_start", type=int, default=21,
                   help="base resonance level (default: 21)")
    p.add_argument("--steps", type=int, default=3,
                   help="correction steps past the base level (default: 3)")
    p.add_argument("--epsilon", type=float, default=0.1,
                   help="schedule budget: lambda_k stays above "
                        "lambda^(1-epsilon) (default: 0.1)")
    p.add_argument("--delta", type=float, default=None,
                   help="core profile ramp width override")
    p.add_argument("--branch", default="homotopic",
                   help="core profile branch (default: homotopic)")
    p.add_argument("--grid", type=int, default=512,
                   help="fit grid per component (default: 512)")
    p.add_argument("--samples", type=int, default=64,
                   help="verification samples per component (default: 64)")
    p.add_argument("--strict-schedule", action="store_true",
                   help="fail instead of warn when the schedule is tight")
    p.add_argument("--checkpoint", metavar="FILE",
                   help="state file to write (default: OUT/construction.json)")
    p.set_defaults(handler=_cmd_construct)

    p = sub.add_parser("destruct", parents=[common],
                       help="platform surgery with per-step decay checks")
    p.add_argument("--checkpoint", metavar="FILE",
                   help="construction checkpoint to start from, or a "
                        "destruction checkpoint to resume "
                        "(default: OUT/construction.json)")
    p.add_argument("--steps", type=int, default=1,
                   help="destruction steps to run (default: 1)")
    p.add_argument("--level", type=int, default=None,
                   help="level to destroy (default: the construction base)")
    p.add_argument("--delta0", type=float, default=None,
                   help="override the surgery depth constant")
    p.add_argument("--grid", type=int, default=512,
                   help="fit grid for the sub-corrections (default: 512)")
    p.add_argument("--platform-grid", type=int, default=96,
                   help="fit grid for the platform itself (default: 96)")
    p.add_argument("--samples", type=int, default=64,
                   help="verification samples per component (default: 64)")
    p.add_argument("--nu-floor", choices=("raise", "record"),
                   default="record",
                   help="what a nu-floor miss at a sub-level does: abort, "
                        "or warn and keep going (default: record)")
    p.set_defaults(handler=_cmd_destruct)

    p = sub.add_parser("probe", parents=[common],
                       help="derivative-bound sweep of composed angles")
    p.add_argument("--which", choices=("phi", "psi", "norm"), default="phi",
                   help="coordinate to probe (default: phi)")
    p.add_argument("--orders", default="0,1",
                   help="comma list of derivative orders from 0,1,2 "
                        "(default: 0,1)")
    p.add_argument("--count", type=int, default=1000,
                   help="samples per order (default: 1000)")
    p.add_argument("--alpha-min", type=float, default=3.0)
    p.add_argument("--alpha-max", type=float, default=10.0)
    p.add_argument("--gap-max", type=float, default=0.5,
                   help="largest |theta - pi/2| sampled (default: 0.5)")
    p.add_argument("--spread-limit", type=float, default=10.0,
                   help="allowed max/min ratio spread (default: 10)")
    p.set_defaults(handler=_cmd_probe)

    return top


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _expand_config(list(argv))
    except ConfigError as exc:
        print(f"cclab: {exc}", file=sys.stderr)
        return 2
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("cclab: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"cclab {args.command}: {exc}", file=sys.stderr)
        return 2
    except destruct.GeometryError as exc:
        # normally handled (and manifested) inside the destruct command;
        # reaching here means level selection failed before any step ran
        print(f"cclab {args.command}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, OSError) as exc:
        print(f"cclab {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as exc:
        print(f"cclab {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
