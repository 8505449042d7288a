"""Local platform surgery that collapses the per-return upper growth of a
constructed angle family.

One destruction step replaces the boundary angle sum on a thin window
inside the current resonance arcs by a signed constant (the platform),
picks the next resonance level deep enough that its arcs fit inside the
pristine part of the window, rebuilds the correction ladder down to that
level against a nu schedule sitting strictly below the construction
lambdas, and measures the resulting drop of mu_upper together with the
floors that certify the cocycle stayed nonuniformly hyperbolic at finite
scale.
"""

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import construct, profiles
from .cocycle import angle_family, as_fix, boundary_angle_sum, finite_le
from .construct import (ConstructionState, PatchResidual, StepReport,
                        _fill_layer, _fit_segment, _omega_token,
                        correction_step, verify_step)
from .profiles import (AngleProfile, Background, HermiteSpec, IllConditioned,
                       Piece, cl_distance, hermite_patch, parse_profile,
                       serialize_profile)
from .rotation import (ResonanceIntervals, RotationNumber,
                       continued_fraction, return_ratio_stats)
from .sl2 import NonHyperbolic

_BOUND_SLACK = 1e-9


class GeometryError(ValueError):
    """The platform window cannot be placed: the widths fail to nest or
    no resonance level qualifies as the next target."""


@dataclass(frozen=True)
class PlatformGeometry:
    next_level: int
    c: float
    ctilde: float
    d: float
    outer: float
    height: float


@dataclass(frozen=True)
class PlatformReport:
    level: int
    next_level: int
    c: float
    ctilde: float
    d: float
    outer: float
    height: float
    tau: tuple
    fit_residual: float
    sum_error: float
    increment_norm: float
    increment_ratio: float
    grid: int


@dataclass(frozen=True)
class PendingPlatform:
    theta: AngleProfile
    geometry: PlatformGeometry
    report: PlatformReport


@dataclass(frozen=True)
class SubStepReport:
    j: int
    q: int
    nu: float
    nu_ok: bool
    report: StepReport


@dataclass(frozen=True)
class BaselineReport:
    level: int
    mu_lower: float
    mu_upper: float
    lam: float
    lam_target: float
    upper_ok: bool
    lower_ok: bool


@dataclass(frozen=True)
class DecayReport:
    step: int
    level: int
    prev_level: int
    mu_lower: float
    mu_upper: float
    prev_mu_lower: float
    prev_mu_upper: float
    ratio: float
    k1: int
    bound_ratio: float
    bound_step4: float
    bound_exp: float
    lower_floor: float
    decay_ok: bool
    bound_ok: bool
    comparability_ok: bool
    floor_ok: bool
    increment_norm: float
    increment_bound: float


@dataclass(frozen=True)
class DestructionState:
    omega: RotationNumber
    lam: float
    ell: object
    a: object
    delta: object
    branch: str
    sign: float
    lam_target: float
    base_level: int
    M: float
    delta0: float
    delta1: float
    delta2: float
    step: int
    theta: AngleProfile
    level: int
    prev_level: object
    min_r: int
    max_r_tenth: int
    ratio: float
    k1: int
    mu_lower: float
    mu_upper: float
    mu0_lower: float
    prev_mu_lower: object
    prev_mu_upper: object
    nu: tuple
    sub_levels: tuple
    geometry: object
    pending: object
    platforms: tuple
    substeps: tuple
    decays: tuple

    def cocycle(self):
        return angle_family(self.omega, self.lam, self.theta)

    def intervals(self):
        return ResonanceIntervals(self.level, 1.0)


def _l_eff(ell):
    return 1 if math.isinf(ell) else max(1, ell)


def init_destruction(cstate, level=None, samples=64, grid=64, delta0=None,
                     threads=None):
    """Destruction state at ``level`` (default: the construction base).

    Measures the return-time spread on the resonance pair, fixes the
    run constants delta0 = max(1/l^2, M^-k1)/100 (overridable), delta1 =
    8*delta0*l and delta2 = M^-k1*delta0*l, and records the per-return
    growth bounds of the incoming cocycle as the step-0 baseline.
    """
    if cstate.report is None or not cstate.report.ok:
        raise ValueError("destruction starts from a verified construction "
                         "state")
    q0 = cstate.levels[0] if level is None else level
    if q0 not in cstate.omega.denominators():
        raise ValueError(f"{q0} is not a denominator of the rotation number")
    M = cstate.omega.bounded_type_M
    I = ResonanceIntervals(q0, 1.0)
    stats = return_ratio_stats(cstate.omega, I, grid, M)
    leff = _l_eff(cstate.ell)
    if delta0 is None:
        inv = 0.0 if math.isinf(cstate.ell) else 1.0 / leff ** 2
        delta0 = max(inv, M ** (-stats.k1)) / 100.0
    delta1 = 8.0 * delta0 * leff
    delta2 = M ** (-stats.k1) * delta0 * leff
    if not 0.0 < delta2 < delta1 < 1.0:
        raise ValueError(f"delta ladder out of range: delta0={delta0!r} "
                         f"delta1={delta1!r} delta2={delta2!r}")
    A = angle_family(cstate.omega, cstate.lam, cstate.xi)
    est = finite_le(A, 0, max(64, 2 * samples), restrict=I, per_return=True,
                    threads=threads)
    return DestructionState(
        omega=cstate.omega, lam=cstate.lam, ell=cstate.ell, a=cstate.a,
        delta=cstate.delta, branch=cstate.branch, sign=cstate.sign,
        lam_target=cstate.lambdas[-1], base_level=cstate.levels[0], M=M,
        delta0=delta0, delta1=delta1, delta2=delta2, step=0, theta=cstate.xi,
        level=q0, prev_level=None, min_r=stats.min_r,
        max_r_tenth=stats.max_r_tenth, ratio=stats.ratio, k1=stats.k1,
        mu_lower=est.mu_lower, mu_upper=est.mu_upper,
        mu0_lower=est.mu_lower, prev_mu_lower=None, prev_mu_upper=None,
        nu=(), sub_levels=(), geometry=None, pending=None, platforms=(),
        substeps=(), decays=())


def select_level(state):
    """Platform geometry at the current level and the next target level.

    The window sits on the positive side of each resonance arc: inner
    edge c = mu_lower**(-2 delta0 r) (for smooth profiles c is the width
    (2 delta0 r log mu)**(-1/a)), plateau [M^2 c, 1/(2 q^2)], outer edge
    1/q^2.  The next level is the smallest denominator q' with
    mu0**((1-delta1)^i * q') > q'^2, q'^2 > lam**(2 delta0 r) and
    1/q'^2 < c; all three are checked on logs so representable lambdas
    never overflow.
    """
    q0 = state.level
    r = state.min_r
    logmu = math.log(state.mu_lower)
    if math.isinf(state.ell):
        c = (2.0 * state.delta0 * r * logmu) ** (-1.0 / state.a)
        height = math.exp(-c ** (-state.a))
    else:
        c = math.exp(-2.0 * state.delta0 * r * logmu)
        height = 2.0 * c ** (state.ell + 1)
    ctilde = state.M ** 2 * c
    d = 1.0 / (2.0 * q0 * q0)
    outer = 1.0 / (q0 * q0)
    if not 0.0 < c < ctilde < d < outer:
        raise GeometryError(
            f"platform widths fail to nest at level {q0}: c={c:.6e} "
            f"ctilde={ctilde:.6e} d={d:.6e} outer={outer:.6e}")
    expo = (1.0 - state.delta1) ** (state.step + 1)
    window_growth = 2.0 * state.delta0 * r * math.log(state.lam)
    last = None
    for q in state.omega.denominators():
        if q <= q0:
            continue
        ok_growth = expo * q * math.log(state.mu0_lower) > 2.0 * math.log(q)
        ok_scale = 2.0 * math.log(q) > window_growth
        ok_fit = 1.0 / (q * q) < c
        last = (q, ok_growth, ok_scale, ok_fit)
        if ok_growth and ok_scale and ok_fit:
            return q, PlatformGeometry(next_level=q, c=c, ctilde=ctilde,
                                       d=d, outer=outer, height=height)
    raise GeometryError(
        "no resonance level qualifies as the next target (deepest tried: "
        f"q={last[0]} growth={last[1]} scale={last[2]} fits={last[3]}; "
        f"c={c:.6e})")


def correction_ladder(omega, q0, q1):
    """Denominator ladder for the sub-corrections from q0 down to q1:
    greedily the smallest denominator at least twice the previous one
    that still leaves room to double again before q1, else q1 itself."""
    dens = omega.denominators()
    if q0 not in dens or q1 not in dens:
        raise ValueError("ladder endpoints must be denominators")
    if q1 <= q0:
        raise ValueError("target level must exceed the base level")
    out = [q0]
    while out[-1] != q1:
        cand = [q for q in dens if q >= 2 * out[-1] and 2 * q <= q1]
        out.append(min(cand) if cand else q1)
    return tuple(out)


def nu_ladder(nu0, delta0, count):
    """log nu_j = (1 - delta0 * sum_{m<j} 2**(-m/2)) * log nu0."""
    out = []
    acc = 0.0
    for j in range(count):
        out.append(math.exp((1.0 - delta0 * acc) * math.log(nu0)))
        acc += 2.0 ** (-0.5 * j)
    return tuple(out)


def _measure_sums(c, pts, intervals, threads):
    out = np.empty(len(pts))

    def work(j):
        out[j] = boundary_angle_sum(c, pts[j], intervals=intervals)

    if threads is not None and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(pts))))
    else:
        for j in range(len(pts)):
            work(j)
    return out


def platform_correction(state, grid=96, fit_tol=1e-9, flat_limit=1e-6,
                        probes=8, geometry=None, threads=None):
    """Stage the platform: fit e = (angle sum) - tau on the plateau of
    each component, ramp it to zero across [c, M^2 c] and [1/(2q^2),
    1/q^2], and store the modified profile in ``state.pending``.

    tau is sigma * height with sigma the sign of the ambient sum at the
    plateau midpoint, so the surgery never drags the sum through zero in
    the connector zones.  Returns (staged state, PlatformReport); the
    report carries the achieved plateau error measured on fresh probes.
    """
    if state.pending is not None:
        raise ValueError("a platform is already staged; run "
                         "destruction_step or discard_platform first")
    if geometry is None:
        _, geom = select_level(state)
    else:
        geom = geometry
    A = state.cocycle()
    I = state.intervals()
    smooth = math.isinf(state.ell)
    pieces = []
    taus = []
    worst = 0.0
    for comp, base in ((0, 0.0), (1, 0.5)):
        if smooth:
            lo, hi = base + geom.c, base + geom.outer
        else:
            lo, hi = base + geom.ctilde, base + geom.d
        xs = np.linspace(lo, hi, grid)
        pts = [as_fix(float(x)) for x in xs]
        vals = _measure_sums(A, pts, I, threads)
        sigma = math.copysign(1.0, vals[len(vals) // 2])
        tau = sigma * geom.height
        taus.append(tau)
        coeffs, resid = _fit_segment(lo, hi, xs, vals - tau, fit_tol)
        worst = max(worst, resid)
        if smooth:
            pieces.append(Piece(lo, hi, Background(
                lo, hi, coeffs, geom.ctilde - geom.c, geom.outer - geom.d,
                0)))
            continue
        bg = Background(lo, hi, coeffs, 0.0, 0.0, 0)
        orders = range(state.ell + 1)
        left = tuple(profiles._kind_eval(bg, lo, r) for r in orders)
        right = tuple(profiles._kind_eval(bg, hi, r) for r in orders)
        zeros = (0.0,) * (state.ell + 1)
        try:
            pieces.extend([
                hermite_patch(HermiteSpec(base + geom.c, lo, zeros, left)),
                Piece(lo, hi, bg),
                hermite_patch(HermiteSpec(hi, base + geom.outer, right,
                                          zeros)),
            ])
        except IllConditioned as exc:
            raise PatchResidual(str(exc)) from exc
    if worst > flat_limit:
        raise PatchResidual(
            f"platform fit residual {worst:.3e} exceeds {flat_limit:.1e}")

    theta_t = state.theta.with_layer(_fill_layer(pieces))
    order = 2 if smooth else state.ell
    inc = cl_distance(theta_t, state.theta, order)
    At = angle_family(state.omega, state.lam, theta_t)
    err = 0.0
    for comp, base in ((0, 0.0), (1, 0.5)):
        band = np.linspace(base + geom.ctilde, base + geom.d, probes + 2)
        for x in band[1:-1]:
            got = boundary_angle_sum(At, as_fix(float(x)), intervals=I)
            err = max(err, abs(got - taus[comp]))
    report = PlatformReport(
        level=state.level, next_level=geom.next_level, c=geom.c,
        ctilde=geom.ctilde, d=geom.d, outer=geom.outer, height=geom.height,
        tau=tuple(taus), fit_residual=worst, sum_error=err,
        increment_norm=inc, increment_ratio=inc * state.level ** 2,
        grid=grid)
    staged = replace(state, pending=PendingPlatform(
        theta=theta_t, geometry=geom, report=report))
    return staged, report


def discard_platform(state):
    if state.pending is None:
        raise ValueError("no platform staged")
    return replace(state, pending=None)


def destruction_step(state, grid=512, samples=64, flat_tol=1e-6,
                     fit_tol=1e-9, nu_floor="raise", threads=None,
                     stats_grid=64):
    """Consume the staged platform and advance one destruction step.

    Runs the sub-correction ladder from the current level to the staged
    target, verifying flatness/separation/growth at every rung with the
    nu schedule as the growth floor.  ``nu_floor`` controls what a nu
    violation does: "raise" (NonHyperbolic) or "record" (keep going with
    nu_ok=False in the sub-step report; finite-scale runs can sit a few
    percent under the intermediate floors while every acceptance bound
    at the target level still holds).  Flatness or separation failures
    always raise.  Ends by measuring the per-return growth pair at the
    new level and the decay bounds against the previous one.
    """
    if state.pending is None:
        raise ValueError("stage a platform with platform_correction first")
    if nu_floor not in ("raise", "record"):
        raise ValueError(f"nu_floor must be 'raise' or 'record', "
                         f"got {nu_floor!r}")
    pend = state.pending
    geom = pend.geometry
    q1 = geom.next_level
    subs = correction_ladder(state.omega, state.level, q1)
    nu = nu_ladder(state.mu_lower, state.delta0, len(subs))
    leff = _l_eff(state.ell)
    # arithmetic floor of the schedule itself; sum 2**(-m/2) < 3.42 < 8(l+1)
    floor_nu = state.mu_lower ** (1.0 - 8.0 * state.delta0 * (leff + 1))
    if min(nu) < floor_nu * (1.0 - 1e-12):
        raise GeometryError(f"nu schedule dipped under its floor: "
                            f"{min(nu)!r} < {floor_nu!r}")

    shim = ConstructionState(
        omega=state.omega, lam=state.lam, ell=state.ell, a=state.a,
        delta=state.delta, branch=state.branch, epsilon=0.1, levels=subs,
        lambdas=nu, skipped=(), k=0, xi=pend.theta, sign=state.sign,
        report=None, history=(), increments=())
    reports = []
    for j, q in enumerate(subs):
        override = None
        if math.isinf(state.ell):
            spec_floor = math.exp(-((20.0 * q * q) ** state.a))
        else:
            spec_floor = (1.0 / (20.0 * q * q)) ** (state.ell + 1)
        touches = geom.c < 1.0 / (q * q)
        if touches and spec_floor > 0.9 * geom.height:
            override = 0.9 * geom.height
        rep = verify_step(shim, samples=samples, flat_tol=flat_tol,
                          threads=threads, separation_floor=override,
                          base_q=state.base_level)
        reports.append(SubStepReport(j=j, q=q, nu=nu[j],
                                     nu_ok=rep.growth_ok, report=rep))
        if not (rep.flat_ok and rep.sep_ok):
            raise RuntimeError(
                f"surgery broke flatness/separation at level {q}: {rep}")
        if not rep.growth_ok and nu_floor == "raise":
            raise NonHyperbolic(
                f"per-return growth {rep.growth:.6f} under the nu floor "
                f"{math.log(nu[j]):.6f} at sub-level {q}")
        if j + 1 < len(subs):
            attach = rep if rep.growth_ok else replace(rep, growth_ok=True)
            shim = correction_step(shim.with_report(attach), grid=grid,
                                   fit_tol=fit_tol, flat_limit=flat_tol,
                                   threads=threads)

    I1 = ResonanceIntervals(q1, 1.0)
    est = finite_le(angle_family(state.omega, state.lam, shim.xi), 0,
                    max(64, 2 * samples), restrict=I1, per_return=True,
                    threads=threads)
    order = 2 if math.isinf(state.ell) else state.ell
    inc = cl_distance(shim.xi, state.theta, order)
    decay = _decay_report(state, q1, est.mu_lower, est.mu_upper, inc)
    stats = return_ratio_stats(state.omega, I1, stats_grid, state.M)
    return replace(
        state, step=state.step + 1, theta=shim.xi, level=q1,
        prev_level=state.level, min_r=stats.min_r,
        max_r_tenth=stats.max_r_tenth, ratio=stats.ratio, k1=stats.k1,
        prev_mu_lower=state.mu_lower, prev_mu_upper=state.mu_upper,
        mu_lower=est.mu_lower, mu_upper=est.mu_upper, nu=nu,
        sub_levels=subs, geometry=geom, pending=None,
        platforms=state.platforms + (pend.report,),
        substeps=state.substeps + (tuple(reports),),
        decays=state.decays + (decay,))


def _decay_report(state, q1, mu_lo, mu_up, inc_norm):
    i = state.step + 1
    leff = _l_eff(state.ell)
    logmu = math.log(state.mu_lower)
    bound_ratio = state.mu_upper * math.exp(
        -2.0 * leff * state.ratio * state.delta0 * 1.2 * logmu)
    bound_step4 = state.mu_upper * math.exp(
        -2.0 * leff * state.M ** (-state.k1) * state.delta0 * logmu)
    bound_exp = state.mu_upper ** (1.0 - state.delta2)
    floor_i = state.mu0_lower ** ((1.0 - state.delta1) ** i)
    return DecayReport(
        step=i, level=q1, prev_level=state.level, mu_lower=mu_lo,
        mu_upper=mu_up, prev_mu_lower=state.mu_lower,
        prev_mu_upper=state.mu_upper, ratio=state.ratio, k1=state.k1,
        bound_ratio=bound_ratio, bound_step4=bound_step4,
        bound_exp=bound_exp, lower_floor=floor_i,
        decay_ok=mu_up < state.mu_upper,
        bound_ok=mu_up <= bound_ratio * (1.0 + _BOUND_SLACK),
        comparability_ok=mu_up <= mu_lo ** 2,
        floor_ok=mu_lo >= floor_i * (1.0 - _BOUND_SLACK),
        increment_norm=inc_norm,
        increment_bound=(q1 ** (4.0 * state.M * leff ** 2)
                         * state.mu0_lower ** -0.5))


def measure_growth_bounds(state, samples=64, threads=None):
    """Per-return growth pair at the current level plus the matching
    report: the step-0 baseline checks mu_upper <= lam and mu_lower >=
    the last scheduled lambda; later steps re-check the recorded decay
    bounds against a fresh measurement."""
    est = finite_le(state.cocycle(), 0, max(64, 2 * samples),
                    restrict=state.intervals(), per_return=True,
                    threads=threads)
    if state.step == 0:
        report = BaselineReport(
            level=state.level, mu_lower=est.mu_lower, mu_upper=est.mu_upper,
            lam=state.lam, lam_target=state.lam_target,
            upper_ok=est.mu_upper <= state.lam * (1.0 + _BOUND_SLACK),
            lower_ok=est.mu_lower >= state.lam_target * (1.0 - _BOUND_SLACK))
        return est.mu_lower, est.mu_upper, report
    last = state.decays[-1]
    report = replace(
        last, mu_lower=est.mu_lower, mu_upper=est.mu_upper,
        decay_ok=est.mu_upper < last.prev_mu_upper,
        bound_ok=est.mu_upper <= last.bound_ratio * (1.0 + _BOUND_SLACK),
        comparability_ok=est.mu_upper <= est.mu_lower ** 2,
        floor_ok=est.mu_lower >= last.lower_floor * (1.0 - _BOUND_SLACK))
    return est.mu_lower, est.mu_upper, report


def decay_csv(reports):
    """CSV rows (step, level, mu_lower, mu_upper, bound, pass/fail) for a
    mix of baseline and decay reports."""
    lines = ["step,level,mu_lower,mu_upper,bound,passed"]
    for r in reports:
        if isinstance(r, BaselineReport):
            step, bound = 0, r.lam
            ok = r.upper_ok and r.lower_ok
        else:
            step, bound = r.step, r.bound_ratio
            ok = (r.decay_ok and r.bound_ok and r.comparability_ok
                  and r.floor_ok)
        lines.append(f"{step},{r.level},{r.mu_lower:.17g},"
                     f"{r.mu_upper:.17g},{bound:.17g},"
                     f"{'pass' if ok else 'fail'}")
    return "\n".join(lines) + "\n"


def manifest_text(state):
    lines = [
        "cclab destruction manifest",
        f"omega {_omega_token(state.omega)}",
        f"lam {state.lam!r}",
        f"ell {state.ell}",
        f"a {state.a!r}" if state.a is not None else "a -",
        f"branch {state.branch}",
        f"sign {state.sign:+.0f}",
        f"base_level {state.base_level}",
        f"level {state.level}",
        f"step {state.step}",
        f"M {state.M!r}",
        f"k1 {state.k1}",
        f"deltas {state.delta0!r} {state.delta1!r} {state.delta2!r}",
        f"mu {state.mu_lower!r} {state.mu_upper!r}",
    ]
    return "\n".join(lines) + "\n"


def _dict_or_none(obj):
    return None if obj is None else asdict(obj)


def save_destruction(state, path):
    """Checkpoint the destruction as JSON; the profile rides along in its
    text serialization and the staged platform (if any) in its own."""
    pend = None
    if state.pending is not None:
        pend = {
            "profile": serialize_profile(state.pending.theta),
            "geometry": asdict(state.pending.geometry),
            "report": asdict(state.pending.report),
        }
    doc = {
        "format": "cclab-destruction 1",
        "omega": _omega_token(state.omega),
        "lam": state.lam.hex(),
        "ell": None if math.isinf(state.ell) else state.ell,
        "a": None if state.a is None else float(state.a).hex(),
        "delta": None if state.delta is None else float(state.delta).hex(),
        "branch": state.branch,
        "sign": state.sign,
        "lam_target": state.lam_target.hex(),
        "base_level": state.base_level,
        "M": float(state.M).hex(),
        "delta0": state.delta0.hex(),
        "delta1": state.delta1.hex(),
        "delta2": state.delta2.hex(),
        "step": state.step,
        "profile": serialize_profile(state.theta),
        "level": state.level,
        "prev_level": state.prev_level,
        "stats": [state.min_r, state.max_r_tenth, state.ratio, state.k1],
        "mu": [state.mu_lower.hex(), state.mu_upper.hex(),
               state.mu0_lower.hex()],
        "prev_mu": None if state.prev_mu_lower is None else
                   [state.prev_mu_lower.hex(), state.prev_mu_upper.hex()],
        "nu": [v.hex() for v in state.nu],
        "sub_levels": list(state.sub_levels),
        "geometry": _dict_or_none(state.geometry),
        "pending": pend,
        "platforms": [asdict(p) for p in state.platforms],
        "substeps": [[asdict(s) for s in group] for group in state.substeps],
        "decays": [asdict(d) for d in state.decays],
        "manifest": manifest_text(state),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def _platform_report_from(d):
    d = dict(d)
    d["tau"] = tuple(d["tau"])
    return PlatformReport(**d)


def _substep_from(d):
    d = dict(d)
    d["report"] = StepReport(**d["report"])
    return SubStepReport(**d)


def load_destruction(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "cclab-destruction 1":
        raise ValueError(f"not a destruction checkpoint: {path}")
    pend = None
    if doc["pending"] is not None:
        pend = PendingPlatform(
            theta=parse_profile(doc["pending"]["profile"]),
            geometry=PlatformGeometry(**doc["pending"]["geometry"]),
            report=_platform_report_from(doc["pending"]["report"]))
    prev_mu = doc["prev_mu"]
    return DestructionState(
        omega=continued_fraction(doc["omega"]),
        lam=float.fromhex(doc["lam"]),
        ell=math.inf if doc["ell"] is None else doc["ell"],
        a=None if doc["a"] is None else float.fromhex(doc["a"]),
        delta=None if doc["delta"] is None else float.fromhex(doc["delta"]),
        branch=doc["branch"],
        sign=doc["sign"],
        lam_target=float.fromhex(doc["lam_target"]),
        base_level=doc["base_level"],
        M=float.fromhex(doc["M"]),
        delta0=float.fromhex(doc["delta0"]),
        delta1=float.fromhex(doc["delta1"]),
        delta2=float.fromhex(doc["delta2"]),
        step=doc["step"],
        theta=parse_profile(doc["profile"]),
        level=doc["level"],
        prev_level=doc["prev_level"],
        min_r=doc["stats"][0], max_r_tenth=doc["stats"][1],
        ratio=doc["stats"][2], k1=doc["stats"][3],
        mu_lower=float.fromhex(doc["mu"][0]),
        mu_upper=float.fromhex(doc["mu"][1]),
        mu0_lower=float.fromhex(doc["mu"][2]),
        prev_mu_lower=None if prev_mu is None else float.fromhex(prev_mu[0]),
        prev_mu_upper=None if prev_mu is None else float.fromhex(prev_mu[1]),
        nu=tuple(float.fromhex(v) for v in doc["nu"]),
        sub_levels=tuple(doc["sub_levels"]),
        geometry=None if doc["geometry"] is None else
                 PlatformGeometry(**doc["geometry"]),
        pending=pend,
        platforms=tuple(_platform_report_from(p) for p in doc["platforms"]),
        substeps=tuple(tuple(_substep_from(s) for s in group)
                       for group in doc["substeps"]),
        decays=tuple(DecayReport(**d) for d in doc["decays"]),
    )
