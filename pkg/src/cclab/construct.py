"""Inductive construction of angle-family cocycles whose finite-scale
Lyapunov exponent stays above a prescribed ladder.

Starting from the base resonance profile, each step measures the
boundary-angle-sum defect that appears when return blocks are extended to
the next resonance level, fits it on the inner tenth of the new interval,
ramps it to zero across the annulus (Hermite for finite smoothness, a
windowed fit for the C-infinity variant), and adds the result to the
profile as a fresh layer.  Every step is then verified on three counts:
flatness of the angle sum against the base core profile, separation of
the sum away from the cores, and per-return growth against the scheduled
lambda_k.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import profiles
from .cocycle import (angle_family, as_fix, boundary_angle_sum, finite_le,
                      transfer)
from .kernels import DEN, DEN_BITS
from .profiles import (AngleProfile, Background, HermiteSpec, IllConditioned,
                       Piece, Platform, cl_distance, hermite_patch,
                       parse_profile, serialize_profile, xi0_values)
from .rotation import NAMED, ResonanceIntervals, RotationNumber, \
    continued_fraction
from .sl2 import fold_half_pi

_FIT_DEGREES = (8, 12, 16, 24, 32, 48, 64, 96, 128)
_GROWTH_SLACK = 1e-9


class FeasibilityError(ValueError):
    """The requested (lambda, q_start, epsilon) cannot satisfy the tail
    condition that keeps the schedule above lambda**(1-epsilon)."""


class PatchResidual(RuntimeError):
    """A correction increment could not be represented to tolerance."""


def quarter_levels(omega, q_start, steps):
    """Ladder of convergent denominators starting at q_start in which each
    interval is at most a quarter of the previous one.

    Convergents with q**2 < 4*q_prev**2 are skipped (returned separately),
    which keeps the resonance intervals nested with room to spare.
    """
    qs = [q for q in omega.denominators() if q >= q_start]
    if not qs or qs[0] != q_start:
        raise ValueError(f"q_start={q_start} is not a convergent denominator")
    levels = [q_start]
    skipped = []
    for q in qs[1:]:
        if len(levels) > steps:
            break
        if q * q >= 4 * levels[-1] * levels[-1]:
            levels.append(q)
        else:
            skipped.append(q)
    if len(levels) < steps + 1:
        raise ValueError(
            f"only {len(levels) - 1} usable levels past {q_start}; deepen "
            "the continued fraction expansion")
    return tuple(levels[:steps + 1]), tuple(s for s in skipped
                                            if s < levels[steps])


def _tail_terms(omega, q_start):
    """(q_k, q_{k+1}) pairs from q_start over the computed convergents,
    then a geometric extrapolation controlled by the type constant M."""
    qs = [q for q in omega.denominators() if q >= q_start]
    pairs = list(zip(qs, qs[1:]))
    M = max(omega.bounded_type_M, 1.5)
    growth = 1.0 + 1.0 / M
    q = float(qs[-1]) if qs else float(q_start)
    logq = math.log(q)
    for _ in range(10_000):
        pairs.append((q, None))
        # upper bound: log q_{k+1} <= log q_k + log M, q_k grows by >= 1+1/M
        if (logq + math.log(M)) / q < 1e-18:
            break
        q *= growth
        logq += math.log(growth)
    return pairs, M


def eq1_tail_sum(omega, q_start, ell, a=None):
    """Schedule tail sum: total drop of log lambda_k over an infinite
    ladder, bounded above using the bounded-type constant."""
    pairs, M = _tail_terms(omega, q_start)
    total = 0.0
    for qk, qn in pairs:
        if math.isinf(ell):
            step = (10.0 * qk * qk) ** a / qk
        elif qn is not None:
            step = 10.0 * ell * math.log(qn) / qk
        else:
            step = 10.0 * ell * (math.log(qk) + math.log(M)) / qk
        total += step
    return total


@dataclass(frozen=True)
class ScheduleReport:
    levels: tuple
    lambdas: tuple
    epsilon: float
    epsilon_effective: float
    tail_sum: float
    floor: float
    floor_margin: float
    feasible: bool


def lambda_schedule(lam, ell, omega, q_start, q_end=None, a=None,
                    epsilon=0.1, strict=False, levels=None):
    """The lambda_k ladder from q_start to q_end along the given levels.

    Finite ell: log lambda_k = log lambda_{k-1} - 10*ell*log(q_k)/q_{k-1}.
    Smooth (ell=None with exponent a): the drop is (10*q_k**2)**a / q_k.
    ``levels`` defaults to the raw convergent denominators; pass a
    quarter-rule ladder to schedule only over the levels actually built.

    Feasibility (checked, and enforced under ``strict``): the infinite
    tail drop must stay within epsilon*log(lam), so every lambda_k remains
    above lambda**(1-epsilon); and 1/lam must clear 1/q_start**2.
    """
    if lam <= 1.0:
        raise ValueError("lam must exceed 1")
    if math.isinf(ell) != (a is not None):
        raise ValueError("give a finite ell, or ell=inf with an exponent a")
    if levels is None:
        if q_end is None:
            raise ValueError("need q_end when levels are not given")
        qs = [q for q in omega.denominators() if q_start <= q <= q_end]
        if not qs or qs[0] != q_start or qs[-1] != q_end:
            raise ValueError("q_start..q_end must span convergent "
                             "denominators")
        levels = tuple(qs)
    else:
        levels = tuple(levels)
        if levels[0] != q_start:
            raise ValueError("levels must start at q_start")

    tail = eq1_tail_sum(omega, q_start, ell, a)
    loglam = math.log(lam)
    feasible = tail <= epsilon * loglam and lam > q_start * q_start
    if strict and not feasible:
        raise FeasibilityError(
            f"tail drop {tail:.4g} exceeds epsilon*log(lam) = "
            f"{epsilon * loglam:.4g} (effective epsilon "
            f"{tail / loglam:.4g}), or lam={lam:g} <= q_start**2 = "
            f"{q_start * q_start}")

    lams = [lam]
    for q_prev, q in zip(levels, levels[1:]):
        drop = ((10.0 * q * q) ** a / q if math.isinf(ell)
                else 10.0 * ell * math.log(q) / q_prev)
        lams.append(math.exp(math.log(lams[-1]) - drop))
    floor = lam ** (1.0 - epsilon)
    return ScheduleReport(
        levels=levels, lambdas=tuple(lams), epsilon=epsilon,
        epsilon_effective=tail / loglam, tail_sum=tail, floor=floor,
        floor_margin=lams[-1] / floor, feasible=feasible)


@dataclass(frozen=True)
class StepReport:
    """Verification of one construction level on the three conclusions."""

    k: int
    q: int
    lambda_k: float
    flatness: float
    flat_tol: float
    separation: float
    separation_floor: float
    growth: float
    growth_floor: float
    samples: int
    flat_ok: bool
    sep_ok: bool
    growth_ok: bool

    @property
    def ok(self):
        return self.flat_ok and self.sep_ok and self.growth_ok


@dataclass(frozen=True)
class ConstructionState:
    omega: RotationNumber
    lam: float
    ell: object
    a: object
    delta: object
    branch: str
    epsilon: float
    levels: tuple
    lambdas: tuple
    skipped: tuple
    k: int
    xi: AngleProfile
    sign: float
    report: object
    history: tuple
    increments: tuple

    @property
    def q(self):
        return self.levels[self.k]

    @property
    def lambda_k(self):
        return self.lambdas[self.k]

    def cocycle(self):
        return angle_family(self.omega, self.lam, self.xi)

    def intervals(self):
        return ResonanceIntervals(self.q, 1.0)

    def with_report(self, report):
        return replace(self, report=report, history=self.history + (report,))


def detect_sign(c, q_base, ell, a=None, branch="homotopic", delta=None):
    """Orientation of the boundary angle sum against the core profile.

    The identity fixing the sum determines it only up to a global sign
    that depends on the composition conventions; one probe point deep in
    the positive core settles it.
    """
    I = ResonanceIntervals(q_base, 1.0)
    probe = (3 * I.tenth().hw_fix) // 4
    want = float(xi0_values(np.array([probe * 0.5 ** DEN_BITS]), q_base, ell,
                            a, branch, delta)[0])
    got = boundary_angle_sum(c, probe, intervals=I)
    if want == 0.0 or got == 0.0:
        raise RuntimeError("degenerate probe for sign detection")
    return math.copysign(1.0, got * want)


def init_state(omega, lam=1000.0, ell=1, q_start=21, steps=3, a=None,
               branch="homotopic", delta=None, epsilon=0.1, strict=False):
    """Base state at level q_start with the level ladder and schedule.

    The state is not yet verified; run verify_step and attach the report
    before the first correction_step.
    """
    xi = profiles.base_profile(q_start, ell, a, branch, delta)
    levels, skipped = quarter_levels(omega, q_start, steps)
    sched = lambda_schedule(lam, ell, omega, q_start, a=a, epsilon=epsilon,
                            strict=strict, levels=levels)
    state = ConstructionState(
        omega=omega, lam=float(lam), ell=ell, a=a, delta=delta, branch=branch,
        epsilon=epsilon, levels=levels, lambdas=sched.lambdas,
        skipped=skipped, k=0, xi=xi, sign=0.0, report=None, history=(),
        increments=())
    sign = detect_sign(state.cocycle(), q_start, ell, a, branch, delta)
    return replace(state, sign=sign)


def _segment_coord(x_fix, wraps):
    u = x_fix * 0.5 ** DEN_BITS
    if wraps and u < 0.5:
        u += 1.0
    return u


def _measure_defect(state, pts, threads):
    """Angle-sum defect at the next level: the boundary sums with the new
    return times minus the sums with the current ones."""
    c = state.cocycle()
    I_new = ResonanceIntervals(state.levels[state.k + 1], 1.0)
    I_old = state.intervals()
    out = np.empty(len(pts))

    def work(j):
        x = pts[j]
        new = boundary_angle_sum(c, x, intervals=I_new)
        old = boundary_angle_sum(c, x, intervals=I_old)
        out[j] = fold_half_pi(new - old)

    if threads is not None and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(pts))))
    else:
        for j in range(len(pts)):
            work(j)
    return out


def _fit_segment(lo, hi, xs, vals, fit_tol):
    """Chebyshev least-squares fit of sampled values on [lo, hi], degree
    raised until the residual on the samples clears fit_tol."""
    t = 2.0 * (np.asarray(xs) - lo) / (hi - lo) - 1.0
    best = None
    for deg in _FIT_DEGREES:
        if deg >= len(xs):
            break
        with warnings.catch_warnings():
            # high-degree attempts during escalation may be rank deficient;
            # the best-residual rule below already discards them
            warnings.simplefilter("ignore", np.polynomial.polyutils.RankWarning)
            coeffs = np.polynomial.chebyshev.chebfit(t, vals, deg)
        resid = float(np.abs(np.polynomial.chebyshev.chebval(t, coeffs)
                             - vals).max())
        if best is None or resid < best[1]:
            best = (coeffs, resid)
        if resid <= fit_tol:
            break
    return tuple(float(v) for v in best[0]), best[1]


def _grid_for_component(state, intervals, comp, grid):
    pts = list(intervals.sample_fix(grid, comp))
    for kn in state.xi.knots():
        kf = as_fix(kn)
        if intervals.contains_fix(kf) == comp:
            pts.append(kf)
    return sorted(set(pts), key=lambda p: _segment_coord(p, comp == 0))


def _fill_layer(pieces):
    pieces = sorted(pieces, key=lambda p: p.lo)
    out = []
    at = 0.0
    for p in pieces:
        if p.lo > at:
            out.append(Piece(at, p.lo, Platform(0.0)))
        out.append(p)
        at = p.hi
    if at < 1.0:
        out.append(Piece(at, 1.0, Platform(0.0)))
    return tuple(out)


def _component_pieces(q, ell, comp, xs, vals, fit_tol):
    """Increment pieces for one arc: core fit plus annulus ramps (Hermite
    for finite ell, a window folded into the fit for the smooth case)."""
    w = 1.0 / (q * q)
    w10 = w / 10.0
    c0 = 1.0 if comp == 0 else 0.5
    if math.isinf(ell):
        coeffs, resid = _fit_segment(c0 - w, c0 + w, xs, vals, fit_tol)
        lo, hi = c0 - w, c0 + w
        wnd = 0.9 * w
        if comp == 0:
            kinds = [(1.0 - w, 1.0, Background(lo, hi, coeffs, wnd, wnd, 0)),
                     (0.0, w, Background(lo, hi, coeffs, wnd, wnd, 1))]
        else:
            kinds = [(lo, hi, Background(lo, hi, coeffs, wnd, wnd, 0))]
        return [Piece(a, b, k) for a, b, k in kinds], resid

    coeffs, resid = _fit_segment(c0 - w10, c0 + w10, xs, vals, fit_tol)
    bg = Background(c0 - w10, c0 + w10, coeffs, 0.0, 0.0, 0)
    orders = range(ell + 1)
    right_data = tuple(profiles._kind_eval(bg, c0 + w10, r) for r in orders)
    left_data = tuple(profiles._kind_eval(bg, c0 - w10, r) for r in orders)
    zeros = (0.0,) * (ell + 1)
    try:
        if comp == 0:
            out = [Piece(0.0, w10, Background(c0 - w10, c0 + w10, coeffs,
                                              0.0, 0.0, 1)),
                   hermite_patch(HermiteSpec(w10, w, right_data, zeros)),
                   hermite_patch(HermiteSpec(1.0 - w, 1.0 - w10, zeros,
                                             left_data)),
                   Piece(1.0 - w10, 1.0, bg)]
        else:
            out = [hermite_patch(HermiteSpec(c0 - w, c0 - w10, zeros,
                                             left_data)),
                   Piece(c0 - w10, c0 + w10, bg),
                   hermite_patch(HermiteSpec(c0 + w10, c0 + w, right_data,
                                             zeros))]
    except IllConditioned as exc:
        raise PatchResidual(str(exc)) from exc
    return out, resid


def increment_profile(xi, q_new, ell, samples, fit_tol=1e-9,
                      flat_limit=1e-6):
    """Extend ``xi`` by one correction layer at level q_new.

    ``samples`` maps component (0 for the arc at 0, 1 for the arc at 1/2)
    to (fixed-point positions, values) covering the fit region: the inner
    tenth of the level-q_new arcs for finite ell, the full arcs when ell
    is infinite.  The layer reproduces the fitted values there, ramps to
    zero across the annulus and vanishes identically outside the arcs.
    Returns (profile, worst fit residual).
    """
    pieces = []
    worst = 0.0
    for comp in (0, 1):
        pts, vals = samples[comp]
        xs = [_segment_coord(p, comp == 0) for p in pts]
        got, resid = _component_pieces(q_new, ell, comp, xs, vals, fit_tol)
        pieces.extend(got)
        worst = max(worst, resid)
    if worst > flat_limit:
        raise PatchResidual(
            f"defect fit residual {worst:.3e} exceeds {flat_limit:.1e}")
    return xi.with_layer(_fill_layer(pieces)), worst


def correction_step(state, grid=512, fit_tol=1e-9, flat_limit=1e-6,
                    threads=None):
    """One construction step: measure the defect at the next level, build
    the correction layer and advance the state (unverified)."""
    if state.report is None:
        raise ValueError("verify the current step before correcting")
    if not state.report.ok:
        raise ValueError("current step failed verification: "
                         f"{state.report}")
    if state.k + 1 >= len(state.levels):
        raise ValueError("no further levels in the ladder")
    q_new = state.levels[state.k + 1]
    I_new = ResonanceIntervals(q_new, 1.0)
    region = I_new if math.isinf(state.ell) else I_new.tenth()

    samples = {}
    for comp in (0, 1):
        pts = _grid_for_component(state, region, comp, grid)
        samples[comp] = (pts, _measure_defect(state, pts, threads))
    xi_new, worst = increment_profile(state.xi, q_new, state.ell, samples,
                                      fit_tol, flat_limit)
    order = 2 if math.isinf(state.ell) else state.ell
    inc = cl_distance(xi_new, state.xi, order)
    return replace(state, k=state.k + 1, xi=xi_new, report=None,
                   increments=state.increments + ((q_new, inc, worst),))


def verify_step(state, samples=64, flat_tol=1e-6, threads=None,
                separation_floor=None, base_q=None):
    """Measure the three conclusions at the current level.

    flatness: sup over I_k/10 of the folded gap between the boundary angle
    sum and sign*xi_0.  separation: min of |sum| over I_k minus its tenth,
    against the floor (1/(20 q_k^2))**(ell+1) (its exponential analogue
    when smooth); ``separation_floor`` overrides the floor when the
    profile has been deliberately modified inside the annulus.  growth:
    per-return mu_lower against lambda_k.  ``base_q`` names the level the
    core profile was built at when it differs from levels[0].
    """
    c = state.cocycle()
    I = state.intervals()
    tenth = I.tenth()
    q = state.q

    flat = 0.0
    for comp in (0, 1):
        pts = _grid_for_component(state, tenth, comp, samples)
        x = np.array([p * 0.5 ** DEN_BITS for p in pts])
        want = xi0_values(x, base_q or state.levels[0], state.ell, state.a,
                          state.branch, state.delta)
        for j, p in enumerate(pts):
            got = boundary_angle_sum(c, p, intervals=I)
            flat = max(flat, abs(fold_half_pi(got - state.sign * want[j])))

    if separation_floor is not None:
        floor = separation_floor
    elif math.isinf(state.ell):
        floor = math.exp(-((20.0 * q * q) ** state.a))
    else:
        floor = (1.0 / (20.0 * q * q)) ** (state.ell + 1)
    sep = math.inf
    for comp in (0, 1):
        for p in I.sample_fix(2 * samples, comp):
            if tenth.contains_fix(p) is not None:
                continue
            sep = min(sep, abs(boundary_angle_sum(c, p, intervals=I)))

    est = finite_le(c, 0, max(64, 2 * samples), restrict=I, per_return=True,
                    threads=threads)
    growth = math.log(est.mu_lower)
    growth_floor = math.log(state.lambda_k)
    return StepReport(
        k=state.k, q=q, lambda_k=state.lambda_k, flatness=flat,
        flat_tol=flat_tol, separation=sep, separation_floor=floor,
        growth=growth, growth_floor=growth_floor, samples=samples,
        flat_ok=flat <= flat_tol, sep_ok=sep >= floor,
        growth_ok=growth >= growth_floor - _GROWTH_SLACK)


def run_construction(omega, lam=1000.0, ell=1, q_start=21, steps=3, a=None,
                     branch="homotopic", delta=None, epsilon=0.1,
                     strict=False, grid=512, samples=64, flat_tol=1e-6,
                     threads=None, checkpoint=None):
    """Drive init, correction and verification through all levels.

    Returns the final verified state; raises if any level fails.  When
    ``checkpoint`` is a path, the state is saved after each verified step.
    """
    state = init_state(omega, lam, ell, q_start, steps, a, branch, delta,
                       epsilon, strict)
    state = state.with_report(verify_step(state, samples, flat_tol, threads))
    if not state.report.ok:
        raise RuntimeError(f"base level failed verification: {state.report}")
    if checkpoint:
        save_state(state, checkpoint)
    for _ in range(steps):
        state = correction_step(state, grid=grid, flat_limit=flat_tol,
                                threads=threads)
        state = state.with_report(verify_step(state, samples, flat_tol,
                                              threads))
        if not state.report.ok:
            raise RuntimeError(
                f"level q={state.q} failed verification: {state.report}")
        if checkpoint:
            save_state(state, checkpoint)
    return state


def _omega_token(omega):
    for name, fixed in NAMED.items():
        if fixed == omega.fixed:
            return name
    return f"{omega.fixed}/{DEN}"


def manifest_text(state):
    lines = [
        "cclab construction manifest",
        f"omega {_omega_token(state.omega)}",
        f"lam {state.lam!r}",
        f"ell {state.ell}",
        f"a {state.a!r}" if state.a is not None else "a -",
        f"delta {state.delta!r}" if state.delta is not None else "delta -",
        f"branch {state.branch}",
        f"epsilon {state.epsilon!r}",
        f"levels {' '.join(str(q) for q in state.levels)}",
        f"skipped {' '.join(str(q) for q in state.skipped) or '-'}",
        f"lambdas {' '.join(repr(v) for v in state.lambdas)}",
        f"step {state.k}",
        f"sign {state.sign:+.0f}",
    ]
    return "\n".join(lines) + "\n"


def _report_dict(report):
    return None if report is None else asdict(report)


def _report_from(d):
    return None if d is None else StepReport(**d)


def save_state(state, path):
    """Checkpoint the construction as JSON with the profile embedded in
    its text serialization (floats kept exact via hex)."""
    doc = {
        "format": "cclab-construction 1",
        "omega": _omega_token(state.omega),
        "lam": state.lam.hex(),
        "ell": None if math.isinf(state.ell) else state.ell,
        "a": None if state.a is None else float(state.a).hex(),
        "delta": None if state.delta is None else float(state.delta).hex(),
        "branch": state.branch,
        "epsilon": state.epsilon.hex(),
        "levels": list(state.levels),
        "lambdas": [v.hex() for v in state.lambdas],
        "skipped": list(state.skipped),
        "k": state.k,
        "sign": state.sign,
        "profile": serialize_profile(state.xi),
        "report": _report_dict(state.report),
        "history": [_report_dict(r) for r in state.history],
        "increments": [[q, inc, resid] for q, inc, resid in
                       state.increments],
        "manifest": manifest_text(state),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_state(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "cclab-construction 1":
        raise ValueError(f"not a construction checkpoint: {path}")
    omega = continued_fraction(doc["omega"])
    return ConstructionState(
        omega=omega,
        lam=float.fromhex(doc["lam"]),
        ell=math.inf if doc["ell"] is None else doc["ell"],
        a=None if doc["a"] is None else float.fromhex(doc["a"]),
        delta=None if doc["delta"] is None else float.fromhex(doc["delta"]),
        branch=doc["branch"],
        epsilon=float.fromhex(doc["epsilon"]),
        levels=tuple(doc["levels"]),
        lambdas=tuple(float.fromhex(v) for v in doc["lambdas"]),
        skipped=tuple(doc["skipped"]),
        k=doc["k"],
        xi=parse_profile(doc["profile"]),
        sign=doc["sign"],
        report=_report_from(doc["report"]),
        history=tuple(_report_from(r) for r in doc["history"]),
        increments=tuple((q, inc, resid) for q, inc, resid in
                         doc["increments"]),
    )
