"""Piecewise angle profiles on the circle.

A profile is a lift xi of a periodic map into the rotation angles of a
cocycle family: evaluation at x + 1 adds 2*pi*degree.  Profiles are stored
as layers, each layer a list of pieces tiling [0, 1) exactly, and the
profile value is the sum over layers.  Keeping increments in their own
layers lets later stages compare profiles piece-exactly (shared layers
cancel without sampling).

Piece kinds:

- ``PowerCore``: sgn(x - c)|x - c|^p plus a constant offset, the odd core
  of a finitely smooth profile.
- ``ExpCore``: sgn(x - c) exp(-|x - c|^-a) plus offset, the flat core of
  the infinitely smooth variant.
- ``HermitePatch``: polynomial ramp matching values and derivatives at
  both ends (2l + 2 coefficients for order-l data).
- ``Platform``: a constant.
- ``Background``: Chebyshev polynomial on a reference interval, with
  optional mollifier windows fading it to zero at either end; carries
  fitted correction data.
- ``SmoothStep``: mollifier step between two constants.
- ``BlendRamp``: mollifier blend between a continued core formula and a
  constant target, the infinitely smooth ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from numpy.polynomial import polynomial as _poly

PI = math.pi
TWO_PI = 2.0 * math.pi

__all__ = [
    "AngleProfile",
    "Background",
    "BlendRamp",
    "DegreeMismatch",
    "ExpCore",
    "GluingReport",
    "HermitePatch",
    "HermiteSpec",
    "IllConditioned",
    "InvalidParams",
    "Piece",
    "Platform",
    "PowerCore",
    "SmoothStep",
    "base_profile",
    "check_gluing",
    "cl_distance",
    "core_half_width",
    "fitted_layer",
    "hermite_patch",
    "parse_profile",
    "serialize_profile",
    "smooth_bump",
    "xi0_values",
]


class InvalidParams(ValueError):
    """Parameters outside the documented domain of a profile factory."""


class IllConditioned(RuntimeError):
    """A fit or interpolation lost too many digits to meet its residual."""


class DegreeMismatch(ValueError):
    """Profiles of different topological degree cannot be compared."""


def _sigma(t):
    """Mollifier step: 0 for t <= 0, 1 for t >= 1, C-infinity flat at both ends."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    tm = t[mid]
    with np.errstate(divide="ignore"):
        f = np.exp(-1.0 / tm)
        g = np.exp(-1.0 / (1.0 - tm))
    out[mid] = f / (f + g)
    return out


def _fd_derivative(fn, x, order, h):
    """Central finite difference of `fn` at `x`, one Richardson step (O(h^4))."""
    x = np.asarray(x, dtype=float)
    if order == 0:
        return fn(x)

    def estimate(step):
        acc = np.zeros_like(x)
        for k in range(order + 1):
            c = (-1.0) ** k * math.comb(order, k)
            acc = acc + c * fn(x + (order / 2.0 - k) * step)
        return acc / step**order

    return (4.0 * estimate(h / 2.0) - estimate(h)) / 3.0


def _fd_step(span, order):
    # balances roundoff (ulp/h^r) against the O(h^4) truncation of the stencil
    return span * (3e-16) ** (1.0 / (order + 4))


# weight of the far end of a mollifier at this parameter distance is below
# 1e-40, so inside the margin the blend equals its dominant part to machine
# precision and derivative limits can be returned exactly
_FLAT_MARGIN = 0.01


@dataclass(frozen=True)
class Platform:
    value: float

    def values(self, x):
        return np.full(np.shape(x), self.value, dtype=float)

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        return np.zeros(np.shape(x), dtype=float)


@dataclass(frozen=True)
class PowerCore:
    power: int
    center: float
    sign: float
    offset: float

    def values(self, x):
        u = np.asarray(x, dtype=float) - self.center
        return self.offset + self.sign * np.sign(u) * np.abs(u) ** self.power

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        u = np.asarray(x, dtype=float) - self.center
        p = self.power
        if order > p:
            return np.zeros_like(u)
        mag = float(math.perm(p, order)) * np.abs(u) ** (p - order)
        odd_flip = -1.0 if (order % 2 == 0) else 1.0
        out = self.sign * mag * np.where(u > 0.0, 1.0, odd_flip)
        if order == p:
            # the p-th derivative is two-sided only for odd p (a plain monomial)
            out = np.where(u == 0.0, self.sign * math.factorial(p) if p % 2 else 0.0, out)
        else:
            out = np.where(u == 0.0, 0.0, out)
        return out


@lru_cache(maxsize=None)
def _expcore_terms(a, order):
    """(exponent, coefficient) pairs with d^r/du^r exp(-u^-a) = exp(-u^-a) * sum c u^e."""
    if order == 0:
        return ((0.0, 1.0),)
    terms = {}
    for e, c in _expcore_terms(a, order - 1):
        if e != 0.0:
            terms[e - 1.0] = terms.get(e - 1.0, 0.0) + c * e
        key = e - a - 1.0
        terms[key] = terms.get(key, 0.0) + c * a
    return tuple(sorted(terms.items()))


@dataclass(frozen=True)
class ExpCore:
    a: float
    center: float
    sign: float
    offset: float

    def values(self, x):
        u = np.asarray(x, dtype=float) - self.center
        au = np.abs(u)
        out = np.zeros_like(au)
        m = au > 0.0
        out[m] = np.exp(-au[m] ** -self.a)
        return self.offset + self.sign * np.sign(u) * out

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        u = np.asarray(x, dtype=float) - self.center
        au = np.abs(u)
        out = np.zeros_like(au)
        m = au > 0.0
        if m.any():
            logau = np.log(au[m])
            expo = -np.exp(-self.a * logau)
            acc = np.zeros_like(logau)
            for e, c in _expcore_terms(self.a, order):
                acc += c * np.exp(expo + e * logau)
            out[m] = acc
        odd_flip = -1.0 if (order % 2 == 0) else 1.0
        return self.sign * out * np.where(u >= 0.0, 1.0, odd_flip)


@lru_cache(maxsize=None)
def _cardinal_poly(ell, s, m):
    """m-th derivative coefficients of u^s/s! * sum_j C(ell+j, j) u^j."""
    fc = [0.0] * s + [math.comb(ell + j, j) / math.factorial(s) for j in range(ell - s + 1)]
    return tuple(float(v) for v in _poly.polyder(np.asarray(fc), m)) if m else tuple(fc)


def _cardinal_deriv(ell, s, r, u):
    """r-th derivative of the two-point Hermite cardinal A_s at u.

    A_s = u^s/s! * T_{l-s}(u) * (1-u)^(l+1) keeps the (1-u) factor
    symbolic, so derivatives up to l vanish exactly at u = 1 and the
    evaluation is cancellation-free on [0, 1].
    """
    one_m_u = 1.0 - u
    acc = np.zeros_like(u)
    for k in range(min(r, ell + 1) + 1):
        fk = _poly.polyval(u, _cardinal_poly(ell, s, r - k))
        gk = (-1.0) ** k * math.perm(ell + 1, k) * one_m_u ** (ell + 1 - k)
        acc += math.comb(r, k) * fk * gk
    return acc


@dataclass(frozen=True)
class HermitePatch:
    """Two-point Hermite interpolant stored by its boundary data.

    left_data/right_data hold the x-space value and derivatives 0..l at
    the ends (2l + 2 numbers in total); the polynomial is evaluated in
    the cardinal basis, which reproduces the boundary data to relative
    machine precision regardless of the interval span.
    """

    lo: float
    hi: float
    left_data: tuple
    right_data: tuple

    def values(self, x):
        return self.deriv(x, 0)

    def deriv(self, x, order):
        span = self.hi - self.lo
        u = (np.asarray(x, dtype=float) - self.lo) / span
        ell = len(self.left_data) - 1
        acc = np.zeros_like(u)
        for s, (lv, rv) in enumerate(zip(self.left_data, self.right_data)):
            w = span**s
            if lv:
                acc += (lv * w) * _cardinal_deriv(ell, s, order, u)
            if rv:
                acc += (rv * w) * (-1.0) ** (s + order) * _cardinal_deriv(
                    ell, s, order, 1.0 - u
                )
        return acc / span**order


@dataclass(frozen=True)
class Background:
    lo: float
    hi: float
    coeffs: tuple
    w0: float
    w1: float
    shift: int

    def _mapped(self, x):
        xs = np.asarray(x, dtype=float) + self.shift
        return xs, 2.0 * (xs - self.lo) / (self.hi - self.lo) - 1.0

    def _window(self, xs):
        w = np.ones_like(xs)
        if self.w0 > 0.0:
            w = w * _sigma((xs - self.lo) / self.w0)
        if self.w1 > 0.0:
            w = w * _sigma((self.hi - xs) / self.w1)
        return w

    def values(self, x):
        xs, t = self._mapped(x)
        return _cheb.chebval(t, self.coeffs) * self._window(xs)

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        span = self.hi - self.lo
        if self.w0 == 0.0 and self.w1 == 0.0:
            _, t = self._mapped(x)
            c = _cheb.chebder(np.asarray(self.coeffs, dtype=float), order)
            return _cheb.chebval(t, c) * (2.0 / span) ** order
        xs, _ = self._mapped(x)
        out = np.empty_like(xs)
        flat0 = self.w0 > 0.0
        flat1 = self.w1 > 0.0
        lo_flat = (xs - self.lo) <= _FLAT_MARGIN * self.w0 if flat0 else np.zeros_like(xs, bool)
        hi_flat = (self.hi - xs) <= _FLAT_MARGIN * self.w1 if flat1 else np.zeros_like(xs, bool)
        edge = lo_flat | hi_flat
        out[edge] = 0.0
        mid = ~edge
        if mid.any():
            fn = lambda z: _cheb.chebval(
                2.0 * (z - self.lo) / span - 1.0, self.coeffs
            ) * self._window(z)
            out[mid] = _fd_derivative(fn, xs[mid], order, _fd_step(span, order))
        return out


@dataclass(frozen=True)
class SmoothStep:
    lo: float
    hi: float
    y0: float
    y1: float

    def values(self, x):
        t = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return self.y0 + (self.y1 - self.y0) * _sigma(t)

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        t = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        out = np.empty_like(t)
        edge = (t <= _FLAT_MARGIN) | (t >= 1.0 - _FLAT_MARGIN)
        out[edge] = 0.0
        mid = ~edge
        if mid.any():
            span = self.hi - self.lo
            fn = lambda z: self.y0 + (self.y1 - self.y0) * _sigma((z - self.lo) / span)
            out[mid] = _fd_derivative(fn, np.asarray(x, float)[mid], order, _fd_step(span, order))
        return out


@dataclass(frozen=True)
class BlendRamp:
    lo: float
    hi: float
    inner: object
    target: float
    target_side: str

    def _weight_param(self, x):
        t = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return t if self.target_side == "right" else 1.0 - t

    def values(self, x):
        w = _sigma(self._weight_param(x))
        return (1.0 - w) * self.inner.values(x) + w * self.target

    def deriv(self, x, order):
        if order == 0:
            return self.values(x)
        x = np.asarray(x, dtype=float)
        s = self._weight_param(x)
        out = np.empty_like(s)
        core_side = s <= _FLAT_MARGIN
        flat_side = s >= 1.0 - _FLAT_MARGIN
        if core_side.any():
            out[core_side] = self.inner.deriv(x[core_side], order)
        out[flat_side] = 0.0
        mid = ~(core_side | flat_side)
        if mid.any():
            out[mid] = _fd_derivative(
                self.values, x[mid], order, _fd_step(self.hi - self.lo, order)
            )
        return out


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    kind: object


def _validate_layer(pieces):
    if not pieces:
        raise InvalidParams("a layer needs at least one piece")
    if pieces[0].lo != 0.0 or pieces[-1].hi != 1.0:
        raise InvalidParams("layer pieces must tile [0, 1) exactly")
    for left, right in zip(pieces, pieces[1:]):
        if left.hi != right.lo:
            raise InvalidParams(
                f"gap or overlap between pieces at {left.hi!r} / {right.lo!r}"
            )
    for p in pieces:
        if not p.lo < p.hi:
            raise InvalidParams(f"empty piece on [{p.lo!r}, {p.hi!r})")


@dataclass(frozen=True)
class AngleProfile:
    """Sum of piecewise layers on [0, 1), lifted with 2*pi*degree per period."""

    degree: int
    ell: float
    a: object
    layers: tuple

    def __post_init__(self):
        for layer in self.layers:
            _validate_layer(layer)

    def _layer_eval(self, layer, fx, order):
        out = np.zeros_like(fx)
        los = np.array([p.lo for p in layer])
        idx = np.searchsorted(los, fx, side="right") - 1
        for i, piece in enumerate(layer):
            m = idx == i
            if m.any():
                k = piece.kind
                out[m] = k.values(fx[m]) if order == 0 else k.deriv(fx[m], order)
        return out

    def values(self, x, order=0):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr).astype(float)
        fl = np.floor(arr)
        fx = arr - fl
        high = fx >= 1.0  # rounding of x - floor(x) for tiny negative x
        fx[high] = 0.0
        fl[high] += 1.0
        out = np.zeros_like(fx)
        for layer in self.layers:
            out += self._layer_eval(layer, fx, order)
        if order == 0 and self.degree:
            out += TWO_PI * self.degree * fl
        return float(out[0]) if scalar else out

    def value(self, x):
        return float(self.values(np.float64(x)))

    def deriv(self, x, order):
        return self.values(x, order=order)

    def knots(self):
        ks = {1.0}
        for layer in self.layers:
            ks.update(p.lo for p in layer)
        return sorted(ks)

    def with_layer(self, pieces):
        return AngleProfile(self.degree, self.ell, self.a, self.layers + (tuple(pieces),))


@dataclass(frozen=True)
class GluingReport:
    max_residual: float
    worst_knot: float
    worst_order: int
    wrap_residual: float


def _kind_eval(kind, x, order):
    arr = np.array([x], dtype=float)
    v = kind.values(arr) if order == 0 else kind.deriv(arr, order)
    return float(v[0])


def check_gluing(profile, order=None, tol_scale=1e-9):
    """Scaled one-sided mismatch at every knot of every layer.

    Derivatives are compared up to `order` (default: the profile's
    smoothness, capped at 4 for infinitely smooth profiles).  The wrap
    knot is checked against a whole multiple of 2*pi per layer, and the
    profile-level wrap sum against 2*pi*degree.
    """
    if order is None:
        order = int(profile.ell) if math.isfinite(profile.ell) else 4
    worst = (0.0, 0.0, 0)
    wrap_total = 0.0
    for layer in profile.layers:
        for left, right in zip(layer, layer[1:]):
            for r in range(order + 1):
                lv = _kind_eval(left.kind, left.hi, r)
                rv = _kind_eval(right.kind, right.lo, r)
                res = abs(lv - rv) / max(1.0, abs(lv), abs(rv))
                if res > worst[0]:
                    worst = (res, left.hi, r)
        first, last = layer[0], layer[-1]
        for r in range(order + 1):
            lv = _kind_eval(last.kind, 1.0, r)
            rv = _kind_eval(first.kind, 0.0, r)
            if r == 0:
                delta = lv - rv
                wrap_total += delta
                res = abs(delta - TWO_PI * round(delta / TWO_PI))
                res /= max(1.0, abs(lv), abs(rv))
            else:
                res = abs(lv - rv) / max(1.0, abs(lv), abs(rv))
            if res > worst[0]:
                worst = (res, 1.0, r)
    wrap_res = abs(wrap_total - TWO_PI * profile.degree)
    return GluingReport(worst[0], worst[1], worst[2], wrap_res)


def cl_distance(p, q, order, grid=256, region=None):
    """Sup over derivative orders 0..order of |p - q| on the circle.

    Layers present in both profiles (as the same objects) cancel exactly
    and are skipped; the remainder is sampled with at least `grid` points
    per piece plus the knot limits, which attains the sup for the
    monotone and constant kinds.  `region` restricts the sup to a
    subinterval of [0, 1).
    """
    if p.degree != q.degree:
        raise DegreeMismatch(f"degree {p.degree} vs {q.degree}")
    rest = list(q.layers)
    only_p = []
    for layer in p.layers:
        for i, other in enumerate(rest):
            if layer is other:
                del rest[i]
                break
        else:
            only_p.append(layer)
    only_q = rest
    if not only_p and not only_q:
        return 0.0
    knots = {0.0, 1.0}
    for layer in only_p + only_q:
        knots.update(piece.lo for piece in layer)
    lo_r, hi_r = region if region is not None else (0.0, 1.0)
    ks = sorted(k for k in knots if lo_r <= k <= hi_r)
    ks = [lo_r] + ks + [hi_r]
    xs = []
    for a, b in zip(ks, ks[1:]):
        if b <= a:
            continue
        inset = (b - a) * 1e-12
        xs.append(np.array([a + inset, b - inset]))
        xs.append(a + (b - a) * (np.arange(grid) + 0.5) / grid)
    pts = np.concatenate(xs)
    best = 0.0
    dummy = AngleProfile(0, math.inf, None, ())
    for r in range(order + 1):
        acc = np.zeros_like(pts)
        for layer in only_p:
            acc += dummy._layer_eval(layer, pts, r)
        for layer in only_q:
            acc -= dummy._layer_eval(layer, pts, r)
        best = max(best, float(np.max(np.abs(acc))))
    return best


@dataclass(frozen=True)
class HermiteSpec:
    """Two-point boundary data: values and derivatives 0..l at both ends."""

    left: float
    right: float
    left_values: tuple
    right_values: tuple


def hermite_patch(spec):
    """Degree 2l+1 polynomial ramp matching `spec` at both ends.

    The boundary data is reproduced through the cardinal two-point basis
    rather than a monomial solve, which would lose more than six digits
    on short intervals.  The achieved endpoint residuals are verified;
    IllConditioned is raised when they exceed 1e-9 (scaled), which
    happens when the requested data itself exceeds what degree 2l+1
    float polynomials can carry.
    """
    if len(spec.left_values) != len(spec.right_values):
        raise InvalidParams("left and right data must carry the same orders")
    if not spec.left < spec.right:
        raise InvalidParams("empty interval")
    kind = HermitePatch(
        spec.left,
        spec.right,
        tuple(float(v) for v in spec.left_values),
        tuple(float(v) for v in spec.right_values),
    )
    worst = 0.0
    for x, data in ((spec.left, spec.left_values), (spec.right, spec.right_values)):
        for r, want in enumerate(data):
            got = _kind_eval(kind, x, r)
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    if worst > 1e-9:
        raise IllConditioned(
            f"hermite data on [{spec.left}, {spec.right}] lost too many digits"
            f" (residual {worst:.2e})"
        )
    return Piece(spec.left, spec.right, kind)


def core_half_width(q_n):
    return 1.0 / (2.0 * q_n * q_n)


def _require_branch(branch):
    if branch not in ("homotopic", "nonhomotopic"):
        raise InvalidParams(f"unknown branch {branch!r}")


def _base_params(q_n, ell, a, branch, delta):
    _require_branch(branch)
    if not (isinstance(q_n, (int, np.integer)) and q_n >= 5):
        raise InvalidParams("q_n must be an integer >= 5")
    smooth = math.isinf(ell)
    if smooth:
        if a is None or not (0.0 < a < 0.1):
            raise InvalidParams("the infinitely smooth profile needs a in (0, 1/10)")
        h = core_half_width(q_n) if delta is None else float(delta)
        if not (0.0 < h < 0.125):
            raise InvalidParams("delta must lie in (0, 1/8)")
    else:
        if a is not None:
            raise InvalidParams("a only applies to the infinitely smooth profile")
        if delta is not None:
            raise InvalidParams("delta only applies to the infinitely smooth profile")
        if not (isinstance(ell, (int, np.integer)) and ell >= 0):
            raise InvalidParams("ell must be a non-negative integer or inf")
        h = core_half_width(q_n)
    return smooth, h


def _core_kinds(ell, a, branch, smooth):
    degree = 1 if branch == "nonhomotopic" else 0
    sign_mid = 1.0 if branch == "nonhomotopic" else -1.0
    off_mid = PI if branch == "nonhomotopic" else 0.0
    if smooth:
        core0 = ExpCore(a, 0.0, 1.0, 0.0)
        core_mid = ExpCore(a, 0.5, sign_mid, off_mid)
        core1 = ExpCore(a, 1.0, 1.0, TWO_PI * degree)
    else:
        p = int(ell) + 1
        core0 = PowerCore(p, 0.0, 1.0, 0.0)
        core_mid = PowerCore(p, 0.5, sign_mid, off_mid)
        core1 = PowerCore(p, 1.0, 1.0, TWO_PI * degree)
    return degree, core0, core_mid, core1


def base_profile(q_n, ell, a=None, branch="homotopic", delta=None):
    """Single-layer profile with odd cores at 0 and 1/2 and +-pi/2 platforms.

    The core at 0 is sgn(x)|x|^(l+1) on |x| <= 1/(2 q_n^2) (or the flat
    exponential core for ell = inf, on |x| <= delta).  The mirrored core
    at 1/2 carries -xi02 for the homotopic branch and pi + xi02 for the
    nonhomotopic one, which makes the profile close up with degree 0 or 1.
    Strictly monotone ramps connect each core edge to the nearest
    platform, so off the cores |xi mod pi| stays above the core edge
    value, and outside the doubled arcs it equals pi/2 exactly.
    """
    smooth, h = _base_params(q_n, ell, a, branch, delta)
    degree, core0, core_mid, core1 = _core_kinds(ell, a, branch, smooth)
    plat1 = PI / 2.0
    plat2 = 3.0 * PI / 2.0 if branch == "nonhomotopic" else -PI / 2.0
    if 2.0 * h >= 0.5 - 2.0 * h:
        raise InvalidParams("cores and ramps would overlap; need h < 1/8")

    def ramp(lo, hi, inner, target, target_side):
        if smooth:
            return Piece(lo, hi, BlendRamp(lo, hi, inner, target, target_side))
        orders = int(ell)
        edge = lo if target_side == "right" else hi
        data = tuple(_kind_eval(inner, edge, r) for r in range(orders + 1))
        flat = (target,) + (0.0,) * orders
        left_v, right_v = (data, flat) if target_side == "right" else (flat, data)
        return hermite_patch(HermiteSpec(lo, hi, left_v, right_v))

    pieces = (
        Piece(0.0, h, core0),
        ramp(h, 2.0 * h, core0, plat1, "right"),
        Piece(2.0 * h, 0.5 - 2.0 * h, Platform(plat1)),
        ramp(0.5 - 2.0 * h, 0.5 - h, core_mid, plat1, "left"),
        Piece(0.5 - h, 0.5 + h, core_mid),
        ramp(0.5 + h, 0.5 + 2.0 * h, core_mid, plat2, "right"),
        Piece(0.5 + 2.0 * h, 1.0 - 2.0 * h, Platform(plat2)),
        ramp(1.0 - 2.0 * h, 1.0 - h, core1, plat2, "left"),
        Piece(1.0 - h, 1.0, core1),
    )
    return AngleProfile(degree, math.inf if smooth else int(ell), a, (pieces,))


def xi0_values(x, q_n, ell, a=None, branch="homotopic", delta=None):
    """Core target values on the two resonant cores, NaN elsewhere."""
    smooth, h = _base_params(q_n, ell, a, branch, delta)
    _, core0, core_mid, core1 = _core_kinds(ell, a, branch, smooth)
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    fx = arr - np.floor(arr)
    out = np.full_like(fx, np.nan)
    m0 = fx <= h
    m1 = fx >= 1.0 - h
    mm = np.abs(fx - 0.5) <= h
    out[m0] = core0.values(fx[m0])
    out[m1] = core1.values(fx[m1]) - core1.offset
    out[mm] = core_mid.values(fx[mm])
    return out


def smooth_bump(center, half_width):
    """Window equal to 1 on the middle tenth scaling of the arc, 0 outside it.

    The transition runs over the outer nine tenths on each side through
    the exp(-1/t) mollifier, so every derivative vanishes at both the
    inner and outer edges.  The arc may sit anywhere strictly inside
    (0, 1) or be centered exactly at 0 (the wrapping resonance arc).
    """
    w = float(half_width)
    c = float(center)
    if not 0.0 < w < 0.25:
        raise InvalidParams("half width must lie in (0, 1/4)")
    tenth = w / 10.0
    if c == 0.0:
        pieces = (
            Piece(0.0, tenth, Platform(1.0)),
            Piece(tenth, w, SmoothStep(tenth, w, 1.0, 0.0)),
            Piece(w, 1.0 - w, Platform(0.0)),
            Piece(1.0 - w, 1.0 - tenth, SmoothStep(1.0 - w, 1.0 - tenth, 0.0, 1.0)),
            Piece(1.0 - tenth, 1.0, Platform(1.0)),
        )
    elif w < c and c + w < 1.0:
        pieces = (
            Piece(0.0, c - w, Platform(0.0)),
            Piece(c - w, c - tenth, SmoothStep(c - w, c - tenth, 0.0, 1.0)),
            Piece(c - tenth, c + tenth, Platform(1.0)),
            Piece(c + tenth, c + w, SmoothStep(c + tenth, c + w, 1.0, 0.0)),
            Piece(c + w, 1.0, Platform(0.0)),
        )
    else:
        raise InvalidParams("arc must be interior or centered at 0")
    return AngleProfile(0, math.inf, None, (pieces,))


def fitted_layer(segments, fill=0.0, max_degree=64, tol=1e-9, grid=512):
    """Layer carrying Chebyshev fits of callables on windowed segments.

    `segments` is a list of (lo, hi, fn, w0, w1): the callable is fitted
    on [lo, hi] and faded to `fill`-relative zero over mollifier windows
    of widths w0 and w1 at the ends.  One segment may wrap past 1 (as
    lo < 1 < hi); it is stored as two pieces sharing coefficients, so
    the wrap knot glues exactly.  Gaps are filled with a constant piece.

    Returns (pieces, max_residual); raises IllConditioned when a fit
    cannot reach `tol` (scaled) by `max_degree`.
    """
    entries = []
    worst = 0.0
    for lo, hi, fn, w0, w1 in segments:
        if not (0.0 <= lo < hi <= lo + 1.0 and lo < 1.0):
            raise InvalidParams(f"bad segment [{lo}, {hi}]")
        scale = 1.0
        coeffs = None
        for deg in (8, 12, 16, 24, 32, 48, max_degree):
            series = _cheb.Chebyshev.interpolate(fn, deg, domain=[lo, hi])
            xs = np.linspace(lo, hi, grid)
            err = np.abs(series(xs) - fn(xs))
            scale = max(1.0, float(np.max(np.abs(fn(xs)))))
            if float(np.max(err)) <= tol * scale:
                coeffs = tuple(float(v) for v in series.coef)
                worst = max(worst, float(np.max(err)) / scale)
                break
            if deg == max_degree:
                raise IllConditioned(
                    f"fit on [{lo}, {hi}] still above {tol:g} at degree {max_degree}"
                )
        kind = Background(lo, hi, coeffs, float(w0), float(w1), 0)
        if hi <= 1.0:
            entries.append(Piece(lo, hi, kind))
        else:
            entries.append(Piece(lo, 1.0, kind))
            entries.append(
                Piece(0.0, hi - 1.0, Background(lo, hi, coeffs, float(w0), float(w1), 1))
            )
    entries.sort(key=lambda p: p.lo)
    pieces = []
    cursor = 0.0
    for piece in entries:
        if piece.lo < cursor:
            raise InvalidParams("segments overlap")
        if piece.lo > cursor:
            pieces.append(Piece(cursor, piece.lo, Platform(fill)))
        pieces.append(piece)
        cursor = piece.hi
    if cursor < 1.0:
        pieces.append(Piece(cursor, 1.0, Platform(fill)))
    return tuple(pieces), worst


_SERIAL_VERSION = 1


def _fmt(v):
    return float(v).hex()


def _kind_tokens(kind):
    if isinstance(kind, Platform):
        return ["Platform", _fmt(kind.value)]
    if isinstance(kind, PowerCore):
        return ["PowerCore", str(kind.power), _fmt(kind.center), _fmt(kind.sign), _fmt(kind.offset)]
    if isinstance(kind, ExpCore):
        return ["ExpCore", _fmt(kind.a), _fmt(kind.center), _fmt(kind.sign), _fmt(kind.offset)]
    if isinstance(kind, HermitePatch):
        return (
            ["HermitePatch", _fmt(kind.lo), _fmt(kind.hi), str(len(kind.left_data))]
            + [_fmt(c) for c in kind.left_data]
            + [_fmt(c) for c in kind.right_data]
        )
    if isinstance(kind, Background):
        return (
            ["Background", _fmt(kind.lo), _fmt(kind.hi), _fmt(kind.w0), _fmt(kind.w1), str(kind.shift), str(len(kind.coeffs))]
            + [_fmt(c) for c in kind.coeffs]
        )
    if isinstance(kind, SmoothStep):
        return ["SmoothStep", _fmt(kind.lo), _fmt(kind.hi), _fmt(kind.y0), _fmt(kind.y1)]
    if isinstance(kind, BlendRamp):
        return (
            ["BlendRamp", _fmt(kind.lo), _fmt(kind.hi), _fmt(kind.target), kind.target_side]
            + _kind_tokens(kind.inner)
        )
    raise InvalidParams(f"cannot serialize kind {type(kind).__name__}")


def _parse_kind(tokens):
    name = tokens.pop(0)
    f = lambda: float.fromhex(tokens.pop(0))
    if name == "Platform":
        return Platform(f())
    if name == "PowerCore":
        return PowerCore(int(tokens.pop(0)), f(), f(), f())
    if name == "ExpCore":
        return ExpCore(f(), f(), f(), f())
    if name == "HermitePatch":
        lo, hi = f(), f()
        n = int(tokens.pop(0))
        left = tuple(f() for _ in range(n))
        right = tuple(f() for _ in range(n))
        return HermitePatch(lo, hi, left, right)
    if name == "Background":
        lo, hi, w0, w1 = f(), f(), f(), f()
        shift = int(tokens.pop(0))
        n = int(tokens.pop(0))
        return Background(lo, hi, tuple(f() for _ in range(n)), w0, w1, shift)
    if name == "SmoothStep":
        return SmoothStep(f(), f(), f(), f())
    if name == "BlendRamp":
        lo, hi, target = f(), f(), f()
        side = tokens.pop(0)
        return BlendRamp(lo, hi, _parse_kind(tokens), target, side)
    raise InvalidParams(f"unknown piece kind {name!r}")


def serialize_profile(profile):
    """Plain-text form; floats as hex so parsing reproduces them exactly."""
    lines = [f"cclab-profile {_SERIAL_VERSION}", f"degree {profile.degree}"]
    if math.isfinite(profile.ell):
        lines.append(f"ell {int(profile.ell)}")
    else:
        lines.append(f"ell inf {_fmt(profile.a) if profile.a is not None else '-'}")
    lines.append(f"layers {len(profile.layers)}")
    for layer in profile.layers:
        lines.append(f"layer {len(layer)}")
        for piece in layer:
            tokens = [_fmt(piece.lo), _fmt(piece.hi)] + _kind_tokens(piece.kind)
            lines.append("piece " + " ".join(tokens))
    return "\n".join(lines) + "\n"


def parse_profile(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines.pop(0).split()
    if header[:1] != ["cclab-profile"] or int(header[1]) != _SERIAL_VERSION:
        raise InvalidParams("unrecognized profile header")
    degree = int(lines.pop(0).split()[1])
    ell_line = lines.pop(0).split()
    if ell_line[1] == "inf":
        ell = math.inf
        a = None if ell_line[2] == "-" else float.fromhex(ell_line[2])
    else:
        ell = int(ell_line[1])
        a = None
    n_layers = int(lines.pop(0).split()[1])
    layers = []
    for _ in range(n_layers):
        n_pieces = int(lines.pop(0).split()[1])
        pieces = []
        for _ in range(n_pieces):
            tokens = lines.pop(0).split()
            if tokens.pop(0) != "piece":
                raise InvalidParams("expected a piece line")
            lo = float.fromhex(tokens.pop(0))
            hi = float.fromhex(tokens.pop(0))
            pieces.append(Piece(lo, hi, _parse_kind(tokens)))
        layers.append(tuple(pieces))
    return AngleProfile(degree, ell, a, tuple(layers))
