"""Circle rotations in 120-bit fixed point: continued fractions, the
two-component resonance intervals around 0 and 1/2, and first-return
combinatorics.

A circle point is an integer in units of 2**-120; one rotation step is a
single modular add, so orbits of length 10**9 carry no rounding error at
all.  Floats only appear on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt

import numpy as np

from . import kernels
from .kernels import DEN, DEN_BITS, HALF

# (sqrt(5) - 1) / 2 and sqrt(2) - 1, rounded to the grid
GOLDEN_FIX = (isqrt(5 << 240) - (1 << DEN_BITS)) // 2
SQRT2M1_FIX = isqrt(2 << 240) - (1 << DEN_BITS)

NAMED = {"golden": GOLDEN_FIX, "sqrt2m1": SQRT2M1_FIX}
_NAMED_QUOTIENT = {"golden": 1, "sqrt2m1": 2}

RATIONAL_CUTOFF = 10 ** 12


class NonIrrational(ValueError):
    """Continued fraction terminated but an irrational was required."""


class OverlapError(ValueError):
    """Requested resonance arcs would meet each other."""


class CapExceeded(RuntimeError):
    """An orbit scan ran out of steps before landing."""


@dataclass(frozen=True)
class RotationNumber:
    """A rotation number with its continued-fraction data.

    ``fixed`` is the 2**-120 grid representation used by every orbit
    computation; ``value`` is its float image.  ``convergents`` holds
    (p_k, q_k) for k = 1..len(partial_quotients).
    """

    value: float
    fixed: int
    partial_quotients: tuple
    convergents: tuple
    bounded_type_M: float
    terminated: bool

    def denominators(self):
        return tuple(q for _, q in self.convergents)


def _fix_of(omega):
    if isinstance(omega, RotationNumber):
        return omega.fixed
    if isinstance(omega, int):
        return omega % DEN
    raise TypeError(f"expected RotationNumber or fixed-point int, got {type(omega)!r}")


def continued_fraction(value, depth=40, require_irrational=False):
    """Expand ``value`` in (0, 1) to at most ``depth`` partial quotients.

    ``value`` may be a float, a Fraction, a "p/q" string, a decimal string,
    or one of the named constants "golden" / "sqrt2m1" (whose quotients are
    emitted symbolically instead of from the 120-bit representation).

    A partial quotient above 10**12 means the input is rational at working
    resolution; expansion stops there and ``terminated`` is set, as it is
    when the Euclid loop bottoms out.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")

    if isinstance(value, str) and value in NAMED:
        a = _NAMED_QUOTIENT[value]
        quotients = (a,) * depth
        fixed = NAMED[value]
        convergents = _convergents(quotients)
        return RotationNumber(
            value=fixed * 0.5 ** DEN_BITS,
            fixed=fixed,
            partial_quotients=quotients,
            convergents=convergents,
            bounded_type_M=_bounded_type(convergents),
            terminated=False,
        )

    if isinstance(value, str):
        if "/" in value:
            r = Fraction(value)
        else:
            r = Fraction(value)  # decimal strings parse exactly
    elif isinstance(value, Fraction):
        r = value
    else:
        r = Fraction(float(value))
    if not 0 < r < 1:
        raise ValueError("rotation number must lie strictly between 0 and 1")

    quotients = []
    num, den = r.numerator, r.denominator
    terminated = False
    while len(quotients) < depth:
        a, rem = divmod(den, num)
        if a > RATIONAL_CUTOFF:
            terminated = True
            break
        quotients.append(a)
        if rem == 0:
            terminated = True
            break
        num, den = rem, num
    if terminated and require_irrational:
        raise NonIrrational(
            f"continued fraction of {value!r} terminated after "
            f"{len(quotients)} quotients"
        )
    quotients = tuple(quotients)
    convergents = _convergents(quotients)
    fixed = (2 * r.numerator * DEN + r.denominator) // (2 * r.denominator)
    return RotationNumber(
        value=float(r),
        fixed=fixed,
        partial_quotients=quotients,
        convergents=convergents,
        bounded_type_M=_bounded_type(convergents),
        terminated=terminated,
    )


def _convergents(quotients):
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    out = []
    for a in quotients:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return tuple(out)


def _bounded_type(convergents):
    if not convergents:
        return math.inf
    worst = 0.0
    q_prev = 1
    for _, q in convergents:
        worst = max(worst, q / q_prev)
        q_prev = q
    return worst


@dataclass(frozen=True)
class ResonanceIntervals:
    """The pair of arcs of half-width 1/(C*q**2) centred at 0 and 1/2."""

    q: int
    C: float
    hw_fix: int = field(init=False)

    def __post_init__(self):
        hw = Fraction(1, 1) / (Fraction(self.C) * self.q * self.q)
        if hw * 4 >= 1:
            raise OverlapError(
                f"half-width 1/({self.C}*{self.q}**2) reaches the midpoint "
                "between arc centres"
            )
        object.__setattr__(self, "hw_fix", int(hw * DEN))

    @property
    def half_width(self):
        return self.hw_fix * 0.5 ** DEN_BITS

    def arcs(self):
        return ((0, self.hw_fix), (HALF, self.hw_fix))

    def tenth(self):
        return ResonanceIntervals(self.q, self.C * 10)

    def scaled(self, factor):
        return ResonanceIntervals(self.q, self.C * factor)

    def contains_fix(self, pos):
        """Component index (0 for the arc at 0, 1 for the arc at 1/2), or
        None when the point is outside both arcs."""
        pos %= DEN
        if pos <= self.hw_fix or pos >= DEN - self.hw_fix:
            return 0
        if HALF - self.hw_fix <= pos <= HALF + self.hw_fix:
            return 1
        return None

    def contains(self, x):
        return self.contains_fix(round((x % 1.0) * DEN))

    def sample_fix(self, n, component=None):
        """n interior sample points per requested component (midpoint
        offsets, endpoints excluded), as fixed-point ints."""
        comps = (0, 1) if component is None else (component,)
        width = 2 * self.hw_fix
        out = []
        for ci in comps:
            center = 0 if ci == 0 else HALF
            lo = center - self.hw_fix
            for j in range(n):
                out.append((lo + (width * (2 * j + 1)) // (2 * n)) % DEN)
        return out


@dataclass(frozen=True)
class ReturnRecord:
    x_fix: int
    direction: str
    time: int
    landing_fix: int

    @property
    def x(self):
        return self.x_fix * 0.5 ** DEN_BITS

    @property
    def landing(self):
        return self.landing_fix * 0.5 ** DEN_BITS


def _default_cap(intervals):
    return 32 * int(math.ceil(intervals.C)) * intervals.q * intervals.q + 1000


def first_return(omega, intervals, x_fix, direction="forward", cap=None):
    """First entry time of the orbit of ``x_fix`` into ``intervals``.

    The starting point itself is not tested: this is a return time when
    x is inside and a hitting time otherwise.  Backward returns follow the
    inverse rotation.  Raises CapExceeded when no landing occurs within
    ``cap`` steps (default scales with C*q**2).
    """
    step = _fix_of(omega)
    if direction == "backward":
        step = (DEN - step) % DEN
    elif direction != "forward":
        raise ValueError("direction must be 'forward' or 'backward'")
    if cap is None:
        cap = _default_cap(intervals)
    n, landing = kernels.first_return_scan(x_fix % DEN, step, intervals.hw_fix,
                                           cap, 3)
    if n == 0:
        raise CapExceeded(
            f"no return within {cap} steps from {x_fix * 0.5 ** DEN_BITS:.6g} "
            f"({direction})"
        )
    return ReturnRecord(x_fix=x_fix % DEN, direction=direction, time=n,
                        landing_fix=landing)


def min_return_time(omega, intervals, cap=None):
    """Exact minimum of the first-return time over the whole interval pair.

    Equals the first n >= 1 with n*omega within twice the half-width of
    either arc centre: the worst-placed start sits at one arc edge and
    lands at the far edge of the same or the other component.
    """
    step = _fix_of(omega)
    if cap is None:
        cap = _default_cap(intervals)
    n, _ = kernels.first_return_scan(0, step, 2 * intervals.hw_fix, cap, 3)
    if n == 0:
        raise CapExceeded(f"no return within {cap} steps")
    return n


@dataclass(frozen=True)
class ReturnRatioStats:
    min_r: int
    max_r_tenth: int
    ratio: float
    k1: int
    grid: int


def return_ratio_stats(omega, intervals, grid=100, M=None):
    """Spread between fastest return to the interval and slowest return to
    its tenth, with the depth k1 at which M**-k1 drops below that ratio.

    ``omega`` must be a RotationNumber unless ``M`` is given explicitly.
    The slowest return is taken over a per-component sampling grid; return
    times to an arc pair are piecewise constant with few pieces, so a
    modest grid sees every value.
    """
    if M is None:
        if not isinstance(omega, RotationNumber):
            raise TypeError("need a RotationNumber (or explicit M) for k1")
        M = omega.bounded_type_M
    tenth = intervals.tenth()
    min_r = min_return_time(omega, intervals)
    cap = _default_cap(tenth)
    worst = 0
    for pos in tenth.sample_fix(grid):
        for _ in range(5):
            try:
                rec = first_return(omega, tenth, pos, cap=cap)
                break
            except CapExceeded:
                cap *= 2
        else:
            raise CapExceeded("return scan kept exceeding its cap")
        worst = max(worst, rec.time)
    ratio = min_r / worst
    k1 = max(1, math.ceil(-math.log(ratio) / math.log(M)))
    return ReturnRatioStats(min_r=min_r, max_r_tenth=worst, ratio=ratio,
                            k1=k1, grid=grid)
