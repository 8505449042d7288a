"""Quasi-periodic SL(2,R) cocycles over circle rotations.

A cocycle couples a rotation number with a fibre map A: T -> SL(2,R) and
drives the matrix products A^n(x) = A(T^{n-1}x) * ... * A(x).  Three fibre
kinds are supported: the angle family Lambda * R_{pi/2 - xi(x)} driven by a
layered angle profile, Schrodinger matrices [[v(x)-E, -1], [1, 0]], and
constant maps.  Products accumulate as hyperbolic triples, with a dense
rescaled fallback through non-hyperbolic stretches, so every block norm is
carried in log scale and n * log(lam) up to about 1e6 stays finite.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .kernels import DEN
from .profiles import AngleProfile
from .rotation import ResonanceIntervals, RotationNumber, first_return
from .sl2 import ALPHA_MIN, HyperbolicTriple, NonHyperbolic, Sl2Matrix, fold_half_pi

PI = math.pi
HALF_PI = 0.5 * math.pi


def as_fix(x):
    """Coerce a circle point to the 2**-120 grid.

    Ints are taken as already-fixed coordinates (mod 1); floats and
    Fractions are converted exactly and rounded to the nearest grid point.
    """
    if isinstance(x, bool):
        raise TypeError("circle point cannot be a bool")
    if isinstance(x, int):
        return x % DEN
    if isinstance(x, float):
        x = Fraction(x)
    if isinstance(x, Fraction):
        return int(round((x % 1) * DEN)) % DEN
    raise TypeError(f"expected int, float or Fraction, got {type(x)!r}")


@dataclass(frozen=True)
class AngleFamily:
    """Fibre map Lambda * R_{pi/2 - xi(x)} with Lambda = diag(lam, 1/lam)."""

    lam: float
    xi: AngleProfile

    def __post_init__(self):
        if not self.lam > 1.0:
            raise ValueError("angle family needs lam > 1")

    @property
    def loglam(self):
        return math.log(self.lam)


@dataclass(frozen=True)
class Schrodinger:
    """Fibre map [[v(x) - energy, -1], [1, 0]].

    ``v`` is an AngleProfile or any callable accepting an ndarray of circle
    points and returning potential values.
    """

    v: object
    energy: float

    def potential(self, x):
        if isinstance(self.v, AngleProfile):
            return self.v.values(x)
        return np.asarray(self.v(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class Constant:
    """Constant fibre map; the matrix must be unimodular."""

    matrix: Sl2Matrix

    def __post_init__(self):
        self.matrix.check_unimodular()


@dataclass(frozen=True)
class Cocycle:
    omega: RotationNumber
    kind: object
    degree: int


def angle_family(omega, lam, xi):
    """Cocycle (omega, Lambda * R_{pi/2 - xi}); degree comes from xi."""
    return Cocycle(omega=omega, kind=AngleFamily(lam=float(lam), xi=xi),
                   degree=xi.degree)


def schrodinger(omega, v, energy):
    """Schrodinger cocycle at the given energy (degree 0)."""
    return Cocycle(omega=omega, kind=Schrodinger(v=v, energy=float(energy)),
                   degree=0)


def constant(omega, matrix):
    """Constant cocycle (degree 0)."""
    if not isinstance(matrix, Sl2Matrix):
        matrix = Sl2Matrix.from_array(matrix)
    return Cocycle(omega=omega, kind=Constant(matrix=matrix), degree=0)


def evaluate(c, x):
    """The single fibre matrix A(x), unimodular to rounding."""
    xf = as_fix(x) * 0.5 ** kernels.DEN_BITS
    k = c.kind
    if isinstance(k, AngleFamily):
        theta = HALF_PI - k.xi.value(xf)
        ct, st = math.cos(theta), math.sin(theta)
        return Sl2Matrix(k.lam * ct, -k.lam * st, st / k.lam, ct / k.lam)
    if isinstance(k, Schrodinger):
        vv = float(k.potential(np.array([xf]))[0])
        return Sl2Matrix(vv - k.energy, -1.0, 1.0, 0.0)
    return k.matrix


@dataclass(frozen=True)
class BlockRecord:
    """One return block inside a longer product: ``start`` steps into the
    chain, lasting ``time`` steps, with its own triple."""

    start: int
    time: int
    triple: HyperbolicTriple


@dataclass(frozen=True)
class TransferResult:
    """Decomposed product A^n(x) (forward) or A^n(T^-n x) (backward).

    ``ok`` is False when the product norm sits below the hyperbolicity
    floor; the triple still reconstructs the matrix but its angles carry no
    directional meaning.  ``blocks`` holds per-return-block records when
    transfer was asked to split at interval visits.
    """

    x_fix: int
    n: int
    direction: str
    triple: HyperbolicTriple
    ok: bool
    blocks: tuple = None

    @property
    def x(self):
        return self.x_fix * 0.5 ** kernels.DEN_BITS

    def matrix(self, log_scale=0.0):
        return self.triple.matrix(log_scale)


def _af_entries(phis, lam):
    out = np.empty((phis.size, 4))
    np.cos(phis, out=out[:, 0])
    np.sin(phis, out=out[:, 2])
    out[:, 1] = out[:, 2] * -lam
    out[:, 3] = out[:, 0] / lam
    out[:, 0] *= lam
    out[:, 2] /= lam
    return out


def _factor_entries(c, orbit):
    k = c.kind
    if isinstance(k, AngleFamily):
        return _af_entries(HALF_PI - k.xi.values(orbit), k.lam)
    if isinstance(k, Schrodinger):
        out = np.empty((orbit.size, 4))
        out[:, 0] = k.potential(orbit) - k.energy
        out[:, 1] = -1.0
        out[:, 2] = 1.0
        out[:, 3] = 0.0
        return out
    m = k.matrix
    return np.tile((m.a11, m.a12, m.a21, m.a22), (orbit.size, 1))


def _chain(c, start_fix, n):
    """Accumulate the n-step product starting at ``start_fix``.

    Returns (psi, alpha, phi, ok).  The angle-family fast path composes
    triples directly; any non-hyperbolic collapse falls back to the dense
    rescaled chain for the whole stretch.
    """
    orbit, _ = kernels.orbit_floats(start_fix, c.omega.fixed, n)
    k = c.kind
    if isinstance(k, AngleFamily) and k.loglam > ALPHA_MIN:
        phis = HALF_PI - k.xi.values(orbit)
        psi, alpha, phi, used = kernels.chain_anglefamily(phis, k.loglam,
                                                          ALPHA_MIN)
        if used == n:
            return psi, alpha, phi, True
        return kernels.chain_dense(_af_entries(phis, k.lam), ALPHA_MIN)
    return kernels.chain_dense(_factor_entries(c, orbit), ALPHA_MIN)


def transfer(c, x, n, direction="forward", block_intervals=None):
    """Product of n fibre matrices along the orbit of x.

    Forward gives A^n(x); backward gives A^n(T^-n x), the block that ends
    at x.  With ``block_intervals`` the chain is additionally split at
    every orbit landing inside the intervals and per-block triples are
    recorded (the total is still accumulated in one unbroken pass).
    """
    if n < 0:
        raise ValueError("block length must be nonnegative")
    x_fix = as_fix(x)
    if direction == "forward":
        start = x_fix
    elif direction == "backward":
        start = (x_fix - n * c.omega.fixed) % DEN
    else:
        raise ValueError("direction must be 'forward' or 'backward'")
    if n == 0:
        return TransferResult(x_fix=x_fix, n=0, direction=direction,
                              triple=HyperbolicTriple(0.0, 0.0, 0.0), ok=False)
    psi, alpha, phi, ok = _chain(c, start, n)
    blocks = None
    if block_intervals is not None:
        blocks = _split_blocks(c, start, n, block_intervals)
    return TransferResult(x_fix=x_fix, n=n, direction=direction,
                          triple=HyperbolicTriple(psi, alpha, phi), ok=ok,
                          blocks=blocks)


def _split_blocks(c, start, n, intervals):
    step = c.omega.fixed
    cuts = []
    pos = start
    for j in range(1, n):
        pos = (pos + step) % DEN
        if intervals.contains_fix(pos) is not None:
            cuts.append(j)
    cuts.append(n)
    out = []
    lo = 0
    pos = start
    for hi in cuts:
        m = hi - lo
        psi, alpha, phi, _ = _chain(c, pos, m)
        out.append(BlockRecord(start=lo, time=m,
                               triple=HyperbolicTriple(psi, alpha, phi)))
        pos = (pos + m * step) % DEN
        lo = hi
    return tuple(out)


@dataclass(frozen=True)
class FiniteLeEstimate:
    """Finite-scale Lyapunov data over a sampling grid.

    ``value`` is the grid average of (1/n) log ||A^n(x_j)||; mu_lower and
    mu_upper are the extreme per-point normalized norms ||A^n(x)||^{1/n},
    so log(mu_lower) <= value <= log(mu_upper) always holds.
    """

    n: int
    grid_size: int
    value: float
    mu_lower: float
    mu_upper: float
    per_return: bool = False
    min_time: int = None
    max_time: int = None


def _le_grid(restrict, grid):
    if restrict is None:
        return [((2 * j + 1) * DEN) // (2 * grid) for j in range(grid)]
    if isinstance(restrict, ResonanceIntervals):
        per = max(1, grid // 2)
        return restrict.sample_fix(per)
    lo, hi = restrict
    lo_fix, hi_fix = as_fix(lo), as_fix(hi)
    width = (hi_fix - lo_fix) % DEN
    if width == 0:
        raise ValueError("empty restriction interval")
    return [(lo_fix + (width * (2 * j + 1)) // (2 * grid)) % DEN
            for j in range(grid)]


def finite_le(c, n, grid, restrict=None, per_return=False, threads=None):
    """Finite Lyapunov exponent estimate by midpoint quadrature.

    ``restrict`` narrows sampling to a ResonanceIntervals pair or an
    (lo, hi) subinterval.  With ``per_return`` each sample point uses its
    own forward first-return time to ``restrict`` instead of the fixed n,
    which is the return-normalized regime the growth bounds live in.
    Points are processed independently and reduced in index order, so the
    result does not depend on the thread count.
    """
    if grid < 64:
        raise ValueError("grid must be at least 64")
    if per_return and not isinstance(restrict, ResonanceIntervals):
        raise ValueError("per_return needs a ResonanceIntervals restriction")
    if not per_return and n < 1:
        raise ValueError("n must be positive")
    pts = _le_grid(restrict, grid)
    if per_return:
        times = [first_return(c.omega, restrict, p).time for p in pts]
    else:
        times = [n] * len(pts)

    rates = np.empty(len(pts))

    def work(j):
        _, alpha, _, _ = _chain(c, pts[j], times[j])
        rates[j] = alpha / times[j]

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(pts))))
    else:
        for j in range(len(pts)):
            work(j)

    return FiniteLeEstimate(
        n=n, grid_size=len(pts), value=float(np.mean(rates)),
        mu_lower=math.exp(float(rates.min())),
        mu_upper=math.exp(float(rates.max())),
        per_return=per_return,
        min_time=min(times) if per_return else None,
        max_time=max(times) if per_return else None,
    )


def boundary_angle_sum(c, x, r_plus=None, r_minus=None, intervals=None):
    """psi of the backward return block plus phi of the forward one, less
    pi/2, folded to (-pi/2, pi/2].

    ``r_plus`` / ``r_minus`` are the forward and backward first-return
    times at x; omit them (passing ``intervals``) to have them computed.
    When ``intervals`` is given the point must lie inside it.  Raises
    NonHyperbolic if either block norm sits below the floor, since the
    boundary angles of a near-rotation block carry no meaning.
    """
    x_fix = as_fix(x)
    if intervals is not None and intervals.contains_fix(x_fix) is None:
        raise ValueError("x lies outside the resonance intervals")
    if r_plus is None or r_minus is None:
        if intervals is None:
            raise ValueError("need intervals when return times are omitted")
        if r_plus is None:
            r_plus = first_return(c.omega, intervals, x_fix, "forward").time
        if r_minus is None:
            r_minus = first_return(c.omega, intervals, x_fix, "backward").time
    fwd = transfer(c, x_fix, r_plus, "forward")
    bwd = transfer(c, x_fix, r_minus, "backward")
    if not fwd.ok:
        raise NonHyperbolic(f"forward block of length {r_plus} is not "
                            f"hyperbolic (alpha={fwd.triple.alpha:.3e})")
    if not bwd.ok:
        raise NonHyperbolic(f"backward block of length {r_minus} is not "
                            f"hyperbolic (alpha={bwd.triple.alpha:.3e})")
    return fold_half_pi(bwd.triple.psi + fwd.triple.phi - HALF_PI)
