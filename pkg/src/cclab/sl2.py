"""Overflow-free algebra of SL(2,R) matrices in rotation-diagonal-rotation
coordinates.

A hyperbolic matrix A (norm above 1) factors uniquely as
R_psi * diag(e**alpha, e**-alpha) * R_phi with alpha = log ||A||, phi in
[0, pi).  Rotations here are counterclockwise:
R_t = [[cos t, -sin t], [sin t, cos t]].  All products are computed in
these coordinates through the log domain, so alpha in the thousands never
touches an exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .kernels import normalize_triple, wrap_pm_pi

ALPHA_MIN = 1e-6

PI = math.pi
LOG2 = math.log(2.0)
NEG_INF = float("-inf")


class NonHyperbolic(ArithmeticError):
    """A matrix or product has no usable expansion axis."""


class DegenerateDenominator(ZeroDivisionError):
    """Angle-correction coefficients need both factors strictly hyperbolic."""


class StepUnderflow(ArithmeticError):
    """Finite differences lost the signal below rounding noise."""


@dataclass(frozen=True)
class Sl2Matrix:
    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def from_array(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @property
    def array(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    def check_unimodular(self, tol=1e-10):
        scale = max(1.0, self.a11 ** 2 + self.a12 ** 2
                    + self.a21 ** 2 + self.a22 ** 2)
        if abs(self.det - 1.0) > tol * scale:
            raise ValueError(f"determinant {self.det!r} is not 1 "
                             f"(tolerance {tol} relative to norm**2)")
        return self


@dataclass(frozen=True)
class HyperbolicTriple:
    """psi, log_norm alpha, phi with alpha >= 0 and phi in [0, pi)."""

    psi: float
    alpha: float
    phi: float

    def __iter__(self):
        return iter((self.psi, self.alpha, self.phi))

    @property
    def log_norm(self):
        return self.alpha

    def matrix(self, log_scale=0.0):
        """Dense entries of e**-log_scale * R_psi L R_phi (pass
        log_scale=alpha to see the shape of an enormous product)."""
        c1, s1 = math.cos(self.psi), math.sin(self.psi)
        c2, s2 = math.cos(self.phi), math.sin(self.phi)
        ea = math.exp(self.alpha - log_scale)
        ia = math.exp(-self.alpha - log_scale)
        return np.array([
            [c1 * ea * c2 - s1 * ia * s2, -c1 * ea * s2 - s1 * ia * c2],
            [s1 * ea * c2 + c1 * ia * s2, -s1 * ea * s2 + c1 * ia * c2],
        ])


def _as_entries(A):
    if isinstance(A, Sl2Matrix):
        return A.a11, A.a12, A.a21, A.a22
    m = np.asarray(A, dtype=float)
    if m.shape == (2, 2):
        return float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1])
    if m.shape == (4,):
        return float(m[0]), float(m[1]), float(m[2]), float(m[3])
    raise ValueError(f"expected 2x2 matrix, got shape {m.shape}")


def decompose(A, log_scale=0.0, check=True):
    """Triple of the matrix e**log_scale * A.

    The determinant of the true matrix must be 1; it is checked whenever
    the product det(A)*e**(2*log_scale) is finite.  Raises NonHyperbolic
    when the norm does not exceed 1 + ALPHA_MIN (a near-rotation has no
    distinguished axes; accumulate densely instead).
    """
    a11, a12, a21, a22 = _as_entries(A)
    if check:
        det = a11 * a22 - a12 * a21
        scale = max(1.0, a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22)
        rescale = math.exp(2.0 * log_scale) if abs(log_scale) < 300 else None
        if rescale is not None and abs(det * rescale - 1.0) > 1e-10 * scale * rescale:
            raise ValueError(f"determinant {det * rescale!r} is not 1")
    psi, alpha, phi = kernels.decompose_entries(a11, a12, a21, a22, log_scale)
    if alpha <= ALPHA_MIN:
        raise NonHyperbolic(f"log-norm {alpha:.3e} is below {ALPHA_MIN}")
    return HyperbolicTriple(psi, alpha, phi)


def reconstruct(t, log_scale=0.0):
    """Dense entries of e**-log_scale * matrix(t), as an Sl2Matrix when
    log_scale == 0 and a plain array otherwise."""
    if not isinstance(t, HyperbolicTriple):
        t = HyperbolicTriple(*t)
    m = t.matrix(log_scale)
    return Sl2Matrix.from_array(m) if log_scale == 0.0 else m


def rotation(theta):
    """The rotation R_theta as a (non-hyperbolic) triple, alpha = 0."""
    psi, alpha, phi = normalize_triple(theta / 2.0, 0.0, theta / 2.0)
    return HyperbolicTriple(psi, alpha, phi)


def compose(B, A, strict=True):
    """Triple of the product B*A, entirely in (psi, alpha, phi) coordinates.

    Raises NonHyperbolic when the product's log-norm falls below
    ALPHA_MIN, which tells the caller to re-accumulate that stretch
    densely; pass strict=False to receive the near-rotation triple anyway.
    """
    psi, alpha, phi = kernels.compose_step(B.psi, B.alpha, B.phi,
                                           A.psi, A.alpha, A.phi)
    if strict and alpha < ALPHA_MIN:
        raise NonHyperbolic(f"product log-norm {alpha:.3e} is below {ALPHA_MIN}")
    return HyperbolicTriple(psi, alpha, phi)


def log_norm_bound(alpha_a, alpha_b, theta):
    """log N with N = 2cosh(2(aA+aB))cos**2(t) + 2cosh(2(aA-aB))sin**2(t);
    the squared product norm sits between N/4 and N."""
    ct = math.cos(theta)
    st = math.sin(theta)
    lc = 2.0 * math.log(abs(ct)) if ct != 0.0 else NEG_INF
    ls = 2.0 * math.log(abs(st)) if st != 0.0 else NEG_INF
    term1 = LOG2 + _lcosh(2.0 * (alpha_a + alpha_b)) + lc
    term2 = LOG2 + _lcosh(2.0 * abs(alpha_a - alpha_b)) + ls
    return _logaddexp(term1, term2)


def _lcosh(x):
    return x + math.log1p(math.exp(-2.0 * x)) - LOG2


def _lsinh(x):
    if x == 0.0:
        return NEG_INF
    if x < 20.0:
        return math.log(math.sinh(x))
    return x + math.log1p(-math.exp(-2.0 * x)) - LOG2


def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _logsubexp(a, b):
    # log|e**a - e**b| with sign; a, b finite or -inf
    if a == b:
        return NEG_INF, 0.0
    if a > b:
        big, small, sign = a, b, 1.0
    else:
        big, small, sign = b, a, -1.0
    if small == NEG_INF:
        return big, sign
    return big + math.log1p(-math.exp(small - big)), sign


def fold_half_pi(x):
    """Reduce an angle mod pi to (-pi/2, pi/2]."""
    x = math.fmod(x, PI)
    if x > PI / 2:
        x -= PI
    elif x <= -PI / 2:
        x += PI
    return x


@dataclass(frozen=True)
class AngleCorrection:
    """Closed-form angle updates for the product B*A at inner angle theta.

    phi_corr satisfies phi_BA = phi_A - phi_corr and psi_corr satisfies
    psi_BA = psi_B + psi_corr, jointly on one branch: normalizing
    (psi_B + psi_corr, alpha, phi_A - phi_corr) reproduces compose().
    a, b (and the primed pair) may overflow to inf for huge log-norms;
    the corrections themselves are always finite, computed in the log
    domain.
    """

    theta: float
    a: float
    b: float
    a_prime: float
    b_prime: float
    phi_corr: float
    psi_corr: float


def _signed_f(la, sa, lb, sb, theta, flip_tan):
    """log|f| and sign for f = a*cot(theta) +/- b*tan(theta), from the
    signed logs of a and b."""
    ct = math.cos(theta)
    st = math.sin(theta)
    # cot term
    if ct == 0.0:
        l1, s1 = NEG_INF, 1.0
    else:
        l1 = la + math.log(abs(ct)) - math.log(abs(st))
        s1 = sa * (1.0 if ct > 0 else -1.0) * (1.0 if st > 0 else -1.0)
    # tan term
    if st == 0.0:
        raise ValueError("theta must not be a multiple of pi here")
    l2 = lb + math.log(abs(st)) - math.log(abs(ct)) if ct != 0.0 else math.inf
    s2 = sb * (1.0 if st > 0 else -1.0) * (1.0 if ct > 0 else -1.0)
    if flip_tan:
        s2 = -s2
    if l2 == math.inf:
        return math.inf, s2
    if s1 == s2 or l1 == NEG_INF or l2 == NEG_INF:
        if l1 == NEG_INF:
            return l2, s2
        if l2 == NEG_INF:
            return l1, s1
        return _logaddexp(l1, l2), s1
    lf, flip = _logsubexp(l1, l2)
    return lf, s1 * flip


def _half_gap(lf, sf):
    """(pi/2 - atan f)/1 computed stably from the signed log of f."""
    if lf == math.inf:
        return 0.0 if sf > 0 else PI
    if sf >= 0:
        return math.atan(math.exp(-lf)) if lf > 0 else PI / 2 - math.atan(math.exp(lf))
    return PI - math.atan(math.exp(-lf)) if lf > 0 else PI / 2 + math.atan(math.exp(lf))


def _table_value(lf, sf, lb, sb, theta, half_pi_row=(0.0, -PI / 2)):
    if theta == 0.0:
        return 0.0
    if theta == PI / 2:
        return half_pi_row[0] if sb >= 0 or lb == NEG_INF else half_pi_row[1]
    g = _half_gap(lf, sf)
    if theta < PI / 2:
        return -0.5 * g
    return (PI / 2 if sb >= 0 or lb == NEG_INF else -PI / 2) - 0.5 * g


def angle_correction(alpha_a, alpha_b, theta):
    """Angle updates for composing expansions alpha_a, alpha_b across the
    inner angle theta (reduced mod pi into [0, pi)).

    The six-branch closed form uses
    a  = sinh(2(aA+aB)) / (2 sinh 2aB),  b  = sinh(2(aA-aB)) / (2 sinh 2aB)
    and the primed pair with denominator 2 sinh 2aA; f = a cot t + b tan t
    drives phi, f' = a' cot t - b' tan t drives psi.  Everything runs on
    signed logs so alpha in the thousands is fine.
    """
    if alpha_a <= 0.0 or alpha_b <= 0.0:
        raise DegenerateDenominator("both factors must have positive log-norm")
    theta = theta - math.floor(theta / PI) * PI
    if theta >= PI:
        theta -= PI
    elif theta < 0.0:
        theta += PI
    s = alpha_a + alpha_b
    d = alpha_a - alpha_b
    ls = _lsinh(2.0 * s)
    ld = _lsinh(2.0 * abs(d))
    sd = 1.0 if d > 0 else (-1.0 if d < 0 else 0.0)
    la = ls - LOG2 - _lsinh(2.0 * alpha_b)
    lb = ld - LOG2 - _lsinh(2.0 * alpha_b)
    lap = ls - LOG2 - _lsinh(2.0 * alpha_a)
    lbp = ld - LOG2 - _lsinh(2.0 * alpha_a)

    if theta == 0.0:
        phi_c = 0.0
        psi_table = 0.0
    else:
        lf, sf = _signed_f(la, 1.0, lb, sd, theta, flip_tan=False)
        phi_c = _table_value(lf, sf, lb, sd, theta)
        lfp, sfp = _signed_f(lap, 1.0, lbp, sd, theta, flip_tan=True)
        # at theta = pi/2 the psi branch takes the values -pi/2 (b' >= 0)
        # and 0 (b' < 0): the limits of the open-interval rows, not a copy
        # of the phi row
        psi_table = _table_value(lfp, sfp, lbp, sd, theta,
                                 half_pi_row=(-PI / 2, 0.0))

    # the closed forms pin both angles mod pi only; one composition fixes
    # the joint branch (and the overall sign of the psi table)
    psi_m, _, phi_m = kernels.compose_step(0.0, alpha_b, 0.0,
                                           theta, alpha_a, 0.0)
    delta = round((phi_m + phi_c) / PI)
    psi_ref = psi_m + delta * PI
    psi_c = -psi_table + round((psi_ref + psi_table) / PI) * PI
    def _exp(x):
        return math.exp(x) if x < 709.0 else math.inf

    return AngleCorrection(
        theta=theta,
        a=_exp(la), b=sd * _exp(lb),
        a_prime=_exp(lap), b_prime=sd * _exp(lbp),
        phi_corr=phi_c, psi_corr=psi_c,
    )


def _probe_quantity(alpha_a, alpha_b, which, alpha0=None):
    def q(theta):
        psi, alpha, phi = kernels.compose_step(0.0, alpha_b, 0.0,
                                               theta, alpha_a, 0.0)
        if which == "phi":
            return fold_half_pi(phi)
        if which == "psi":
            return fold_half_pi(psi)
        if which == "norm":
            return math.exp(alpha - alpha0)
        raise ValueError("which must be 'phi', 'psi' or 'norm'")
    return q


def derivative_bound_probe(alpha_a, alpha_b, theta, order, which):
    """Measured value/derivative of a composed coordinate against its
    scaling law.

    order 0 measures the folded angle itself (or the norm); orders 1 and 2
    are central finite differences in theta with one Richardson step
    (step h = max(1e-6, |theta - pi/2| / 100)).  bound_ratio divides the
    measurement by e**(-2 alpha) * |theta - pi/2|**-(order+1) for angles
    (alpha_a for phi, alpha_b for psi) and by ||BA|| * |theta-pi/2|**-(order+1)
    for the norm, so ratios across a sweep expose the constant in front of
    the scaling law.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    gap = abs(theta - PI / 2)
    if gap == 0.0 or -math.log(gap) > 2.0 * alpha_a - math.log(100.0):
        raise ValueError("need |theta - pi/2|**-1 <= e**(2 alpha_A)/100")
    _, alpha0, _ = kernels.compose_step(0.0, alpha_b, 0.0, theta, alpha_a, 0.0)
    q = _probe_quantity(alpha_a, alpha_b, which, alpha0=alpha0)
    scale = 1.0

    if order == 0:
        measured = q(theta)
        if which == "norm":
            measured = 1.0  # by construction: the quantity normalized at theta
            scale = math.exp(alpha0) if alpha0 < 700 else math.inf
    else:
        h = max(1e-6, gap / 100.0)
        angular = which in ("phi", "psi")

        def delta_q(t1, t0):
            # angles live mod pi: difference taken on the closest branch
            d = q(t1) - q(t0)
            return fold_half_pi(d) if angular else d

        def diff(hh):
            if order == 1:
                return delta_q(theta + hh, theta - hh) / (2.0 * hh)
            return (delta_q(theta + hh, theta)
                    - delta_q(theta, theta - hh)) / (hh * hh)

        base = max(abs(q(theta + h)), abs(q(theta - h)), abs(q(theta)), 1e-300)
        signal = abs(delta_q(theta + h, theta - h)) if order == 1 else \
            abs(delta_q(theta + h, theta) - delta_q(theta, theta - h))
        if signal < 16.0 * math.ulp(base):
            raise StepUnderflow(
                f"finite-difference signal {signal:.3e} below resolution "
                f"at step {h:.3e}"
            )
        measured = (4.0 * diff(h / 2.0) - diff(h)) / 3.0
        if which == "norm":
            scale = math.exp(alpha0) if alpha0 < 700 else math.inf

    if which == "norm":
        ratio = abs(measured) * gap ** (order + 1)
        measured = measured * scale
    else:
        twoa = 2.0 * (alpha_a if which == "phi" else alpha_b)
        ratio = abs(measured) * math.exp(min(twoa, 700.0)) * gap ** (order + 1)
    return measured, ratio


def decompose_many(entries, log_scales=0.0):
    """Vectorized decompose over an (n, 4) entry array (rows a11, a12,
    a21, a22); returns (psi, alpha, phi) arrays.  No hyperbolicity check."""
    m = np.asarray(entries, dtype=float)
    e = 0.5 * (m[:, 0] + m[:, 3])
    h = 0.5 * (m[:, 2] - m[:, 1])
    f = 0.5 * (m[:, 0] - m[:, 3])
    g = 0.5 * (m[:, 2] + m[:, 1])
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    big_s = np.arctan2(h, e)
    big_d = np.where((f == 0.0) & (g == 0.0), 0.0, np.arctan2(g, f))
    alpha = np.asarray(log_scales, dtype=float) + np.log(q + r)
    psi = 0.5 * (big_s + big_d)
    phi = 0.5 * (big_s - big_d)
    k = np.floor(phi / PI)
    phi = phi - k * PI
    psi = psi + k * PI
    over = phi >= PI
    phi = np.where(over, phi - PI, phi)
    psi = np.where(over, psi + PI, psi)
    psi = np.remainder(psi + PI, 2.0 * PI) - PI
    psi = np.where(psi == -PI, PI, psi)
    return psi, alpha, phi
