"""Scalar hot-path kernels, pure Python reference implementation.

The compiled extension (``cclab._corekernels``) mirrors every public
function in this module with identical semantics; ``cclab.kernels`` picks
whichever is importable.  Keep the two in lockstep.

Conventions used throughout the package:

* rotations are counterclockwise, ``R(t) = [[cos t, -sin t], [sin t, cos t]]``
* a hyperbolic triple ``(psi, alpha, phi)`` stands for the matrix
  ``R(psi) @ diag(e**alpha, e**-alpha) @ R(phi)`` with ``alpha >= 0`` and
  ``phi`` normalised into ``[0, pi)``
* circle points are carried as integers in units of ``2**-120`` so that
  orbits of the rotation are exact integer arithmetic
"""

import math

import numpy as np

PI = math.pi
TWO_PI = 2.0 * math.pi
LOG2 = math.log(2.0)
NEG_INF = float("-inf")

DEN_BITS = 120
DEN = 1 << DEN_BITS
HALF = DEN >> 1


def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _lcosh(x):
    """log(cosh x) for x >= 0, safe for any magnitude."""
    return x + math.log1p(math.exp(-2.0 * x)) - LOG2


def _lsinh(x):
    """log(sinh x) for x >= 0, safe for any magnitude."""
    if x == 0.0:
        return NEG_INF
    if x < 20.0:
        # below this sinh cannot overflow; the log-domain form would hit
        # log1p(-1) for x under half an ulp of 1 in exp(-2x)
        return math.log(math.sinh(x))
    return x + math.log1p(-math.exp(-2.0 * x)) - LOG2


def wrap_pm_pi(x):
    """Reduce an angle to (-pi, pi].  Exact on exact multiples of pi."""
    if -PI < x <= PI:
        return x
    x = math.fmod(x, TWO_PI)
    if x <= -PI:
        x += TWO_PI
    elif x > PI:
        x -= TWO_PI
    return x


def normalize_triple(psi, alpha, phi):
    """Move phi into [0, pi) using the matrix-preserving shift
    (psi, phi) -> (psi + k*pi, phi - k*pi), then wrap psi to (-pi, pi]."""
    k = math.floor(phi / PI)
    if k != 0:
        phi -= k * PI
        psi += k * PI
    if phi >= PI:
        phi -= PI
        psi += PI
    elif phi < 0.0:
        phi += PI
        psi -= PI
        if phi >= PI:  # a tiny negative phi rounds up to pi here
            phi -= PI
            psi += PI
    return wrap_pm_pi(psi), alpha, phi


def compose_step(psi_b, alpha_b, phi_b, psi_a, alpha_a, phi_a):
    """Triple of the product B@A of two triples, computed in the log domain.

    Never forms e**alpha.  The returned alpha may be arbitrarily small
    (even 0 for a rotation); the caller decides what counts as hyperbolic.

    When the inner angle ``theta = phi_b + psi_a`` is an exact float
    multiple of pi the middle factor is exactly diagonal up to sign, and
    the result is returned without touching any transcendental: chains of
    such factors accumulate alpha with no angle drift at all.
    """
    theta = phi_b + psi_a
    s = alpha_a + alpha_b
    k = int(theta / PI) if theta == 0.0 else round(theta / PI)
    if theta == k * PI:
        psi = psi_b + (PI if (k & 1) else 0.0)
        return normalize_triple(psi, s, phi_a)

    ct = math.cos(theta)
    st = math.sin(theta)
    d = alpha_a - alpha_b
    ad = abs(d)
    lct = math.log(abs(ct)) if ct != 0.0 else NEG_INF
    lst = math.log(abs(st)) if st != 0.0 else NEG_INF
    le = lct + _lcosh(s)
    lh = lst + _lcosh(ad)
    lf = lct + _lsinh(s)
    lg = lst + _lsinh(ad)
    se = 1.0 if ct > 0.0 else -1.0
    sh = 1.0 if st > 0.0 else -1.0
    sg = sh if d > 0.0 else (-sh if d < 0.0 else 0.0)

    m1 = le if le > lh else lh
    big_s = math.atan2(sh * math.exp(lh - m1), se * math.exp(le - m1))
    m2 = lf if lf > lg else lg
    if m2 == NEG_INF:
        big_d = 0.0
    else:
        big_d = math.atan2(sg * math.exp(lg - m2), se * math.exp(lf - m2))

    logq = 0.5 * _logaddexp(2.0 * le, 2.0 * lh)
    logr = 0.5 * _logaddexp(2.0 * lf, 2.0 * lg)
    alpha = _logaddexp(logq, logr)

    psi_m = 0.5 * (big_s + big_d)
    phi_m = 0.5 * (big_s - big_d)
    return normalize_triple(psi_b + psi_m, alpha, phi_m + phi_a)


def decompose_entries(a11, a12, a21, a22, log_scale=0.0):
    """Triple of the matrix e**log_scale * [[a11, a12], [a21, a22]].

    Assumes the true (rescaled) matrix has determinant 1.  Valid for any
    norm, including rotations (alpha == 0, where the phi/psi split is then
    a matter of convention).
    """
    e = 0.5 * (a11 + a22)
    h = 0.5 * (a21 - a12)
    f = 0.5 * (a11 - a22)
    g = 0.5 * (a21 + a12)
    q = math.hypot(e, h)
    r = math.hypot(f, g)
    big_s = math.atan2(h, e)
    big_d = math.atan2(g, f) if (f != 0.0 or g != 0.0) else 0.0
    alpha = log_scale + math.log(q + r)
    return normalize_triple(0.5 * (big_s + big_d), alpha, 0.5 * (big_s - big_d))


def chain_anglefamily(phis, loglam, alpha_min, start=None):
    """Left-compose the factors (0, loglam, phis[j]) onto a running triple.

    ``phis`` is in chain order: phis[0] belongs to the rightmost factor.
    Starts from the triple ``start`` when given, else from factor 0.
    Returns (psi, alpha, phi, consumed); consumed < len(phis) means the
    running product dropped below ``alpha_min`` while folding that factor
    in, and the caller should redo the remainder densely.
    """
    n = len(phis)
    if start is None:
        if n == 0:
            raise ValueError("empty chain and no start triple")
        if loglam < alpha_min:
            return 0.0, 0.0, 0.0, 0
        psi, alpha, phi = normalize_triple(0.0, loglam, float(phis[0]))
        j = 1
    else:
        psi, alpha, phi = start
        j = 0
    while j < n:
        p2, a2, f2 = compose_step(0.0, loglam, float(phis[j]), psi, alpha, phi)
        if a2 < alpha_min:
            return psi, alpha, phi, j
        psi, alpha, phi = p2, a2, f2
        j += 1
    return psi, alpha, phi, n


def _fold_pending(triple, p11, p12, p21, p22, ps):
    """Fold the pending dense block P (true matrix e**ps * P) onto a triple
    from the left, returning the new triple."""
    if triple is None:
        return decompose_entries(p11, p12, p21, p22, ps)
    psi_t, alpha_t, phi_t = triple
    c = math.cos(psi_t)
    s = math.sin(psi_t)
    m11 = p11 * c + p12 * s
    m12 = -p11 * s + p12 * c
    m21 = p21 * c + p22 * s
    m22 = -p21 * s + p22 * c
    if alpha_t <= 60.0:
        ea = math.exp(alpha_t)
        ia = math.exp(-alpha_t)
        w11 = m11 * ea
        w12 = m12 * ia
        w21 = m21 * ea
        w22 = m22 * ia
        cf = math.cos(phi_t)
        sf = math.sin(phi_t)
        t11 = w11 * cf + w12 * sf
        t12 = -w11 * sf + w12 * cf
        t21 = w21 * cf + w22 * sf
        t22 = -w21 * sf + w22 * cf
        return decompose_entries(t11, t12, t21, t22, ps)
    # alpha too large to densify: scale the columns of M @ diag(e^a, e^-a)
    # by e^-a and push the factor into log_scale
    e2 = math.exp(-2.0 * alpha_t)
    psi2, a2, f2 = decompose_entries(m11, m12 * e2, m21, m22 * e2, ps + alpha_t)
    return normalize_triple(psi2, a2, f2 + phi_t)


def chain_dense(mats, alpha_min):
    """Accumulate a chain of dense SL(2,R) factors into a triple.

    ``mats`` is an (n, 4) float array of rows (a11, a12, a21, a22) in chain
    order (row 0 is the rightmost factor).  Non-hyperbolic stretches are
    multiplied out densely with per-step rescaling by the largest entry;
    once the pending block is decomposable it is folded into the running
    triple.  Returns (psi, alpha, phi, ok) where ok is False when the full
    product itself is below ``alpha_min``.
    """
    triple = None
    p11, p12, p21, p22 = 1.0, 0.0, 0.0, 1.0
    ps = 0.0
    pend = False
    n = mats.shape[0]
    for i in range(n):
        f11 = float(mats[i, 0])
        f12 = float(mats[i, 1])
        f21 = float(mats[i, 2])
        f22 = float(mats[i, 3])
        q11 = f11 * p11 + f12 * p21
        q12 = f11 * p12 + f12 * p22
        q21 = f21 * p11 + f22 * p21
        q22 = f21 * p12 + f22 * p22
        m = max(abs(q11), abs(q12), abs(q21), abs(q22))
        p11 = q11 / m
        p12 = q12 / m
        p21 = q21 / m
        p22 = q22 / m
        ps += math.log(m)
        pend = True
        e = 0.5 * (p11 + p22)
        h = 0.5 * (p21 - p12)
        f = 0.5 * (p11 - p22)
        g = 0.5 * (p21 + p12)
        alpha_p = ps + math.log(math.hypot(e, h) + math.hypot(f, g))
        if alpha_p > alpha_min:
            triple = _fold_pending(triple, p11, p12, p21, p22, ps)
            p11, p12, p21, p22 = 1.0, 0.0, 0.0, 1.0
            ps = 0.0
            pend = False
    if pend:
        triple = _fold_pending(triple, p11, p12, p21, p22, ps)
    if triple is None:
        return 0.0, 0.0, 0.0, True
    psi, alpha, phi = triple
    return psi, alpha, phi, alpha > alpha_min


def dense_product(mats):
    """Plain rescaled dense product of the chain.  Returns
    (p11, p12, p21, p22, log_scale); true product = e**log_scale * P."""
    p11, p12, p21, p22 = 1.0, 0.0, 0.0, 1.0
    ps = 0.0
    n = mats.shape[0]
    for i in range(n):
        f11 = float(mats[i, 0])
        f12 = float(mats[i, 1])
        f21 = float(mats[i, 2])
        f22 = float(mats[i, 3])
        q11 = f11 * p11 + f12 * p21
        q12 = f11 * p12 + f12 * p22
        q21 = f21 * p11 + f22 * p21
        q22 = f21 * p12 + f22 * p22
        m = max(abs(q11), abs(q12), abs(q21), abs(q22))
        p11 = q11 / m
        p12 = q12 / m
        p21 = q21 / m
        p22 = q22 / m
        ps += math.log(m)
    return p11, p12, p21, p22, ps


def first_return_scan(pos, step, hw, cap, arcs):
    """Step pos -> pos + step (mod 2**120) until the point lies in the
    target set, at most cap steps.  arcs bit 1 selects the arc of fixed
    half-width hw around 0, bit 2 the arc around 1/2.  Returns
    (n, landing); n == 0 signals that cap was exhausted."""
    n = 0
    lo_half = HALF - hw
    hi_half = HALF + hw
    hi_zero = DEN - hw
    while n < cap:
        pos += step
        if pos >= DEN:
            pos -= DEN
        n += 1
        if (arcs & 1) and (pos <= hw or pos >= hi_zero):
            return n, pos
        if (arcs & 2) and lo_half <= pos <= hi_half:
            return n, pos
    return 0, pos


def orbit_floats(pos, step, n):
    """n orbit points starting at pos, as floats in [0, 1).  Returns
    (array, final_pos) where final_pos is the integer point after n steps."""
    out = np.empty(n)
    inv = 0.5 ** DEN_BITS
    for j in range(n):
        out[j] = pos * inv
        pos += step
        if pos >= DEN:
            pos -= DEN
    return out, pos
