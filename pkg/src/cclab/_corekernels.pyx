"""Compiled mirror of cclab._purekernels.  Semantics must match exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport (atan2, cos, exp, fabs, floor, fmod, hypot, ldexp,
                        log, log1p, sin, sinh, llround)

cnp.import_array()

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef double PI = 3.141592653589793238462643383279502884
cdef double TWO_PI = 2.0 * PI
cdef double LOG2 = 0.693147180559945309417232121458176568
cdef double NEG_INF = -float("inf")

cdef int DEN_BITS = 120

cdef inline u128 make_u128(unsigned long long hi, unsigned long long lo) nogil:
    return ((<u128> hi) << 64) | (<u128> lo)

cdef inline double logaddexp2_c(double a, double b) nogil:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + log1p(exp(b - a))

cdef inline double lcosh_c(double x) nogil:
    return x + log1p(exp(-2.0 * x)) - LOG2

cdef inline double lsinh_c(double x) nogil:
    if x == 0.0:
        return NEG_INF
    if x < 20.0:
        # below this sinh cannot overflow; the log-domain form would hit
        # log1p(-1) for x under half an ulp of 1 in exp(-2x)
        return log(sinh(x))
    return x + log1p(-exp(-2.0 * x)) - LOG2

cdef inline double wrap_pm_pi_c(double x) nogil:
    if -PI < x <= PI:
        return x
    x = fmod(x, TWO_PI)
    if x <= -PI:
        x += TWO_PI
    elif x > PI:
        x -= TWO_PI
    return x

cdef struct Triple:
    double psi
    double alpha
    double phi

cdef inline Triple normalize_triple_c(double psi, double alpha, double phi) nogil:
    cdef Triple t
    cdef double k = floor(phi / PI)
    if k != 0.0:
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
    t.psi = wrap_pm_pi_c(psi)
    t.alpha = alpha
    t.phi = phi
    return t

cdef Triple compose_step_c(double psi_b, double alpha_b, double phi_b,
                           double psi_a, double alpha_a, double phi_a) nogil:
    cdef double theta = phi_b + psi_a
    cdef double s = alpha_a + alpha_b
    cdef long long k = llround(theta / PI)
    cdef double ct, st, d, ad, lct, lst, le, lh, lf, lg
    cdef double se, sh, sg, m1, m2, big_s, big_d, logq, logr, alpha
    if theta == (<double> k) * PI:
        return normalize_triple_c(psi_b + (PI if (k & 1) else 0.0), s, phi_a)

    ct = cos(theta)
    st = sin(theta)
    d = alpha_a - alpha_b
    ad = fabs(d)
    lct = log(fabs(ct)) if ct != 0.0 else NEG_INF
    lst = log(fabs(st)) if st != 0.0 else NEG_INF
    le = lct + lcosh_c(s)
    lh = lst + lcosh_c(ad)
    lf = lct + lsinh_c(s)
    lg = lst + lsinh_c(ad)
    se = 1.0 if ct > 0.0 else -1.0
    sh = 1.0 if st > 0.0 else -1.0
    sg = sh if d > 0.0 else (-sh if d < 0.0 else 0.0)

    m1 = le if le > lh else lh
    big_s = atan2(sh * exp(lh - m1), se * exp(le - m1))
    m2 = lf if lf > lg else lg
    if m2 == NEG_INF:
        big_d = 0.0
    else:
        big_d = atan2(sg * exp(lg - m2), se * exp(lf - m2))

    logq = 0.5 * logaddexp2_c(2.0 * le, 2.0 * lh)
    logr = 0.5 * logaddexp2_c(2.0 * lf, 2.0 * lg)
    alpha = logaddexp2_c(logq, logr)
    return normalize_triple_c(psi_b + 0.5 * (big_s + big_d), alpha,
                              0.5 * (big_s - big_d) + phi_a)

cdef Triple decompose_entries_c(double a11, double a12, double a21, double a22,
                                double log_scale) nogil:
    cdef double e = 0.5 * (a11 + a22)
    cdef double h = 0.5 * (a21 - a12)
    cdef double f = 0.5 * (a11 - a22)
    cdef double g = 0.5 * (a21 + a12)
    cdef double q = hypot(e, h)
    cdef double r = hypot(f, g)
    cdef double big_s = atan2(h, e)
    cdef double big_d = atan2(g, f) if (f != 0.0 or g != 0.0) else 0.0
    return normalize_triple_c(0.5 * (big_s + big_d), log_scale + log(q + r),
                              0.5 * (big_s - big_d))


def compose_step(double psi_b, double alpha_b, double phi_b,
                 double psi_a, double alpha_a, double phi_a):
    cdef Triple t = compose_step_c(psi_b, alpha_b, phi_b, psi_a, alpha_a, phi_a)
    return t.psi, t.alpha, t.phi


def decompose_entries(double a11, double a12, double a21, double a22,
                      double log_scale=0.0):
    cdef Triple t = decompose_entries_c(a11, a12, a21, a22, log_scale)
    return t.psi, t.alpha, t.phi


def normalize_triple(double psi, double alpha, double phi):
    cdef Triple t = normalize_triple_c(psi, alpha, phi)
    return t.psi, t.alpha, t.phi


def wrap_pm_pi(double x):
    return wrap_pm_pi_c(x)


def chain_anglefamily(cnp.ndarray[cnp.float64_t, ndim=1] phis, double loglam,
                      double alpha_min, start=None):
    cdef Py_ssize_t n = phis.shape[0]
    cdef Py_ssize_t j
    cdef Triple acc, nxt
    cdef double[:] pv = phis
    if start is None:
        if n == 0:
            raise ValueError("empty chain and no start triple")
        if loglam < alpha_min:
            return 0.0, 0.0, 0.0, 0
        acc = normalize_triple_c(0.0, loglam, pv[0])
        j = 1
    else:
        acc.psi = start[0]
        acc.alpha = start[1]
        acc.phi = start[2]
        j = 0
    with nogil:
        while j < n:
            nxt = compose_step_c(0.0, loglam, pv[j], acc.psi, acc.alpha, acc.phi)
            if nxt.alpha < alpha_min:
                break
            acc = nxt
            j += 1
    return acc.psi, acc.alpha, acc.phi, j


cdef Triple fold_pending_c(bint have, Triple triple, double p11, double p12,
                           double p21, double p22, double ps) nogil:
    cdef double c, s, m11, m12, m21, m22, ea, ia, cf, sf
    cdef double w11, w12, w21, w22, t11, t12, t21, t22, e2
    cdef Triple out
    if not have:
        return decompose_entries_c(p11, p12, p21, p22, ps)
    c = cos(triple.psi)
    s = sin(triple.psi)
    m11 = p11 * c + p12 * s
    m12 = -p11 * s + p12 * c
    m21 = p21 * c + p22 * s
    m22 = -p21 * s + p22 * c
    if triple.alpha <= 60.0:
        ea = exp(triple.alpha)
        ia = exp(-triple.alpha)
        w11 = m11 * ea
        w12 = m12 * ia
        w21 = m21 * ea
        w22 = m22 * ia
        cf = cos(triple.phi)
        sf = sin(triple.phi)
        t11 = w11 * cf + w12 * sf
        t12 = -w11 * sf + w12 * cf
        t21 = w21 * cf + w22 * sf
        t22 = -w21 * sf + w22 * cf
        return decompose_entries_c(t11, t12, t21, t22, ps)
    e2 = exp(-2.0 * triple.alpha)
    out = decompose_entries_c(m11, m12 * e2, m21, m22 * e2, ps + triple.alpha)
    return normalize_triple_c(out.psi, out.alpha, out.phi + triple.phi)


def chain_dense(cnp.ndarray[cnp.float64_t, ndim=2] mats, double alpha_min):
    cdef Py_ssize_t n = mats.shape[0]
    cdef Py_ssize_t i
    cdef double[:, :] mv = mats
    cdef Triple triple
    cdef bint have = 0, pend = 0
    cdef double p11 = 1.0, p12 = 0.0, p21 = 0.0, p22 = 1.0, ps = 0.0
    cdef double f11, f12, f21, f22, q11, q12, q21, q22, m
    cdef double e, h, f, g, alpha_p
    triple.psi = 0.0
    triple.alpha = 0.0
    triple.phi = 0.0
    with nogil:
        for i in range(n):
            f11 = mv[i, 0]
            f12 = mv[i, 1]
            f21 = mv[i, 2]
            f22 = mv[i, 3]
            q11 = f11 * p11 + f12 * p21
            q12 = f11 * p12 + f12 * p22
            q21 = f21 * p11 + f22 * p21
            q22 = f21 * p12 + f22 * p22
            m = fabs(q11)
            if fabs(q12) > m:
                m = fabs(q12)
            if fabs(q21) > m:
                m = fabs(q21)
            if fabs(q22) > m:
                m = fabs(q22)
            p11 = q11 / m
            p12 = q12 / m
            p21 = q21 / m
            p22 = q22 / m
            ps += log(m)
            pend = 1
            e = 0.5 * (p11 + p22)
            h = 0.5 * (p21 - p12)
            f = 0.5 * (p11 - p22)
            g = 0.5 * (p21 + p12)
            alpha_p = ps + log(hypot(e, h) + hypot(f, g))
            if alpha_p > alpha_min:
                triple = fold_pending_c(have, triple, p11, p12, p21, p22, ps)
                have = 1
                p11 = 1.0
                p12 = 0.0
                p21 = 0.0
                p22 = 1.0
                ps = 0.0
                pend = 0
        if pend:
            triple = fold_pending_c(have, triple, p11, p12, p21, p22, ps)
            have = 1
    if not have:
        return 0.0, 0.0, 0.0, True
    return triple.psi, triple.alpha, triple.phi, triple.alpha > alpha_min


def dense_product(cnp.ndarray[cnp.float64_t, ndim=2] mats):
    cdef Py_ssize_t n = mats.shape[0]
    cdef Py_ssize_t i
    cdef double[:, :] mv = mats
    cdef double p11 = 1.0, p12 = 0.0, p21 = 0.0, p22 = 1.0, ps = 0.0
    cdef double f11, f12, f21, f22, q11, q12, q21, q22, m
    with nogil:
        for i in range(n):
            f11 = mv[i, 0]
            f12 = mv[i, 1]
            f21 = mv[i, 2]
            f22 = mv[i, 3]
            q11 = f11 * p11 + f12 * p21
            q12 = f11 * p12 + f12 * p22
            q21 = f21 * p11 + f22 * p21
            q22 = f21 * p12 + f22 * p22
            m = fabs(q11)
            if fabs(q12) > m:
                m = fabs(q12)
            if fabs(q21) > m:
                m = fabs(q21)
            if fabs(q22) > m:
                m = fabs(q22)
            p11 = q11 / m
            p12 = q12 / m
            p21 = q21 / m
            p22 = q22 / m
            ps += log(m)
    return p11, p12, p21, p22, ps


def first_return_scan_hl(unsigned long long pos_hi, unsigned long long pos_lo,
                         unsigned long long step_hi, unsigned long long step_lo,
                         unsigned long long hw_hi, unsigned long long hw_lo,
                         long long cap, int arcs):
    cdef u128 pos = make_u128(pos_hi, pos_lo)
    cdef u128 step = make_u128(step_hi, step_lo)
    cdef u128 hw = make_u128(hw_hi, hw_lo)
    cdef u128 den = (<u128> 1) << DEN_BITS
    cdef u128 half = den >> 1
    cdef u128 lo_half = half - hw
    cdef u128 hi_half = half + hw
    cdef u128 hi_zero = den - hw
    cdef long long n = 0
    cdef bint found = 0
    with nogil:
        while n < cap:
            pos += step
            if pos >= den:
                pos -= den
            n += 1
            if (arcs & 1) and (pos <= hw or pos >= hi_zero):
                found = 1
                break
            if (arcs & 2) and lo_half <= pos <= hi_half:
                found = 1
                break
    if not found:
        n = 0
    return n, <unsigned long long> (pos >> 64), <unsigned long long> (pos & 0xFFFFFFFFFFFFFFFFULL)


def orbit_floats_hl(unsigned long long pos_hi, unsigned long long pos_lo,
                    unsigned long long step_hi, unsigned long long step_lo,
                    Py_ssize_t n):
    cdef u128 pos = make_u128(pos_hi, pos_lo)
    cdef u128 step = make_u128(step_hi, step_lo)
    cdef u128 den = (<u128> 1) << DEN_BITS
    cdef double inv = ldexp(1.0, -DEN_BITS)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[:] ov = out
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            ov[j] = (<double> pos) * inv
            pos += step
            if pos >= den:
                pos -= den
    return out, <unsigned long long> (pos >> 64), <unsigned long long> (pos & 0xFFFFFFFFFFFFFFFFULL)
