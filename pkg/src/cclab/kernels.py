"""Kernel backend selector.

Imports the compiled extension when available and falls back to the pure
Python reference otherwise.  Public API is identical either way; the
integer orbit routines here take plain Python ints (the 2**-120 fixed
point), splitting them into 64-bit halves only for the compiled calls.
"""

from __future__ import annotations

from . import _purekernels as _pure

try:
    from . import _corekernels as _core
except ImportError:
    _core = None

BACKEND = "compiled" if _core is not None else "pure"

DEN_BITS = _pure.DEN_BITS
DEN = _pure.DEN
HALF = _pure.HALF

_M64 = (1 << 64) - 1


def _split(v):
    return (v >> 64) & _M64, v & _M64


if _core is not None:
    wrap_pm_pi = _core.wrap_pm_pi
    normalize_triple = _core.normalize_triple
    compose_step = _core.compose_step
    decompose_entries = _core.decompose_entries
    chain_anglefamily = _core.chain_anglefamily
    chain_dense = _core.chain_dense
    dense_product = _core.dense_product

    def first_return_scan(pos, step, hw, cap, arcs):
        ph, pl = _split(pos)
        sh, sl = _split(step)
        hh, hl = _split(hw)
        n, lh, ll = _core.first_return_scan_hl(ph, pl, sh, sl, hh, hl,
                                               int(cap), int(arcs))
        return n, (lh << 64) | ll

    def orbit_floats(pos, step, n):
        ph, pl = _split(pos)
        sh, sl = _split(step)
        out, fh, fl = _core.orbit_floats_hl(ph, pl, sh, sl, int(n))
        return out, (fh << 64) | fl

else:
    wrap_pm_pi = _pure.wrap_pm_pi
    normalize_triple = _pure.normalize_triple
    compose_step = _pure.compose_step
    decompose_entries = _pure.decompose_entries
    chain_anglefamily = _pure.chain_anglefamily
    chain_dense = _pure.chain_dense
    dense_product = _pure.dense_product
    first_return_scan = _pure.first_return_scan
    orbit_floats = _pure.orbit_floats
