"""Bracketing and bisection for monotone scalar problems."""

import math


def bisect_last(pred, lo, hi, xtol, maxiter=400):
    """Largest ``x`` in ``[lo, hi)`` (to ``xtol``) with ``pred(x)`` true.

    Requires ``pred(lo)`` true, ``pred(hi)`` false, and ``pred`` monotone
    (true then false). Returns the final ``lo``.
    """
    for _ in range(maxiter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def bisect_root(f, a, b, xtol, maxiter=400):
    """Root of ``f`` in ``[a, b]`` by bisection; ``f(a)`` and ``f(b)`` differ in sign."""
    fa = f(a)
    fb = f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if math.copysign(1.0, fa) == math.copysign(1.0, fb):
        raise ValueError(f"no sign change on [{a}, {b}]: f(a)={fa}, f(b)={fb}")
    for _ in range(maxiter):
        mid = 0.5 * (a + b)
        if b - a <= xtol or mid <= min(a, b) or mid >= max(a, b):
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if math.copysign(1.0, fm) == math.copysign(1.0, fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)
