"""Vectorised double-double arithmetic on numpy arrays.

A value is a pair ``(hi, lo)`` of float64 arrays with ``|lo| <= ulp(hi)/2``.
Used where binary64 alone cannot resolve errors of order 1e-12 to nine digits.
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def dd_add(x, y):
    s, e = two_sum(x[0], y[0])
    t, f = two_sum(x[1], y[1])
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def dd_neg(x):
    return -x[0], -x[1]


def dd_sub(x, y):
    return dd_add(x, dd_neg(y))


def dd_mul(x, y):
    p, e = two_prod(x[0], y[0])
    e = e + (x[0] * y[1] + x[1] * y[0])
    return quick_two_sum(p, e)


def dd_div(x, y):
    q1 = x[0] / y[0]
    r = dd_sub(x, dd_mul((q1, np.zeros_like(q1)), y))
    q2 = r[0] / y[0]
    r = dd_sub(r, dd_mul((q2, np.zeros_like(q2)), y))
    q3 = r[0] / y[0]
    q1, q2 = quick_two_sum(q1, q2)
    return dd_add((q1, q2), (q3, np.zeros_like(q3)))


def dd_from(a):
    a = np.asarray(a, dtype=np.float64)
    return a, np.zeros_like(a)


def dd_pow_int(x, n: int):
    result = dd_from(np.ones_like(x[0]))
    base = x
    while n:
        if n & 1:
            result = dd_mul(result, base)
        base = dd_mul(base, base)
        n >>= 1
    return result


def dd_root(z, b: int):
    """``z**(1/b)`` for a float64 array z, correct to about 1e-30 relative."""
    z = np.asarray(z, dtype=np.float64)
    if b == 1:
        return dd_from(z)
    r = dd_from(z ** (1.0 / b))
    # one Newton step on r**b - z doubles the ~1e-16 starting accuracy
    rb1 = dd_pow_int(r, b - 1)
    resid = dd_sub(dd_mul(rb1, r), dd_from(z))
    step = dd_div(resid, dd_mul(dd_from(np.full_like(z, float(b))), rb1))
    return dd_sub(r, step)


def dd_to_float(x):
    return x[0] + x[1]
