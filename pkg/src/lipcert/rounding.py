"""Directed rounding for binary64 without touching the FPU rounding mode.

Every primitive computes the round-to-nearest result and then uses an
error-free transformation (TwoSum, Dekker's TwoProduct) to learn on which
side of the exact value it landed.  When the operation was exact the result
is returned unchanged; otherwise it is moved one ulp in the requested
direction, which yields the correctly rounded directed result.  Where the
error-free transformation is not valid (overflow, gradual underflow) the
primitives fall back to an unconditional one-ulp step, which stays sound.

Scalar functions work on Python floats, the ``v``-prefixed twins work
elementwise on numpy arrays and give bit-identical results.
"""

import math

import numpy as np

INF = math.inf
DBL_MAX = 1.7976931348623157e308

_SPLITTER = 134217729.0  # 2**27 + 1
_PROD_TINY = 2.0 ** -969  # below this the product error may be unrepresentable
_SPLIT_HUGE = 2.0 ** 995  # above this Veltkamp splitting overflows


# -- scalar -----------------------------------------------------------------

def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_sum_err(a, b, s):
    """Exact error ``(a + b) - s`` of the rounded sum ``s = fl(a + b)``."""
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def two_prod_err(a, b, p):
    """Exact error ``a * b - p`` of the rounded product ``p = fl(a * b)``."""
    ah, al = _split(a)
    bh, bl = _split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add_down(a, b):
    s = a + b
    if math.isinf(s):
        if math.isinf(a) or math.isinf(b) or s < 0:
            return s
        return DBL_MAX
    return math.nextafter(s, -INF) if two_sum_err(a, b, s) < 0 else s


def add_up(a, b):
    s = a + b
    if math.isinf(s):
        if math.isinf(a) or math.isinf(b) or s > 0:
            return s
        return -DBL_MAX
    return math.nextafter(s, INF) if two_sum_err(a, b, s) > 0 else s


def sub_down(a, b):
    return add_down(a, -b)


def sub_up(a, b):
    return add_up(a, -b)


def _mul_err_sign(a, b, p):
    """Sign of ``a*b - p``; None when the error-free product is unusable."""
    if abs(p) < _PROD_TINY or abs(a) > _SPLIT_HUGE or abs(b) > _SPLIT_HUGE:
        return None
    e = two_prod_err(a, b, p)
    return int(e > 0) - int(e < 0)


def mul_down(a, b):
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(p):
        if math.isinf(a) or math.isinf(b) or p < 0:
            return p
        return DBL_MAX
    sign = _mul_err_sign(a, b, p)
    if sign is None or sign < 0:
        return math.nextafter(p, -INF)
    return p


def mul_up(a, b):
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(p):
        if math.isinf(a) or math.isinf(b) or p > 0:
            return p
        return -DBL_MAX
    sign = _mul_err_sign(a, b, p)
    if sign is None or sign > 0:
        return math.nextafter(p, INF)
    return p


def step_down(x, steps=1):
    for _ in range(steps):
        x = math.nextafter(x, -INF)
    return x


def step_up(x, steps=1):
    for _ in range(steps):
        x = math.nextafter(x, INF)
    return x


# -- numpy ------------------------------------------------------------------

def _vsplit(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def vadd_down(a, b):
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.add(a, b)
        err = two_sum_err(a, b, s)
        out = np.where(err < 0, np.nextafter(s, -INF), s)
        overflow = np.isposinf(s) & np.isfinite(a) & np.isfinite(b)
    return np.where(overflow, DBL_MAX, out)


def vadd_up(a, b):
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.add(a, b)
        err = two_sum_err(a, b, s)
        out = np.where(err > 0, np.nextafter(s, INF), s)
        overflow = np.isneginf(s) & np.isfinite(a) & np.isfinite(b)
    return np.where(overflow, -DBL_MAX, out)


def _vmul_err(a, b, p):
    """(err, usable) for the elementwise products ``p = fl(a*b)``."""
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        ah, al = _vsplit(a)
        bh, bl = _vsplit(b)
        err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    usable = (
        (np.abs(p) >= _PROD_TINY)
        & (np.abs(a) <= _SPLIT_HUGE)
        & (np.abs(b) <= _SPLIT_HUGE)
    )
    return err, usable


def vmul_down(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        p = a * b
    err, usable = _vmul_err(a, b, p)
    out = np.where(usable & (err >= 0), p, np.nextafter(p, -INF))
    out = np.where(np.isposinf(p) & np.isfinite(a) & np.isfinite(b), DBL_MAX, out)
    out = np.where(np.isneginf(p), p, out)
    return np.where((a == 0.0) | (b == 0.0), 0.0, out)


def vmul_up(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        p = a * b
    err, usable = _vmul_err(a, b, p)
    out = np.where(usable & (err <= 0), p, np.nextafter(p, INF))
    out = np.where(np.isneginf(p) & np.isfinite(a) & np.isfinite(b), -DBL_MAX, out)
    out = np.where(np.isposinf(p), p, out)
    return np.where((a == 0.0) | (b == 0.0), 0.0, out)


def vstep_down(x, steps=1):
    for _ in range(steps):
        x = np.nextafter(x, -INF)
    return x


def vstep_up(x, steps=1):
    for _ in range(steps):
        x = np.nextafter(x, INF)
    return x
