"""Real-order Bessel functions, stable ratios, zeros, and the clamped-plate
cross-product root gamma_nu.

Everything downstream (ball closed forms, two-ball energies, secular
equations) is built on the four primitives here:

    bessel_j(nu, x)      J_nu(x)
    bessel_i(nu, x)      I_nu(x)
    ratio_i(nu, x)       I_nu(x) / I_{nu+1}(x), overflow-safe
    bessel_j_zero(nu, i) i-th positive zero j_{nu,i}

plus gamma_nu, the first positive root of

    J_{nu+1}(r)/J_nu(r) + I_{nu+1}(r)/I_nu(r) = 0-free form
    f(r) = J_{nu+1}(r) I_nu(r) + I_{nu+1}(r) J_nu(r),

which lies strictly between j_{nu,1} and j_{nu+1,1}.

Orders are nu = d/2 - 1 >= -1/2. Zero tables and gamma values are memoized
per order behind a lock (reads of dict entries are atomic in CPython, the
lock only serializes insertion).
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.optimize import brentq
from scipy.special import iv, ive, jv, jvp


def order_from_dim(d: int) -> float:
    """nu = d/2 - 1 for an integer dimension d >= 1."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d}")
    return d / 2.0 - 1.0


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not math.isfinite(nu) or nu < -0.5:
        raise ValueError(f"order must be finite and >= -1/2, got {nu}")
    return nu


def bessel_j(nu: float, x: float) -> float:
    """J_nu(x) for x >= 0, nu >= -1/2."""
    nu = _check_order(nu)
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"argument must be finite and >= 0, got {x}")
    return float(jv(nu, x))


def bessel_i(nu: float, x: float) -> float:
    """I_nu(x) for x >= 0, nu >= -1/2.

    Plain (unscaled) value; overflows past x ~ 700, which is outside the
    supported range (tau sweeps keep sqrt(tau)*R <= 500). Use ratio_i for
    quotients, it never forms the large values.
    """
    nu = _check_order(nu)
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"argument must be finite and >= 0, got {x}")
    return float(iv(nu, x))


def bessel_i_scaled(nu: float, x: float) -> float:
    """exp(-x) * I_nu(x); finite for all supported x."""
    nu = _check_order(nu)
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"argument must be finite and >= 0, got {x}")
    return float(ive(nu, x))


def ratio_i(nu: float, x: float) -> float:
    """I_nu(x) / I_{nu+1}(x) via the Perron continued fraction.

    The quotient I_{nu+1}/I_nu admits the continued fraction

        I_{nu+1}(x)/I_nu(x) = x / (2(nu+1) + x^2 / (2(nu+2) + x^2 / ...))

    evaluated with the modified Lentz method; neither I value is ever
    formed, so the result stays finite for large x where I_nu overflows.
    """
    nu = _check_order(nu)
    x = float(x)
    if not (x > 0) or not math.isfinite(x):
        raise ValueError(f"argument must be finite and > 0, got {x}")

    # modified Lentz on f = b0 + a1/(b1 + a2/(b2 + ...)) with
    # b0 = 0, a1 = x, a_j = x^2 (j >= 2), b_j = 2(nu+j)
    tiny = 1e-300
    f = tiny
    c = f
    dd = 0.0
    x2 = x * x
    for j in range(1, 20000):
        a = x if j == 1 else x2
        b = 2.0 * (nu + j)
        dd = b + a * dd
        if dd == 0.0:
            dd = tiny
        c = b + a / c
        if c == 0.0:
            c = tiny
        dd = 1.0 / dd
        delta = c * dd
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    # f = I_{nu+1}/I_nu
    return 1.0 / f


_zero_lock = threading.Lock()
_zero_tables: dict[float, list[float]] = {}
_gamma_table: dict[float, float] = {}


def _jv_sign_root(nu: float, lo: float, hi: float) -> float:
    return brentq(lambda t: jv(nu, t), lo, hi, xtol=1e-14, rtol=8.9e-16)


def _extend_zero_table(nu: float, upto: int) -> list[float]:
    """Grow the memoized table of positive zeros of J_nu to length >= upto.

    Brackets come from zero interlacing: the first zero lies in
    (nu + 1, j_{nu+1/2-ish} upper bound) located by stepping; subsequent
    zeros are separated by roughly pi, so stepping in pi/4 increments from
    the previous zero always finds a sign change.
    """
    tbl = _zero_tables.setdefault(nu, [])
    while len(tbl) < upto:
        if not tbl:
            # first zero: J_nu > 0 just right of the origin; step until the
            # sign flips. j_{nu,1} < nu + 1.86*(nu+1)^{1/3} + 2 is a safe cap,
            # stepping never needs more than a few dozen tries.
            lo = nu + 1e-9 if nu > 0 else 1e-9
            step = 0.5
            x = lo + step
            while jv(nu, x) > 0:
                lo = x
                x += step
            tbl.append(_jv_sign_root(nu, lo, x))
        else:
            lo = tbl[-1] + 1e-9
            step = math.pi / 4
            x = lo + step
            s0 = jv(nu, lo)
            while jv(nu, x) * s0 > 0:
                lo = x
                x += step
            tbl.append(_jv_sign_root(nu, lo, x))
    return tbl


def bessel_j_zero(nu: float, i: int) -> float:
    """i-th positive zero of J_nu (i >= 1), memoized per order."""
    nu = _check_order(nu)
    if int(i) != i or i < 1:
        raise ValueError(f"zero index must be an integer >= 1, got {i}")
    tbl = _zero_tables.get(nu)
    if tbl is not None and len(tbl) >= i:
        return tbl[i - 1]
    with _zero_lock:
        tbl = _extend_zero_table(nu, i)
        return tbl[i - 1]


def gamma_nu(nu: float) -> float:
    """First positive root of J_{nu+1}/J_nu + I_{nu+1}/I_nu.

    Lies strictly inside (j_{nu,1}, j_{nu+1,1}). At this root the clamped
    radial profile J_nu(gamma r/R)/J_nu(gamma) - I_nu(gamma r/R)/I_nu(gamma)
    has vanishing derivative at r = R, so gamma_nu^4 / R^4 is the first
    clamped bilaplacian eigenvalue of the ball.
    """
    nu = _check_order(nu)
    hit = _gamma_table.get(nu)
    if hit is not None:
        return hit

    j1 = bessel_j_zero(nu, 1)
    j1_up = bessel_j_zero(nu + 1.0, 1)

    # root of g(r) = J_{nu+1}(r)/J_nu(r) + I_{nu+1}(r)/I_nu(r);
    # J_nu < 0 throughout (j_{nu,1}, j_{nu+1,1}) ... actually J_nu changes
    # sign at j_{nu,1}; use the pole-free product form
    # f(r) = J_{nu+1}(r) I_nu(r) + I_{nu+1}(r) J_nu(r), scaled by e^{-r}
    # to keep the I factors tame.
    def f(r: float) -> float:
        return float(jv(nu + 1.0, r) * ive(nu, r) + ive(nu + 1.0, r) * jv(nu, r))

    lo, hi = j1 + 1e-10, j1_up - 1e-10
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise RuntimeError(
            f"gamma_nu bracket failed on ({lo}, {hi}) for nu={nu}; "
            "this contradicts the interlacing argument"
        )
    root = brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16)
    with _zero_lock:
        _gamma_table[nu] = root
    return root


def jv_deriv(nu: float, x: float) -> float:
    """dJ_nu/dx, used by Newton refinements and tests."""
    return float(jvp(nu, x))


__all__ = [
    "order_from_dim",
    "bessel_j",
    "bessel_i",
    "bessel_i_scaled",
    "ratio_i",
    "bessel_j_zero",
    "gamma_nu",
    "jv_deriv",
]
