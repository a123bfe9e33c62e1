"""Completed two-ball torsional energy E(a, b, tau).

For two balls B_a, B_b (radii a, b, same dimension d) coupled through a
shared normal-derivative flux, the completed torsional energy admits a
closed form in the modified-Bessel ratio I_nu / I_{nu+1} at a*sqrt(tau).
This module provides the auxiliary profile h_a and its integrals, the
energy by two independent routes (explicit formula and assembly from the
auxiliary integrals, asserted to agree), the a-derivative along the
volume constraint a^d + b^d = 1, and monotonicity sweeps.

Conventions: d >= 2, nu = d/2 - 1, |B_1| = pi^{d/2} / GammaFn(d/2 + 1).
Degenerate configurations: a = 0 gives E = 0; b = 0 gives
E = -T(B_a, tau) with T the torsional rigidity of the single ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import ive

from .ball import Ball, RadialProfile, torsional_rigidity_ball
from .specfn import order_from_dim, ratio_i

_ROUTE_RTOL = 1e-9


class MonotonicityError(ValueError):
    """Raised when a sweep curve fails to decrease strictly in a."""


def unit_ball_volume(d: int) -> float:
    """|B_1| in dimension d."""
    return math.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)


@dataclass(frozen=True)
class TwoBallConfig:
    """Inputs of the two-ball energy: dimension, radii, tension."""

    d: int
    a: float
    b: float
    tau: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d}")
        if self.a < 0 or self.b < 0:
            raise ValueError(f"radii must be >= 0, got a={self.a}, b={self.b}")
        if self.a == 0 and self.b == 0:
            raise ValueError("radii a and b must not both vanish")
        if self.tau < 0:
            raise ValueError(f"tension must be >= 0, got {self.tau}")

    def check_constraint(self) -> None:
        """Assert the sweep constraint a^d + b^d = 1 within 1e-12."""
        s = self.a**self.d + self.b**self.d
        if abs(s - 1.0) > 1e-12:
            raise ValueError(f"constraint a^d + b^d = 1 violated: sum = {s}")


@dataclass(frozen=True)
class AuxiliaryIntegrals:
    """Scalar integrals of the auxiliary profiles entering the energy.

    int_ha      integral of h_a over B_a (always <= 0)
    int_ha_sq   integral of h_a^2 over B_a
    bnd_lap_ha  boundary integral of Delta h_a over the sphere of radius a
    bnd_lap_hb0 boundary integral of Delta h_b^0, equal to d^2 |B_1| b^{d-2}
    int_va      integral of the single-ball torsion function, T(B_a, tau)
    """

    int_ha: float
    int_ha_sq: float
    bnd_lap_ha: float
    bnd_lap_hb0: float
    int_va: float


def h_a_profile(d: int, a: float, tau: float) -> RadialProfile:
    """Auxiliary profile h_a on [0, a] for tau > 0.

    h_a(r) = tau^{-1/2} [ I_nu(r sqrt(tau)) / I_{nu+1}(a sqrt(tau)) (r/a)^{-nu}
                          - I_nu(a sqrt(tau)) / I_{nu+1}(a sqrt(tau)) ]

    satisfying h_a(a) = 0 and h_a'(a) = 1. Bessel quotients are evaluated
    through exponentially scaled values, so large a*sqrt(tau) never
    overflows (the correction factor exp(sqrt(tau)(r - a)) is <= 1).
    """
    if not (a > 0) or not (tau > 0):
        raise ValueError(f"h_a_profile needs a > 0 and tau > 0, got a={a}, tau={tau}")
    nu = order_from_dim(d)
    t = math.sqrt(tau)
    den = ive(nu + 1.0, a * t)
    c_out = ive(nu, a * t) / den

    def _pair(order: float, r: np.ndarray) -> np.ndarray:
        # (r/a)^{-order} * ive(order, t r) with the r -> 0 limit patched in
        out = np.empty_like(r)
        small = r < 1e-8 * a
        rs = r[~small]
        out[~small] = (rs / a) ** (-order) * ive(order, t * rs)
        if small.any():
            out[small] = (t * a / 2.0) ** order / gamma_fn(order + 1.0)
        return out

    def h(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        bess = _pair(nu, r) * np.exp(t * (r - a)) / den
        return (bess - c_out) / t

    def dh(r: np.ndarray) -> np.ndarray:
        # d/dr [ (r/a)^{-nu} I_nu(t r) ] = t (r/a)^{-nu} I_{nu+1}(t r)
        r = np.asarray(r, dtype=float)
        bess1 = _pair(nu + 1.0, r) * np.exp(t * (r - a)) / den
        return (r / a) * bess1

    return RadialProfile(ball=Ball(d=d, R=a), evaluate=h, deriv=dh)


def integral_ha(d: int, a: float, tau: float) -> float:
    """Integral of h_a over B_a, closed form; always negative."""
    if not (a > 0) or not (tau > 0):
        raise ValueError(f"integral_ha needs a > 0 and tau > 0, got a={a}, tau={tau}")
    nu = order_from_dim(d)
    t = math.sqrt(tau)
    rho = ratio_i(nu, a * t)
    return a**d * unit_ball_volume(d) / t * (d / (a * t) - rho)


def integral_ha_sq(d: int, a: float, tau: float) -> float:
    """Integral of h_a^2 over B_a, closed form; always positive."""
    if not (a > 0) or not (tau > 0):
        raise ValueError(f"integral_ha_sq needs a > 0 and tau > 0, got a={a}, tau={tau}")
    nu = order_from_dim(d)
    t = math.sqrt(tau)
    rho = ratio_i(nu, a * t)
    bracket = (d + 2.0) * rho * (rho - d / (a * t)) - d
    return a**d * unit_ball_volume(d) / (2.0 * tau) * bracket


def boundary_laplacian_ha(d: int, a: float, tau: float) -> float:
    """Boundary integral of Delta h_a over the sphere of radius a.

    Computed from the exact linear relation
        int h_a = (a / (tau d)) (d^2 a^{d-2} |B_1| - bnd_lap_ha),
    never by differentiating the profile.
    """
    vol1 = unit_ball_volume(d)
    return d * d * a ** (d - 2) * vol1 - tau * d * integral_ha(d, a, tau) / a


def auxiliary_integrals(cfg: TwoBallConfig) -> AuxiliaryIntegrals:
    """All scalar ingredients of the assembled energy for tau > 0."""
    d, a, b, tau = cfg.d, cfg.a, cfg.b, cfg.tau
    if not (a > 0) or not (tau > 0):
        raise ValueError("auxiliary_integrals needs a > 0 and tau > 0")
    vol1 = unit_ball_volume(d)
    return AuxiliaryIntegrals(
        int_ha=integral_ha(d, a, tau),
        int_ha_sq=integral_ha_sq(d, a, tau),
        bnd_lap_ha=boundary_laplacian_ha(d, a, tau),
        bnd_lap_hb0=d * d * vol1 * b ** (d - 2.0),
        int_va=torsional_rigidity_ball(Ball(d=d, R=a), tau),
    )


def _small_arg_threshold(d: int) -> float:
    """Below this a*sqrt(tau), the energy brackets cancel to O(x^4) and
    double precision cannot hold 1e-12 relative; both routes switch to
    40-digit arithmetic. The bound comes from the amplification factor
    d (d+2)^2 (d+4) / x^4 applied to machine epsilon."""
    return (2.3e-16 * d * (d + 2.0) ** 2 * (d + 4.0) * 1e12) ** 0.25


def _energy_explicit_mp(d: int, a: float, b: float, tau: float) -> float:
    nu = order_from_dim(d)
    with mp.workdps(40):
        am, bm, tm = mp.mpf(a), mp.mpf(b), mp.mpf(tau)
        x = am * mp.sqrt(tm)
        arho = x * mp.besseli(nu, x) / mp.besseli(nu + 1, x)
        vol_a = mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2 + 1) * am**d
        bracket = (d - arho) ** 2 / (d * am**d / bm**d + arho) + (
            d - arho + am * am * tm / (d + 2)
        )
        return float(-vol_a / (d * tm * tm) * bracket)


def _energy_assembled_mp(d: int, a: float, b: float, tau: float) -> float:
    nu = order_from_dim(d)
    with mp.workdps(40):
        am, bm, tm = mp.mpf(a), mp.mpf(b), mp.mpf(tau)
        x = am * mp.sqrt(tm)
        rho = mp.besseli(nu, x) / mp.besseli(nu + 1, x)
        vol1 = mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2 + 1)
        int_ha = am**d * vol1 / mp.sqrt(tm) * (d / x - rho)
        bnd_lap_ha = d * d * am ** (d - 2) * vol1 - tm * d * int_ha / am
        denom = bnd_lap_ha + am ** (2 * d - 2) / bm**d * d * d * vol1
        rigidity = vol1 * am**d / (d * tm * tm) * (
            d + am * am * tm / (d + 2) - x * rho
        )
        return float(-int_ha * int_ha / denom - rigidity)


def _energy_explicit(d: int, a: float, b: float, tau: float) -> float:
    vol_a = unit_ball_volume(d) * a**d
    if tau == 0.0:
        return (
            -(a**4 * vol_a / (d * (d + 2.0) ** 2))
            * (1.0 / (d + 4.0) + 1.0 / (d * (1.0 + a**d / b**d)))
        )
    if a * math.sqrt(tau) < _small_arg_threshold(d):
        return _energy_explicit_mp(d, a, b, tau)
    nu = order_from_dim(d)
    t = math.sqrt(tau)
    arho = a * t * ratio_i(nu, a * t)
    bracket = (d - arho) ** 2 / (d * a**d / b**d + arho) + (
        d - arho + a * a * tau / (d + 2.0)
    )
    return -vol_a / (d * tau * tau) * bracket


def _energy_assembled(d: int, a: float, b: float, tau: float) -> float:
    vol1 = unit_ball_volume(d)
    if tau == 0.0:
        # tau -> 0 limits of the auxiliary integrals
        int_ha = -vol1 * a ** (d + 1.0) / (d + 2.0)
        bnd_lap_ha = d * d * a ** (d - 2.0) * vol1
    elif a * math.sqrt(tau) < _small_arg_threshold(d):
        return _energy_assembled_mp(d, a, b, tau)
    else:
        int_ha = integral_ha(d, a, tau)
        bnd_lap_ha = boundary_laplacian_ha(d, a, tau)
    denom = bnd_lap_ha + a ** (2 * d - 2.0) / b**d * d * d * vol1
    return -int_ha * int_ha / denom - torsional_rigidity_ball(Ball(d=d, R=a), tau)


def two_ball_energy(cfg: TwoBallConfig) -> float:
    """Completed two-ball energy E(a, b, tau).

    Evaluated by the explicit Bessel-ratio formula and independently by
    assembly from the auxiliary integrals; the two routes must agree to
    1e-9 relative, otherwise a consistency error is raised.
    """
    d, a, b, tau = cfg.d, cfg.a, cfg.b, cfg.tau
    if a == 0.0:
        return 0.0
    if b == 0.0:
        return -torsional_rigidity_ball(Ball(d=d, R=a), tau)
    e1 = _energy_explicit(d, a, b, tau)
    e2 = _energy_assembled(d, a, b, tau)
    scale = max(abs(e1), abs(e2))
    if scale > 0 and abs(e1 - e2) > _ROUTE_RTOL * scale:
        raise RuntimeError(
            f"two-ball energy routes disagree at (d={d}, a={a}, b={b}, tau={tau}): "
            f"explicit {e1!r} vs assembled {e2!r}"
        )
    return e1


def two_ball_energy_da(cfg: TwoBallConfig) -> float:
    """Derivative of E in a along the constraint a^d + b^d = 1.

    dE/da = [ d^2 a^2 (1 + 2 a^d/b^d) + d sqrt(tau) a^3 (I_nu/I_{nu+1})(a sqrt(tau)) ]
            * [ bnd_lap_ha + (a^{2d-2}/b^d) d^2 |B_1| ]^{-2}
            * |B_1|^2 a^{2d-4} * int h_a,

    negative on (0, 1) since int h_a < 0. The tau = 0 value is the limit
    of the formula: a sqrt(tau) I_nu/I_{nu+1} -> d and the auxiliary
    integrals take their polynomial limits.
    """
    cfg.check_constraint()
    d, a, b, tau = cfg.d, cfg.a, cfg.b, cfg.tau
    if not (0.0 < a < 1.0):
        raise ValueError(f"derivative needs 0 < a < 1, got a={a}")
    vol1 = unit_ball_volume(d)
    ratio_ab = a**d / b**d
    if tau == 0.0:
        front = 2.0 * d * d * a * a * (1.0 + ratio_ab)
        int_ha = -vol1 * a ** (d + 1.0) / (d + 2.0)
        bnd_lap_ha = d * d * a ** (d - 2.0) * vol1
    else:
        nu = order_from_dim(d)
        t = math.sqrt(tau)
        front = d * d * a * a * (1.0 + 2.0 * ratio_ab) + d * t * a**3 * ratio_i(
            nu, a * t
        )
        int_ha = integral_ha(d, a, tau)
        bnd_lap_ha = boundary_laplacian_ha(d, a, tau)
    denom = bnd_lap_ha + a ** (2 * d - 2.0) / b**d * d * d * vol1
    return front / (denom * denom) * vol1 * vol1 * a ** (2 * d - 4.0) * int_ha


def default_a_grid() -> np.ndarray:
    """99-point grid 0.01 .. 0.99."""
    return np.linspace(0.01, 0.99, 99)


def sweep(d: int, tau_list, a_grid=None):
    """Energy curves a -> E(a, (1-a^d)^{1/d}, tau) for each tau.

    Returns rows (d, tau, a, E) in grid order and asserts strict decrease
    of E along each curve; a violation raises MonotonicityError naming
    the offending (d, tau, a).
    """
    if a_grid is None:
        a_grid = default_a_grid()
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.ndim != 1 or len(a_grid) < 2:
        raise ValueError("a_grid must be a 1-d array with at least 2 points")
    if not (np.all(np.diff(a_grid) > 0) and a_grid[0] > 0 and a_grid[-1] < 1):
        raise ValueError("a_grid must be strictly increasing inside (0, 1)")

    rows = []
    for tau in sorted(float(t) for t in tau_list):
        prev = None
        for a in a_grid:
            b = (1.0 - a**d) ** (1.0 / d)
            e = two_ball_energy(TwoBallConfig(d=d, a=float(a), b=b, tau=tau))
            if prev is not None and not (e < prev):
                raise MonotonicityError(
                    f"energy curve not strictly decreasing at (d={d}, tau={tau}, a={a})"
                )
            prev = e
            rows.append((d, tau, float(a), e))
    return rows


__all__ = [
    "TwoBallConfig",
    "AuxiliaryIntegrals",
    "MonotonicityError",
    "unit_ball_volume",
    "h_a_profile",
    "integral_ha",
    "integral_ha_sq",
    "boundary_laplacian_ha",
    "auxiliary_integrals",
    "two_ball_energy",
    "two_ball_energy_da",
    "default_a_grid",
    "sweep",
]
