#!/usr/bin/env python3
# === energy_model.py ===
# Rotary-wing propulsion power curve, hover-speed search and per-hop energy accounting.

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import optimize

from planner_errors import InvalidArgumentError

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0
SPEED_TOLERANCE = 1e-4


@dataclass(frozen=True)
class PowerModelParams:
    """Aggregate rotor constants of the propulsion power curve.

    Defaults are built from a typical small rotorcraft (blade profile 79.86 W,
    induced 88.63 W, tip speed 120 m/s, hover induced velocity 4.03 m/s,
    fuselage drag ratio 0.6, air density 1.225, solidity 0.05, disc area 0.503 m^2).
    """

    p0_w: float = 79.86
    p1_w: float = 88.63
    alpha1: float = 3.0 / 120.0 ** 2
    alpha2: float = 1.0 / (2.0 * 4.03 ** 2)
    alpha3: float = 0.5 * 0.6 * 1.225 * 0.05 * 0.503

    def problems(self):
        return [
            f"power.{name} must be > 0 (got {value})"
            for name, value in asdict(self).items()
            if not value > 0.0
        ]


@dataclass(frozen=True)
class EnergyBreakdown:
    fly_j: float = 0.0
    hover_j: float = 0.0
    comm_j: float = 0.0

    @property
    def total_j(self):
        return self.fly_j + self.hover_j + self.comm_j

    def __add__(self, other):
        return EnergyBreakdown(
            self.fly_j + other.fly_j,
            self.hover_j + other.hover_j,
            self.comm_j + other.comm_j,
        )

    def to_dict(self):
        return {
            "fly_j": self.fly_j,
            "hover_j": self.hover_j,
            "comm_j": self.comm_j,
            "total_j": self.total_j,
        }


def _induced_root(v, alpha2):
    # sqrt(sqrt(1 + a^2 v^4) - a v^2), written without the cancellation at high speed
    a_v2 = alpha2 * np.square(v)
    return np.sqrt(1.0 / (np.sqrt(1.0 + np.square(a_v2)) + a_v2))


def p_fly(v, p):
    """Propulsion power in watts at forward speed v (scalar or array, v >= 0)."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise InvalidArgumentError("speed must be non-negative")
    power = (
        p.p0_w * (1.0 + p.alpha1 * np.square(v))
        + p.p1_w * _induced_root(v, p.alpha2)
        + p.alpha3 * v ** 3
    )
    return float(power) if power.ndim == 0 else power


def golden_section_min(func, lo, hi, tol=SPEED_TOLERANCE):
    """Minimize a unimodal func on [lo, hi]; endpoints are compared at the end."""
    a, b = lo, hi
    c = b - GOLDEN_RATIO * (b - a)
    d = a + GOLDEN_RATIO * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_RATIO * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_RATIO * (b - a)
            fd = func(d)
    best = (a + b) / 2.0
    return min((lo, best, hi), key=func)


def find_v_hover(p, v_max):
    """Speed in [0, v_max] with the lowest propulsion power (circling speed while serving)."""
    if not v_max > 0:
        raise InvalidArgumentError(f"v_max must be positive (got {v_max})")
    return golden_section_min(lambda v: p_fly(v, p), 0.0, v_max)


def max_range_speed(p, v_max, v_min=0.1):
    """Speed minimizing energy per meter, argmin P_fly(v)/v on [v_min, v_max].

    P_fly(v)/v is convex, so the root of its derivative is bracketed by the
    box unless the minimum sits on a bound.
    """
    if not 0 < v_min < v_max:
        raise InvalidArgumentError(f"need 0 < v_min < v_max (got {v_min}, {v_max})")
    if d_e_fly(v_min, 1.0, p) >= 0.0:
        return v_min
    if d_e_fly(v_max, 1.0, p) <= 0.0:
        return v_max
    return optimize.brentq(lambda v: d_e_fly(v, 1.0, p), v_min, v_max, xtol=1e-12)


def fly_energy(v, d, p):
    """E_fly = P_fly(v) * d / v (vectorized over v and d)."""
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    energy = (
        p.p0_w * d * (1.0 / v + p.alpha1 * v)
        + p.p1_w * d * _induced_root(v, p.alpha2) / v
        + p.alpha3 * d * np.square(v)
    )
    return float(energy) if energy.ndim == 0 else energy


def _inverse_quartic_terms(v, alpha2):
    # s = sqrt(v^-4 + a^2) and w = s - a = v^-4 / (s + a)
    inv_v4 = 1.0 / v ** 4
    s = np.sqrt(inv_v4 + alpha2 ** 2)
    w = inv_v4 / (s + alpha2)
    return s, w


def d_e_fly(v, d, p):
    """First derivative of E_fly with respect to v."""
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    s, w = _inverse_quartic_terms(v, p.alpha2)
    slope = (
        p.p0_w * d * (p.alpha1 - 1.0 / np.square(v))
        - p.p1_w * d / (v ** 5 * s * np.sqrt(w))
        + 2.0 * p.alpha3 * d * v
    )
    return float(slope) if slope.ndim == 0 else slope


def beta1(x):
    """x^2 + 1 - x sqrt(x^2 + 1) in the cancellation-free form sqrt(x^2+1)/(sqrt(x^2+1)+x)."""
    x = np.asarray(x, dtype=float)
    root = np.sqrt(np.square(x) + 1.0)
    value = root / (root + x)
    return float(value) if value.ndim == 0 else value


def d2_e_fly(v, d, p):
    """Second derivative of E_fly: 2 P0 d / v^3 + 2 a3 d + P1 d beta."""
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(v <= 0):
        raise InvalidArgumentError("speed must be positive")
    s, w = _inverse_quartic_terms(v, p.alpha2)
    a_v2 = p.alpha2 * np.square(v)
    bracket = 5.0 - 2.0 / (1.0 + np.square(a_v2)) - 1.0 / beta1(a_v2)
    beta = bracket / (v ** 6 * s * np.sqrt(w))
    curvature = 2.0 * p.p0_w * d / v ** 3 + 2.0 * p.alpha3 * d + p.p1_w * d * beta
    return float(curvature) if curvature.ndim == 0 else curvature


def hop_energy(d, v, tau, uav, p):
    """Fly, hover and communication energy of one hop followed by tau seconds of service."""
    if not v > 0:
        raise InvalidArgumentError(f"speed must be positive (got {v})")
    if d < 0 or tau < 0:
        raise InvalidArgumentError(f"distance and service time must be >= 0 (got {d}, {tau})")
    fly = 0.0 if d == 0 else fly_energy(v, d, p)
    return EnergyBreakdown(
        fly_j=fly,
        hover_j=p_fly(uav.v_hover, p) * tau,
        comm_j=uav.p_com_w * tau,
    )
