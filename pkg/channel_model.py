#!/usr/bin/env python3
# === channel_model.py ===
# Rician air-to-ground link: outage-constrained approximate rate, service times and
# the numerical oracles used to check them (Marcum Q, inverse Q, Monte-Carlo fading).

import math
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from planner_errors import (
    InfeasibleRicianRegimeError,
    InvalidArgumentError,
    NumericFailureError,
)

G0_SEARCH_MAX = 100.0
G0_TOLERANCE = 1e-9
MARCUM_RELATIVE_STOP = 1e-15
MARCUM_MAX_TERMS = 10_000
MONTE_CARLO_CHUNK = 1_000_000


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Link parameters, all linear SI. Defaults follow the reference simulation setup."""

    bandwidth_hz: float = 2e6
    mu0: float = 1e-3  # -30 dB reference gain
    pathloss_exp: float = 2.3
    noise_w: float = 1e-14  # -110 dBm
    rician_g: float = 10.0 ** 1.5  # 15 dB
    epsilon: float = 1e-3

    def problems(self):
        found = []
        if not 0.0 < self.epsilon < 1.0:
            found.append(f"channel.epsilon must be in (0, 1) (got {self.epsilon})")
        if self.rician_g < 0.0:
            found.append(f"channel.rician_g must be >= 0 (got {self.rician_g})")
        for name in ("bandwidth_hz", "mu0", "noise_w"):
            value = getattr(self, name)
            if not value > 0.0:
                found.append(f"channel.{name} must be > 0 (got {value})")
        if not self.pathloss_exp >= 2.0:
            found.append(f"channel.pathloss_exp must be >= 2 (got {self.pathloss_exp})")
        return found


def snr_gain(ch, p_com, h):
    """Upsilon = P_com * mu_0 / (H^alpha * sigma^2)."""
    if p_com <= 0 or h <= 0:
        raise InvalidArgumentError(f"p_com and altitude must be positive (got {p_com}, {h})")
    return p_com * ch.mu0 / (h ** ch.pathloss_exp * ch.noise_w)


def q_function(z):
    """Standard normal tail probability."""
    return 0.5 * special.erfc(z / math.sqrt(2.0))


def inverse_q(p):
    """Inverse of the Gaussian tail: z with Q(z) = p.

    Cephes' rational approximation (ndtri) gives the start; one Newton step on
    Q(z) - p removes the residual error in the far tail.
    """
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"inverse_q needs 0 < p < 1 (got {p})")
    z = -float(special.ndtri(p))
    density = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return z + (q_function(z) - p) / density


def marcum_q1(x, y):
    """First-order Marcum Q-function Q_1(x, y) via its modified-Bessel series.

    For x < y:  Q = exp(-(x^2+y^2)/2) * sum_{k>=0} (x/y)^k I_k(xy)
    otherwise:  Q = 1 - exp(-(x^2+y^2)/2) * sum_{k>=1} (y/x)^k I_k(xy)

    Exponentially scaled Bessel values (ive) keep every term finite. Terms
    decrease monotonically; the sum stops once a term falls below 1e-15 of the
    partial sum, with at most 10^4 terms.
    """
    if x < 0 or y < 0:
        raise InvalidArgumentError(f"marcum_q1 needs x, y >= 0 (got {x}, {y})")
    if y == 0.0:
        return 1.0
    if x == 0.0:
        return math.exp(-0.5 * y * y)

    z = x * y
    scale = math.exp(-0.5 * (x - y) ** 2)
    if x < y:
        ratio, k = x / y, 0
        sign, base = 1.0, 0.0
    else:
        ratio, k = y / x, 1
        sign, base = -1.0, 1.0

    total = 0.0
    power = ratio ** k
    for _ in range(MARCUM_MAX_TERMS):
        term = power * special.ive(k, z)
        total += term
        if term <= MARCUM_RELATIVE_STOP * total or term == 0.0:
            return min(1.0, max(0.0, base + sign * scale * total))
        k += 1
        power *= ratio
    raise NumericFailureError(
        f"Marcum Q series did not converge for x={x}, y={y}",
        best_iterate=base + sign * scale * total,
    )


def marcum_x_q(ch):
    # Non-centrality argument of Q_1. Read as sqrt(2G) with G the Rician factor.
    return math.sqrt(2.0 * ch.rician_g)


def small_g_branch(epsilon, g):
    return math.sqrt(-2.0 * math.log1p(-epsilon)) * math.exp(g / 2.0)


def large_g_branch(epsilon, g):
    x_q = math.sqrt(2.0 * g)
    q_inv = inverse_q(epsilon)
    if q_inv == 0.0:
        return x_q + 1.0 / (2.0 * x_q)
    if not x_q > q_inv:
        raise InfeasibleRicianRegimeError(
            f"sqrt(2G)={x_q:.6g} must exceed Q^-1(eps)={q_inv:.6g} for the large-G branch"
        )
    return x_q + math.log(x_q / (x_q - q_inv)) / (2.0 * q_inv) - q_inv


@lru_cache(maxsize=256)
def threshold_g0(epsilon):
    """Rician factor where the small-G and large-G y_Q branches intersect.

    Bisection over (G_lo, 100] with G_lo the smallest G where the large-G
    branch is defined. Without a sign change the bracket end where the small-G
    branch is already the larger value is returned.
    """
    q_inv = inverse_q(epsilon)
    g_lo = max(q_inv, 0.0) ** 2 / 2.0
    g_lo = g_lo * (1.0 + 1e-9) + 1e-12

    def gap(g):
        return small_g_branch(epsilon, g) - large_g_branch(epsilon, g)

    lo_gap, hi_gap = gap(g_lo), gap(G0_SEARCH_MAX)
    if lo_gap * hi_gap > 0.0:
        g0 = g_lo if lo_gap > 0.0 else G0_SEARCH_MAX
        logging.debug(f"No y_Q branch crossing for eps={epsilon}; using G0={g0}")
        return g0
    return optimize.bisect(gap, g_lo, G0_SEARCH_MAX, xtol=G0_TOLERANCE)


def y_q(ch):
    """Normalized outage threshold y_Q for the target outage probability."""
    g = ch.rician_g
    if g <= threshold_g0(ch.epsilon):
        return small_g_branch(ch.epsilon, g)
    return large_g_branch(ch.epsilon, g)


def exact_y_q(ch):
    """Root of Q_1(x_Q, y) = 1 - epsilon found by bisection (reference for y_q)."""
    x_q = marcum_x_q(ch)
    target = 1.0 - ch.epsilon

    def excess(y):
        return marcum_q1(x_q, y) - target

    hi = x_q + 10.0
    while excess(hi) > 0.0:
        hi *= 2.0
    return optimize.bisect(excess, 0.0, hi, xtol=1e-12)


def approx_rate(ch, gain):
    """epsilon-outage rate R = B log2(1 + y_Q^2 * gain / (2(1+G)))."""
    if gain <= 0:
        raise InvalidArgumentError(f"gain must be positive (got {gain})")
    snr = y_q(ch) ** 2 * gain / (2.0 * (1.0 + ch.rician_g))
    return ch.bandwidth_hz * math.log2(1.0 + snr)


def service_time(user, rate):
    """tau_k = Q_k / R_k."""
    if not rate > 0:
        raise InvalidArgumentError(f"rate must be positive (got {rate})")
    return user.data_bits / rate


def sample_fading_power(ch, n, rng):
    """|g|^2 for n Rician draws: fixed LoS part plus CN(0,1) scattered part."""
    g = ch.rician_g
    los = math.sqrt(g / (1.0 + g))
    nlos = math.sqrt(1.0 / (1.0 + g))
    scattered = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    return np.abs(los + nlos * scattered) ** 2


def empirical_outage(ch, gain, rate, n, seed):
    """Fraction of n fading draws whose instantaneous rate falls below `rate`."""
    if n < 1:
        raise InvalidArgumentError(f"sample count must be >= 1 (got {n})")
    rng = np.random.default_rng(seed)
    outages = 0
    remaining = n
    while remaining > 0:
        batch = min(remaining, MONTE_CARLO_CHUNK)
        power = sample_fading_power(ch, batch, rng)
        achieved = ch.bandwidth_hz * np.log2(1.0 + gain * power)
        outages += int(np.count_nonzero(achieved < rate))
        remaining -= batch
    return outages / n
