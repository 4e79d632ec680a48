"""Closed-form performance model of the wireless-powered two-way link.

Everything here is a pure function of three dimensionless constants:

  theta  mean extra service blocks (downlink service S = 1 + Poisson(theta))
  m      mean idle blocks needed to harvest one block's transmit energy
  p      downlink per-block packet-generation probability

The chain of results: the downlink service law gives busy-period moments of
the master's FCFS queue; the harvest-wait law gives the slave's slot time
s = max{1, tau_H}; composing them gives the uplink service time, the uplink
system time T, and finally the average uplink age of information
aoi = E(T) + 1/2 + E(T^2)/(2 E(T)) together with the uplink rate q = 1/E(T).
All of it is valid on the stability region (theta+1)*p < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "MomentPair",
    "AoiRateResult",
    "LimitingConstants",
    "TradeoffOptimum",
    "UnstableQueueError",
    "service_pmf",
    "service_pgf",
    "service_moments",
    "harvest_pmf",
    "slot_moments",
    "uplink_service_moments",
    "f_moments",
    "busy_period_moments",
    "system_time_moments",
    "avg_uplink_aoi",
    "uplink_rate",
    "consistent_system_time_moments",
    "consistent_avg_uplink_aoi",
    "aoi_closed_form",
    "corollary_limits",
    "weighted_sum_optimum",
    "erlang_energy_pdf",
]


class UnstableQueueError(ValueError):
    """Raised when a moment only defined on (theta+1)p < 1 is requested outside it."""


@dataclass(frozen=True)
class MomentPair:
    """First and second raw moments of a nonnegative random variable."""

    first: float
    second: float


@dataclass(frozen=True)
class AoiRateResult:
    """Average uplink AoI (blocks) and uplink rate (packets/block).

    Outside the stability region aoi is +inf and q is 0, with stable=False.
    """

    aoi: float
    q: float
    stable: bool


def _check_stable(p: float, theta: float):
    if (theta + 1.0) * p >= 1.0:
        raise UnstableQueueError(
            f"(theta+1)*p = {(theta + 1.0) * p:.6g} >= 1: queue moments diverge"
        )


def service_pmf(j: int, theta: float) -> float:
    """P{S = j}: probability the downlink needs j blocks for one packet.

    S - 1 is Poisson(theta); computed in log space so large j/theta are safe.
    """
    if j < 1:
        raise ValueError(f"service time support is j >= 1, got {j}")
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return math.exp((j - 1) * math.log(theta) - theta - math.lgamma(j))


def service_pgf(z: float, theta: float) -> float:
    """PGF of the service time, E[z^S] = z * exp(theta*(z-1)) for z in [0, 1]."""
    if not (0.0 <= z <= 1.0):
        raise ValueError(f"z must be in [0, 1], got {z}")
    return z * math.exp(theta * (z - 1.0))


def service_moments(theta: float) -> MomentPair:
    """E(S) = 1 + theta, E(S^2) = theta^2 + 3*theta + 1."""
    return MomentPair(1.0 + theta, theta * theta + 3.0 * theta + 1.0)


def harvest_pmf(j: int, m: float) -> float:
    """P{tau_H = j}: idle blocks needed to accumulate one block's transmit energy.

    Poisson(m) under the memoryless residual-energy approximation; j >= 0.
    """
    if j < 0:
        raise ValueError(f"harvest wait support is j >= 0, got {j}")
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if j == 0:
        return math.exp(-m)
    return math.exp(j * math.log(m) - m - math.lgamma(j + 1))


def slot_moments(m: float) -> MomentPair:
    """Moments of the slot time s = max{1, tau_H}: (m + e^-m, m^2 + m + e^-m)."""
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    em = math.exp(-m)
    return MomentPair(m + em, m * m + m + em)


def uplink_service_moments(theta: float, m: float) -> MomentPair:
    """Moments of S_UL = sum of S i.i.d. slot times (Wald-style composition)."""
    s = slot_moments(m)
    first = s.first * (1.0 + theta)
    second = s.first ** 2 * (theta * theta + 2.0 * theta) + s.second * (1.0 + theta)
    return MomentPair(first, second)


def f_moments(p: float) -> MomentPair:
    """Moments of F ~ Geometric on {0,1,...}: uninterrupted busy periods per idle block."""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must be in [0, 1), got {p}")
    return MomentPair(p / (1.0 - p), p * (1.0 + p) / (1.0 - p) ** 2)


def busy_period_moments(p: float, theta: float) -> MomentPair:
    """Moments of the downlink busy period B_D; requires (theta+1)p < 1."""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must be in [0, 1), got {p}")
    _check_stable(p, theta)
    d = 1.0 - p - theta * p
    first = (1.0 + theta) / d
    second = ((1.0 + theta) ** 2 * (1.0 - p * p - theta * p * p) + theta) / d ** 3
    return MomentPair(first, second)


def system_time_moments(p: float, theta: float, m: float) -> MomentPair:
    """Moments of the uplink system time T = S_UL plus interleaved busy periods."""
    sul = uplink_service_moments(theta, m)
    f = f_moments(p)
    bd = busy_period_moments(p, theta)
    stretch = 1.0 + f.first * bd.first
    first = sul.first * stretch
    second = sul.second * stretch ** 2 + sul.first * (
        f.first * (bd.second - bd.first ** 2)
        + (f.second - f.first ** 2) * bd.first ** 2
    )
    return MomentPair(first, second)


def _is_stable(p: float, theta: float) -> bool:
    return (theta + 1.0) * p < 1.0


def avg_uplink_aoi(p: float, theta: float, m: float) -> AoiRateResult:
    """Average uplink AoI via the moment composition E(T) + 1/2 + E(T^2)/(2 E(T)).

    Unstable inputs get the explicit +inf sentinel (and q = 0), never overflow.
    """
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must be in [0, 1), got {p}")
    if not _is_stable(p, theta):
        return AoiRateResult(aoi=math.inf, q=0.0, stable=False)
    t = system_time_moments(p, theta, m)
    aoi = t.first + 0.5 + t.second / (2.0 * t.first)
    return AoiRateResult(aoi=aoi, q=1.0 / t.first, stable=True)


def uplink_rate(p: float, theta: float, m: float) -> AoiRateResult:
    """Uplink data rate q(p) = 1/E(T), in closed form; 0 when unstable."""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must be in [0, 1), got {p}")
    if not _is_stable(p, theta):
        return AoiRateResult(aoi=math.inf, q=0.0, stable=False)
    em = math.exp(-m)
    q = (1.0 - p) * (1.0 - p - theta * p) / (
        (m + em) * (1.0 + theta) * (1.0 - p + p * p + theta * p * p)
    )
    t = system_time_moments(p, theta, m)
    aoi = t.first + 0.5 + t.second / (2.0 * t.first)
    return AoiRateResult(aoi=aoi, q=q, stable=True)


def aoi_closed_form(p: float, theta: float, m: float, second_term_halved: bool = True) -> float:
    """Fully expanded closed form of the average uplink AoI.

    Two transcriptions of this expansion are in circulation, differing by a
    factor of two in the denominator of the second term; `second_term_halved`
    selects between them.  Only the halved variant equals the moment
    composition of avg_uplink_aoi; both are kept so a simulation can
    demonstrate which one is right.
    """
    if not _is_stable(p, theta):
        return math.inf
    em = math.exp(-m)
    b = m + em            # E(s)
    c = m * m + m + em    # E(s^2)
    poly = 1.0 - p + p * p + theta * p * p
    t1 = poly / (2.0 * (1.0 - p) * (1.0 - p - theta * p)) * (
        c / b + b * (3.0 * theta ** 2 + 6.0 * theta + 2.0) / (1.0 + theta)
    )
    num = (
        p * (1.0 + theta) ** 2
        - p ** 3 * (2.0 - p) * (1.0 + theta) ** 3
        + theta * p * (1.0 - p)
    )
    den = (1.0 - p) * (1.0 - p - theta * p) ** 2 * poly
    t2 = num / (2.0 * den) if second_term_halved else num / den
    return t1 + t2 + 0.5


def consistent_system_time_moments(p: float, theta: float, m: float) -> MomentPair:
    """System-time moments consistent with the exact block dynamics.

    A busy period can only end at a block with no arrival, so each idle block
    is preceded by at most one busy period (Bernoulli(p) interruption), not a
    geometric number of them.  system_time_moments keeps the geometric
    composition for contract fidelity; this variant is the one block-level
    simulation reproduces.
    """
    sul = uplink_service_moments(theta, m)
    bd = busy_period_moments(p, theta)
    ey = p * bd.first
    ey2 = p * bd.second
    first = sul.first * (1.0 + ey)
    second = sul.second * (1.0 + ey) ** 2 + sul.first * (ey2 - ey * ey)
    return MomentPair(first, second)


def consistent_avg_uplink_aoi(p: float, theta: float, m: float) -> AoiRateResult:
    """Average AoI and rate from the dynamics-consistent composition.

    Note E(T) = E(S_UL)/(1 - (1+theta)p): the stretch factor is exactly the
    reciprocal idle-block fraction, as ergodicity requires.
    """
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must be in [0, 1), got {p}")
    if not _is_stable(p, theta):
        return AoiRateResult(aoi=math.inf, q=0.0, stable=False)
    t = consistent_system_time_moments(p, theta, m)
    aoi = t.first + 0.5 + t.second / (2.0 * t.first)
    return AoiRateResult(aoi=aoi, q=1.0 / t.first, stable=True)


@dataclass(frozen=True)
class LimitingConstants:
    """Asymptotics of aoi(p) and q(p) at the two ends of the stability region.

    aoi_at_zero / q_at_zero        limits as p -> 0
    aoi_divergence_coeff           leading coefficient of 1/o in the published
                                   p -> p_max expansion, o = 1 - (1+theta)p
    q_vanishing_coeff              q(p) ~ coeff * o as p -> p_max
    """

    aoi_at_zero: float
    q_at_zero: float
    aoi_divergence_coeff: float
    q_vanishing_coeff: float


def corollary_limits(theta: float, m: float) -> LimitingConstants:
    """Closed-form limiting constants of aoi(p) and q(p)."""
    em = math.exp(-m)
    b = m + em
    c = m * m + m + em
    bracket = c / b + b * (3.0 * theta ** 2 + 6.0 * theta + 2.0) / (1.0 + theta)
    return LimitingConstants(
        aoi_at_zero=0.5 * bracket + 0.5,
        q_at_zero=1.0 / (b * (1.0 + theta)),
        aoi_divergence_coeff=bracket * (1.0 + theta) / (2.0 * theta),
        q_vanishing_coeff=theta / ((1.0 + theta) ** 2 * b),
    )


@dataclass(frozen=True)
class TradeoffOptimum:
    """Argmax of the weighted sum w*p + (1-w)*q(p) over the stable region."""

    p_star: float
    q_star: float
    objective: float


def _golden_max(f, a: float, b: float, tol: float) -> float:
    """Golden-section maximizer of f on [a, b] to absolute x-tolerance tol."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def weighted_sum_optimum(w: float, theta: float, m: float, tol: float = 1e-8) -> TradeoffOptimum:
    """Maximize w*p + (1-w)*q(p) over p in [0, p_max).

    The objective is not proven unimodal, so a 1000-cell bracketing scan runs
    first and golden-section refines within the winning cell.
    """
    if not (0.0 <= w <= 1.0):
        raise ValueError(f"w must be in [0, 1], got {w}")
    p_max = 1.0 / (1.0 + theta)
    hi = p_max * (1.0 - 1e-12)

    def objective(p: float) -> float:
        return w * p + (1.0 - w) * uplink_rate(p, theta, m).q

    n = 1000
    grid = [hi * i / n for i in range(n + 1)]
    vals = [objective(p) for p in grid]
    i = max(range(n + 1), key=vals.__getitem__)
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n)]
    p_star = _golden_max(objective, a, b, tol)
    # the endpoints can beat the interior refinement when the max is at a boundary
    best = max([a, p_star, b], key=objective)
    return TradeoffOptimum(p_star=best, q_star=uplink_rate(best, theta, m).q,
                           objective=objective(best))


def erlang_energy_pdf(x: float, j: int, mu: float) -> float:
    """Erlang(j, mu) density of the energy harvested over j idle blocks (x in J)."""
    if j < 1:
        raise ValueError(f"shape must be a positive integer, got {j}")
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if x < 0:
        raise ValueError(f"density support is x >= 0, got {x}")
    if x == 0.0:
        return mu if j == 1 else 0.0
    return math.exp(j * math.log(mu) + (j - 1) * math.log(x) - mu * x - math.lgamma(j))
