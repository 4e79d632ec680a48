import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from wpt_aoi import analytic
from wpt_aoi.analytic import (
    UnstableQueueError,
    aoi_closed_form,
    avg_uplink_aoi,
    busy_period_moments,
    consistent_avg_uplink_aoi,
    consistent_system_time_moments,
    corollary_limits,
    erlang_energy_pdf,
    f_moments,
    harvest_pmf,
    service_moments,
    service_pgf,
    service_pmf,
    slot_moments,
    system_time_moments,
    uplink_rate,
    uplink_service_moments,
    weighted_sum_optimum,
)

THETAS = [1.2, 3.6, 10.8]


# ---------------------------------------------------------------- service law

@pytest.mark.parametrize("theta", THETAS)
def test_service_pmf_normalizes_and_matches_moments(theta):
    js = np.arange(1, 400)
    pmf = np.array([service_pmf(int(j), theta) for j in js])
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    mom = service_moments(theta)
    assert (js * pmf).sum() == pytest.approx(mom.first, rel=1e-12)
    assert (js * js * pmf).sum() == pytest.approx(mom.second, rel=1e-12)


def test_service_pmf_is_shifted_poisson():
    for j in range(1, 30):
        assert service_pmf(j, 1.2) == pytest.approx(
            stats.poisson.pmf(j - 1, 1.2), rel=1e-12)


def test_service_pmf_rejects_bad_args():
    with pytest.raises(ValueError):
        service_pmf(0, 1.2)
    with pytest.raises(ValueError):
        service_pmf(1, 0.0)


def test_service_pgf_endpoints_and_derivative():
    assert service_pgf(1.0, 1.2) == pytest.approx(1.0, abs=1e-15)
    assert service_pgf(0.0, 1.2) == 0.0
    h = 1e-6
    dz = (service_pgf(1.0, 1.2) - service_pgf(1.0 - h, 1.2)) / h
    assert dz == pytest.approx(service_moments(1.2).first, rel=1e-5)
    with pytest.raises(ValueError):
        service_pgf(1.5, 1.2)


# ------------------------------------------------------------ harvest and slot

@pytest.mark.parametrize("m", [0.5, 6.0, 21.6])
def test_harvest_pmf_is_poisson(m):
    for j in range(0, 60):
        assert harvest_pmf(j, m) == pytest.approx(stats.poisson.pmf(j, m),
                                                  rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("m", [0.5, 6.0, 21.6])
def test_slot_moments_numeric_sum(m):
    js = np.arange(0, 400)
    pmf = stats.poisson.pmf(js, m)
    s = np.maximum(js, 1)
    mom = slot_moments(m)
    assert (s * pmf).sum() == pytest.approx(mom.first, rel=1e-12)
    assert (s * s * pmf).sum() == pytest.approx(mom.second, rel=1e-12)


@pytest.mark.parametrize("theta,m", [(1.2, 6.0), (3.6, 6.0), (10.8, 0.7)])
def test_uplink_service_moments_numeric_sum(theta, m):
    # S_UL is a sum of S i.i.d. slot times; condition on S and sum numerically
    js = np.arange(1, 400)
    ps = np.array([service_pmf(int(j), theta) for j in js])
    s = slot_moments(m)
    var_s = s.second - s.first ** 2
    first = (js * s.first * ps).sum()
    second = ((js * var_s + (js * s.first) ** 2) * ps).sum()
    mom = uplink_service_moments(theta, m)
    assert mom.first == pytest.approx(first, rel=1e-12)
    assert mom.second == pytest.approx(second, rel=1e-12)


# --------------------------------------------------------------- queue pieces

@pytest.mark.parametrize("p", [0.0, 0.1, 0.3, 0.8])
def test_f_moments_numeric_sum(p):
    ks = np.arange(0, 2000)
    pmf = (1 - p) * p ** ks
    mom = f_moments(p)
    assert (ks * pmf).sum() == pytest.approx(mom.first, rel=1e-10, abs=1e-12)
    assert (ks * ks * pmf).sum() == pytest.approx(mom.second, rel=1e-10, abs=1e-12)


def _busy_pgf_moments(p, theta, h=1e-5):
    """Numeric busy-period moments from the branching fixed point.

    B(z) solves B(z) = phi(z*(1-p+p*B(z))) with phi the service PGF; moments
    come from one-sided finite differences at z = 1.
    """
    def bz(z):
        b = 1.0
        for _ in range(20000):
            nb = service_pgf(min(z * (1 - p + p * b), 1.0), theta)
            if abs(nb - b) < 1e-15:
                return nb
            b = nb
        return b

    b0, b1, b2 = bz(1.0), bz(1.0 - h), bz(1.0 - 2 * h)
    d1 = (3 * b0 - 4 * b1 + b2) / (2 * h)
    d2 = (b0 - 2 * b1 + b2) / (h * h)
    return d1, d2 + d1


@pytest.mark.parametrize("p,theta", [(0.1, 1.2), (0.2, 1.2), (0.05, 3.6)])
def test_busy_period_moments_vs_pgf_fixed_point(p, theta):
    first, second = _busy_pgf_moments(p, theta)
    mom = busy_period_moments(p, theta)
    assert mom.first == pytest.approx(first, rel=1e-4)
    assert mom.second == pytest.approx(second, rel=1e-3)


def test_busy_period_reference_value():
    # (1+theta)/(1-p-theta*p) at theta=1.2, p=0.2: 2.2/0.56
    assert busy_period_moments(0.2, 1.2).first == pytest.approx(
        3.9285714285714284, rel=1e-12)


def test_busy_period_unstable_raises():
    with pytest.raises(UnstableQueueError):
        busy_period_moments(0.5, 1.2)


# ------------------------------------------------------------ system time, AoI

def test_system_time_reference_value():
    # theta=1.2, m=6, p=0.2 reference point for the composed chain
    mom = system_time_moments(0.2, 1.2, 6.0)
    assert mom.first == pytest.approx(26.1733, rel=1e-4)


def test_uplink_rate_closed_form_equals_reciprocal_mean():
    for p in (0.01, 0.1, 0.2, 0.3):
        r = uplink_rate(p, 1.2, 6.0)
        assert r.q == pytest.approx(1.0 / system_time_moments(p, 1.2, 6.0).first,
                                    rel=1e-12)


def test_unstable_sentinels():
    for fn in (avg_uplink_aoi, uplink_rate, consistent_avg_uplink_aoi):
        res = fn(0.6, 1.2, 6.0)
        assert res.aoi == math.inf and res.q == 0.0 and not res.stable
    assert aoi_closed_form(0.6, 1.2, 6.0) == math.inf


def test_closed_form_halved_matches_composition():
    for theta in THETAS:
        m = 5 * theta
        p_max = 1 / (1 + theta)
        for p in np.linspace(0.0, p_max * 0.98, 25):
            ref = avg_uplink_aoi(float(p), theta, m).aoi
            half = aoi_closed_form(float(p), theta, m, second_term_halved=True)
            full = aoi_closed_form(float(p), theta, m, second_term_halved=False)
            assert half == pytest.approx(ref, rel=1e-12)
            if p > 0.05:
                assert full > half


def test_closed_form_identity_symbolically():
    # exact-rational spot check that the halved expansion equals the moment
    # composition; em stands in for exp(-m) and the identity is rational in it
    p, th, m, em = sympy.symbols("p th m em", positive=True)
    b = m + em
    c = m * m + m + em
    es1 = b * (1 + th)
    es2 = b ** 2 * (th * th + 2 * th) + c * (1 + th)
    ef1 = p / (1 - p)
    ef2 = p * (1 + p) / (1 - p) ** 2
    d = 1 - p - th * p
    eb1 = (1 + th) / d
    eb2 = ((1 + th) ** 2 * (1 - p * p - th * p * p) + th) / d ** 3
    stretch = 1 + ef1 * eb1
    et1 = es1 * stretch
    et2 = es2 * stretch ** 2 + es1 * (ef1 * (eb2 - eb1 ** 2)
                                      + (ef2 - ef1 ** 2) * eb1 ** 2)
    composed = et1 + sympy.Rational(1, 2) + et2 / (2 * et1)

    poly = 1 - p + p * p + th * p * p
    t1 = poly / (2 * (1 - p) * d) * (c / b + b * (3 * th ** 2 + 6 * th + 2) / (1 + th))
    num = p * (1 + th) ** 2 - p ** 3 * (2 - p) * (1 + th) ** 3 + th * p * (1 - p)
    expanded = t1 + num / (2 * (1 - p) * d ** 2 * poly) + sympy.Rational(1, 2)

    diff = sympy.together(composed - expanded)
    rng = np.random.default_rng(7)
    for _ in range(20):
        subs = {
            p: Fraction(int(rng.integers(1, 40)), 100),
            th: Fraction(int(rng.integers(1, 50)), 10),
            m: Fraction(int(rng.integers(1, 90)), 10),
            em: Fraction(int(rng.integers(1, 99)), 100),
        }
        if (1 + subs[th]) * subs[p] >= 1:
            continue
        assert diff.subs(subs).simplify() == 0


def test_consistent_mean_is_idle_fraction_reciprocal():
    for p in (0.01, 0.1, 0.2, 0.3):
        t = consistent_system_time_moments(p, 1.2, 6.0)
        sul = uplink_service_moments(1.2, 6.0)
        assert t.first == pytest.approx(sul.first / (1 - 2.2 * p), rel=1e-12)
        r = consistent_avg_uplink_aoi(p, 1.2, 6.0)
        assert r.q == pytest.approx((1 - 2.2 * p) / (slot_moments(6.0).first * 2.2),
                                    rel=1e-12)


def test_consistent_and_composed_agree_at_p_zero():
    a = avg_uplink_aoi(0.0, 1.2, 6.0)
    b = consistent_avg_uplink_aoi(0.0, 1.2, 6.0)
    assert a.aoi == pytest.approx(b.aoi, rel=1e-14)
    assert a.q == pytest.approx(b.q, rel=1e-14)


# ------------------------------------------------------------------ asymptotics

@pytest.mark.parametrize("theta,m", [(1.2, 6.0), (3.6, 6.0), (10.8, 6.0)])
def test_limits_at_zero_rate(theta, m):
    lim = corollary_limits(theta, m)
    res = avg_uplink_aoi(1e-9, theta, m)
    assert res.aoi == pytest.approx(lim.aoi_at_zero, rel=1e-7)
    assert res.q == pytest.approx(lim.q_at_zero, rel=1e-7)


def test_limit_at_zero_reference_value():
    lim = corollary_limits(1.2, 6.0)
    assert lim.aoi_at_zero == pytest.approx(22.44268, rel=1e-5)
    assert lim.q_at_zero == pytest.approx(0.07572629, rel=1e-6)


@pytest.mark.parametrize("theta,m", [(1.2, 6.0), (3.6, 6.0)])
def test_q_vanishing_coefficient_numeric_limit(theta, m):
    lim = corollary_limits(theta, m)
    o = 1e-7
    p = (1.0 - o) / (1.0 + theta)
    q = uplink_rate(p, theta, m).q
    assert q / o == pytest.approx(lim.q_vanishing_coeff, rel=1e-2)


# -------------------------------------------------------------------- tradeoff

@pytest.mark.parametrize("w", [0.0, 0.3, 0.5, 0.9, 1.0])
def test_weighted_sum_optimum_beats_dense_grid(w):
    theta, m = 1.2, 6.0
    opt = weighted_sum_optimum(w, theta, m)
    p_max = 1 / (1 + theta)
    grid = np.linspace(0.0, p_max * (1 - 1e-9), 100_001)
    vals = w * grid + (1 - w) * np.array(
        [uplink_rate(float(p), theta, m).q for p in grid])
    assert opt.objective >= vals.max() - 1e-9
    assert 0.0 <= opt.p_star < p_max


def test_weighted_sum_endpoints():
    theta, m = 1.2, 6.0
    # q is decreasing so w=0 sits at p=0; w=1 pushes to the stability edge
    assert weighted_sum_optimum(0.0, theta, m).p_star == pytest.approx(0.0, abs=1e-6)
    assert weighted_sum_optimum(1.0, theta, m).p_star == pytest.approx(
        1 / (1 + theta), abs=1e-6)
    with pytest.raises(ValueError):
        weighted_sum_optimum(1.5, theta, m)


# ------------------------------------------------------------------ energy pdf

def test_erlang_pdf_matches_scipy_and_normalizes():
    mu = 600000.0
    for j in (1, 3, 10):
        for x in (0.0, 1e-6, 5e-6, 5e-5):
            assert erlang_energy_pdf(x, j, mu) == pytest.approx(
                stats.gamma.pdf(x, a=j, scale=1 / mu), rel=1e-10, abs=1e-30)
    total, _ = integrate.quad(lambda x: erlang_energy_pdf(x, 3, mu), 0, 2e-4)
    assert total == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        erlang_energy_pdf(-1.0, 1, mu)
    with pytest.raises(ValueError):
        erlang_energy_pdf(1.0, 0, mu)


# ------------------------------------------------------------------ properties

stable_inputs = st.tuples(
    st.floats(min_value=0.05, max_value=12.0),
    st.floats(min_value=0.1, max_value=30.0),
    st.floats(min_value=0.0, max_value=0.95),
).map(lambda t: (t[2] / (1.0 + t[0]) * 0.999, t[0], t[1]))


@given(stable_inputs)
@settings(max_examples=150, deadline=None)
def test_moment_pairs_admit_nonnegative_variance(args):
    p, theta, m = args
    for mom in (service_moments(theta), slot_moments(m),
                uplink_service_moments(theta, m),
                busy_period_moments(p, theta),
                system_time_moments(p, theta, m),
                consistent_system_time_moments(p, theta, m)):
        assert mom.first >= 1.0 - 1e-12
        assert mom.second >= mom.first ** 2 - 1e-6 * mom.second


@given(stable_inputs)
@settings(max_examples=150, deadline=None)
def test_aoi_dominates_mean_system_time(args):
    p, theta, m = args
    res = avg_uplink_aoi(p, theta, m)
    t = system_time_moments(p, theta, m)
    assert res.stable
    # E(T^2) >= E(T)^2 forces aoi >= 1.5 E(T) + 1/2
    assert res.aoi >= 1.5 * t.first + 0.5 - 1e-9 * res.aoi
    assert 0.0 < res.q <= 1.0


@given(st.floats(min_value=0.05, max_value=12.0),
       st.floats(min_value=0.1, max_value=30.0),
       st.floats(min_value=0.0, max_value=0.9),
       st.floats(min_value=1e-4, max_value=0.05))
@settings(max_examples=150, deadline=None)
def test_aoi_nondecreasing_q_nonincreasing(theta, m, frac, step):
    p_max = 1.0 / (1.0 + theta)
    p1 = frac * p_max * 0.99
    p2 = min(p1 + step * p_max, p_max * 0.995)
    r1 = avg_uplink_aoi(p1, theta, m)
    r2 = avg_uplink_aoi(p2, theta, m)
    assert r2.aoi >= r1.aoi - 1e-9 * r1.aoi
    assert r2.q <= r1.q + 1e-12


@given(st.integers(min_value=1, max_value=200),
       st.floats(min_value=0.05, max_value=15.0))
@settings(max_examples=200, deadline=None)
def test_pmfs_are_probabilities(j, theta):
    assert 0.0 <= service_pmf(j, theta) <= 1.0
    assert 0.0 <= harvest_pmf(j - 1, theta) <= 1.0
