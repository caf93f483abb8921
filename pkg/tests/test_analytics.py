import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percolab import analytics as an
from percolab.errors import DivergenceError, PrecisionError, ScheduleError


# ---------------------------------------------------------------- oracles


def theta_gamma0_oracle(p, kmax=400):
    """Exact product for gamma=0: m(n)=k on n in (2^(k-1), 2^k] for n >= 3."""
    mpmath.mp.dps = 40
    q = mpmath.mpf(1) - mpmath.mpf(p)
    logv = mpmath.log(1 - q ** 2) * 3  # n = 0, 1, 2 all have m = 2
    # n = 3, 4 -> m = 2 (2 < log2 n <= 2)
    logv += 2 * mpmath.log(1 - q ** 2)
    for k in range(3, kmax):
        count = 2 ** (k - 1)
        logv += count * mpmath.log(1 - q ** k)
    return float(mpmath.exp(logv))


def theta_direct_interval(p, gamma, N=2_000_000):
    """Direct float product up to N plus an envelope-integral tail interval."""
    n = np.arange(0, N, dtype=np.float64)
    lp = np.where(n <= math.e, 1.0, np.log(np.maximum(n, 1.0)))
    llp = np.where(lp <= math.e, 1.0, np.log(lp))
    m = np.ceil((lp + gamma * llp) / math.log(2))
    x = (1 - p) ** m
    logv = float(np.sum(np.log1p(-x)))
    a = math.log(1 / (1 - p)) / math.log(2)
    env = lambda t: mpmath.exp(-a * (mpmath.log(t) + gamma * mpmath.log(mpmath.log(t))))
    tail = float(mpmath.quad(env, [N - 1, 10 * N, mpmath.inf]))
    xN = float(x[-1])
    upper = math.exp(logv)
    lower = upper * math.exp(-tail / (1 - xN))
    return lower, upper


# ---------------------------------------------------------------- schedules


def test_log_plus_examples():
    assert an.log_plus(0) == 1
    assert an.log_plus(math.e) == 1
    assert an.log_plus(math.e ** 2) == pytest.approx(2)
    assert an.log_plus(10 ** 400) == pytest.approx(400 * math.log(10))


@given(st.floats(0, 100))
def test_log_plus_continuous_and_at_least_one(x):
    assert an.log_plus(x) >= 1
    assert an.log_plus(x) == pytest.approx(max(1.0, math.log(x)) if x > 0 else 1.0)


def test_m_gamma_examples():
    assert an.m_gamma(10, 0) == 4
    assert an.m_gamma(10, 1) == 5
    assert an.m_gamma(0, 0) == an.m_gamma(2, 0) == 2


def test_m_gamma_nonpositive_raises():
    with pytest.raises(ScheduleError):
        an.m_gamma(0, -5)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0, -0.5])
def test_m_gamma_two_sided_comparison(gamma):
    n = np.arange(20, 1_000_001, 7)
    m = np.array([an.m_gamma(int(k), gamma) for k in n])
    ratio = 0.5 ** m * n * np.log(n) ** gamma
    assert ratio.max() <= 1.0 + 1e-12
    assert ratio.min() >= 0.5 - 1e-12


def test_schedule_parse_roundtrip_and_monotone():
    s = an.Schedule.parse("m_pc:0.6")
    assert s == an.Schedule("m_pc", 0.6)
    assert an.Schedule.parse(str(s)) == s
    assert s.check(2000) <= math.ceil(math.log(4) / math.log(1 / 0.6))
    assert an.Schedule("r_section4").check(10_000) <= 1
    assert an.Schedule("const", 3)(100) == 3
    with pytest.raises(ScheduleError):
        an.Schedule("nope")
    with pytest.raises(ScheduleError):
        an.Schedule("m_pc", 1.5)


def test_schedule_checks_report():
    rep = an.schedule_checks(0.6)
    assert rep["m_pc"]["upper_bound_holds"]
    # ceiling loses at most one factor q; log+ replaces log below e
    slack = min(math.exp(2 * an.log_plus(l)) / (l + 1) ** 2 for l in range(1, 10_001))
    assert rep["m_pc"]["best_c"] >= 0.6 * 4.0 ** -2 * slack * (1 - 1e-9)
    assert rep["r_section4"]["within_half_to_four"]
    prod = rep["section4_product"]
    lv = prod["argmax_level"]
    direct = 2.0 ** (2 * an.r_section4(lv)) * 0.6 ** an.m_section4(lv, 0.6)
    assert prod["max_value"] == pytest.approx(direct, rel=1e-9)
    assert prod["holds"] == (prod["max_value"] <= 1e-4)
    if not prod["holds"]:
        b = prod["suggested_m_bump"]
        assert prod["max_value"] * 0.6 ** b <= 1e-4 < prod["max_value"] * 0.6 ** (b - 1)


# ---------------------------------------------------------------- survival criterion


def test_survival_positive_examples():
    assert an.survival_positive(0.51, -5)
    assert not an.survival_positive(0.5, 1)
    assert an.survival_positive(0.5, 1.5)
    assert not an.survival_positive(0.49, 10)


def test_theta_trivial_cases():
    assert an.theta_product(0, 1.0, 0).value == 1.0
    assert an.theta_product(0, 0.5, 0).value == 0.0
    assert an.theta_product(3, 0.3, 5).value == 0.0


@pytest.mark.parametrize("p", [0.6, 0.75, 0.9])
def test_theta_gamma0_matches_exact_run_oracle(p):
    r = an.theta_product(0, p, 0.0)
    assert r.error <= 1e-9
    oracle = theta_gamma0_oracle(p)
    assert r.lower - 1e-12 <= oracle <= r.upper + 1e-12


GRID = [(p, g) for p in (0.55, 0.62, 0.7, 0.8, 0.95) for g in (-0.5, 0.5, 1.0, 2.0)]


@pytest.mark.parametrize("p,gamma", GRID)
def test_theta_interval_overlaps_direct_oracle(p, gamma):
    r = an.theta_product(0, p, gamma, tolerance=1e-7)
    lo, hi = theta_direct_interval(p, gamma)
    assert r.lower <= hi + 1e-12 and lo <= r.upper + 1e-12
    assert abs(r.value - (lo + hi) / 2) <= r.error + (hi - lo) / 2 + 1e-12


def test_theta_start_level_increases_value():
    vals = [an.theta_product(lv, 0.7, 1.0).value for lv in (0, 5, 50, 500)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


# negative gamma near p = 1/2 pushes the monotone envelope beyond reach
@given(st.floats(0.51, 0.99), st.floats(0.51, 0.99), st.floats(0, 3))
def test_theta_monotone_in_p(p1, p2, gamma):
    lo, hi = sorted((p1, p2))
    a = an.theta_product(0, lo, gamma, tolerance=1e-7)
    b = an.theta_product(0, hi, gamma, tolerance=1e-7)
    assert a.value <= b.value + a.error + b.error


@given(st.floats(0.6, 0.99), st.floats(-0.5, 3), st.floats(-0.5, 3))
def test_theta_monotone_in_gamma(p, g1, g2):
    lo, hi = sorted((g1, g2))
    a = an.theta_product(0, p, lo, tolerance=1e-7)
    b = an.theta_product(0, p, hi, tolerance=1e-7)
    assert a.value <= b.value + a.error + b.error


@pytest.mark.parametrize("p", [0.3, 0.45, 0.5, 0.505, 0.52, 0.6, 0.8])
@pytest.mark.parametrize("gamma", [-0.5, 1.0, 1.5, 3.0])
def test_survival_positive_agrees_with_certified_lower_bound(p, gamma):
    try:
        r = an.theta_product(0, p, gamma, tolerance=1e-3)
    except PrecisionError:
        return
    if r.lower > 0:
        assert an.survival_positive(p, gamma)
    if not an.survival_positive(p, gamma):
        assert r.value == 0.0


def test_theta_unreachable_tolerance_raises():
    with pytest.raises(PrecisionError):
        an.theta_product(0, 0.5, 2.0, tolerance=1e-12)


def test_partial_series_growth_at_half_gamma_one():
    # divergent like log log n; check sustained growth against the lower envelope
    sums = [an.partial_series(0.5, 1.0, 10 ** k) for k in range(3, 8)]
    inc = np.diff(sums)
    env = [0.5 * (math.log(math.log(10 ** (k + 1))) - math.log(math.log(10 ** k)))
           for k in range(3, 7)]
    assert np.all(inc >= np.array(env) - 1e-12)
    # convergent comparison: gamma = 3 increments shrink much faster
    s3 = [an.partial_series(0.5, 3.0, 10 ** k) for k in range(3, 8)]
    assert np.diff(s3)[-1] < inc[-1] / 5


def test_partial_series_matches_scalar_terms():
    direct = math.fsum(0.5 ** an.m_gamma(n, 1.0) for n in range(5000))
    assert an.partial_series(0.5, 1.0, 4999) == pytest.approx(direct, rel=1e-12)


# ---------------------------------------------------------------- traversals and recursion


def test_alpha_and_traversal_examples():
    assert an.alpha(10, 0.5) == pytest.approx(16)
    assert an.traversal_bound(0, 10, 0.5) == pytest.approx(1 / (1 - 4 * 0.5 ** 10))
    with pytest.raises(DivergenceError):
        an.traversal_bound(1, 2, 0.5)


@pytest.mark.parametrize("q", [0.3, 0.5, 0.6])
def test_contraction_strictly_decreasing_in_M(q):
    M0 = 1
    while 4 * q ** M0 >= 1 or an.alpha(M0, q) <= 3:
        M0 += 1
    f = [an.contraction_factor(2.0, 1.0, q, M) for M in range(M0, M0 + 8)]
    assert all(a > b for a, b in zip(f, f[1:]))


@pytest.mark.parametrize("q", [0.1, 0.5, 0.7, 0.9])
def test_min_M_exists_and_is_minimal(q):
    M = an.min_M(3.0, 1.0, q)
    assert an.contraction_factor(3.0, 1.0, q, M) <= 0.5
    try:
        assert an.contraction_factor(3.0, 1.0, q, M - 1) > 0.5
    except DivergenceError:
        pass


def test_contraction_matches_mpmath_sum():
    q, M, C = 0.5, 6, 2.0
    a = an.alpha(M, q)
    mpmath.mp.dps = 30
    s = mpmath.nsum(lambda j: mpmath.mpf(max(j, mpmath.e)) ** (-a) * (j + 1) ** 2, [0, mpmath.inf])
    exact = 2 * C / (1 - 4 * q ** M) * float(s)
    got = an.contraction_factor(C, 1.0, q, M)
    assert exact <= got <= exact * (1 + 1e-6)


@pytest.mark.parametrize("C", [1.0, 10.0])
def test_chi_tilde_table_obeys_halving_bound(C):
    t = an.chi_tilde_recursion(C, 1.0, 0.52)
    assert t.contraction <= 0.5
    assert t.contraction_prev is None or t.contraction_prev > 0.5
    assert np.all(np.isfinite(t.chi_tilde)) and np.all(t.chi_tilde >= 0)
    assert t.chi_tilde.shape == (13, 21)
    assert t.bound_holds()
    assert math.isfinite(t.total())


def test_chi_tilde_with_weak_M_violates_or_diverges():
    with pytest.raises(DivergenceError):
        an.chi_tilde_recursion(1.0, 1.0, 0.5, M=3)
