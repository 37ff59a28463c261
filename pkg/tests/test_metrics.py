import math

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import linear_sum_assignment

from spikefield import RngStream, SUPER, fit_log_scaling, ks_two_sample, mean_with_ci, w1_empirical
from spikefield.errors import EmptyDistribution, NonPositiveValue, TooFewSamples
from spikefield.metrics import mean_omega


def _assignment_w1(a, b):
    # exact optimal transport between equal-weight empiricals via expansion
    # to the lcm size, then a minimum-cost assignment
    m = np.lcm(a.size, b.size)
    aa = np.repeat(a, m // a.size)
    bb = np.repeat(b, m // b.size)
    cost = np.abs(aa[:, None] - bb[None, :])
    ri, ci = linear_sum_assignment(cost)
    return cost[ri, ci].sum() / m


def test_w1_matches_assignment_oracle():
    gen = RngStream(301, (0,)).gen
    for _ in range(40):
        a = gen.uniform(-5, 5, size=int(gen.integers(2, 7)))
        b = gen.uniform(-5, 5, size=int(gen.integers(2, 7)))
        assert w1_empirical(a, b) == pytest.approx(_assignment_w1(a, b), abs=1e-12)


def test_w1_metric_properties():
    gen = RngStream(302, (0,)).gen
    for _ in range(20):
        a = gen.normal(size=30)
        b = gen.normal(size=45)
        c = gen.normal(size=30)
        assert w1_empirical(a, a) == 0.0
        assert w1_empirical(a, b) == pytest.approx(w1_empirical(b, a), abs=1e-14)
        assert w1_empirical(a, b) <= w1_empirical(a, c) + w1_empirical(c, b) + 1e-12
    # point masses: distance is the gap
    assert w1_empirical([1.0], [4.0]) == pytest.approx(3.0)
    with pytest.raises(EmptyDistribution):
        w1_empirical([], [1.0])


def test_ks_matches_scipy():
    gen = RngStream(303, (0,)).gen
    a = gen.normal(size=500)
    b = gen.normal(0.3, 1.0, size=400)
    stat, p = ks_two_sample(a, b)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert stat == pytest.approx(float(ref.statistic))
    assert p == pytest.approx(float(ref.pvalue))
    with pytest.raises(TooFewSamples):
        ks_two_sample(a[:4], b)


def test_mean_with_ci_coverage():
    gen = RngStream(304, (0,)).gen
    covered = 0
    for _ in range(200):
        ci = mean_with_ci(gen.normal(2.0, 1.0, size=50))
        covered += ci.lo <= 2.0 <= ci.hi
    # 95% nominal; 4 sigma band around 190/200
    assert 178 <= covered <= 200
    with pytest.raises(TooFewSamples):
        mean_with_ci([1.0])


def test_mean_omega_matches_direct():
    gen = RngStream(305, (0,)).gen
    x = gen.uniform(0, 4, size=200)
    mo = mean_omega(x, SUPER)
    direct = mean_with_ci(-np.expm1(-(SUPER.gamma / SUPER.mu) * x))
    assert mo.mean == pytest.approx(direct.mean)
    assert mo.se == pytest.approx(direct.se)
    with pytest.raises(NonPositiveValue):
        mean_omega([-0.1, 1.0], SUPER)


def test_fit_log_scaling_exact_recovery():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    f = fit_log_scaling(x, 3.0 * x**-0.5, mode="loglog")
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.r2 == pytest.approx(1.0)
    f = fit_log_scaling(x, 2.0 + 1.5 * np.log(x), mode="logx")
    assert f.slope == pytest.approx(1.5, abs=1e-12)
    t = np.linspace(0.0, 3.0, 7)
    f = fit_log_scaling(t, 2.0 * np.exp(1.3 * t), mode="logy")
    assert f.slope == pytest.approx(1.3, abs=1e-12)
    assert f.slope_se == pytest.approx(0.0, abs=1e-12)


def test_fit_log_scaling_noisy_ci_contains_truth():
    gen = RngStream(306, (0,)).gen
    x = np.array([10.0, 20.0, 40.0, 80.0, 160.0, 320.0])
    y = 5.0 * x**-0.8 * np.exp(gen.normal(0, 0.05, size=x.size))
    f = fit_log_scaling(x, y, mode="loglog")
    lo, hi = f.slope_ci()
    assert lo <= -0.8 <= hi


def test_fit_log_scaling_errors():
    with pytest.raises(NonPositiveValue):
        fit_log_scaling([1.0, 2.0, 3.0], [1.0, -1.0, 1.0], mode="loglog")
    with pytest.raises(NonPositiveValue):
        fit_log_scaling([0.0, 2.0, 3.0], [1.0, 1.0, 1.0], mode="logx")
    with pytest.raises(TooFewSamples):
        fit_log_scaling([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_log_scaling([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], mode="nope")
    with pytest.raises(ValueError):
        fit_log_scaling([2.0, 2.0, 2.0], [1.0, 2.0, 3.0], mode="logx")
