import math
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from spikefield import ConstantInit, RateCurve, RngStream, SUPER
from spikefield.errors import NonPositiveValue, OutOfDomain, RangeTooLarge
from spikefield.sampling import (sample_excited_subset, sample_firing_index,
                                 sample_firing_wait, sample_inhomogeneous_event)


def test_rng_stream_reproducible_and_disjoint():
    a = RngStream(7, (1, 2)).gen.random(8)
    b = RngStream(7, (1, 2)).gen.random(8)
    c = RngStream(7, (1, 3)).gen.random(8)
    d = RngStream(8, (1, 2)).gen.random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    # child(x, y) differs from child(x).child(y) is NOT required; same path is
    r = RngStream(7)
    assert np.array_equal(r.child(4, 5).gen.random(4), RngStream(7, (4, 5)).gen.random(4))


def test_constant_init():
    init = ConstantInit(1.5)
    assert init.mean == 1.5
    s = init.sample(RngStream(1, (0,)).gen, 5)
    assert s.shape == (5,) and np.all(s == 1.5)
    with pytest.raises(NonPositiveValue):
        ConstantInit(-0.1)


def test_rate_curve_grid_and_interpolation():
    gen = RngStream(201, (0,)).gen
    vals = gen.uniform(0.0, 2.0, size=41)
    c = RateCurve(0.0, 0.05, vals)
    assert c.end == pytest.approx(2.0)
    assert np.allclose(c.grid(), 0.05 * np.arange(41))
    assert c.value(0.05 * 7) == pytest.approx(vals[7])
    # linear between knots: 0.125 is the midpoint of [0.10, 0.15]
    assert c.value(0.125) == pytest.approx(0.5 * (vals[2] + vals[3]), rel=1e-9, abs=1e-12)


def test_rate_curve_cumulative_is_exact_trapezoid():
    gen = RngStream(202, (0,)).gen
    vals = gen.uniform(0.0, 3.0, size=101)
    c = RateCurve(0.0, 0.01, vals)
    ref = np.concatenate([[0.0], np.cumsum(0.01 * 0.5 * (vals[1:] + vals[:-1]))])
    assert np.allclose(c.cumulative, ref, atol=1e-14)
    t = 0.637
    k = int(t / 0.01)
    frac = t - 0.01 * k
    seg = vals[k] * frac + 0.5 * (vals[k + 1] - vals[k]) * frac**2 / 0.01
    assert c.integral(t) == pytest.approx(ref[k] + seg, rel=1e-10)


def test_rate_curve_csv_roundtrip(tmp_path):
    gen = RngStream(203, (0,)).gen
    c = RateCurve(0.0, 0.02, gen.uniform(0.0, 1.0, size=26))
    p = tmp_path / "rate.csv"
    c.to_csv(p)
    back = RateCurve.from_csv(p)
    assert back.dt == c.dt and back.t0 == c.t0
    assert np.array_equal(back.values, c.values)


def test_firing_wait_law():
    # survival exp(-(gamma*S/mu)(1 - e^{-mu t})), atom at +inf of exp(-gamma*S/mu)
    p = SUPER
    s_tot = 2.0
    rng = RngStream(204, (0,))
    draws = sample_firing_wait(s_tot, p, rng, size=40_000)
    c = p.gamma * s_tot / p.mu
    p_inf = math.exp(-c)
    inf_frac = float(np.mean(np.isinf(draws)))
    se = math.sqrt(p_inf * (1 - p_inf) / draws.size)
    assert abs(inf_frac - p_inf) <= 4 * se
    finite = draws[np.isfinite(draws)]

    def cond_cdf(t):
        return -np.expm1(-c * -np.expm1(-p.mu * t)) / (1 - p_inf)

    res = stats.kstest(finite, cond_cdf)
    assert res.pvalue > 0.01
    assert sample_firing_wait(0.0, p, rng) == math.inf
    with pytest.raises(NonPositiveValue):
        sample_firing_wait(-1.0, p, rng)


def test_firing_index_categorical():
    w = np.array([0.1, 0.3, 0.0, 0.6, 1.0])
    rng = RngStream(205, (0,))
    n = 50_000
    counts = np.bincount([sample_firing_index(w, rng) for _ in range(n)], minlength=5)
    probs = w / w.sum()
    assert counts[2] == 0
    for k in range(5):
        se = math.sqrt(max(probs[k] * (1 - probs[k]), 1e-12) / n)
        assert abs(counts[k] / n - probs[k]) <= 4.5 * se + 1e-12
    from spikefield.errors import AllSilent
    with pytest.raises(AllSilent):
        sample_firing_index(np.zeros(3), rng)


def test_excited_subset_uniform():
    n, firer, kappa = 6, 2, 2
    rng = RngStream(206, (0,))
    draws = 40_000
    cells = {c: 0 for c in combinations([i for i in range(n) if i != firer], kappa)}
    for _ in range(draws):
        sub = sample_excited_subset(n, firer, kappa, rng)
        assert sub.size == kappa and firer not in sub and sub[0] < sub[1]
        cells[tuple(sub)] += 1
    p0 = 1.0 / len(cells)
    se = math.sqrt(p0 * (1 - p0) / draws)
    for c, cnt in cells.items():
        assert abs(cnt / draws - p0) <= 4.5 * se, (c, cnt)
    assert sample_excited_subset(4, 1, 0, rng).size == 0
    with pytest.raises(RangeTooLarge):
        sample_excited_subset(4, 1, 4, rng)
    with pytest.raises(OutOfDomain):
        sample_excited_subset(4, 7, 2, rng)


def test_inhomogeneous_event_ramp_law():
    # r(t) = t on [0, 2], intensity scale*r: event time is sqrt(2 xi / scale)
    grid = np.linspace(0.0, 2.0, 201)
    curve = RateCurve(0.0, 0.01, grid, terminal=True)
    scale = 5.0
    rng = RngStream(207, (0,))
    draws = np.array([sample_inhomogeneous_event(curve, scale, 0.0, rng)
                      for _ in range(20_000)])
    finite = draws[np.isfinite(draws)]
    assert draws.size - finite.size <= 10     # P(escape) ~ e^{-10}
    p_esc = math.exp(-scale * 2.0)
    res = stats.kstest(finite, lambda t: -np.expm1(-scale * t**2 / 2.0) / (1 - p_esc))
    assert res.pvalue > 0.01


def test_inhomogeneous_event_domain_policy():
    rng = RngStream(208, (0,))
    zero_term = RateCurve(0.0, 0.1, np.zeros(11), terminal=True)
    assert sample_inhomogeneous_event(zero_term, 1.0, 0.0, rng) == math.inf
    zero_open = RateCurve(0.0, 0.1, np.zeros(11))
    with pytest.raises(OutOfDomain):
        sample_inhomogeneous_event(zero_open, 1.0, 0.0, rng)
    with pytest.raises(OutOfDomain):
        sample_inhomogeneous_event(zero_term, 1.0, 5.0, rng)
    with pytest.raises(NonPositiveValue):
        sample_inhomogeneous_event(zero_term, -1.0, 0.0, rng)
