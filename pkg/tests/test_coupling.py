import math

import numpy as np
import pytest

from spikefield import (SUB, ConstantInit, ModelParams, QuantileTable, RngStream,
                        chaos_error_curve, generate_reference_table, ks_two_sample,
                        optimal_coupling_map, simulate_coupled_system,
                        simulate_linearized)
from spikefield.errors import EmptyReference, NonPositiveValue, OutOfDomain, RangeTooLarge
from spikefield.sampling import RateCurve


def _dense_table(params, horizon, dt, m, rng):
    sol_rate = RateCurve(0.0, dt, np.full(int(round(horizon / dt)) + 1, 1.0))
    # rate values refined by one sweep keep the marginal law realistic enough
    res = simulate_linearized(params, RateCurve(0.0, dt, sol_rate.values, terminal=True),
                              ConstantInit(1.0), 800, rng.child(0))
    rate = RateCurve(0.0, dt, res.mean)
    times = np.round(np.arange(0.0, horizon + 1e-9, dt), 10)
    return generate_reference_table(params, rate, ConstantInit(1.0), times, m,
                                    rng.child(1)), rate


def test_coupling_map_preserves_reference_law():
    gen = RngStream(601, (0,)).gen
    row = np.sort(gen.normal(2.0, 1.0, size=4000))
    others = gen.exponential(1.0, size=500)
    rng = RngStream(601, (1,))
    out = np.array([optimal_coupling_map(row, others, k % others.size, rng)
                    for k in range(4000)])
    _, p = ks_two_sample(out, row)
    assert p > 0.01
    with pytest.raises(EmptyReference):
        optimal_coupling_map(np.array([]), others, 0, rng)
    with pytest.raises(RangeTooLarge):
        optimal_coupling_map(row, others, 500, rng)


def test_coupled_system_starts_equal_and_tracks():
    table, _ = _dense_table(SUB, 1.5, 0.01, 2048, RngStream(602, (0,)))
    res = simulate_coupled_system(SUB, 1.0, table, 1.5, RngStream(602, (1,)),
                                  n=50, obs_times=[0.0, 0.75, 1.5], tracked=10)
    assert res.x_tracked.shape == (3, 10)
    assert res.gap[0] == 0.0
    assert np.all(res.gap >= 0.0)


def test_companion_matches_independent_limit_law():
    # companions are exact limit-law draws; compare against fresh reference
    table, rate = _dense_table(SUB, 1.5, 0.01, 4096, RngStream(603, (0,)))
    horizon = 1.5
    reps, tracked = 120, 5
    base = RngStream(603, (1,))
    comp = np.empty(reps * tracked)
    for r in range(reps):
        res = simulate_coupled_system(SUB, 1.0, table, horizon, base.child(r),
                                      n=40, obs_times=[horizon], tracked=tracked)
        comp[r * tracked:(r + 1) * tracked] = res.z_tracked[0]
    ref = table.row_at(horizon)
    _, p = ks_two_sample(np.round(comp, 9), np.round(ref, 9))
    assert p > 0.01


def test_coupled_system_validation():
    table, _ = _dense_table(SUB, 1.0, 0.01, 512, RngStream(604, (0,)))
    rng = RngStream(604, (1,))
    k3 = ModelParams(mu=1.0, gamma=0.2, kappa=3, rho=1.0)
    with pytest.raises(OutOfDomain):
        simulate_coupled_system(k3, 1.0, table, 1.0, rng, n=30)
    with pytest.raises(RangeTooLarge):
        simulate_coupled_system(SUB, 1.0, table, 1.0, rng, n=30, tracked=31)
    with pytest.raises(NonPositiveValue):
        simulate_coupled_system(SUB, 1.0, table, 1.0, rng, n=2)
    with pytest.raises(OutOfDomain):
        simulate_coupled_system(SUB, 1.0, table, 2.0, rng, n=30)
    short = QuantileTable(times=np.array([0.0]), rows=table.rows[:1])
    with pytest.raises(EmptyReference):
        simulate_coupled_system(SUB, 1.0, short, 0.0, rng, n=30)


def test_chaos_error_curve_decreases_in_n():
    table, _ = _dense_table(SUB, 1.5, 0.01, 4096, RngStream(605, (0,)))
    pts = chaos_error_curve(SUB, (20, 160), [0.75, 1.5], 120, None,
                            ConstantInit(1.0), RngStream(605, (1,)), table=table)
    assert {p.n for p in pts} == {20, 160}
    at_end = {p.n: p.w1_mean for p in pts if p.t == 1.5}
    assert at_end[160] < at_end[20]
    for p in pts:
        assert p.w1_mean > 0 and p.w1_ci >= 0 and p.replicas == 120
