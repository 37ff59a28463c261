import math

import numpy as np
import pytest

from spikefield import (BENCHMARKS, CRIT, SUB, SUPER, ModelParams, Regime,
                        RngStream, chaos_threshold, classify_regime,
                        omega_distance, reproduction_number)
from spikefield.errors import NonPositiveValue


def _param_grid(seed, count):
    gen = RngStream(seed, (0,)).gen
    out = []
    for _ in range(count):
        out.append(ModelParams(
            mu=float(gen.uniform(0.1, 3.0)),
            gamma=float(gen.uniform(0.05, 2.0)),
            kappa=int(gen.integers(1, 6)),
            rho=float(gen.uniform(0.1, 2.0))))
    return out


def test_derived_constants_match_longdouble():
    # reference computed in extended precision, independent of __post_init__
    for p in _param_grid(101, 200):
        mu = np.longdouble(p.mu)
        gamma = np.longdouble(p.gamma)
        rho = np.longdouble(p.rho)
        theta_ref = p.kappa * -np.expm1(-rho * gamma / mu)
        theta_c_ref = p.kappa * rho * gamma / mu
        assert abs(p.theta - float(theta_ref)) <= 1e-15 * max(1.0, float(theta_ref))
        assert abs(p.theta_c - float(theta_c_ref)) <= 1e-15 * max(1.0, float(theta_c_ref))
        assert p.theta <= p.theta_c + 1e-15


def test_benchmarks():
    assert BENCHMARKS == {"sub": SUB, "crit": CRIT, "super": SUPER}
    assert CRIT.theta == 1.0
    assert SUB.theta < 1.0 < SUPER.theta
    for p in (SUB, CRIT, SUPER):
        assert (p.mu, p.kappa, p.rho) == (1.0, 2, 1.0)


def test_wrapper_functions_match_fields():
    for p in _param_grid(102, 20):
        assert reproduction_number(p) == p.theta
        assert chaos_threshold(p) == p.theta_c


def test_regime_classification():
    assert classify_regime(SUB) is Regime.SUBCRITICAL
    assert classify_regime(CRIT) is Regime.CRITICAL
    assert classify_regime(SUPER) is Regime.SUPERCRITICAL
    near = ModelParams(mu=1.0, gamma=math.log(2.0) * (1 + 1e-12), kappa=2, rho=1.0)
    assert classify_regime(near) is Regime.CRITICAL
    assert classify_regime(near, tol=1e-14) is Regime.SUPERCRITICAL


@pytest.mark.parametrize("bad", [
    dict(mu=0.0), dict(mu=-1.0), dict(mu=math.inf),
    dict(gamma=0.0), dict(gamma=-0.2),
    dict(rho=0.0), dict(rho=math.nan),
    dict(kappa=0), dict(kappa=-1), dict(kappa=1.5),
])
def test_invalid_params_rejected(bad):
    kw = dict(mu=1.0, gamma=0.5, kappa=2, rho=1.0)
    kw.update(bad)
    with pytest.raises(NonPositiveValue):
        ModelParams(**kw)


def test_as_dict_roundtrip():
    for p in _param_grid(103, 20):
        q = ModelParams.from_dict(p.as_dict())
        assert q == p
    with pytest.raises(NonPositiveValue):
        ModelParams.from_dict({"mu": 1.0, "gamma": 0.5})


def test_omega_distance_metric():
    gen = RngStream(104, (0,)).gen
    p = SUPER
    xs = gen.uniform(0.0, 8.0, size=300)
    ys = gen.uniform(0.0, 8.0, size=300)
    zs = gen.uniform(0.0, 8.0, size=300)
    dxy = omega_distance(xs, ys, p)
    dyx = omega_distance(ys, xs, p)
    dxz = omega_distance(xs, zs, p)
    dzy = omega_distance(zs, ys, p)
    assert np.all(dxy >= 0) and np.all(dxy < 1)
    assert np.allclose(dxy, dyx)
    assert np.all(omega_distance(xs, xs, p) == 0)
    assert np.all(dxy <= dxz + dzy + 1e-12)
    # closed form against |x - y|
    ref = -np.expm1(-(p.gamma / p.mu) * np.abs(xs - ys))
    assert np.allclose(dxy, ref, atol=1e-14)
