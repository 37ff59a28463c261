"""Distances, summary statistics, and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._kernels import _w1_merged
from .errors import EmptyDistribution, NonPositiveValue, TooFewSamples
from .params import ModelParams, omega_distance

Z95 = float(stats.norm.ppf(0.975))


def _clean_samples(x, name) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptyDistribution(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def w1_empirical(a, b) -> float:
    """Exact Wasserstein-1 distance between two empirical distributions,
    integrated over the merged quantile partition. Sizes may differ."""
    aa = np.sort(_clean_samples(a, "first sample set"))
    bb = np.sort(_clean_samples(b, "second sample set"))
    return float(_w1_merged(aa, bb))


@dataclass(frozen=True)
class MeanCI:
    mean: float
    se: float
    lo: float
    hi: float
    n: int


def mean_with_ci(samples, confidence: float = 0.95) -> MeanCI:
    a = _clean_samples(samples, "samples")
    if a.size < 2:
        raise TooFewSamples(f"need at least 2 samples for a CI, got {a.size}")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    m = float(a.mean())
    se = float(a.std(ddof=1) / math.sqrt(a.size))
    return MeanCI(mean=m, se=se, lo=m - z * se, hi=m + z * se, n=a.size)


def mean_omega(samples, params: ModelParams, confidence: float = 0.95) -> MeanCI:
    """Mean bounded distance to the origin over samples, with a normal CI."""
    a = _clean_samples(samples, "samples")
    if np.any(a < 0):
        raise NonPositiveValue("potential samples must be >= 0")
    return mean_with_ci(omega_distance(a, 0.0, params), confidence)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    aa = _clean_samples(a, "first sample set")
    bb = _clean_samples(b, "second sample set")
    if aa.size < 8 or bb.size < 8:
        raise TooFewSamples(f"need >= 8 samples per side, got {aa.size} and {bb.size}")
    res = stats.ks_2samp(aa, bb, method="asymp")
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_se: float
    r2: float
    n: int

    def slope_ci(self, z: float = Z95):
        return self.slope - z * self.slope_se, self.slope + z * self.slope_se


def fit_log_scaling(x, y, mode: str = "loglog") -> FitResult:
    """Least-squares line through (log x, log y), (log x, y), or (x, log y).

    ``loglog`` estimates a power-law exponent, ``logx`` a logarithmic growth
    coefficient, ``logy`` an exponential rate. Normal-approximation slope
    standard error.
    """
    if mode not in ("loglog", "logx", "logy"):
        raise ValueError(f"mode must be 'loglog', 'logx', or 'logy', got {mode!r}")
    xa = _clean_samples(x, "x")
    ya = _clean_samples(y, "y")
    if xa.size != ya.size:
        raise ValueError(f"x and y lengths differ: {xa.size} vs {ya.size}")
    if xa.size < 3:
        raise TooFewSamples(f"need at least 3 points for a slope SE, got {xa.size}")
    if mode != "logy":
        if np.any(xa <= 0):
            raise NonPositiveValue("x values must be positive where logs are taken")
        u = np.log(xa)
    else:
        u = xa
    if mode in ("loglog", "logy"):
        if np.any(ya <= 0):
            raise NonPositiveValue("y values must be positive where logs are taken")
        v = np.log(ya)
    else:
        v = ya
    n = u.size
    um = u.mean()
    vm = v.mean()
    sxx = float(np.sum((u - um) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all identical; slope undefined")
    slope = float(np.sum((u - um) * (v - vm)) / sxx)
    intercept = vm - slope * um
    resid = v - (intercept + slope * u)
    rss = float(np.sum(resid**2))
    tss = float(np.sum((v - vm) ** 2))
    sigma2 = rss / (n - 2)
    slope_se = math.sqrt(sigma2 / sxx)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return FitResult(slope=slope, intercept=float(intercept), slope_se=slope_se, r2=r2, n=n)
