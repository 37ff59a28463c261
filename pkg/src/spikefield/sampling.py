"""Randomness plumbing and elementary samplers.

Streams are addressed by ``(root_seed, path)`` through numpy's SeedSequence,
so any replica's draws are identical no matter how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import _firing_wait, _inv_next, _subset_excluding
from .errors import AllSilent, NonPositiveValue, OutOfDomain, RangeTooLarge
from .params import ModelParams


@dataclass
class RngStream:
    """A named random stream. Clone with :meth:`child` to share randomness;
    never reuse one stream in two concurrent consumers."""

    root_seed: int
    path: tuple = ()

    def __post_init__(self):
        if not (isinstance(self.root_seed, (int, np.integer)) and self.root_seed >= 0):
            raise NonPositiveValue(f"root_seed must be a nonnegative integer, got {self.root_seed}")
        path = tuple(int(p) for p in self.path)
        if any(p < 0 for p in path):
            raise NonPositiveValue(f"path entries must be nonnegative integers, got {self.path}")
        self.path = path
        self._gen = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(int(i) for i in ids))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True)
class ConstantInit:
    """Initial law concentrated at a single nonnegative value."""

    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise NonPositiveValue(f"initial value must be finite and >= 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    def sample(self, rng, size):
        _as_generator(rng)  # type check; no draws consumed for a constant
        return np.full(size, self.value, dtype=np.float64)


@dataclass
class RateCurve:
    """Nonnegative piecewise-linear rate on the uniform grid t0 + k*dt.

    ``cumulative[k]`` holds the exact integral from t0 to the k-th node.
    ``terminal=True`` declares the rate identically zero past the right
    endpoint; only then can event sampling report "no further events".
    """

    t0: float
    dt: float
    values: np.ndarray
    terminal: bool = False
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise NonPositiveValue(f"dt must be positive and finite, got {self.dt}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError(f"values must be a 1-d array with at least 2 nodes, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("rate values must be finite and >= 0")
        self.values = vals
        seg = 0.5 * self.dt * (vals[:-1] + vals[1:])
        cum = np.empty(vals.size)
        cum[0] = 0.0
        np.cumsum(seg, out=cum[1:])
        self.cumulative = cum

    @property
    def end(self) -> float:
        return self.t0 + (self.values.size - 1) * self.dt

    def grid(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def value(self, t: float) -> float:
        if t < self.t0 or t > self.end:
            raise OutOfDomain(f"t={t} outside [{self.t0}, {self.end}]")
        s = (t - self.t0) / self.dt
        k = min(int(s), self.values.size - 2)
        h = s - k
        return float(self.values[k] * (1.0 - h) + self.values[k + 1] * h)

    def integral(self, t: float) -> float:
        """Exact integral of the rate from t0 to t."""
        if t < self.t0 or t > self.end:
            raise OutOfDomain(f"t={t} outside [{self.t0}, {self.end}]")
        s = (t - self.t0) / self.dt
        k = min(int(s), self.values.size - 2)
        h = (s - k) * self.dt
        b = (self.values[k + 1] - self.values[k]) / self.dt
        return float(self.cumulative[k] + self.values[k] * h + 0.5 * b * h * h)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,r,R\n")
            for t, r, rr in zip(self.grid(), self.values, self.cumulative):
                fh.write(f"{float(t)!r},{float(r)!r},{float(rr)!r}\n")

    @classmethod
    def from_csv(cls, path, terminal: bool = False) -> "RateCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if t.size < 2:
            raise ValueError(f"rate curve file {path} has fewer than 2 rows")
        dt = float(t[1] - t[0])
        if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
            raise ValueError(f"rate curve file {path} is not on a uniform grid")
        return cls(t0=float(t[0]), dt=dt, values=data[:, 1], terminal=terminal)


def sample_firing_wait(total_potential, params: ModelParams, rng, size=None):
    """Wait until the first network firing from aggregate potential
    ``total_potential``; +inf on the no-further-firings branch."""
    if total_potential < 0 or not math.isfinite(total_potential):
        raise NonPositiveValue(f"total potential must be finite and >= 0, got {total_potential}")
    gen = _as_generator(rng)
    if size is None:
        return float(_firing_wait(total_potential, params.mu, params.gamma, gen.standard_exponential()))
    xi = gen.standard_exponential(size)
    if total_potential == 0.0:
        return np.full(size, np.inf)
    x = params.mu * xi / (params.gamma * total_potential)
    # the rejected branch is still evaluated eagerly, so silence its log1p(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(x < 1.0, -np.log1p(-np.minimum(x, 1.0)) / params.mu, np.inf)
    return out


def sample_firing_index(potentials, rng) -> int:
    """Index of the firing neuron: categorical with weights ``potentials``."""
    x = np.asarray(potentials, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"potentials must be a nonempty 1-d array, got shape {x.shape}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise NonPositiveValue("potentials must be finite and >= 0")
    total = float(x.sum())
    if total <= 0.0:
        raise AllSilent("all potentials are zero; no neuron can fire")
    cum = np.cumsum(x)
    u = _as_generator(rng).random() * total
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, x.size - 1)


def sample_excited_subset(n: int, firer: int, kappa: int, rng) -> np.ndarray:
    """Uniform size-kappa subset of {0..n-1} excluding the firer, sorted."""
    if n < 1:
        raise NonPositiveValue(f"n must be >= 1, got {n}")
    if not 0 <= firer < n:
        raise OutOfDomain(f"firer must be in [0, {n}), got {firer}")
    if kappa < 0 or kappa > n - 1:
        raise RangeTooLarge(f"kappa must be in [0, {n - 1}], got {kappa}")
    out = np.empty(kappa, dtype=np.int64)
    if kappa:
        _subset_excluding(n, firer, kappa, _as_generator(rng), out)
    return out


def sample_inhomogeneous_event(curve: RateCurve, scale: float, t_start: float, rng) -> float:
    """First event time after ``t_start`` of a Poisson process with intensity
    ``scale * r(t)``; +inf only when the curve is terminal and its remaining
    mass is exhausted."""
    if scale < 0 or not math.isfinite(scale):
        raise NonPositiveValue(f"scale must be finite and >= 0, got {scale}")
    if t_start < curve.t0 or t_start > curve.end:
        raise OutOfDomain(f"t_start={t_start} outside [{curve.t0}, {curve.end}]")
    xi = _as_generator(rng).standard_exponential()
    if scale > 0.0:
        t = _inv_next(t_start - curve.t0, xi / scale, curve.dt, curve.values, curve.cumulative)
    else:
        t = np.inf
    if math.isinf(t):
        if curve.terminal:
            return math.inf
        raise OutOfDomain(
            f"rate mass exhausted at the curve end t={curve.end} and the curve is not terminal"
        )
    return float(curve.t0 + t)
