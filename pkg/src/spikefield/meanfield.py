"""Mean-field limit: rate-driven single-neuron process and its fixed point.

The limit process decays at rate mu, resets at state-dependent rate gamma*z,
and receives +rho kicks from an inhomogeneous stream with rate
gamma*kappa*r(t). At the fixed point r(t) = E[Z_t] it is the law of the
infinite-network single neuron.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import _linear_path, _self_consistent_kernel
from .errors import EmptyReference, NoConvergence, NonPositiveValue, TooFewSamples
from .params import ModelParams
from .sampling import ConstantInit, RateCurve, RngStream


@dataclass
class EnsembleSnapshots:
    """Raw (unsorted) path values at selected times; rows stay paired across
    times so finite-difference statistics can batch correctly."""

    times: np.ndarray          # (T,)
    matrix: np.ndarray         # (paths, T)


@dataclass
class QuantileTable:
    """Per-time sorted reference samples representing the process law."""

    times: np.ndarray          # (T,)
    rows: np.ndarray           # (T, M), each row sorted ascending

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.times.size:
            raise EmptyReference(f"rows shape {self.rows.shape} does not match {self.times.size} times")
        if self.rows.size == 0:
            raise EmptyReference("reference table is empty")

    @classmethod
    def from_snapshots(cls, snaps: EnsembleSnapshots) -> "QuantileTable":
        return cls(times=snaps.times.copy(), rows=np.sort(snaps.matrix.T, axis=1))

    def row_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.rows[i]

    def save(self, path) -> None:
        np.savez_compressed(path, times=self.times, rows=self.rows)

    @classmethod
    def load(cls, path) -> "QuantileTable":
        data = np.load(path)
        return cls(times=data["times"], rows=data["rows"])


@dataclass
class LinearizedResult:
    times: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    h_mc: Optional[np.ndarray] = None
    p_mc: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    m3: Optional[np.ndarray] = None
    snapshots: Optional[EnsembleSnapshots] = None


def _grid_indices(times, dt: float, nmax: int) -> np.ndarray:
    idx = np.empty(len(times), dtype=np.int64)
    for j, t in enumerate(times):
        k = int(round(t / dt))
        if not (0 <= k <= nmax) or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the grid (dt={dt}, end={nmax * dt})")
        idx[j] = k
    return idx


def simulate_linearized(params: ModelParams, rate: RateCurve, init, paths: int,
                        rng: RngStream, stats: bool = False, table_times=(),
                        fire_on: bool = True) -> LinearizedResult:
    """Monte Carlo of the rate-driven process over the curve's own grid.

    Path p consumes ``rng.child(p)``, so repeated calls with the same stream
    reuse the same randomness per path (the solver's common-random-numbers
    coupling). ``fire_on=False`` disables resets (diagnostic linear ODE mode).
    """
    if rate.t0 != 0.0:
        raise ValueError(f"rate curve must start at t0=0, got {rate.t0}")
    if paths < 1:
        raise NonPositiveValue(f"paths must be >= 1, got {paths}")
    nk = rate.values.size
    dt = rate.dt
    vals = rate.values
    cum = rate.cumulative
    exc_scale = params.gamma * params.kappa
    c = params.gamma / params.mu
    sums = np.zeros(nk)
    sums2 = np.zeros(nk)
    sum_exp = np.zeros(nk) if stats else None
    n_zero = np.zeros(nk, dtype=np.int64) if stats else None
    sums3 = np.zeros(nk) if stats else None
    tab_idx = _grid_indices(table_times, dt, nk - 1) if len(table_times) else None
    raw = np.empty((paths, len(table_times))) if tab_idx is not None else None
    row = np.empty(nk)
    for p in range(paths):
        gen = rng.child(p).gen
        z0 = float(init.sample(gen, 1)[0])
        if z0 < 0:
            raise NonPositiveValue(f"initial law produced a negative value {z0}")
        _linear_path(z0, params.mu, params.gamma, params.rho, exc_scale,
                     dt, vals, cum, fire_on, row, gen)
        sums += row
        sums2 += row * row
        if stats:
            sum_exp += np.exp(-c * row)
            n_zero += row == 0.0
            sums3 += row * row * row
        if raw is not None:
            raw[p] = row[tab_idx]
    mean = sums / paths
    var = np.maximum(sums2 / paths - mean * mean, 0.0)
    times = dt * np.arange(nk)
    snaps = None
    if raw is not None:
        snaps = EnsembleSnapshots(times=np.asarray(table_times, dtype=np.float64), matrix=raw)
    return LinearizedResult(
        times=times, mean=mean, sd=np.sqrt(var),
        h_mc=None if not stats else sum_exp / paths,
        p_mc=None if not stats else n_zero / paths,
        m2=None if not stats else sums2 / paths,
        m3=None if not stats else sums3 / paths,
        snapshots=snaps)


@dataclass
class MeanFieldObservables:
    times: np.ndarray
    h_closed: np.ndarray
    h_mc: np.ndarray
    p_closed: np.ndarray
    p_mc: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,h_closed,h_mc,p_closed,p_mc,m1,m2,m3\n")
            for k in range(self.times.size):
                fh.write(",".join(repr(float(v)) for v in (
                    self.times[k], self.h_closed[k], self.h_mc[k], self.p_closed[k],
                    self.p_mc[k], self.m1[k], self.m2[k], self.m3[k])) + "\n")


@dataclass
class MeanFieldSolution:
    params: ModelParams
    rate: RateCurve            # mean curve of the final ensemble
    sd: np.ndarray             # per-grid-time path standard deviation
    paths: int
    iterations: int
    residual: float            # sup |A r - r| at the returned point
    noise_floor: float
    observables: MeanFieldObservables
    snapshots: Optional[EnsembleSnapshots] = None

    def quantile_table(self) -> QuantileTable:
        if self.snapshots is None:
            raise EmptyReference("solution was produced without table_times")
        return QuantileTable.from_snapshots(self.snapshots)

    def rate_se(self) -> np.ndarray:
        return self.sd / math.sqrt(self.paths)


def h_curve_closed_form(params: ModelParams, rate: RateCurve, h0: float) -> np.ndarray:
    """Exp-moment transform along the solved rate: the unique solution of
    dh/dt = gamma*r_t - gamma*theta*r_t*h with h(0)=h0, evaluated on the grid."""
    a = np.exp(-params.gamma * params.theta * rate.cumulative)
    return a * h0 + (1.0 - a) / params.theta


def resting_fraction_closed_form(params: ModelParams, rate: RateCurve, p0: float) -> np.ndarray:
    """Probability of sitting exactly at zero along the solved rate."""
    e = np.exp(-params.gamma * params.kappa * rate.cumulative)
    return 1.0 / params.kappa + (p0 - 1.0 / params.kappa) * e


def limiting_exp_moment(params: ModelParams) -> float:
    """Long-time limit of E[exp(-(gamma/mu) Z_t)] when E[Z_0] > 0."""
    return min(1.0, 1.0 / params.theta)


def resting_fraction_limit(params: ModelParams) -> float:
    return 1.0 / params.kappa


def picard_solve(params: ModelParams, init, horizon: float, dt: float, paths: int,
                 rng: RngStream, tol: Optional[float] = None, max_iters: int = 100,
                 table_times=()) -> MeanFieldSolution:
    """Fixed point of r -> mean curve of the rate-driven process.

    Iterates with common random numbers (same per-path streams every sweep),
    starting from the constant E[Z_0]. Default tolerance: twice the estimated
    Monte Carlo noise floor of the mean curve. Raises NoConvergence when
    max_iters sweeps do not reach it.

    Observables and snapshots come from a separate evaluation sweep on a
    fresh substream: the fixed point amplifies fluctuations of its own
    ensemble by 1/(1-contraction), so self-evaluation is biased.
    """
    nk = int(round(horizon / dt))
    if nk < 1 or abs(nk * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    vals = np.full(nk + 1, float(init.mean))
    delta = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        res = simulate_linearized(
            params, RateCurve(0.0, dt, vals, terminal=True), init, paths, rng)
        delta = float(np.max(np.abs(res.mean - vals)))
        noise = float(np.max(res.sd)) / math.sqrt(paths)
        vals = res.mean
        tol_eff = tol if tol is not None else 2.0 * noise
        if delta <= tol_eff:
            break
    else:
        raise NoConvergence(
            f"fixed-point sweep did not reach tol after {max_iters} iterations "
            f"(last delta {delta:.3g})", residual=delta, iterations=max_iters)
    final = simulate_linearized(
        params, RateCurve(0.0, dt, vals, terminal=True), init, paths,
        rng.child(paths, 0), stats=True, table_times=table_times)
    rate = RateCurve(0.0, dt, vals)
    obs = MeanFieldObservables(
        times=final.times,
        h_closed=h_curve_closed_form(params, rate, float(final.h_mc[0])),
        h_mc=final.h_mc,
        p_closed=resting_fraction_closed_form(params, rate, float(final.p_mc[0])),
        p_mc=final.p_mc,
        m1=final.mean, m2=final.m2, m3=final.m3)
    return MeanFieldSolution(
        params=params, rate=rate, sd=final.sd, paths=paths, iterations=it,
        residual=delta, noise_floor=float(np.max(final.sd)) / math.sqrt(paths),
        observables=obs, snapshots=final.snapshots)


@dataclass
class SelfConsistentResult:
    rate: RateCurve
    sd: np.ndarray
    particles: int
    snapshots: Optional[EnsembleSnapshots] = None

    def rate_se(self) -> np.ndarray:
        return self.sd / math.sqrt(self.particles)


def simulate_self_consistent(params: ModelParams, init, particles: int, horizon: float,
                             dt: float, rng: RngStream, table_times=()) -> SelfConsistentResult:
    """Independent oracle: one particle population whose excitation rate is
    frozen per dt window at gamma*kappa*(current ensemble mean). Within each
    window particles advance by exact competing clocks."""
    nk = int(round(horizon / dt))
    if nk < 1 or abs(nk * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    if particles < 2:
        raise TooFewSamples(f"need at least 2 particles, got {particles}")
    gen = rng.gen
    z = np.asarray(init.sample(gen, particles), dtype=np.float64)
    tab_idx = _grid_indices(table_times, dt, nk) if len(table_times) else np.empty(0, dtype=np.int64)
    tables = np.empty((tab_idx.size, particles))
    rhat = np.empty(nk + 1)
    rvar = np.empty(nk + 1)
    _self_consistent_kernel(z, params.mu, params.gamma, params.kappa, params.rho,
                            dt, nk, tab_idx, tables, gen, rhat, rvar)
    snaps = None
    if tab_idx.size:
        snaps = EnsembleSnapshots(times=np.asarray(table_times, dtype=np.float64),
                                  matrix=tables.T.copy())
    return SelfConsistentResult(rate=RateCurve(0.0, dt, rhat),
                                sd=np.sqrt(np.maximum(rvar, 0.0)),
                                particles=particles, snapshots=snaps)


def generate_reference_table(params: ModelParams, rate: RateCurve, init, times,
                             m_samples: int, rng: RngStream) -> QuantileTable:
    """Sorted i.i.d. samples of the rate-driven process at the given times.
    With the solved rate curve these are exact draws from the limit law."""
    res = simulate_linearized(params, RateCurve(0.0, rate.dt, rate.values, terminal=True),
                              init, m_samples, rng, table_times=times)
    return QuantileTable.from_snapshots(res.snapshots)


@dataclass(frozen=True)
class MomentResidual:
    order: int
    t: float
    fd: float
    rhs: float
    residual: float
    ci_half: float

    @property
    def consistent(self) -> bool:
        return abs(self.residual) <= self.ci_half


def moment_bound_chain(params: ModelParams, m1_0: float, m2_0: float, m3_0: float):
    """A-priori sup-in-time bounds (c1, c2, c3) on the first three moments."""
    p = params
    c1 = max(m1_0, p.kappa * p.rho - p.mu / p.gamma)
    c2 = max(m2_0, p.kappa * p.gamma * (c1 + p.rho) ** 3 / (2.0 * p.mu))
    c3 = max(m3_0, p.kappa * p.gamma * (max(c1, c2) + p.rho) ** 4 / (3.0 * p.mu))
    return c1, c2, c3


def moment_residual(params: ModelParams, snaps: EnsembleSnapshots, order: int,
                    batches: int = 20) -> MomentResidual:
    """Central-difference check of the moment identity

    d/dt m_r = -mu*r*m_r - gamma*m_{r+1} + kappa*gamma*m_1 *
               sum_{q<r} C(r,q) rho^(r-q) m_q

    on a three-time stencil (t-dt, t, t+dt) of paired path snapshots."""
    times = snaps.times
    mat = snaps.matrix
    if times.size != 3:
        raise ValueError(f"need a 3-time stencil, got {times.size} times")
    dt1 = times[1] - times[0]
    dt2 = times[2] - times[1]
    if not (dt1 > 0 and abs(dt2 - dt1) <= 1e-9 * dt1):
        raise ValueError(f"stencil times must be uniformly spaced, got {times}")
    if order < 1:
        raise NonPositiveValue(f"order must be >= 1, got {order}")
    if mat.shape[0] < batches:
        raise TooFewSamples(f"need >= {batches} paths for {batches} batches, got {mat.shape[0]}")
    p = params
    cuts = np.array_split(np.arange(mat.shape[0]), batches)
    resid_b = np.empty(batches)
    for i, sel in enumerate(cuts):
        lo = mat[sel, 0]
        mid = mat[sel, 1]
        hi = mat[sel, 2]
        fd = (np.mean(hi**order) - np.mean(lo**order)) / (2.0 * dt1)
        m = [float(np.mean(mid**q)) for q in range(order + 2)]
        kick = sum(math.comb(order, q) * p.rho ** (order - q) * m[q] for q in range(order))
        rhs = -p.mu * order * m[order] - p.gamma * m[order + 1] + p.kappa * p.gamma * m[1] * kick
        resid_b[i] = fd - rhs
    full_fd = (np.mean(mat[:, 2] ** order) - np.mean(mat[:, 0] ** order)) / (2.0 * dt1)
    m = [float(np.mean(mat[:, 1] ** q)) for q in range(order + 2)]
    kick = sum(math.comb(order, q) * p.rho ** (order - q) * m[q] for q in range(order))
    full_rhs = -p.mu * order * m[order] - p.gamma * m[order + 1] + p.kappa * p.gamma * m[1] * kick
    from .metrics import Z95
    se = float(resid_b.std(ddof=1) / math.sqrt(batches))
    return MomentResidual(order=order, t=float(times[1]), fd=float(full_fd),
                          rhs=float(full_rhs), residual=float(np.mean(resid_b)),
                          ci_half=Z95 * se)
