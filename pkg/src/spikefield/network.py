"""Finite-network simulators and exactness probes.

``simulate_embedded`` is the production path: the jump chain is sampled in
closed form, so extinction (no further firings, ever) is detected exactly.
``simulate_thinning`` is a deliberately independent oracle with a different
mechanism and different randomness usage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import _net_kernel, _thinning_kernel
from .errors import NonPositiveValue
from .params import ModelParams
from .sampling import RngStream, _as_generator


@dataclass
class EventLog:
    times: np.ndarray      # (E,)
    firers: np.ndarray     # (E,) int
    excited: np.ndarray    # (E, kappa) int

    def __len__(self):
        return self.times.size


@dataclass
class Trajectory:
    params: ModelParams
    init: np.ndarray
    horizon: float
    n_firings: int
    death_time: float          # +inf when censored at the horizon
    censored: bool
    obs_times: np.ndarray
    snapshots: np.ndarray      # (len(obs_times), n)
    events: Optional[EventLog] = None

    @property
    def n(self) -> int:
        return self.init.size

    def state_at(self, t: float) -> np.ndarray:
        """Replay the recorded events to the exact state at time t.

        Pure closed-form reconstruction, independent of the kernel's lazy
        bookkeeping; used as the exactness oracle in tests.
        """
        if self.events is None:
            raise ValueError("trajectory was simulated without event recording")
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        p = self.params
        x = self.init.astype(np.float64).copy()
        tcur = 0.0
        for k in range(len(self.events)):
            tk = self.events.times[k]
            if tk > t:
                break
            x *= math.exp(-p.mu * (tk - tcur))
            tcur = tk
            x[self.events.firers[k]] = 0.0
            x[self.events.excited[k]] += p.rho
        return x * math.exp(-p.mu * (t - tcur))


def _prep_init(init, n: Optional[int]) -> np.ndarray:
    if np.isscalar(init):
        if n is None:
            raise ValueError("scalar init requires n")
        x0 = np.full(n, float(init))
    else:
        x0 = np.asarray(init, dtype=np.float64).copy()
    if x0.ndim != 1 or x0.size < 2:
        raise ValueError(f"init must give at least 2 neurons, got shape {x0.shape}")
    if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
        raise NonPositiveValue("initial potentials must be finite and >= 0")
    return x0


def _check_args(params: ModelParams, n: int, horizon: float, obs_times) -> np.ndarray:
    if params.kappa > n - 1:
        raise NonPositiveValue(f"kappa={params.kappa} needs at least kappa+1={params.kappa + 1} neurons, got {n}")
    if not (horizon >= 0 and math.isfinite(horizon)):
        raise NonPositiveValue(f"horizon must be finite and >= 0, got {horizon}")
    obs = np.asarray([] if obs_times is None else obs_times, dtype=np.float64)
    if obs.size and (np.any(np.diff(obs) < 0) or obs[0] < 0 or obs[-1] > horizon):
        raise ValueError("obs_times must be sorted within [0, horizon]")
    return obs


def simulate_embedded(params: ModelParams, init, horizon: float, rng,
                      n: Optional[int] = None, obs_times=None,
                      record_events: bool = False) -> Trajectory:
    """Exact event-driven simulation of the n-neuron network."""
    x0 = _prep_init(init, n)
    obs = _check_args(params, x0.size, horizon, obs_times)
    gen = _as_generator(rng)
    nfire, ev_t, ev_f, ev_exc, snaps, death, censored = _net_kernel(
        x0, params.mu, params.gamma, params.kappa, params.rho,
        horizon, obs, record_events, False, gen)
    events = None
    if record_events:
        events = EventLog(times=ev_t[:nfire].copy(),
                          firers=ev_f[:nfire].copy(),
                          excited=ev_exc[:nfire].copy())
    return Trajectory(params=params, init=x0, horizon=horizon, n_firings=int(nfire),
                      death_time=float(death), censored=bool(censored),
                      obs_times=obs, snapshots=snaps, events=events)


def simulate_no_reset(params: ModelParams, init, horizon: float, rng,
                      n: Optional[int] = None, obs_times=None,
                      record_events: bool = False) -> Trajectory:
    """Variant in which the firing neuron keeps its potential. The aggregate
    potential then obeys d/dt E|Y| = (rho*kappa*gamma - mu) E|Y| exactly."""
    x0 = _prep_init(init, n)
    obs = _check_args(params, x0.size, horizon, obs_times)
    gen = _as_generator(rng)
    nfire, ev_t, ev_f, ev_exc, snaps, death, censored = _net_kernel(
        x0, params.mu, params.gamma, params.kappa, params.rho,
        horizon, obs, record_events, True, gen)
    events = None
    if record_events:
        events = EventLog(times=ev_t[:nfire].copy(),
                          firers=ev_f[:nfire].copy(),
                          excited=ev_exc[:nfire].copy())
    return Trajectory(params=params, init=x0, horizon=horizon, n_firings=int(nfire),
                      death_time=float(death), censored=bool(censored),
                      obs_times=obs, snapshots=snaps, events=events)


def simulate_thinning(params: ModelParams, init, horizon: float, rng,
                      n: Optional[int] = None, obs_times=None,
                      record_events: bool = False) -> Trajectory:
    """Thinning oracle: homogeneous candidates against an adaptive dominating
    rate (refreshed after every accepted event; rates only decay in between),
    a single uniform mark per candidate doing accept + firer selection.

    Cannot detect extinction, so every run reports censored."""
    x0 = _prep_init(init, n)
    obs = _check_args(params, x0.size, horizon, obs_times)
    gen = _as_generator(rng)
    nfire, ev_t, ev_f, ev_exc, snaps = _thinning_kernel(
        x0, params.mu, params.gamma, params.kappa, params.rho,
        horizon, obs, record_events, gen)
    events = None
    if record_events:
        events = EventLog(times=ev_t[:nfire].copy(),
                          firers=ev_f[:nfire].copy(),
                          excited=ev_exc[:nfire].copy())
    return Trajectory(params=params, init=x0, horizon=horizon, n_firings=int(nfire),
                      death_time=math.inf, censored=True,
                      obs_times=obs, snapshots=snaps, events=events)


def death_time_samples(params: ModelParams, n: int, init_law, horizon_cap: float,
                       replicas: int, rng: RngStream, first_replica: int = 0):
    """Replicated extinction times, censored at ``horizon_cap``.

    Returns (death_times, censored): +inf sentinel where censored. Replica r
    draws from ``rng.child(first_replica + r)`` so any partition over workers
    reproduces the single-worker draws.
    """
    if replicas < 1:
        raise NonPositiveValue(f"replicas must be >= 1, got {replicas}")
    deaths = np.empty(replicas)
    censored = np.empty(replicas, dtype=bool)
    for r in range(replicas):
        sub = rng.child(first_replica + r)
        x0 = init_law.sample(sub.gen, n)
        traj = simulate_embedded(params, x0, horizon_cap, sub)
        deaths[r] = traj.death_time
        censored[r] = traj.censored
    return deaths, censored


@dataclass(frozen=True)
class ResidualResult:
    t_step: float
    fd: float                 # finite-difference estimate of d/dt E[phi]
    drift: float              # generator expectation on the same ensemble
    residual: float
    ci_half: float

    @property
    def consistent(self) -> bool:
        return abs(self.residual) <= self.ci_half


def _phi_drift(params: ModelParams, x: np.ndarray, phi: str):
    """phi(x) and the generator applied to phi, evaluated per sample."""
    n = x.shape[1]
    if phi == "sum":
        val = x.sum(axis=1)
        drift = (params.gamma * params.rho * params.kappa - params.mu) * val \
            - params.gamma * (x**2).sum(axis=1)
        return val, drift
    if phi == "exp_neg_first":
        c = params.gamma / params.mu
        e = np.exp(-c * x[:, 0])
        val = e
        rest = x.sum(axis=1) - x[:, 0]
        drift = params.gamma * x[:, 0] \
            - params.gamma * -math.expm1(-params.rho * c) * (params.kappa / (n - 1)) * rest * e
        return val, drift
    raise ValueError(f"phi must be 'sum' or 'exp_neg_first', got {phi!r}")


def generator_residual(params: ModelParams, ensemble, phi: str, dt: float,
                       rng: RngStream, batches: int = 20) -> ResidualResult:
    """Forward-difference check of d/dt E[phi(X_t)] against the generator.

    ``ensemble``: (R, n) array of independent network states at a common time.
    Each state is advanced by ``dt`` with a fresh child stream; the drift side
    is computed on the same ensemble, and the residual CI uses paired batches.
    """
    x = np.asarray(ensemble, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < batches:
        raise ValueError(f"ensemble must be (R, n) with R >= {batches}, got {x.shape}")
    if not (dt > 0):
        raise NonPositiveValue(f"dt must be positive, got {dt}")
    val0, drift = _phi_drift(params, x, phi)
    val1 = np.empty(x.shape[0])
    for r in range(x.shape[0]):
        traj = simulate_embedded(params, x[r], dt, rng.child(r), obs_times=[dt])
        adv = traj.snapshots[0]
        val1[r] = adv.sum() if phi == "sum" else math.exp(-(params.gamma / params.mu) * adv[0])
    per_sample = (val1 - val0) / dt - drift
    cuts = np.array_split(per_sample, batches)
    bm = np.array([c.mean() for c in cuts])
    fd_mean = float(((val1 - val0) / dt).mean())
    drift_mean = float(drift.mean())
    se = float(bm.std(ddof=1) / math.sqrt(batches))
    from .metrics import Z95
    return ResidualResult(t_step=dt, fd=fd_mean, drift=drift_mean,
                          residual=float(per_sample.mean()), ci_half=Z95 * se)
