"""Network-to-limit coupling and finite-size error curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import _coupled_kernel, _rank_coupling_u
from .errors import EmptyReference, NonPositiveValue, OutOfDomain, RangeTooLarge
from .meanfield import MeanFieldSolution, QuantileTable, generate_reference_table
from .metrics import Z95, w1_empirical
from .network import simulate_embedded
from .params import ModelParams
from .sampling import RngStream, _as_generator


def optimal_coupling_map(row: np.ndarray, others: np.ndarray, selected: int, rng) -> float:
    """Comonotone image of ``others[selected]`` in the reference row.

    The selected value's rank among ``others`` (sub-rank uniformized within
    its tie block) picks the matching reference quantile, so over a uniformly
    chosen ``selected`` the output is distributed exactly as the row and the
    expected gap attains W1(row, others).
    """
    row = np.asarray(row, dtype=np.float64)
    others = np.asarray(others, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise EmptyReference("reference row is empty")
    if others.ndim != 1 or others.size == 0:
        raise EmptyReference("candidate sample set is empty")
    if not 0 <= selected < others.size:
        raise RangeTooLarge(f"selected index {selected} outside [0, {others.size})")
    gen = _as_generator(rng)
    s = np.sort(others)
    wsel = others[selected]
    # rank block among the full set; the kernel variant excludes one entry,
    # so feed it a self value strictly above the block
    u = _rank_coupling_u(s, math.inf, wsel, others.size + 1, gen.random())
    m = row.size
    return float(row[min(int(u * m), m - 1)])


@dataclass
class CoupledResult:
    """Tracked (network, companion) pairs sampled on ``times``.

    ``x_tracked`` and ``z_tracked`` are (len(times), tracked) matrices; the
    companions share their partners' firing marks and excitation instants.
    """
    times: np.ndarray
    x_tracked: np.ndarray
    z_tracked: np.ndarray
    tracked: int

    @property
    def gap(self) -> np.ndarray:
        """Mean |X^i - Z^i| over tracked pairs at each observation time."""
        return np.abs(self.x_tracked - self.z_tracked).mean(axis=1)


def simulate_coupled_system(params: ModelParams, init, table: QuantileTable,
                            horizon: float, rng, n: int = None, obs_times=None,
                            tracked: int = None) -> CoupledResult:
    """Joint thinning run of the n-network together with tracked limit-law
    companions driven by the same marks.

    Companion i shares neuron i's firing marks (one uniform level decides
    both, each against its own potential) and the network's excitation event
    times; its excitation threshold is the rank-coupling image of the firing
    candidate's potential in the reference table row at that instant. The
    construction requires kappa = 2.
    """
    if params.kappa != 2:
        raise OutOfDomain(f"the coupling construction requires kappa=2, got {params.kappa}")
    if np.isscalar(init):
        if n is None:
            raise ValueError("scalar init requires n")
        x0 = np.full(n, float(init))
    else:
        x0 = np.asarray(init, dtype=np.float64).copy()
    n = x0.size
    if n < 3:
        raise NonPositiveValue(f"need at least 3 neurons, got {n}")
    if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
        raise NonPositiveValue("initial potentials must be finite and >= 0")
    tracked = n if tracked is None else int(tracked)
    if not 1 <= tracked <= n:
        raise RangeTooLarge(f"tracked must be in [1, {n}], got {tracked}")
    times = table.times
    if times.size < 2:
        raise EmptyReference("reference table needs at least 2 time rows")
    dttab = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dttab, rtol=1e-9, atol=1e-12):
        raise ValueError("reference table rows must sit on a uniform time grid")
    if times[-1] < horizon - 1e-9:
        raise OutOfDomain(
            f"reference table ends at t={times[-1]:g}, before horizon {horizon:g}")
    obs = np.asarray([] if obs_times is None else obs_times, dtype=np.float64)
    if obs.size and (np.any(np.diff(obs) < 0) or obs[0] < 0 or obs[-1] > horizon):
        raise ValueError("obs_times must be sorted within [0, horizon]")
    gen = _as_generator(rng)
    xtr = np.empty((obs.size, tracked))
    ztr = np.empty((obs.size, tracked))
    _coupled_kernel(x0, tracked, params.mu, params.gamma, params.kappa, params.rho,
                    horizon, float(times[0]), dttab, table.rows, obs, gen, xtr, ztr)
    return CoupledResult(times=obs, x_tracked=xtr, z_tracked=ztr, tracked=tracked)


@dataclass
class ChaosPoint:
    n: int
    t: float
    w1_mean: float
    w1_ci: float
    w1_pooled: float
    replicas: int
    table_m: int


def chaos_error_curve(params: ModelParams, n_values, eval_times, replicas: int,
                      solution: MeanFieldSolution, init, rng: RngStream,
                      table: QuantileTable = None,
                      table_samples: int = 100_000) -> list:
    """Mean per-replica W1 between the network's empirical law and a limit
    reference, for each network size and evaluation time.

    The reference is ``table`` if given, otherwise a fresh ensemble of
    ``table_samples`` paths driven by ``solution.rate``. Each point also
    pools all replicas' samples into a single distance, which isolates bias
    from the per-replica sampling floor.
    """
    eval_times = np.asarray(eval_times, dtype=np.float64)
    if replicas < 2:
        raise NonPositiveValue(f"replicas must be >= 2, got {replicas}")
    if table is None:
        if solution.rate.end < eval_times.max() - 1e-9:
            raise OutOfDomain(
                f"solution covers [0, {solution.rate.end:g}], eval times reach "
                f"{eval_times.max():g}")
        table = generate_reference_table(params, solution.rate, init, eval_times,
                                         table_samples, rng.child(1))
    out = []
    horizon = float(eval_times.max())
    for ni, n in enumerate(n_values):
        w1 = np.empty((replicas, eval_times.size))
        pool = np.empty((eval_times.size, replicas * n))
        sub = rng.child(0, ni)
        for r in range(replicas):
            rep = sub.child(r)
            x0 = init.sample(rep.gen, n)
            traj = simulate_embedded(params, x0, horizon, rep, obs_times=eval_times)
            for j in range(eval_times.size):
                w1[r, j] = w1_empirical(traj.snapshots[j], table.row_at(eval_times[j]))
                pool[j, r * n:(r + 1) * n] = traj.snapshots[j]
        for j, t in enumerate(eval_times):
            ci = Z95 * w1[:, j].std(ddof=1) / math.sqrt(replicas)
            out.append(ChaosPoint(
                n=int(n), t=float(t), w1_mean=float(w1[:, j].mean()), w1_ci=float(ci),
                w1_pooled=float(w1_empirical(pool[j], table.row_at(t))),
                replicas=replicas, table_m=table.rows.shape[1]))
    return out
