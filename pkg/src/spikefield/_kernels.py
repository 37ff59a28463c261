"""Jitted numeric cores shared by the public operations and the simulators.

Every formula lives here exactly once; public wrappers add validation and
error types. All kernels consume a ``numpy.random.Generator`` so replica
streams stay deterministic regardless of scheduling.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _firing_wait(total, mu, gamma, xi):
    """First-firing wait for aggregate potential ``total`` given a unit
    exponential draw ``xi``; +inf when the draw exceeds the finite total mass
    ``gamma*total/mu`` of the inhomogeneous rate."""
    if total <= 0.0:
        return np.inf
    x = mu * xi / (gamma * total)
    if x >= 1.0:
        return np.inf
    return -np.log1p(-x) / mu


@njit(cache=True)
def _floyd_subset(m, kappa, rng, out):
    """Uniform kappa-subset of {0..m-1} into out[:kappa] (Floyd, rejection-free)."""
    idx = 0
    for j in range(m - kappa, m):
        t = rng.integers(0, j + 1)
        dup = False
        for q in range(idx):
            if out[q] == t:
                dup = True
                break
        out[idx] = j if dup else t
        idx += 1


@njit(cache=True)
def _subset_excluding(n, firer, kappa, rng, out):
    """Uniform kappa-subset of {0..n-1} minus the firer, sorted ascending."""
    _floyd_subset(n - 1, kappa, rng, out)
    for q in range(kappa):
        if out[q] >= firer:
            out[q] += 1
    # insertion sort; kappa is tiny
    for q in range(1, kappa):
        v = out[q]
        j = q - 1
        while j >= 0 and out[j] > v:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = v


@njit(cache=True)
def _solve_seg(a, b, m):
    """Smallest s >= 0 with a*s + b*s^2/2 = m on a segment with enough mass."""
    if m <= 0.0:
        return 0.0
    disc = a * a + 2.0 * b * m
    if disc < 0.0:
        disc = 0.0
    denom = a + np.sqrt(disc)
    if denom <= 0.0:
        return np.inf
    return 2.0 * m / denom


@njit(cache=True)
def _inv_next(ts, target, dt, vals, cum):
    """Time u >= ts at which the piecewise-linear rate accumulates ``target``
    more mass; +inf when the curve's remaining mass is exhausted.

    ts is relative to the curve origin; grid step dt, node values vals,
    exact node cumulative integrals cum.
    """
    nseg = vals.size - 1
    end = nseg * dt
    if ts >= end:
        return np.inf
    k = int(ts / dt)
    if k >= nseg:
        k = nseg - 1
    h0 = ts - k * dt
    if h0 < 0.0:
        h0 = 0.0
    b = (vals[k + 1] - vals[k]) / dt
    a = vals[k] + b * h0
    seg_rem = (cum[k + 1] - cum[k]) - (vals[k] * h0 + 0.5 * b * h0 * h0)
    if seg_rem < 0.0:
        seg_rem = 0.0
    if target <= seg_rem:
        s = _solve_seg(a, b, target)
        t = ts + s
        hi = (k + 1) * dt
        return t if t < hi else hi
    target -= seg_rem
    k += 1
    while k < nseg:
        seg = cum[k + 1] - cum[k]
        if target <= seg:
            s = _solve_seg(vals[k], (vals[k + 1] - vals[k]) / dt, target)
            t = k * dt + s
            hi = (k + 1) * dt
            return t if t < hi else hi
        target -= seg
        k += 1
    return np.inf


# ---------------------------------------------------------------------------
# Fenwick tree over per-neuron weights: O(log n) categorical firing index.

@njit(cache=True)
def _fw_build_into(w, tree):
    n = w.size
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += w[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True)
def _fw_add(tree, i, d):
    n = tree.size - 1
    j = i + 1
    while j <= n:
        tree[j] += d
        j += j & (-j)


@njit(cache=True)
def _fw_sample(tree, w, target):
    """Index whose prefix interval contains ``target`` (in [0, total))."""
    n = tree.size - 1
    k = 1
    while (k << 1) <= n:
        k <<= 1
    pos = 0
    rem = target
    while k > 0:
        nxt = pos + k
        if nxt <= n and tree[nxt] <= rem:
            rem -= tree[nxt]
            pos = nxt
        k >>= 1
    if pos >= n:
        pos = n - 1
    if w[pos] <= 0.0:
        # float drift landed on an empty slot; take the next occupied one
        i = pos
        for _ in range(n):
            i += 1
            if i >= n:
                i = 0
            if w[i] > 0.0:
                pos = i
                break
    return pos


# ---------------------------------------------------------------------------
# Finite network, embedded-chain exact simulation.
#
# Potentials are stored in a lazily decayed scale: actual_i(t) = w_i *
# exp(-mu*(t - tref)). Firing probabilities need only the w-ranks, so each
# event touches O(kappa + log n) entries.

@njit(cache=True)
def _net_kernel(x0, mu, gamma, kappa, rho, horizon, obs, record, no_reset, rng):
    n = x0.size
    w = x0.astype(np.float64).copy()
    tree = np.empty(n + 1)
    _fw_build_into(w, tree)
    W = 0.0
    for i in range(n):
        W += w[i]
    tref = 0.0
    t = 0.0
    tlast = 0.0
    nfire = 0
    cap = 256 if record else 1
    ev_t = np.empty(cap)
    ev_f = np.empty(cap, np.int64)
    ev_exc = np.empty((cap, kappa), np.int64)
    sub = np.empty(kappa, np.int64)
    nobs = obs.size
    snaps = np.empty((nobs, n))
    p = 0
    dead = False
    since_rebuild = 0
    while True:
        normx = W * np.exp(-mu * (t - tref))
        xi = rng.standard_exponential()
        if normx <= 0.0 or xi >= gamma * normx / mu:
            dead = True
            break
        tau = -np.log1p(-mu * xi / (gamma * normx)) / mu
        tn = t + tau
        if tn > horizon:
            break
        while p < nobs and obs[p] < tn:
            fac = np.exp(-mu * (obs[p] - tref))
            for i in range(n):
                snaps[p, i] = w[i] * fac
            p += 1
        t = tn
        g = np.exp(mu * (t - tref))
        u = rng.random() * W
        f = _fw_sample(tree, w, u)
        _subset_excluding(n, f, kappa, rng, sub)
        if not no_reset:
            dwf = -w[f]
            w[f] = 0.0
            _fw_add(tree, f, dwf)
            W += dwf
        dwe = rho * g
        for q in range(kappa):
            j = sub[q]
            w[j] += dwe
            _fw_add(tree, j, dwe)
            W += dwe
        tlast = t
        if record:
            if nfire == cap:
                cap *= 2
                nt = np.empty(cap)
                nt[:nfire] = ev_t[:nfire]
                ev_t = nt
                nf = np.empty(cap, np.int64)
                nf[:nfire] = ev_f[:nfire]
                ev_f = nf
                nx = np.empty((cap, kappa), np.int64)
                nx[:nfire] = ev_exc[:nfire]
                ev_exc = nx
            ev_t[nfire] = t
            ev_f[nfire] = f
            for q in range(kappa):
                ev_exc[nfire, q] = sub[q]
        nfire += 1
        since_rebuild += 1
        if mu * (t - tref) > 300.0 or since_rebuild >= 65536:
            fac = np.exp(-mu * (t - tref))
            W = 0.0
            for i in range(n):
                w[i] *= fac
                W += w[i]
            _fw_build_into(w, tree)
            tref = t
            since_rebuild = 0
    while p < nobs:
        fac = np.exp(-mu * (obs[p] - tref))
        for i in range(n):
            snaps[p, i] = w[i] * fac
        p += 1
    death = tlast if dead else np.inf
    return nfire, ev_t, ev_f, ev_exc, snaps, death, not dead


# ---------------------------------------------------------------------------
# Finite network, thinning oracle. Independent mechanism: homogeneous
# candidates against an adaptive dominating rate, one uniform mark doing
# accept + select by walking the per-neuron rate ladder. O(n) per candidate.

@njit(cache=True)
def _thinning_kernel(x0, mu, gamma, kappa, rho, horizon, obs, record, rng):
    n = x0.size
    x = x0.astype(np.float64).copy()
    lam = 0.0
    for i in range(n):
        lam += x[i]
    lam *= gamma
    t = 0.0
    nfire = 0
    cap = 256 if record else 1
    ev_t = np.empty(cap)
    ev_f = np.empty(cap, np.int64)
    ev_exc = np.empty((cap, kappa), np.int64)
    sub = np.empty(kappa, np.int64)
    nobs = obs.size
    snaps = np.empty((nobs, n))
    p = 0
    while lam > 0.0:
        wait = rng.standard_exponential() / lam
        tn = t + wait
        if tn > horizon:
            break
        while p < nobs and obs[p] < tn:
            fac = np.exp(-mu * (obs[p] - t))
            for i in range(n):
                snaps[p, i] = x[i] * fac
            p += 1
        fac = np.exp(-mu * wait)
        for i in range(n):
            x[i] *= fac
        t = tn
        u = rng.random() * lam
        acc = 0.0
        f = -1
        for i in range(n):
            acc += gamma * x[i]
            if u < acc:
                f = i
                break
        if f < 0:
            continue
        x[f] = 0.0
        _subset_excluding(n, f, kappa, rng, sub)
        for q in range(kappa):
            x[sub[q]] += rho
        if record:
            if nfire == cap:
                cap *= 2
                nt = np.empty(cap)
                nt[:nfire] = ev_t[:nfire]
                ev_t = nt
                nf = np.empty(cap, np.int64)
                nf[:nfire] = ev_f[:nfire]
                ev_f = nf
                nx = np.empty((cap, kappa), np.int64)
                nx[:nfire] = ev_exc[:nfire]
                ev_exc = nx
            ev_t[nfire] = t
            ev_f[nfire] = f
            for q in range(kappa):
                ev_exc[nfire, q] = sub[q]
        nfire += 1
        lam = 0.0
        for i in range(n):
            lam += x[i]
        lam *= gamma
    while p < nobs:
        fac = np.exp(-mu * (obs[p] - t))
        for i in range(n):
            snaps[p, i] = x[i] * fac
        p += 1
    return nfire, ev_t, ev_f, ev_exc, snaps


# ---------------------------------------------------------------------------
# One path of the rate-driven single-neuron process: decay mu, reset at rate
# gamma*z, +rho jumps from an inhomogeneous stream with rate exc_scale*r(t).
# Fills row[k] with the path value at t_k = k*dt (right-continuous).

@njit(cache=True)
def _linear_path(z0, mu, gamma, rho, exc_scale, dt, vals, cum, fire_on, row, rng):
    nseg = vals.size - 1
    horizon = nseg * dt
    dec = np.exp(-mu * dt)
    t = 0.0
    z = z0
    kidx = 0
    if exc_scale > 0.0:
        te = _inv_next(0.0, rng.standard_exponential() / exc_scale, dt, vals, cum)
    else:
        te = np.inf
    while True:
        if fire_on and z > 0.0:
            xi = rng.standard_exponential()
            xx = mu * xi / (gamma * z)
            if xx < 1.0:
                tf = t - np.log1p(-xx) / mu
            else:
                tf = np.inf
        else:
            tf = np.inf
        tn = tf if tf < te else te
        if tn >= horizon:
            if kidx <= nseg:
                zz = z * np.exp(-mu * (kidx * dt - t))
                while kidx <= nseg:
                    row[kidx] = zz
                    zz *= dec
                    kidx += 1
            return
        if kidx <= nseg and kidx * dt < tn:
            zz = z * np.exp(-mu * (kidx * dt - t))
            while kidx <= nseg and kidx * dt < tn:
                row[kidx] = zz
                zz *= dec
                kidx += 1
        z = z * np.exp(-mu * (tn - t))
        t = tn
        if tf <= te:
            z = 0.0
        else:
            z += rho
            te = _inv_next(t, rng.standard_exponential() / exc_scale, dt, vals, cum)


# ---------------------------------------------------------------------------
# Self-consistent particle oracle: excitation rate frozen per dt window at
# gamma*kappa*(current ensemble mean). Exact competing clocks inside windows.

@njit(cache=True)
def _self_consistent_kernel(z, mu, gamma, kappa, rho, dt, nwin, table_idx, tables, rng, rhat, rvar):
    m = z.size
    for k in range(nwin + 1):
        s = 0.0
        s2 = 0.0
        for q in range(m):
            s += z[q]
            s2 += z[q] * z[q]
        mean = s / m
        rhat[k] = mean
        rvar[k] = s2 / m - mean * mean
        for j in range(table_idx.size):
            if table_idx[j] == k:
                for q in range(m):
                    tables[j, q] = z[q]
        if k == nwin:
            break
        lam = gamma * kappa * mean
        if lam < 0.0:
            lam = 0.0
        for q in range(m):
            tt = 0.0
            zz = z[q]
            while True:
                if zz > 0.0:
                    xi = rng.standard_exponential()
                    xx = mu * xi / (gamma * zz)
                    if xx < 1.0:
                        tf = -np.log1p(-xx) / mu
                    else:
                        tf = np.inf
                else:
                    tf = np.inf
                if lam > 0.0:
                    te = rng.standard_exponential() / lam
                else:
                    te = np.inf
                tn = tf if tf < te else te
                rem = dt - tt
                if tn >= rem:
                    zz *= np.exp(-mu * rem)
                    break
                zz *= np.exp(-mu * tn)
                tt += tn
                if tf <= te:
                    zz = 0.0
                else:
                    zz += rho
            z[q] = zz


# ---------------------------------------------------------------------------
# Coupled network / companion-pair simulation by joint thinning. The network
# part is an exact simulation; each tracked companion shares its neuron's
# firing marks and excitation event times, with excitation thresholds taken
# from the rank-coupling map against a reference quantile table.

@njit(cache=True)
def _rank_coupling_u(sx, w_self, w_sel, n, v):
    """Uniform level for the comonotone map: rank block of w_sel among the
    n-1 entries excluding self, sub-rank randomized by v in [0,1)."""
    lo = np.searchsorted(sx, w_sel)
    hi = np.searchsorted(sx, w_sel, side="right")
    eq = hi - lo
    if w_self < w_sel:
        lo -= 1
    elif w_self == w_sel:
        eq -= 1
    return (lo + eq * v) / (n - 1)


@njit(cache=True)
def _coupled_kernel(x0, tr, mu, gamma, kappa, rho, horizon,
                    ttab0, dttab, rows, obs, rng, xtr, ztr):
    n = x0.size
    mtab = rows.shape[1]
    ntab = rows.shape[0]
    # rows are sorted, so each row's max is its last entry; the thinning
    # bound must dominate every companion excitation level gamma*F an atom
    # could test from now on, hence a suffix maximum over future rows
    tabmax = np.empty(ntab)
    m = 0.0
    for k in range(ntab - 1, -1, -1):
        if rows[k, mtab - 1] > m:
            m = rows[k, mtab - 1]
        tabmax[k] = m
    wx = x0.astype(np.float64).copy()
    wz = x0[:tr].astype(np.float64).copy()
    sx = np.sort(wx)
    maxw = 0.0
    for i in range(n):
        if wx[i] > maxw:
            maxw = wx[i]
    tref = 0.0
    t = 0.0
    sub = np.empty(kappa, np.int64)
    nobs = obs.size
    p = 0
    while True:
        tidx = int(np.rint((t - ttab0) / dttab))
        if tidx < 0:
            tidx = 0
        elif tidx >= ntab:
            tidx = ntab - 1
        ubound = maxw * np.exp(-mu * (t - tref))
        if tabmax[tidx] > ubound:
            ubound = tabmax[tidx]
        ubound *= gamma
        if ubound <= 0.0:
            break
        tn = t + rng.standard_exponential() / (n * ubound)
        if tn > horizon:
            break
        while p < nobs and obs[p] < tn:
            fac = np.exp(-mu * (obs[p] - tref))
            for i in range(tr):
                xtr[p, i] = wx[i] * fac
                ztr[p, i] = wz[i] * fac
            p += 1
        t = tn
        g = np.exp(mu * (t - tref))
        inv_g = 1.0 / g
        u = rng.random() * ubound
        f = rng.integers(0, n)
        _subset_excluding(n, f, kappa, rng, sub)
        x_fires = u <= gamma * (wx[f] * inv_g)
        z_fires = f < tr and u <= gamma * (wz[f] * inv_g)
        tidx = int(np.rint((t - ttab0) / dttab))
        if tidx < 0:
            tidx = 0
        elif tidx >= ntab:
            tidx = ntab - 1
        wsel = wx[f]
        changed = x_fires or z_fires
        for q in range(kappa):
            c = sub[q]
            if c < tr:
                uu = _rank_coupling_u(sx, wx[c], wsel, n, rng.random())
                mi = int(uu * mtab)
                if mi >= mtab:
                    mi = mtab - 1
                elif mi < 0:
                    mi = 0
                if u <= gamma * rows[tidx, mi]:
                    wz[c] += rho * g
                    changed = True
        if z_fires:
            wz[f] = 0.0
        if x_fires:
            wx[f] = 0.0
            for q in range(kappa):
                wx[sub[q]] += rho * g
            for i in range(n):
                sx[i] = wx[i]
            sx.sort()
        if changed:
            maxw = 0.0
            for i in range(n):
                if wx[i] > maxw:
                    maxw = wx[i]
            for i in range(tr):
                if wz[i] > maxw:
                    maxw = wz[i]
        if mu * (t - tref) > 300.0:
            fac = np.exp(-mu * (t - tref))
            maxw = 0.0
            for i in range(n):
                wx[i] *= fac
                if wx[i] > maxw:
                    maxw = wx[i]
            for i in range(tr):
                wz[i] *= fac
                if wz[i] > maxw:
                    maxw = wz[i]
            for i in range(n):
                sx[i] = wx[i]
            sx.sort()
            tref = t
    while p < nobs:
        fac = np.exp(-mu * (obs[p] - tref))
        for i in range(tr):
            xtr[p, i] = wx[i] * fac
            ztr[p, i] = wz[i] * fac
        p += 1


# ---------------------------------------------------------------------------
# Exact 1-d Wasserstein-1 between sorted empirical samples via the merged
# quantile partition; breakpoints compared in integer arithmetic.

@njit(cache=True)
def _w1_merged(a, b):
    n = a.size
    m = b.size
    ia = 0
    ib = 0
    prev = np.int64(0)
    acc = 0.0
    while ia < n and ib < m:
        la = np.int64(ia + 1) * m
        lb = np.int64(ib + 1) * n
        nxt = la if la < lb else lb
        d = a[ia] - b[ib]
        acc += (d if d >= 0.0 else -d) * (nxt - prev)
        prev = nxt
        if la == nxt:
            ia += 1
        if lb == nxt:
            ib += 1
    return acc / (np.float64(n) * np.float64(m))
