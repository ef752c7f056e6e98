"""Pure-numpy kernel backend.

Same entry points and draw layout as `jitted`; paths are vectorized with
alive-set compaction and the branching replicate is processed one tree
generation at a time.  Results match the numba backend up to last-ulp libm
differences (integer draw streams are bit-identical).  One divergence: the
max_particles cutoff is traversal-order dependent, so a truncated replicate
may truncate at a different point than the depth-first backend.
"""

import numpy as np

from ..rng import (
    mix64_array,
    normal_array,
    uniform_array,
    CHILD_A,
    CHILD_B,
)
from ..profiles import hermite_eval

_U64 = np.uint64
_SQRT2 = np.sqrt(2.0)


def _bridge_surv_vec(a, b, w, delta):
    """Vectorized strip-(0,w) bridge survival; all exponents are <= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), a.shape)
    out = np.zeros(a.shape)
    interior = (a > 0) & (a < w) & (b > 0) & (b < w)
    out[interior & (delta <= 0)] = 1.0
    m = interior & (delta > 0)
    if m.any():
        aa, bb, dd = a[m], b[m], delta[m]
        s = np.zeros(aa.shape)
        for k in range(-8, 9):
            kw = k * w
            s += np.exp(-2.0 * kw * (kw + bb - aa) / dd)
            s -= np.exp(-2.0 * (kw + aa) * (kw + bb) / dd)
        out[m] = np.clip(s, 0.0, 1.0)
    return out


def strip_mc(keys, start, lower, upper, clock_total, dt, out_alive, i0, i1):
    m_full = int(clock_total / dt)
    rem = clock_total - m_full * dt
    sq = np.sqrt(dt)
    k = keys[i0:i1]
    x = np.full(k.size, float(start))
    idx = np.arange(k.size)
    out_alive[i0:i1] = 0
    for i in range(m_full):
        if idx.size == 0:
            break
        z = normal_array(k, _U64(2 * i))
        x = x + sq * z
        m = (x > lower) & (x < upper)
        k, x, idx = k[m], x[m], idx[m]
    if rem > 0.0 and idx.size:
        z = normal_array(k, _U64(2 * m_full))
        x = x + np.sqrt(rem) * z
        m = (x > lower) & (x < upper)
        idx = idx[m]
    out_alive[i0 + idx] = 1


def soft_corridor(keys, start, T, n_steps, c3, halfwidth, occ_halfwidth,
                  out_value, out_occ, i0, i1):
    dt = T / n_steps
    sq = np.sqrt(dt)
    k = keys[i0:i1]
    x = np.full(k.size, float(start))
    acc = np.zeros(k.size)
    occ = np.zeros(k.size)
    for i in range(n_steps):
        xn = x + sq * normal_array(k, _U64(2 * i))
        acc += 0.5 * (np.abs(x) + np.abs(xn)) * dt
        occ += dt * (np.abs(xn) <= occ_halfwidth)
        x = xn
    v = np.exp(-(c3 / T) * acc) if c3 != 0.0 else np.ones(k.size)
    v = np.where(np.abs(x) <= halfwidth, v, 0.0)
    out_value[i0:i1] = v
    out_occ[i0:i1] = occ / T


def tilted_corridor(keys, times, tau_grid, kw, inv_sig1, lower, upper,
                    use_bridge, out_contrib, i0, i1):
    m = times.shape[0] - 1
    w = upper - lower
    finite = np.isfinite(w)
    k = keys[i0:i1]
    n = k.size
    x = np.zeros(n)
    acc = np.zeros(n)
    logbridge = np.zeros(n)
    idx = np.arange(n)
    out_contrib[i0:i1] = 0.0
    if not (lower < 0.0 < upper):
        return
    for i in range(1, m + 1):
        if idx.size == 0:
            return
        var = max(tau_grid[i] - tau_grid[i - 1], 0.0)
        z = normal_array(k, _U64(2 * (i - 1)))
        xn = x + np.sqrt(var) * z
        acc = acc + 0.5 * (x * kw[i - 1] + xn * kw[i]) * (times[i] - times[i - 1])
        inside = (xn >= lower) & (xn <= upper)
        if use_bridge and finite:
            pb = np.zeros(idx.size)
            pb[inside] = _bridge_surv_vec(
                x[inside] - lower, xn[inside] - lower, w, var
            )
            inside &= pb > 0.0
            logbridge = logbridge + np.where(inside, np.log(np.maximum(pb, 1e-300)), 0.0)
        k, x, acc, logbridge, idx = k[inside], xn[inside], acc[inside], logbridge[inside], idx[inside]
    out_contrib[i0 + idx] = np.exp(-(inv_sig1 * x + acc) + logbridge)


def bbm_replicate(root_key, T, branch_rate, grid, tau_grid, path_grid,
                  tabF, tabSig, tabS2, tabSig2, n_tab,
                  idx_min, barrier_add, corr_lo, corr_up,
                  do_bridge, do_prune, prune_gap, max_particles):
    ng = grid.shape[0]
    w_corr = corr_up - corr_lo

    m_max = -np.inf
    n_final = 0
    theta = np.inf
    good_count = 0
    min_pos = np.inf
    max_excess = 0.0
    pruned_count = 0
    births = 1
    truncated = 0

    root_ok = 1 if (corr_lo <= 0.0 <= corr_up) else 0
    if 0.0 > barrier_add:
        theta = 0.0
    if idx_min == 0:
        min_pos = 0.0
    if do_prune and 0.0 < -prune_gap:
        return (m_max, n_final, theta, good_count, min_pos, max_excess,
                1, births, truncated)

    tb = np.array([0.0])
    xb = np.array([0.0])
    keys = np.array([root_key], dtype=np.uint64)
    ok = np.array([root_ok], dtype=bool)

    while tb.size:
        n = tb.size
        if branch_rate > 0.0:
            life = -np.log(uniform_array(keys, _U64(0))) / branch_rate
        else:
            life = np.full(n, np.inf)
        reaches = tb + life >= T
        td = np.where(reaches, T, tb + life)

        first = np.searchsorted(grid, tb, side="right")
        ei = np.searchsorted(grid, td, side="left")
        x = xb.copy()
        tau_prev = T * hermite_eval(tabS2, tabSig2, n_tab, tb / T)
        z_prev = xb - T * _SQRT2 * hermite_eval(tabF, tabSig, n_tab, tb / T)
        ctr = np.full(n, 1, dtype=np.uint64)
        killed = np.zeros(n, dtype=bool)

        lo_i = int(first.min()) if n else ng
        hi_i = int(ei.max()) if n else 0
        for i in range(lo_i, hi_i):
            m = (first <= i) & (i < ei) & ~killed
            if not m.any():
                continue
            sel = np.flatnonzero(m)
            var = np.maximum(tau_grid[i] - tau_prev[sel], 0.0)
            z = normal_array(keys[sel], ctr[sel])
            ctr[sel] += _U64(2)
            xn = x[sel] + np.sqrt(var) * z
            excess = xn - path_grid[i]
            emax = excess.max()
            if emax > max_excess:
                max_excess = emax
            if emax > barrier_add and grid[i] < theta:
                theta = grid[i]
            inside = (excess >= corr_lo) & (excess <= corr_up)
            okm = ok[sel]
            if do_bridge:
                u = uniform_array(keys[sel], ctr[sel])
                ctr[sel] += _U64(1)
                need = okm & inside
                pb = np.zeros(sel.size)
                if need.any():
                    pb[need] = _bridge_surv_vec(
                        z_prev[sel][need] - corr_lo, excess[need] - corr_lo,
                        w_corr, var[need],
                    )
                okm = need & (u < pb)
            else:
                okm = okm & inside
            ok[sel] = okm
            if i == idx_min:
                mn = xn.min()
                if mn < min_pos:
                    min_pos = mn
            if do_prune and grid[i] < T:
                kill = excess < -prune_gap
                if kill.any():
                    pruned_count += int(kill.sum())
                    killed[sel[kill]] = True
            x[sel] = xn
            z_prev[sel] = excess
            tau_prev[sel] = tau_grid[i]

        act = np.flatnonzero(~killed)
        if act.size == 0:
            break
        v = td[act] / T
        tau_d = np.where(reaches[act], tau_grid[-1], T * hermite_eval(tabS2, tabSig2, n_tab, v))
        path_d = np.where(reaches[act], path_grid[-1],
                          T * _SQRT2 * hermite_eval(tabF, tabSig, n_tab, v))
        var = np.maximum(tau_d - tau_prev[act], 0.0)
        xn = x[act].copy()
        draw = var > 0.0
        if draw.any():
            z = normal_array(keys[act][draw], ctr[act][draw])
            ctr[act[draw]] += _U64(2)
            xn[draw] = xn[draw] + np.sqrt(var[draw]) * z
        excess = xn - path_d
        emax = excess.max()
        if emax > max_excess:
            max_excess = emax
        hit = excess > barrier_add
        if hit.any():
            tmin = td[act][hit].min()
            if tmin < theta:
                theta = tmin
        inside = (excess >= corr_lo) & (excess <= corr_up)
        okm = ok[act]
        if do_bridge:
            u = uniform_array(keys[act], ctr[act])
            ctr[act] += _U64(1)
            need = okm & inside
            pb = np.zeros(act.size)
            if need.any():
                pb[need] = _bridge_surv_vec(
                    z_prev[act][need] - corr_lo, excess[need] - corr_lo,
                    w_corr, var[need],
                )
            okm = need & (u < pb)
        else:
            okm = okm & inside
        if idx_min == ng - 1:
            r = reaches[act]
            if r.any():
                mn = xn[r].min()
                if mn < min_pos:
                    min_pos = mn
        final_kill = np.zeros(act.size, dtype=bool)
        if do_prune:
            final_kill = (td[act] < T) & (excess < -prune_gap)
            pruned_count += int(final_kill.sum())

        keep = ~final_kill
        r = reaches[act] & keep
        if r.any():
            n_final += int(r.sum())
            mx = xn[r].max()
            if mx > m_max:
                m_max = mx
            good_count += int(okm[r].sum())
        br = ~reaches[act] & keep
        nb = int(br.sum())
        if nb:
            births += 2 * nb
            if births > max_particles:
                truncated = 1
                break
            sel = act[br]
            tb = np.concatenate([td[sel], td[sel]])
            xb = np.concatenate([xn[br], xn[br]])
            keys = np.concatenate([
                mix64_array(keys[sel] + _U64(CHILD_A)),
                mix64_array(keys[sel] + _U64(CHILD_B)),
            ])
            ok = np.concatenate([okm[br], okm[br]]).astype(bool)
        else:
            break

    return (m_max, n_final, theta, good_count, min_pos, max_excess,
            pruned_count, births, truncated)
