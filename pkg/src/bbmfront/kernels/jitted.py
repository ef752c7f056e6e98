"""numba kernels: per-path / per-particle loops, nogil, disk-cached.

Draw layout (shared contract with the reference backend, see package
docstring): per path, step i consumes counters (2i, 2i+1); per particle,
counter 0 is the lifetime and each trajectory segment consumes 2 counters
(3 in bridge mode).  Keeping the layout identical across backends makes the
two implementations produce the same trees and the same survival decisions
up to last-ulp libm differences.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_CHILD_A = U64(0x6A09E667F3BCC909)
_CHILD_B = U64(0xB2F8A3D737D90D2B)
_U53 = 1.0 / 9007199254740992.0
_TWO_PI = 6.283185307179586476925287

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS, inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(**_OPTS, inline="always")
def _u01(key, ctr):
    r = _mix(key + ctr * _GOLD)
    return (np.float64(r >> U64(11)) + 0.5) * _U53


@njit(**_OPTS, inline="always")
def _normal(key, ctr):
    u1 = _u01(key, ctr)
    u2 = _u01(key, ctr + U64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@njit(**_OPTS, inline="always")
def _searchsorted_right(arr, v):
    lo, hi = 0, arr.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if v < arr[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(**_OPTS, inline="always")
def _hermite(values, derivs, n, v):
    if v <= 0.0:
        return values[0]
    if v >= 1.0:
        return values[n]
    h = 1.0 / n
    idx = int(v * n)
    if idx > n - 1:
        idx = n - 1
    u = v * n - idx
    u2 = u * u
    u3 = u2 * u
    return (
        (1.0 - 3.0 * u2 + 2.0 * u3) * values[idx]
        + (3.0 * u2 - 2.0 * u3) * values[idx + 1]
        + h * (u - 2.0 * u2 + u3) * derivs[idx]
        + h * (u3 - u2) * derivs[idx + 1]
    )


@njit(**_OPTS, inline="always")
def _bridge_surv(a, b, w, delta):
    """Survival of a Brownian bridge a -> b (variance delta) in the strip (0, w)."""
    if delta <= 0.0:
        return 1.0
    if a <= 0.0 or a >= w or b <= 0.0 or b >= w:
        return 0.0
    s = 0.0
    for k in range(-8, 9):
        kw = k * w
        e1 = -2.0 * kw * (kw + b - a) / delta
        e2 = -2.0 * (kw + a) * (kw + b) / delta
        if e1 > -745.0:
            s += np.exp(e1)
        if e2 > -745.0:
            s -= np.exp(e2)
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


# ---------------------------------------------------------------------------


@njit(**_OPTS)
def strip_mc(keys, start, lower, upper, clock_total, dt, out_alive, i0, i1):
    """Euler strip survival for paths [i0, i1); writes 0/1 into out_alive."""
    m_full = int(clock_total / dt)
    rem = clock_total - m_full * dt
    sq = np.sqrt(dt)
    sqrem = np.sqrt(rem) if rem > 0.0 else 0.0
    for p in range(i0, i1):
        key = keys[p]
        x = start
        alive = True
        ctr = U64(0)
        for i in range(m_full):
            x += sq * _normal(key, ctr)
            ctr += U64(2)
            if x <= lower or x >= upper:
                alive = False
                break
        if alive and rem > 0.0:
            x += sqrem * _normal(key, ctr)
            if x <= lower or x >= upper:
                alive = False
        out_alive[p] = 1 if alive else 0


@njit(**_OPTS)
def soft_corridor(keys, start, T, n_steps, c3, halfwidth, occ_halfwidth,
                  out_value, out_occ, i0, i1):
    """exp(-(c3/T) int |B|) * 1{|B_T| <= halfwidth} per path, plus the
    fraction of time with |B| <= occ_halfwidth (right-endpoint rule)."""
    dt = T / n_steps
    sq = np.sqrt(dt)
    for p in range(i0, i1):
        key = keys[p]
        x = start
        acc = 0.0
        occ = 0.0
        ctr = U64(0)
        for i in range(n_steps):
            xn = x + sq * _normal(key, ctr)
            ctr += U64(2)
            acc += 0.5 * (np.abs(x) + np.abs(xn)) * dt
            if np.abs(xn) <= occ_halfwidth:
                occ += dt
            x = xn
        v = np.exp(-(c3 / T) * acc) if c3 != 0.0 else 1.0
        if np.abs(x) > halfwidth:
            v = 0.0
        out_value[p] = v
        out_occ[p] = occ / T


@njit(**_OPTS)
def tilted_corridor(keys, times, tau_grid, kw, inv_sig1, lower, upper,
                    use_bridge, out_contrib, i0, i1):
    """Importance-sampled corridor functional per path.

    Simulates the centered motion X on the checkpoint grid `times` (clock
    values `tau_grid`), accumulates the exponential-tilt weight
    exp(-(inv_sig1 * X_T + int X kw dt)) and the corridor indicator for the
    strip [lower, upper]; with use_bridge != 0 the indicator is sharpened by
    per-segment bridge survival probabilities so the path contribution is an
    unbiased estimate of the continuous-time corridor event.
    """
    m = times.shape[0] - 1
    w = upper - lower
    finite = np.isfinite(w)
    for p in range(i0, i1):
        key = keys[p]
        x = 0.0
        acc = 0.0
        logbridge = 0.0
        inside = lower < 0.0 < upper
        ctr = U64(0)
        for i in range(1, m + 1):
            var = tau_grid[i] - tau_grid[i - 1]
            if var < 0.0:
                var = 0.0
            xn = x + np.sqrt(var) * _normal(key, ctr)
            ctr += U64(2)
            acc += 0.5 * (x * kw[i - 1] + xn * kw[i]) * (times[i] - times[i - 1])
            if xn < lower or xn > upper:
                inside = False
            elif use_bridge != 0 and finite:
                pb = _bridge_surv(x - lower, xn - lower, w, var)
                if pb <= 0.0:
                    inside = False
                else:
                    logbridge += np.log(pb)
            if not inside:
                break
            x = xn
        if inside:
            out_contrib[p] = np.exp(-(inv_sig1 * x + acc) + logbridge)
        else:
            out_contrib[p] = 0.0


@njit(**_OPTS)
def bbm_replicate(root_key, T, branch_rate, grid, tau_grid, path_grid,
                  tabF, tabSig, tabS2, tabSig2, n_tab,
                  idx_min, barrier_add, corr_lo, corr_up,
                  do_bridge, do_prune, prune_gap, max_particles):
    """One branching replicate, depth-first, O(tree depth) memory.

    Returns (m_max, n_final, theta, good_count, min_pos, max_excess,
    pruned_count, births, truncated); m_max/min_pos use -inf/+inf sentinels
    when no particle qualifies, theta is +inf when the barrier is never hit.
    """
    ng = grid.shape[0]
    sqrt2 = np.sqrt(2.0)
    w_corr = corr_up - corr_lo

    cap = 256
    st_t = np.empty(cap)
    st_x = np.empty(cap)
    st_k = np.empty(cap, np.uint64)
    st_ok = np.empty(cap, np.uint8)

    m_max = -np.inf
    n_final = 0
    theta = np.inf
    good_count = 0
    min_pos = np.inf
    max_excess = 0.0          # root sits on the reference path at t = 0
    pruned_count = 0
    births = 1
    truncated = 0

    # root birth checks at t = 0 (path value 0, excess 0)
    root_ok = 1 if (corr_lo <= 0.0 <= corr_up) else 0
    if 0.0 > barrier_add:
        theta = 0.0
    if idx_min == 0:
        min_pos = 0.0
    if do_prune != 0 and 0.0 < -prune_gap:
        pruned_count = 1
        return (m_max, n_final, theta, good_count, min_pos, max_excess,
                pruned_count, births, truncated)

    top = 0
    st_t[0] = 0.0
    st_x[0] = 0.0
    st_k[0] = root_key
    st_ok[0] = root_ok

    while top >= 0:
        tb = st_t[top]
        xb = st_x[top]
        pk = st_k[top]
        ok = st_ok[top]
        top -= 1

        if branch_rate > 0.0:
            life = -np.log(_u01(pk, U64(0))) / branch_rate
        else:
            life = np.inf
        reaches = tb + life >= T
        td = T if reaches else tb + life

        ctr = U64(1)
        i = _searchsorted_right(grid, tb)
        tau_prev = T * _hermite(tabS2, tabSig2, n_tab, tb / T)
        z_prev = xb - T * sqrt2 * _hermite(tabF, tabSig, n_tab, tb / T)
        x = xb
        killed = False

        while i < ng and grid[i] < td:
            var = tau_grid[i] - tau_prev
            if var < 0.0:
                var = 0.0
            xn = x + np.sqrt(var) * _normal(pk, ctr)
            ctr += U64(2)
            excess = xn - path_grid[i]
            if excess > max_excess:
                max_excess = excess
            if excess > barrier_add and grid[i] < theta:
                theta = grid[i]
            inside = corr_lo <= excess <= corr_up
            if do_bridge != 0:
                u = _u01(pk, ctr)
                ctr += U64(1)
                if ok != 0 and inside:
                    pb = _bridge_surv(z_prev - corr_lo, excess - corr_lo, w_corr, var)
                    ok = 1 if u < pb else 0
                else:
                    ok = 0
            elif not inside:
                ok = 0
            if i == idx_min and xn < min_pos:
                min_pos = xn
            if do_prune != 0 and grid[i] < T and excess < -prune_gap:
                killed = True
                pruned_count += 1
            x = xn
            z_prev = excess
            tau_prev = tau_grid[i]
            i += 1
            if killed:
                break

        if killed:
            continue

        # final segment of this particle, to its death / horizon time
        if reaches:
            tau_d = tau_grid[ng - 1]
            pathv = path_grid[ng - 1]
            gidx = ng - 1
        else:
            v = td / T
            tau_d = T * _hermite(tabS2, tabSig2, n_tab, v)
            pathv = T * sqrt2 * _hermite(tabF, tabSig, n_tab, v)
            gidx = -1
        var = tau_d - tau_prev
        if var < 0.0:
            var = 0.0
        if var > 0.0:
            xn = x + np.sqrt(var) * _normal(pk, ctr)
            ctr += U64(2)
        else:
            xn = x
        excess = xn - pathv
        if excess > max_excess:
            max_excess = excess
        if excess > barrier_add and td < theta:
            theta = td
        inside = corr_lo <= excess <= corr_up
        if do_bridge != 0:
            u = _u01(pk, ctr)
            ctr += U64(1)
            if ok != 0 and inside:
                pb = _bridge_surv(z_prev - corr_lo, excess - corr_lo, w_corr, var)
                ok = 1 if u < pb else 0
            else:
                ok = 0
        elif not inside:
            ok = 0
        if gidx == idx_min and xn < min_pos:
            min_pos = xn
        if do_prune != 0 and td < T and excess < -prune_gap:
            pruned_count += 1
            continue

        if reaches:
            n_final += 1
            if xn > m_max:
                m_max = xn
            good_count += 1 if ok != 0 else 0
        else:
            births += 2
            if births > max_particles:
                truncated = 1
                break
            if top + 2 >= cap - 1:
                ncap = cap * 2
                nt = np.empty(ncap)
                nx = np.empty(ncap)
                nk = np.empty(ncap, np.uint64)
                no = np.empty(ncap, np.uint8)
                nt[:cap] = st_t
                nx[:cap] = st_x
                nk[:cap] = st_k
                no[:cap] = st_ok
                st_t, st_x, st_k, st_ok = nt, nx, nk, no
                cap = ncap
            top += 1
            st_t[top] = td
            st_x[top] = xn
            st_k[top] = _mix(pk + _CHILD_A)
            st_ok[top] = ok
            top += 1
            st_t[top] = td
            st_x[top] = xn
            st_k[top] = _mix(pk + _CHILD_B)
            st_ok[top] = ok

    return (m_max, n_final, theta, good_count, min_pos, max_excess,
            pruned_count, births, truncated)
