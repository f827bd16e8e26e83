"""Compiled slot loop for FCFL with b = 1.

With b = 1 a vertex's probability vector is always either uniform or an
indicator, so the whole per-vertex state is (colour, m, sticky) where
``sticky`` means p is the indicator of the current colour.  Only the
non-permanent vertices are visited on ordinary slots; reset slots cost
O(n).

Collision sensing modes:
  MODE_CSR       neighbour lists, per-vertex conflict counters
  MODE_MULTI     complete multipartite, per-part colour counts
  MODE_COMPLETE  complete graph, global colour counts
"""

import numpy as np
from numba import njit

from ._rng import nb_pick, nb_stream_key, nb_uniform

MODE_CSR = 0
MODE_MULTI = 1
MODE_COMPLETE = 2


@njit(cache=True)
def _next_periodic(t, first, period):
    if t <= first:
        return first
    return first + ((t - first + period - 1) // period) * period


@njit(cache=True)
def run_colouring(mode, n, D, part, nparts, indptr, indices, seed,
                  r_explicit, r_first, r_period, t0, tau0,
                  colour, m, sticky, max_slots, stop_when_proper, record):
    """Advance the state arrays in place for up to ``max_slots`` slots.

    Resets: periodic ``r_first + k*r_period`` when ``r_period > 0``,
    otherwise the sorted slot list ``r_explicit`` (empty = never).

    Returns (R, t_next, tau, steps, z_trace).  R is the first slot whose
    colouring is proper (-1 if none); z_trace[k] is the number of
    non-permanent vertices after the k-th executed slot.
    """
    cdf = np.cumsum(np.full(D, 1.0 / D))
    keys = np.empty(n, dtype=np.uint64)
    for i in range(n):
        keys[i] = nb_stream_key(seed, i)

    cnt = np.zeros(D, dtype=np.int64)
    pcnt = np.zeros((nparts if mode == MODE_MULTI else 1, D), dtype=np.int64)
    conf = np.zeros(n, dtype=np.int64)
    bad = 0
    if mode == MODE_CSR:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                if colour[indices[k]] == colour[i]:
                    conf[i] += 1
        for i in range(n):
            bad += conf[i]
        bad //= 2
    else:
        for i in range(n):
            cnt[colour[i]] += 1
            if mode == MODE_MULTI:
                pcnt[part[i], colour[i]] += 1
        for c in range(D):
            bad += cnt[c] * (cnt[c] - 1)
            if mode == MODE_MULTI:
                for q in range(nparts):
                    bad -= pcnt[q, c] * (pcnt[q, c] - 1)
        bad //= 2

    act = np.empty(n, dtype=np.int64)
    na = 0
    for i in range(n):
        if not m[i]:
            act[na] = i
            na += 1

    if r_period > 0:
        nxt = _next_periodic(t0, r_first, r_period)
        ridx = 0
    else:
        ridx = np.searchsorted(r_explicit, t0)
        nxt = r_explicit[ridx] if ridx < r_explicit.shape[0] else -1

    ztrace = np.empty(max_slots if record else 0, dtype=np.int64)
    t = t0
    tau = tau0
    R = -1
    steps = 0
    while steps < max_slots:
        if t == nxt:
            tau += 1
            if r_period > 0:
                nxt += r_period
            else:
                while ridx < r_explicit.shape[0] and r_explicit[ridx] <= t:
                    ridx += 1
                nxt = r_explicit[ridx] if ridx < r_explicit.shape[0] else -1
            for i in range(n):
                m[i] = False
                act[i] = i
            na = n

        # draws: every non-sticky vertex is non-permanent, so it is in act
        for k in range(na):
            i = act[k]
            if sticky[i]:
                continue
            c = nb_pick(cdf, nb_uniform(keys[i], t))
            a = colour[i]
            if c == a:
                continue
            if mode == MODE_CSR:
                for kk in range(indptr[i], indptr[i + 1]):
                    j = indices[kk]
                    if colour[j] == a:
                        conf[j] -= 1
                        conf[i] -= 1
                        bad -= 1
                    elif colour[j] == c:
                        conf[j] += 1
                        conf[i] += 1
                        bad += 1
            elif mode == MODE_MULTI:
                q = part[i]
                bad -= cnt[a] - pcnt[q, a]
                cnt[a] -= 1
                pcnt[q, a] -= 1
                bad += cnt[c] - pcnt[q, c]
                cnt[c] += 1
                pcnt[q, c] += 1
            else:
                bad -= cnt[a] - 1
                cnt[a] -= 1
                bad += cnt[c]
                cnt[c] += 1
            colour[i] = c

        # simultaneous sensing and update of the non-permanent vertices
        nz = 0
        for k in range(na):
            i = act[k]
            if mode == MODE_CSR:
                clash = conf[i]
            elif mode == MODE_MULTI:
                clash = cnt[colour[i]] - pcnt[part[i], colour[i]]
            else:
                clash = cnt[colour[i]] - 1
            if clash == 0:
                m[i] = True
                sticky[i] = True
            else:
                sticky[i] = False
                act[nz] = i
                nz += 1
        na = nz

        if record:
            ztrace[steps] = na
        steps += 1
        proper = bad == 0
        if proper and R < 0:
            R = t
        t += 1
        if proper and stop_when_proper:
            break
    return R, t, tau, steps, ztrace[:steps] if record else ztrace
