"""Compiled event loops.

Every clock (one per lattice site, plus one for the walker) is an
independent Poisson stream whose n-th inter-arrival time and n-th mark are
pure functions of ``(seed, stream key, n)``.  Any process driven by the same
seed and keys therefore sees exactly the same rings and coins, whatever else
it simulates, which is what the couplings rely on.  The pending ring of each
active stream sits in a calendar queue popped in ``(time, site)`` order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

WALKER_KEY = np.uint64(0xFFFFFFFF)
DOMAIN_CLOCK = np.uint64(1)
DOMAIN_MARK = np.uint64(2)

KIND_EAST = 0
KIND_WEST = 1
KIND_FA1F = 2
KIND_INDEPENDENT = 3

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_K_STREAM = np.uint64(0xD6E8FEB86659FD93)
_K_DOMAIN = np.uint64(0xA0761D6478BD642F)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def stream_uniform(seed, key, index, domain):
    """Uniform on (0, 1) keyed on (seed, stream key, index, domain)."""
    z = mix64(np.uint64(seed) + _GOLDEN * (np.uint64(key) + _ONE))
    z = mix64(z ^ (np.uint64(index) * _GOLDEN + np.uint64(domain) * _K_DOMAIN))
    z = mix64(z + _K_STREAM)
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, inline="always")
def clock_increment(seed, key, index, rate):
    return -math.log(stream_uniform(seed, key, index, DOMAIN_CLOCK)) / rate


@njit(cache=True)
def ring_times(seed, key, rate, start_index, start_time, n):
    """Ring times ``start_index .. start_index+n-1`` of one stream.

    ``start_time`` must be the ring time preceding ``start_index`` (0 for
    the first), so that chunked and one-shot generation agree bit for bit.
    """
    out = np.empty(n)
    t = start_time
    for i in range(n):
        t += clock_increment(seed, key, start_index + i, rate)
        out[i] = t
    return out


@njit(cache=True)
def marks(seed, key, start_index, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = stream_uniform(seed, key, start_index + i, DOMAIN_MARK)
    return out


# ------------------------------------------------------ calendar queue ----
# Pending rings live in time bins of width ~ 1/total rate, each bin a singly
# linked list.  An item is filed under bin floor(t / h); bins are visited in
# order and, within a bin, the smallest (time, item) pair is popped.  Since
# floor(t / h) is monotone in t this is exactly (time, item) order.


@njit(cache=True)
def _cq_build(times, total_rate):
    n = times.size
    nb = 64
    while nb < 8 * n:
        nb *= 2
    mask = nb - 1
    h = 1.0 / total_rate
    bhead = np.full(nb, -1, np.int64)
    nxt = np.full(n, -1, np.int64)
    ab = np.empty(n, np.int64)
    for i in range(n):
        a = np.int64(times[i] / h)
        ab[i] = a
        b = a & mask
        nxt[i] = bhead[b]
        bhead[b] = i
    return bhead, nxt, ab, h, mask


@njit(cache=True, inline="always")
def _cq_insert(bhead, nxt, ab, h, mask, i, t):
    a = np.int64(t / h)
    ab[i] = a
    b = a & mask
    nxt[i] = bhead[b]
    bhead[b] = i


@njit(cache=True)
def _cq_pop(bhead, nxt, ab, times, mask, cb):
    """Remove and return the earliest item, and the bin it came from."""
    while True:
        b = cb & mask
        i = bhead[b]
        best = -1
        bprev = -1
        prev = -1
        while i >= 0:
            if ab[i] == cb:
                if best < 0 or times[i] < times[best] or (times[i] == times[best] and i < best):
                    best = i
                    bprev = prev
            prev = i
            i = nxt[i]
        if best >= 0:
            if bprev < 0:
                bhead[b] = nxt[best]
            else:
                nxt[bprev] = nxt[best]
            return best, cb
        cb += 1


# ---------------------------------------------------------- constraint ----


@njit(cache=True, inline="always")
def _site(cfg, x, L, ring):
    if ring:
        return cfg[x % L]
    if x < 0 or x >= L:
        return 0
    return cfg[x]


@njit(cache=True, inline="always")
def constraint_nb(kind, cfg, L, ring, x):
    if kind == KIND_EAST:
        return 1 - _site(cfg, x + 1, L, ring)
    if kind == KIND_WEST:
        return 1 - _site(cfg, x - 1, L, ring)
    if kind == KIND_FA1F:
        return 1 - _site(cfg, x - 1, L, ring) * _site(cfg, x + 1, L, ring)
    return 1


# --------------------------------------------------------- event loops ----


@njit(cache=True)
def _start_queue(keys, lo, L, seed, rate, with_walker):
    n = L - lo + (1 if with_walker else 0)
    times = np.empty(n)
    for j in range(L - lo):
        times[j] = clock_increment(seed, keys[lo + j], 0, rate)
    total = (L - lo) * rate
    if with_walker:
        times[n - 1] = clock_increment(seed, WALKER_KEY, 0, 1.0)
        total += 1.0
    bhead, nxt, ab, h, mask = _cq_build(times, total)
    return times, bhead, nxt, ab, h, mask


@njit(cache=True)
def env_run(cfg, keys, kind, ring, rho, rate, lo, seed, horizon, snap_times, snap_lo, snap_hi, occ_time):
    """Evolve the environment alone on sites ``lo..L-1``.

    Sites below ``lo`` are never touched; that is exact for East on a
    segment because no site reads its left neighbour.  Returns snapshots of
    ``cfg[snap_lo:snap_hi]`` at ``snap_times`` and the number of rings.
    ``occ_time`` accumulates the time each site spends occupied on [0, horizon].
    """
    L = cfg.size
    times, bhead, nxt, ab, h, mask = _start_queue(keys, lo, L, seed, rate, False)
    cnt = np.zeros(L - lo, np.int64)
    nsnap = snap_times.size
    snaps = np.empty((nsnap, snap_hi - snap_lo), np.uint8)
    last = np.zeros(L)
    r = 0
    events = 0
    cb = 0
    while True:
        j, cb = _cq_pop(bhead, nxt, ab, times, mask, cb)
        t = times[j]
        s = lo + j
        while r < nsnap and snap_times[r] < t:
            for y in range(snap_lo, snap_hi):
                snaps[r, y - snap_lo] = cfg[y]
            r += 1
        if t > horizon:
            break
        k = cnt[j]
        coin = 1 if stream_uniform(seed, keys[s], k, DOMAIN_MARK) < rho else 0
        if cfg[s] != coin and constraint_nb(kind, cfg, L, ring, s) == 1:
            occ_time[s] += (t - last[s]) * cfg[s]
            last[s] = t
            cfg[s] = coin
        events += 1
        cnt[j] = k + 1
        times[j] = t + clock_increment(seed, keys[s], k + 1, rate)
        _cq_insert(bhead, nxt, ab, h, mask, j, times[j])
    while r < nsnap:
        for y in range(snap_lo, snap_hi):
            snaps[r, y - snap_lo] = cfg[y]
        r += 1
    for x in range(lo, L):
        occ_time[x] += (horizon - last[x]) * cfg[x]
    return snaps, events


@njit(cache=True)
def first_legal_ring(cfg, keys, kind, ring, rho, rate, lo, seed, horizon, site):
    """Time of the first ring at ``site`` whose constraint holds, or +inf."""
    L = cfg.size
    times, bhead, nxt, ab, h, mask = _start_queue(keys, lo, L, seed, rate, False)
    cnt = np.zeros(L - lo, np.int64)
    cb = 0
    while True:
        j, cb = _cq_pop(bhead, nxt, ab, times, mask, cb)
        t = times[j]
        s = lo + j
        if t > horizon:
            return np.inf
        legal = constraint_nb(kind, cfg, L, ring, s) == 1
        if s == site and legal:
            return t
        k = cnt[j]
        if legal:
            cfg[s] = 1 if stream_uniform(seed, keys[s], k, DOMAIN_MARK) < rho else 0
        cnt[j] = k + 1
        times[j] = t + clock_increment(seed, keys[s], k + 1, rate)
        _cq_insert(bhead, nxt, ab, h, mask, j, times[j])


@njit(cache=True)
def walk_ring(cfg, keys, kind, rho, rate, eps, x0, horizon, seed, mirror, rec_times, W, acc_from):
    """Joint environment + walker on a ring.

    The walker clock is a separate rate-1 stream; at each of its rings the
    walker steps right iff its mark is below 1/2 + eps(2 occ - 1).  With
    ``mirror`` the mark u is replaced by 1 - u (reflected schedule).
    Returns (positions at ``rec_times``, occupation-time integrals of
    xi(X + j) for j in [-W, W] over [acc_from, horizon], env rings, walker rings).
    Pass ``W = -1`` to skip the profile bookkeeping.
    """
    L = cfg.size
    times, bhead, nxt, ab, h, mask = _start_queue(keys, 0, L, seed, rate, True)
    cnt = np.zeros(L + 1, np.int64)
    nrec = rec_times.size
    xrec = np.empty(nrec, np.int64)
    r = 0
    x = x0
    nacc = 2 * W + 1 if W >= 0 else 0
    acc = np.zeros(max(nacc, 1))
    t_last = acc_from
    env_events = 0
    walk_events = 0
    cb = 0
    while True:
        s, cb = _cq_pop(bhead, nxt, ab, times, mask, cb)
        t = times[s]
        while r < nrec and rec_times[r] < t:
            xrec[r] = x
            r += 1
        if t > horizon:
            break
        k = cnt[s]
        if s == L:
            u = stream_uniform(seed, WALKER_KEY, k, DOMAIN_MARK)
            if mirror:
                u = 1.0 - u
            occ = cfg[x % L]
            p_right = 0.5 + eps * (2 * occ - 1)
            if W >= 0 and t > t_last:
                dt = t - t_last
                for j in range(nacc):
                    acc[j] += dt * cfg[(x + j - W) % L]
                t_last = t
            if u < p_right:
                x += 1
            else:
                x -= 1
            walk_events += 1
            cnt[s] = k + 1
            times[s] = t + clock_increment(seed, WALKER_KEY, k + 1, 1.0)
        else:
            coin = 1 if stream_uniform(seed, keys[s], k, DOMAIN_MARK) < rho else 0
            if cfg[s] != coin and constraint_nb(kind, cfg, L, True, s) == 1:
                if W >= 0 and t > t_last:
                    d = (s - x) % L
                    if d <= W or d >= L - W:
                        dt = t - t_last
                        for j in range(nacc):
                            acc[j] += dt * cfg[(x + j - W) % L]
                        t_last = t
                cfg[s] = coin
            env_events += 1
            cnt[s] = k + 1
            times[s] = t + clock_increment(seed, keys[s], k + 1, rate)
        _cq_insert(bhead, nxt, ab, h, mask, s, times[s])
    while r < nrec:
        xrec[r] = x
        r += 1
    if W >= 0 and horizon > t_last:
        dt = horizon - t_last
        for j in range(nacc):
            acc[j] += dt * cfg[(x + j - W) % L]
    return xrec, acc[:nacc], env_events, walk_events


STATUS_OK = 0
STATUS_LEFT_BOUNDARY = 1
STATUS_RIGHT_BOUNDARY = 2


@njit(cache=True)
def edge_front_run(cfg, keys, rho, lo, seed, horizon, e0, f0, rec_times, margin):
    """East segment with the degenerate edge walker and/or the front.

    ``e`` is the left site of the walker's edge (Y = e + 1/2), ``f`` the
    front.  Pass -1 to disable either.  Both are pure functions of the
    environment path, so running them in one loop is the graphical coupling.
    Returns (e at rec_times, f at rec_times, violations of f >= e + 1,
    edge/front invariant breaks, rings processed, status, stop time).
    """
    L = cfg.size
    times, bhead, nxt, ab, h, mask = _start_queue(keys, lo, L, seed, 1.0, False)
    cnt = np.zeros(L - lo, np.int64)
    nrec = rec_times.size
    erec = np.full(nrec, -1, np.int64)
    frec = np.full(nrec, -1, np.int64)
    e = e0
    f = f0
    track_e = e0 >= 0
    track_f = f0 >= 0
    r = 0
    violations = 0
    breaks = 0
    events = 0
    status = STATUS_OK
    t_stop = horizon
    cb = 0
    while True:
        j, cb = _cq_pop(bhead, nxt, ab, times, mask, cb)
        t = times[j]
        s = lo + j
        while r < nrec and rec_times[r] < t:
            erec[r] = e
            frec[r] = f
            r += 1
        if t > horizon:
            break
        k = cnt[j]
        coin = 1 if stream_uniform(seed, keys[s], k, DOMAIN_MARK) < rho else 0
        legal = s == L - 1 or cfg[s + 1] == 0
        if legal:
            cfg[s] = coin
        events += 1
        cnt[j] = k + 1
        times[j] = t + clock_increment(seed, keys[s], k + 1, 1.0)
        _cq_insert(bhead, nxt, ab, h, mask, j, times[j])

        if track_e:
            if s == e and coin == 0:
                kk = 1
                while e - kk >= lo and cfg[e - kk] == 0:
                    kk += 1
                if e - kk < lo + margin:
                    status = STATUS_LEFT_BOUNDARY
                    t_stop = t
                    break
                e -= kk
            elif s == e + 1 and legal and coin == 1:
                e += 1
                if e + 1 >= L - margin:
                    status = STATUS_RIGHT_BOUNDARY
                    t_stop = t
                    break
            if cfg[e] != 1 or cfg[e + 1] != 0:
                breaks += 1
        if track_f:
            if s == f and legal and coin == 1:
                f += 1
                if f >= L - margin:
                    status = STATUS_RIGHT_BOUNDARY
                    t_stop = t
                    break
            elif s == f - 1 and coin == 0:
                f -= 1
                if f < lo + margin:
                    status = STATUS_LEFT_BOUNDARY
                    t_stop = t
                    break
            if cfg[f] != 0:
                breaks += 1
        if track_e and track_f and f < e + 1:
            violations += 1
    while r < nrec:
        erec[r] = e
        frec[r] = f
        r += 1
    return erec, frec, violations, breaks, events, status, t_stop
