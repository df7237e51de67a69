"""Compiled inner loops.

All workload updates go through the same expression ``(v + sigma) - tau``
followed by ``max(., 0)`` so coupled systems see identical floating-point
arithmetic.
"""
import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _argmin_first(v):
    i = 0
    m = v[0]
    for r in range(1, v.shape[0]):
        if v[r] < m:
            m = v[r]
            i = r
    return i


@njit(**_OPTS)
def _sorted_into(v, out):
    s = v.shape[0]
    for r in range(s):
        out[r] = v[r]
    for r in range(1, s):
        key = out[r]
        j = r - 1
        while j >= 0 and out[j] > key:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = key


@njit(**_OPTS)
def kw_advance(v, sig, tau, delays, idx, trace, want_idx, want_trace):
    """Advance the line-workload vector ``v`` over ``len(sig)`` customers.

    Customer j sees ``v``, waits ``min(v)``, joins the lowest-numbered line
    attaining it, then ``tau[j]`` time units pass before the next arrival.
    """
    s = v.shape[0]
    for j in range(sig.shape[0]):
        i = _argmin_first(v)
        delays[j] = v[i]
        if want_idx:
            idx[j] = i
        if want_trace:
            _sorted_into(v, trace[j])
        t = tau[j]
        for r in range(s):
            w = v[r]
            if r == i:
                w = w + sig[j]
            w = w - t
            v[r] = w if w > 0.0 else 0.0


@njit(**_OPTS)
def lindley_advance(d, sig, tau, delays):
    for j in range(sig.shape[0]):
        delays[j] = d
        w = (d + sig[j]) - tau[j]
        d = w if w > 0.0 else 0.0
    return d


@njit(**_OPTS)
def count_exceedances(delays, first_index, burn_in, batch_len, n_batches, xs, hist):
    """Histogram delays into ``hist[batch, k]`` with k = #{x in xs : x < d}.

    ``first_index`` is the 0-based path index of ``delays[0]``.
    """
    g = xs.shape[0]
    for j in range(delays.shape[0]):
        pos = first_index + j - burn_in
        if pos < 0:
            continue
        b = pos // batch_len
        if b >= n_batches:
            continue
        d = delays[j]
        lo = 0
        hi = g
        while lo < hi:
            mid = (lo + hi) // 2
            if xs[mid] < d:
                lo = mid + 1
            else:
                hi = mid
        hist[b, lo] += 1


@njit(**_OPTS)
def bigjump_scan(sig_hist, delays, offset, first_index, burn_in, x, slope, window, need, lags_out):
    """Count conditioning and matched events in one chunk.

    ``sig_hist`` holds service times with ``sig_hist[offset + j]`` belonging
    to ``delays[j]``; entries before ``offset`` are the tail of the previous
    chunk.  Lag ``l`` matches when ``sig[n - l] > x + l * slope``.
    Returns (conditioning, matched, trace_count); lag tuples are written to
    ``lags_out`` while it has room.
    """
    cond = 0
    matched = 0
    stored = 0
    cap = lags_out.shape[0]
    for j in range(delays.shape[0]):
        n = first_index + j
        if n < burn_in or not delays[j] > x:
            continue
        cond += 1
        hits = 0
        maxlag = window if window < n else n
        for lag in range(1, maxlag + 1):
            if sig_hist[offset + j - lag] > x + lag * slope:
                if stored < cap:
                    lags_out[stored, hits] = lag
                hits += 1
                if hits >= need:
                    break
        if hits >= need:
            matched += 1
            if stored < cap:
                lags_out[stored, need] = n
                stored += 1
    return cond, matched, stored


@njit(**_OPTS)
def comparison_advance(vt, vh, sig, tau_t, tau_h, m, dt, dh, mm, record):
    """Interarrival comparison coupling: two systems share ``sig``; ``m`` is the running M.

    Returns (violations, m).  With ``record`` the per-step D-tilde, D-hat and
    M_{n-1} are stored.
    """
    bad = 0
    s = vt.shape[0]
    for j in range(sig.shape[0]):
        it = _argmin_first(vt)
        ih = _argmin_first(vh)
        a = vt[it]
        b = vh[ih]
        if a > b + m:
            bad += 1
        if record:
            dt[j] = a
            dh[j] = b
            mm[j] = m
        for r in range(s):
            w = vt[r]
            if r == it:
                w = w + sig[j]
            w = w - tau_t[j]
            vt[r] = w if w > 0.0 else 0.0
            w = vh[r]
            if r == ih:
                w = w + sig[j]
            w = w - tau_h[j]
            vh[r] = w if w > 0.0 else 0.0
        w = m + (tau_h[j] - tau_t[j])
        m = w if w > 0.0 else 0.0
    return bad, m


@njit(**_OPTS)
def majorant_advance(v, u, sig, a, a_hat, order, delays, u_out, u_ord, idx):
    """Joint step of the s-server D/GI/s system and s auxiliary D/GI/1 queues.

    ``sig[j, i]`` is the i-th independent service stream; the big system uses
    ``sig[j, i_j]`` with the lowest-index tie-break.  ``order`` is k, so
    ``u_ord`` receives the (k+1)-th smallest auxiliary waiting time.
    """
    s = v.shape[0]
    buf = np.empty(s)
    for j in range(sig.shape[0]):
        i = _argmin_first(v)
        delays[j] = v[i]
        idx[j] = i
        for r in range(s):
            u_out[j, r] = u[r]
        _sorted_into(u, buf)
        u_ord[j] = buf[order]
        for r in range(s):
            w = v[r]
            if r == i:
                w = w + sig[j, r]
            w = w - a
            v[r] = w if w > 0.0 else 0.0
            w = (u[r] + sig[j, r]) - a_hat
            u[r] = w if w > 0.0 else 0.0
