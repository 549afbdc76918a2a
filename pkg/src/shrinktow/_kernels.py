"""Numba kernels for the hot paths: point location, operator application, CSR dedup.

Every kernel writes per-row outputs with no cross-row reductions, so results
are independent of the thread count.

Ball-sample stencils store two float32 weights per sample; the third is
1 - w0 - w1 evaluated in float64 and the sample value is formed as
u2 + w0*(u0 - u2) + w1*(u1 - u2). That form reproduces constants exactly and
is monotone in each vertex value even in floating point, which the monotone
bracket iteration relies on.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _bary2(Tm, m, x, y):
    b0 = Tm[m, 0, 0] * (x - Tm[m, 2, 0]) + Tm[m, 0, 1] * (y - Tm[m, 2, 1])
    b1 = Tm[m, 1, 0] * (x - Tm[m, 2, 0]) + Tm[m, 1, 1] * (y - Tm[m, 2, 1])
    return b0, b1


@njit(cache=True, parallel=True)
def walk_interp(Q, seeds, neighbors, Tm, simplices, points, snap2, out_idx, out_w, out_ok):
    """Locate queries by visibility walk and emit barycentric stencils.

    out_idx (nq,3) int32, out_w (nq,3) float64 clipped to a convex combination;
    queries within sqrt(snap2) of a vertex collapse to that vertex. out_ok is
    False where the walk left the hull (caller substitutes nearest node).
    """
    tol = -1e-12
    nq = Q.shape[0]
    max_hops = neighbors.shape[0] + 4
    for i in prange(nq):
        x = Q[i, 0]
        y = Q[i, 1]
        m = seeds[i]
        found = -1
        b0 = 0.0
        b1 = 0.0
        hops = 0
        while m >= 0 and hops < max_hops:
            b0, b1 = _bary2(Tm, m, x, y)
            if b0 != b0 or b1 != b1:  # degenerate simplex
                break
            b2 = 1.0 - b0 - b1
            worst = 0
            wv = b0
            if b1 < wv:
                worst = 1
                wv = b1
            if b2 < wv:
                worst = 2
                wv = b2
            if wv >= tol:
                found = m
                break
            m = neighbors[m, worst]
            hops += 1
        if found < 0:
            out_ok[i] = False
            out_idx[i, 0] = 0
            out_idx[i, 1] = 0
            out_idx[i, 2] = 0
            out_w[i, 0] = 1.0
            out_w[i, 1] = 0.0
            out_w[i, 2] = 0.0
            continue
        out_ok[i] = True
        v0 = simplices[found, 0]
        v1 = simplices[found, 1]
        v2 = simplices[found, 2]
        # snap to an exactly-hit vertex
        snapped = -1
        for k in range(3):
            vk = simplices[found, k]
            dx = x - points[vk, 0]
            dy = y - points[vk, 1]
            if dx * dx + dy * dy <= snap2:
                snapped = vk
                break
        if snapped >= 0:
            out_idx[i, 0] = snapped
            out_idx[i, 1] = snapped
            out_idx[i, 2] = snapped
            out_w[i, 0] = 1.0
            out_w[i, 1] = 0.0
            out_w[i, 2] = 0.0
            continue
        b2 = 1.0 - b0 - b1
        if b0 < 0.0:
            b0 = 0.0
        if b1 < 0.0:
            b1 = 0.0
        if b2 < 0.0:
            b2 = 0.0
        ssum = b0 + b1 + b2
        out_idx[i, 0] = v0
        out_idx[i, 1] = v1
        out_idx[i, 2] = v2
        out_w[i, 0] = b0 / ssum
        out_w[i, 1] = b1 / ssum
        out_w[i, 2] = b2 / ssum


@njit(cache=True, parallel=True, fastmath=True)
def csr_avg(u, ptr, col, w, out):
    """out[i, :] = sum_j w[j] * u[col[j], :] over row i's CSR run."""
    npts = u.shape[0]
    nf = u.shape[1]
    for i in prange(npts):
        for f in range(nf):
            out[i, f] = 0.0
        for jj in range(ptr[i], ptr[i + 1]):
            c = col[jj]
            ww = w[jj]
            for f in range(nf):
                out[i, f] += ww * u[c, f]


@njit(cache=True, parallel=True, fastmath=True)
def stencil_extrema(u, idx, w2, active, smax, smin):
    """Per-point sup/inf over the ball sample set for every field column.

    Rows with active[i] == False are skipped (their outputs are left as-is).
    Ties resolve to the first sample via strict comparisons.
    """
    npts = idx.shape[0]
    ns = idx.shape[1]
    nf = u.shape[1]
    for i in prange(npts):
        if not active[i]:
            continue
        for f in range(nf):
            smax[i, f] = -1.0e300
            smin[i, f] = 1.0e300
        for s in range(ns):
            i0 = idx[i, s, 0]
            i1 = idx[i, s, 1]
            i2 = idx[i, s, 2]
            w0 = np.float64(w2[i, s, 0])
            w1 = np.float64(w2[i, s, 1])
            for f in range(nf):
                u2v = u[i2, f]
                v = u2v + w0 * (u[i0, f] - u2v) + w1 * (u[i1, f] - u2v)
                if v > smax[i, f]:
                    smax[i, f] = v
                if v < smin[i, f]:
                    smin[i, f] = v


@njit(cache=True, parallel=True)
def stencil_extrema_arg(v, idx, w2, smax, smin, amax, amin):
    """Single-field sup/inf plus the first sample index attaining each."""
    npts = idx.shape[0]
    ns = idx.shape[1]
    for i in prange(npts):
        best = -1.0e300
        worst = 1.0e300
        bi = 0
        wi = 0
        for s in range(ns):
            i0 = idx[i, s, 0]
            i1 = idx[i, s, 1]
            i2 = idx[i, s, 2]
            w0 = np.float64(w2[i, s, 0])
            w1 = np.float64(w2[i, s, 1])
            u2v = v[i2]
            val = u2v + w0 * (v[i0] - u2v) + w1 * (v[i1] - u2v)
            if val > best:
                best = val
                bi = s
            if val < worst:
                worst = val
                wi = s
        smax[i] = best
        smin[i] = worst
        amax[i] = bi
        amin[i] = wi


@njit(cache=True, parallel=True)
def combine_envelope_stats(acc, smax, smin, tug, avgc, bgc, U, block_stats):
    """Form T(U), apply the monotone envelope against U in place, gather stats.

    Columns pair up as (lower, upper) branches: even columns may only rise,
    odd columns only fall; roundoff violations are clipped and reported.
    block_stats[b, j] = (clip_lo, clip_hi, inc_lo, inc_hi, gap) maxima over a
    fixed block decomposition (independent of thread count; max-reduction over
    blocks afterwards is exact).
    """
    N, F = U.shape
    L = F // 2
    B = block_stats.shape[0]
    step = (N + B - 1) // B
    for b in prange(B):
        i0 = b * step
        i1 = min(N, i0 + step)
        st = np.zeros((L, 5))
        for j in range(L):
            st[j, 4] = -1.0e300
        for i in range(i0, i1):
            for j in range(L):
                clo = 2 * j
                chi = clo + 1
                lo_old = U[i, clo]
                hi_old = U[i, chi]
                lo = tug[i, clo] * (smax[i, clo] + smin[i, clo]) + avgc[i, clo] * acc[i, clo] + bgc[i, clo]
                hi = tug[i, chi] * (smax[i, chi] + smin[i, chi]) + avgc[i, chi] * acc[i, chi] + bgc[i, chi]
                dlo = lo_old - lo
                if dlo > 0.0:
                    if dlo > st[j, 0]:
                        st[j, 0] = dlo
                    lo = lo_old
                dhi = hi - hi_old
                if dhi > 0.0:
                    if dhi > st[j, 1]:
                        st[j, 1] = dhi
                    hi = hi_old
                ilo = lo - lo_old
                if ilo > st[j, 2]:
                    st[j, 2] = ilo
                ihi = hi_old - hi
                if ihi > st[j, 3]:
                    st[j, 3] = ihi
                g = hi - lo
                if g > st[j, 4]:
                    st[j, 4] = g
                U[i, clo] = lo
                U[i, chi] = hi
        for j in range(L):
            for q in range(5):
                block_stats[b, j, q] = st[j, q]


@njit(cache=True, parallel=True)
def dedup_rows(idx, w, valid, counts, cols_out, wts_out):
    """Per row, accumulate duplicate column indices of (idx, w) triples.

    idx/w: (rows, samples, 3); valid: (rows, samples) node-inside mask.
    Open-addressing hash per row; output order is first-occurrence order,
    deterministic for a fixed node template. Weights are not normalized here.
    """
    rows, ns, _ = idx.shape
    cap = cols_out.shape[1]
    hbits = 11
    hsize = 1 << hbits
    hmask = hsize - 1
    for r in prange(rows):
        keys = np.full(hsize, -1, dtype=np.int64)
        slots = np.zeros(hsize, dtype=np.int64)
        cnt = 0
        overflow = False
        for s in range(ns):
            if not valid[r, s]:
                continue
            for k in range(3):
                ww = w[r, s, k]
                if ww == 0.0:
                    continue
                c = np.int64(idx[r, s, k])
                hsh = np.int64((c * 2654435761) & hmask)
                while True:
                    kk = keys[hsh]
                    if kk == c:
                        wts_out[r, slots[hsh]] += ww
                        break
                    if kk == -1:
                        if cnt < cap:
                            keys[hsh] = c
                            slots[hsh] = cnt
                            cols_out[r, cnt] = c
                            wts_out[r, cnt] = ww
                            cnt += 1
                        else:
                            overflow = True
                        break
                    hsh = (hsh + 1) & hmask
        counts[r] = -1 if overflow else cnt


def set_threads(k):
    """Clamp and apply the numba thread count; returns the applied value."""
    k = max(1, min(int(k), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(k)
    return k
