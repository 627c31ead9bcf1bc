"""Numba kernels for the zero-range process.

The event loop draws from a pre-filled buffer of uniforms and returns a
status code whenever it needs something from Python (more uniforms, a
longer rate table). It never leaves the state half-updated, so a call can
always be resumed with identical results.

Status codes: 0 reached ``tau_end``; 1 uniforms exhausted; 2 rate table
too short; 3 block table too short; 4 rate-index audit failed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

AUDIT_EVERY = 1_000_000

# clock slots
TAU, T_NEXT, T0 = 0, 1, 2
# counter slots
UPOS, EVENTS, JUMPS, INJECTIONS, ANNIHILATIONS = 0, 1, 2, 3, 4


@njit(nogil=True, cache=True)
def tree_set(tree, P, leaf, val):
    i = P + leaf
    tree[i] = val
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


@njit(nogil=True, cache=True)
def tree_build(tree, P):
    for i in range(P - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(nogil=True, cache=True)
def tree_find(tree, P, w):
    """Leaf holding cumulative mass ``w`` and the residual inside it."""
    i = 1
    while i < P:
        left = tree[2 * i]
        if w < left or tree[2 * i + 1] <= 0.0:
            if w >= left:
                w = left * (1.0 - 1e-16)
            i = 2 * i
        else:
            w -= left
            i = 2 * i + 1
    if w < 0.0:
        w = 0.0
    return i - P, w


@njit(nogil=True, cache=True)
def _site_flush(s, tau, t0, occ, gtab, last, acc):
    dt = tau - last[s]
    if dt > 0.0:
        f = occ[s]
        gg = gtab[f]
        a = last[s] - t0
        b = tau - t0
        half = 0.5 * (b * b - a * a)
        acc[0, s] += f * dt
        acc[1, s] += gg * dt
        acc[2, s] += f * gg * dt
        acc[3, s] += f * half
        acc[4, s] += gg * half
    last[s] = tau


@njit(nogil=True, cache=True)
def _block_flush(b, tau, bsum, blast, tabF, tabH, bacc):
    dt = tau - blast[b]
    if dt > 0.0:
        S = bsum[b]
        bacc[0, b] += tabF[b, S] * dt
        bacc[1, b] += tabH[b, S] * dt
    blast[b] = tau


@njit(nogil=True, cache=True)
def flush_all(tau, t0, occ, gtab, last, acc, bsum, blast, tabF, tabH, bacc, interior):
    for s in interior:
        _site_flush(s, tau, t0, occ, gtab, last, acc)
    for b in range(bsum.shape[0]):
        _block_flush(b, tau, bsum, blast, tabF, tabH, bacc)


@njit(nogil=True, cache=True)
def _change(s, delta, tau, t0, occ, gtab, deg, inj, tree, P, leaf_of, last, acc,
            bptr, bidx, bsum, blast, tabF, tabH, bacc):
    _site_flush(s, tau, t0, occ, gtab, last, acc)
    for q in range(bptr[s], bptr[s + 1]):
        b = bidx[q]
        _block_flush(b, tau, bsum, blast, tabF, tabH, bacc)
        bsum[b] += delta
    occ[s] += delta
    tree_set(tree, P, leaf_of[s], deg[s] * gtab[occ[s]] + inj[s])


@njit(nogil=True, cache=True)
def advance(tau_end, clock, ctr, U, occ, gtab, deg, inj, nbr, is_corner, tree, P,
            leaf_of, site_of, last, acc, bptr, bidx, bsum, blast, tabF, tabH, bacc):
    """Run the chain until CTMC time ``tau_end`` or a status interrupt."""
    t0 = clock[T0]
    nU = U.shape[0]
    kmax = gtab.shape[0] - 1
    smax = tabF.shape[1] - 1
    while True:
        if clock[T_NEXT] < 0.0:
            total = tree[1]
            if total <= 0.0:
                clock[T_NEXT] = np.inf
            else:
                if ctr[UPOS] >= nU:
                    return 1
                clock[T_NEXT] = clock[TAU] - math.log1p(-U[ctr[UPOS]]) / total
                ctr[UPOS] += 1
        if clock[T_NEXT] > tau_end:
            clock[TAU] = tau_end
            return 0
        if ctr[UPOS] >= nU:
            return 1
        total = tree[1]
        leaf, w = tree_find(tree, P, U[ctr[UPOS]] * total)
        x = site_of[leaf]
        gx = gtab[occ[x]]
        source = -1
        target = -1
        if w < inj[x] or gx <= 0.0:
            target = x
        else:
            w -= inj[x]
            d = int(w / gx)
            if d >= deg[x]:
                d = deg[x] - 1
            y = nbr[x, d]
            source = x
            if not is_corner[y]:
                target = y
        if target >= 0:
            if occ[target] + 1 > kmax:
                return 2
            for q in range(bptr[target], bptr[target + 1]):
                if bsum[bidx[q]] + 1 > smax:
                    return 3
        # commit
        ctr[UPOS] += 1
        tau = clock[T_NEXT]
        clock[TAU] = tau
        clock[T_NEXT] = -1.0
        if source >= 0:
            _change(source, -1, tau, t0, occ, gtab, deg, inj, tree, P, leaf_of, last, acc,
                    bptr, bidx, bsum, blast, tabF, tabH, bacc)
        if target >= 0:
            _change(target, 1, tau, t0, occ, gtab, deg, inj, tree, P, leaf_of, last, acc,
                    bptr, bidx, bsum, blast, tabF, tabH, bacc)
        ctr[EVENTS] += 1
        if source < 0:
            ctr[INJECTIONS] += 1
        elif target < 0:
            ctr[ANNIHILATIONS] += 1
        else:
            ctr[JUMPS] += 1
        if ctr[EVENTS] % AUDIT_EVERY == 0:
            # total rate recomputed from the occupations, not from the tree
            s = 0.0
            for leaf2 in range(site_of.shape[0]):
                y = site_of[leaf2]
                s += deg[y] * gtab[occ[y]] + inj[y]
            if abs(s - tree[1]) > 1e-9 * max(s, 1e-300):
                return 4


@njit(nogil=True, cache=True)
def coupled_run(tau_end, U, occ_a, occ_b, gtab, deg, inj, nbr, is_corner, interior, sample_taus, ordered):
    """Basic coupling of two chains on a shared clock.

    Per site and direction the pair jumps together at rate
    ``min(g(ξ), g(ξ'))`` and the larger one alone at the excess rate;
    injections are shared. ``ordered[k]`` records whether ``ξ <= ξ'``
    sitewise at ``sample_taus[k]``. Returns the number of uniforms used, or
    ``-1`` when the buffer ran out.
    """
    m = interior.shape[0]
    rates = np.zeros(4 * m)
    kmax = gtab.shape[0] - 1
    tau = 0.0
    upos = 0
    k = 0
    nS = sample_taus.shape[0]
    while True:
        total = 0.0
        for r in range(m):
            x = interior[r]
            ga = gtab[occ_a[x]]
            gb = gtab[occ_b[x]]
            lo = min(ga, gb)
            rates[4 * r] = deg[x] * lo
            rates[4 * r + 1] = deg[x] * (ga - lo)
            rates[4 * r + 2] = deg[x] * (gb - lo)
            rates[4 * r + 3] = inj[x]
            total += rates[4 * r] + rates[4 * r + 1] + rates[4 * r + 2] + rates[4 * r + 3]
        if upos + 3 > U.shape[0]:
            return -1
        dt = np.inf if total <= 0.0 else -math.log1p(-U[upos]) / total
        nxt = tau + dt
        while k < nS and sample_taus[k] < nxt:
            ok = True
            for r in range(m):
                if occ_a[interior[r]] > occ_b[interior[r]]:
                    ok = False
            ordered[k] = ok
            k += 1
        if nxt > tau_end:
            return upos + 1
        tau = nxt
        w = U[upos + 1] * total
        j = 0
        while j < 4 * m - 1 and w >= rates[j]:
            w -= rates[j]
            j += 1
        r = j // 4
        kind = j % 4
        x = interior[r]
        upos += 3
        if kind == 3:
            if occ_a[x] + 1 > kmax or occ_b[x] + 1 > kmax:
                return -2
            occ_a[x] += 1
            occ_b[x] += 1
            continue
        d = int(U[upos - 1] * deg[x])
        if d >= deg[x]:
            d = deg[x] - 1
        y = nbr[x, d]
        move_a = kind == 0 or kind == 1
        move_b = kind == 0 or kind == 2
        if not is_corner[y] and ((move_a and occ_a[y] + 1 > kmax) or (move_b and occ_b[y] + 1 > kmax)):
            return -2
        if move_a:
            occ_a[x] -= 1
            if not is_corner[y]:
                occ_a[y] += 1
        if move_b:
            occ_b[x] -= 1
            if not is_corner[y]:
                occ_b[y] += 1
