"""Compiled inner loops shared by the percolation, dynamics and spectral modules.

Cell states are ``uint8`` flags (1 = open, 0 = closed).  Neighbour tables are
(n, 6) ``int64`` arrays with -1 for missing neighbours; separate tables are
passed for open and closed paths (they coincide on the triangular lattice).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def reach(states, nbr, sources, target, stamp, stack, mark):
    """Whether an open path joins an open source cell to a target cell.

    ``stamp`` is a reusable visit array and ``mark`` the value marking visits
    in this call (so the array never needs clearing)."""
    top = 0
    for s in sources:
        if states[s] == 1 and stamp[s] != mark:
            stamp[s] = mark
            stack[top] = s
            top += 1
    while top > 0:
        top -= 1
        c = stack[top]
        if target[c]:
            return True
        for j in range(nbr.shape[1]):
            d = nbr[c, j]
            if d >= 0 and states[d] == 1 and stamp[d] != mark:
                stamp[d] = mark
                stack[top] = d
                top += 1
    return False


@njit(cache=True)
def reach_batch(states2d, nbr, sources, target):
    m, n = states2d.shape
    out = np.zeros(m, dtype=np.bool_)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    for i in range(m):
        out[i] = reach(states2d[i], nbr, sources, target, stamp, stack, i + 1)
    return out


@njit(cache=True)
def crossing_counts(states, nbr_open, nbr_closed, inner, outer, need_open, need_closed, stamp, stack, mark):
    """Count open and closed clusters joining an inner cell to an outer cell.

    Stops early once both counts reach the required numbers."""
    n_open = 0
    n_closed = 0
    for s in inner:
        if stamp[s] == mark:
            continue
        colour = states[s]
        if colour == 1:
            if n_open >= need_open and n_closed < need_closed:
                continue
            nbr = nbr_open
        else:
            if n_closed >= need_closed and n_open < need_open:
                continue
            nbr = nbr_closed
        stamp[s] = mark
        stack[0] = s
        top = 1
        crosses = False
        while top > 0:
            top -= 1
            c = stack[top]
            if outer[c]:
                crosses = True
            for j in range(nbr.shape[1]):
                d = nbr[c, j]
                if d >= 0 and states[d] == colour and stamp[d] != mark:
                    stamp[d] = mark
                    stack[top] = d
                    top += 1
        if crosses:
            if colour == 1:
                n_open += 1
            else:
                n_closed += 1
            if n_open >= need_open and n_closed >= need_closed:
                break
    return n_open, n_closed


@njit(cache=True)
def arm_batch(states2d, nbr_open, nbr_closed, inner, outer, need_open, need_closed, need_open2, need_closed2):
    """Arm event per sample: counts meet (need_open, need_closed) or the second pattern.

    A negative ``need_open2`` disables the second pattern."""
    m, n = states2d.shape
    out = np.zeros(m, dtype=np.bool_)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    mark = 0
    for i in range(m):
        mark += 1
        if need_open2 >= 0:
            # count fully, then test both patterns
            a, b = crossing_counts(states2d[i], nbr_open, nbr_closed, inner, outer,
                                   n + 1, n + 1, stamp, stack, mark)
            out[i] = (a >= need_open and b >= need_closed) or (a >= need_open2 and b >= need_closed2)
        else:
            a, b = crossing_counts(states2d[i], nbr_open, nbr_closed, inner, outer,
                                   need_open, need_closed, stamp, stack, mark)
            out[i] = a >= need_open and b >= need_closed
    return out


@njit(cache=True)
def _bit(words, i):
    return (words[i >> 6] >> np.uint64(i & 63)) & np.uint64(1)


@njit(cache=True)
def one_arm_levels(words2d, nbr, sources, level, top_level):
    """Maximal ``level`` reached by the open cluster of the sources, per sample.

    Cell states are read lazily from packed random bits (bit i of the sample's
    words is the state of cell i).  The search stops once ``top_level`` is
    reached."""
    m = words2d.shape[0]
    n = nbr.shape[0]
    out = np.zeros(m, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    for i in range(m):
        w = words2d[i]
        mark = i + 1
        top = 0
        best = -1
        for s in sources:
            if _bit(w, s) == 1 and stamp[s] != mark:
                stamp[s] = mark
                stack[top] = s
                top += 1
        while top > 0:
            top -= 1
            c = stack[top]
            if level[c] > best:
                best = level[c]
                if best >= top_level:
                    break
            for j in range(nbr.shape[1]):
                d = nbr[c, j]
                if d >= 0 and stamp[d] != mark and _bit(w, d) == 1:
                    stamp[d] = mark
                    stack[top] = d
                    top += 1
        out[i] = best
    return out


@njit(cache=True)
def levels_from_states(states2d, nbr, sources, level, top_level):
    """As ``one_arm_levels`` but with explicit uint8 states."""
    m = states2d.shape[0]
    n = nbr.shape[0]
    out = np.zeros(m, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    for i in range(m):
        st = states2d[i]
        mark = i + 1
        top = 0
        best = -1
        for s in sources:
            if st[s] == 1 and stamp[s] != mark:
                stamp[s] = mark
                stack[top] = s
                top += 1
        while top > 0:
            top -= 1
            c = stack[top]
            if level[c] > best:
                best = level[c]
                if best >= top_level:
                    break
            for j in range(nbr.shape[1]):
                d = nbr[c, j]
                if d >= 0 and stamp[d] != mark and st[d] == 1:
                    stamp[d] = mark
                    stack[top] = d
                    top += 1
        out[i] = best
    return out


@njit(cache=True)
def counts_batch(states2d, sel, nbr_open, nbr_closed, inner, outer, cap_open, cap_closed):
    """(open, closed) crossing-cluster counts per sample, each search stopping once both caps hold.

    Cell i of the annulus reads its state from column sel[i] of ``states2d``."""
    m = states2d.shape[0]
    n = len(sel)
    out = np.zeros((m, 2), dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    st = np.empty(n, dtype=np.uint8)
    for i in range(m):
        row = states2d[i]
        for j in range(n):
            st[j] = row[sel[j]]
        a, b = crossing_counts(st, nbr_open, nbr_closed, inner, outer,
                               cap_open, cap_closed, stamp, stack, i + 1)
        out[i, 0] = a
        out[i, 1] = b
    return out
