"""Compiled inner loops: 2-D DDA traversal and grid A*.

All coordinates here are in cell units: cell ``(a, b)`` covers
``[a, a + 1) x [b, b + 1)`` in the continuous ``(a, b)`` plane.
"""

import heapq
import math

import numpy as np
from numba import njit

_BIG = 1e30


@njit(cache=True)
def _dda_setup(p, d):
    cell = math.floor(p)
    if d > 0.0:
        return cell, 1, (cell + 1.0 - p) / d, 1.0 / d
    if d < 0.0:
        return cell, -1, (p - cell) / -d, -1.0 / d
    return cell, 0, _BIG, _BIG


@njit(cache=True)
def sweep_rays(a0, b0, dirs, lengths, hit_flags, size, max_pairs):
    """Traverse each ray from (a0, b0) for ``lengths[k]`` cells along ``dirs[k]``.

    Returns visibility, hit mask and the (ray, flat cell) incidence list; every
    traversed cell is recorded once per ray and the endpoint cell is marked hit
    when ``hit_flags[k]`` is set and the endpoint lies inside the grid.
    """
    visible = np.zeros((size, size), dtype=np.bool_)
    hits = np.zeros((size, size), dtype=np.bool_)
    pair_ray = np.empty(max_pairs, dtype=np.int64)
    pair_cell = np.empty(max_pairs, dtype=np.int64)
    n = 0
    for k in range(dirs.shape[0]):
        da = dirs[k, 0]
        db = dirs[k, 1]
        t_end = lengths[k]
        ca, sa, ta, dta = _dda_setup(a0, da)
        cb, sb, tb, dtb = _dda_setup(b0, db)
        inside = True
        while True:
            if ca < 0 or ca >= size or cb < 0 or cb >= size:
                inside = False
                break
            visible[ca, cb] = True
            pair_ray[n] = k
            pair_cell[n] = ca * size + cb
            n += 1
            if ta <= tb:
                if ta >= t_end:
                    break
                ca += sa
                ta += dta
            else:
                if tb >= t_end:
                    break
                cb += sb
                tb += dtb
        if inside and hit_flags[k]:
            hits[ca, cb] = True
    return visible, hits, pair_ray[:n], pair_cell[:n]


@njit(cache=True)
def cast_rays(occ, a0, b0, angles, max_t):
    """First-occupied-cell raycast on a boolean grid.

    Returns per-ray travel distance (cell units, clipped at ``max_t``) and the
    (a, b) index of the last free cell visited by each ray.
    """
    na, nb = occ.shape
    n = angles.shape[0]
    dist = np.empty(n)
    last = np.empty((n, 2), dtype=np.int64)
    for k in range(n):
        da = math.cos(angles[k])
        db = math.sin(angles[k])
        ca, sa, ta, dta = _dda_setup(a0, da)
        cb, sb, tb, dtb = _dda_setup(b0, db)
        t = max_t
        la = ca
        lb = cb
        while True:
            if ta <= tb:
                t_next = ta
                na_ = ca + sa
                nb_ = cb
            else:
                t_next = tb
                na_ = ca
                nb_ = cb + sb
            if t_next >= max_t:
                t = max_t
                break
            if na_ < 0 or na_ >= na or nb_ < 0 or nb_ >= nb:
                t = t_next
                break
            if occ[na_, nb_]:
                t = t_next
                break
            ca = na_
            cb = nb_
            la = ca
            lb = cb
            if ta <= tb:
                ta += dta
            else:
                tb += dtb
        dist[k] = t
        last[k, 0] = la
        last[k, 1] = lb
    return dist, last


@njit(cache=True)
def average_by_cell(pair_ray, pair_cell, values, out):
    """``out[cell] = mean of values[ray]`` over the (ray, cell) pairs; untouched rows stay as they are."""
    counts = np.zeros(out.shape[0])
    m = out.shape[1]
    for p in range(pair_ray.shape[0]):
        c = pair_cell[p]
        r = pair_ray[p]
        if counts[c] == 0.0:
            for k in range(m):
                out[c, k] = values[r, k]
        else:
            for k in range(m):
                out[c, k] += values[r, k]
        counts[c] += 1.0
    for c in range(out.shape[0]):
        if counts[c] > 1.0:
            inv = 1.0 / counts[c]
            for k in range(m):
                out[c, k] *= inv


_SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def astar(free, sa, sb, ga, gb):
    """8-connected A* with octile heuristic; diagonal moves may not cut corners.

    Returns (cost, path as (n, 2) int array); cost is inf and the path empty
    when the goal is unreachable. Heap ties resolve on (f, g, a, b) so the
    result is deterministic.
    """
    na, nb = free.shape
    g = np.full((na, nb), np.inf)
    parent = np.full((na, nb), -1, dtype=np.int64)
    closed = np.zeros((na, nb), dtype=np.bool_)
    g[sa, sb] = 0.0
    heap = [(0.0, 0.0, sa, sb)]
    found = False
    while len(heap) > 0:
        f, gc, a, b = heapq.heappop(heap)
        if closed[a, b]:
            continue
        closed[a, b] = True
        if a == ga and b == gb:
            found = True
            break
        for da in range(-1, 2):
            for db in range(-1, 2):
                if da == 0 and db == 0:
                    continue
                xa = a + da
                xb = b + db
                if xa < 0 or xa >= na or xb < 0 or xb >= nb:
                    continue
                if not free[xa, xb] or closed[xa, xb]:
                    continue
                if da != 0 and db != 0:
                    if not free[a + da, b] or not free[a, b + db]:
                        continue
                    step = _SQRT2
                else:
                    step = 1.0
                ng = gc + step
                if ng < g[xa, xb]:
                    g[xa, xb] = ng
                    parent[xa, xb] = a * nb + b
                    ea = abs(xa - ga)
                    eb = abs(xb - gb)
                    h = max(ea, eb) + (_SQRT2 - 1.0) * min(ea, eb)
                    heapq.heappush(heap, (ng + h, ng, xa, xb))
    if not found:
        return np.inf, np.empty((0, 2), dtype=np.int64)
    length = 1
    cur = ga * nb + gb
    while cur != sa * nb + sb:
        cur = parent[cur // nb, cur % nb]
        length += 1
    path = np.empty((length, 2), dtype=np.int64)
    cur = ga * nb + gb
    for k in range(length - 1, -1, -1):
        path[k, 0] = cur // nb
        path[k, 1] = cur % nb
        if k > 0:
            cur = parent[cur // nb, cur % nb]
    return g[ga, gb], path
