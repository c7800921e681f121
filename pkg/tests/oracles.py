"""Independent reference implementations used by the tests.

These are written for clarity rather than speed and share no code with the
package beyond plain data containers.
"""

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


# -- contrastive losses -----------------------------------------------------------------


def mscl_scalar(features, labels, tau):
    """Loop-by-loop supervised contrastive loss over every row as an anchor."""
    feats = [list(map(float, row)) for row in features]
    labels = [int(v) for v in labels]
    n = len(feats)

    def dot(a, b):
        return sum(x * y for x, y in zip(a, b))

    total = 0.0
    for i in range(n):
        others = [a for a in range(n) if a != i]
        pos = [b for b in others if labels[b] == labels[i]]
        if not pos:
            continue
        denom = sum(math.exp(dot(feats[i], feats[a]) / tau) for a in others)
        num = sum(math.exp(dot(feats[i], feats[b]) / tau) for b in pos) / len(pos)
        total += -math.log(num / denom)
    return total


def infonce_scalar(images, texts, tau):
    """Symmetric InfoNCE with image i paired to text i, each direction averaged."""
    n = len(images)
    z = [[float(np.dot(images[i], texts[j])) / tau for j in range(n)] for i in range(n)]
    rows = 0.0
    cols = 0.0
    for i in range(n):
        rows += -math.log(math.exp(z[i][i]) / sum(math.exp(z[i][j]) for j in range(n)))
        cols += -math.log(math.exp(z[i][i]) / sum(math.exp(z[j][i]) for j in range(n)))
    return rows / n + cols / n


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


# -- geometry ---------------------------------------------------------------------------


def segment_box_length(p0, p1, lo, hi):
    """Length (in parameter units of the segment) of the part of p0->p1 inside the box.

    Liang-Barsky clipping, vectorised over boxes: ``lo`` and ``hi`` are (n, 2).
    Returns the clipped parameter interval length in [0, 1].
    """
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    t0 = np.zeros(lo.shape[0])
    t1 = np.ones(lo.shape[0])
    for ax in range(2):
        if abs(d[ax]) < 1e-15:
            outside = (p0[ax] < lo[:, ax]) | (p0[ax] > hi[:, ax])
            t1[outside] = -1.0
            continue
        ta = (lo[:, ax] - p0[ax]) / d[ax]
        tb = (hi[:, ax] - p0[ax]) / d[ax]
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return np.clip(t1 - t0, 0.0, None)


def egocentric_visibility(depths, hfov, max_range, L, cell_size):
    """Brute-force ray/cell coverage of an egocentric grid.

    Returns ``(coverage, hits)``: ``coverage[k]`` is the (L, L) array of the
    length of ray k inside each cell (in cells), and ``hits`` the cells that
    contain a ray end point closer than ``max_range``. Rows point forward,
    columns to the agent's left, and the agent sits at the center of cell
    (0, L // 2). Ray k has clockwise bearing hfov * (k / (W - 1) - 1/2).
    """
    depths = np.asarray(depths, dtype=np.float64)
    W = depths.shape[0]
    a, b = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    lo = np.stack([a.ravel(), b.ravel()], axis=1).astype(np.float64)
    hi = lo + 1.0
    origin = np.array([0.5, L // 2 + 0.5])
    coverage = np.zeros((W, L, L))
    hits = np.zeros((L, L), dtype=bool)
    for k in range(W):
        bearing = hfov * (k / (W - 1) - 0.5) if W > 1 else 0.0
        r = depths[k] / cell_size
        # agent frame: forward = r cos(bearing), right = r sin(bearing), left = -right
        end = origin + r * np.array([math.cos(bearing), -math.sin(bearing)])
        coverage[k] = (segment_box_length(origin, end, lo, hi) * r).reshape(L, L)
        if depths[k] < max_range:
            ca, cb = math.floor(end[0]), math.floor(end[1])
            if 0 <= ca < L and 0 <= cb < L:
                hits[ca, cb] = True
    return coverage, hits


def angular_visibility(depths, hfov, L, cell_size, tol=1e-9):
    """Per-cell visibility verdict from bearings and depths alone.

    Returns an int (L, L) array: 1 visible, 0 not visible, -1 ambiguous. A
    cell is crossed by a ray only if the ray's bearing lies inside the angular
    extent the cell subtends at the agent. Among those rays, one reaching past
    the cell's farthest corner makes it visible; if every one stops short of
    its nearest corner (or there is none) it is not visible. Anything else, or
    a bearing within ``tol`` of the extent's edge, is ambiguous.
    """
    depths = np.asarray(depths, dtype=np.float64) / cell_size
    W = depths.shape[0]
    bearings = [hfov * (k / (W - 1) - 0.5) if W > 1 else 0.0 for k in range(W)]
    a0, b0 = 0.5, L // 2 + 0.5
    out = np.zeros((L, L), dtype=np.int64)
    for a in range(L):
        for b in range(L):
            if (a, b) == (0, L // 2):
                out[a, b] = 1
                continue
            corners = [(a + da - a0, b + db - b0) for da in (0, 1) for db in (0, 1)]
            # clockwise bearing of a (forward, left) offset
            phis = [-math.atan2(left, fwd) for fwd, left in corners]
            lo, hi = min(phis), max(phis)
            dists = [math.hypot(f, l) for f, l in corners]
            # nearest point of the square to the agent
            nf = min(max(0.0, a - a0), a + 1 - a0) if not (a <= a0 <= a + 1) else 0.0
            nl = 0.0 if b <= b0 <= b + 1 else min(abs(b - b0), abs(b + 1 - b0))
            dmin, dmax = math.hypot(nf, nl), max(dists)
            verdict = 0
            for k, phi in enumerate(bearings):
                if abs(phi - lo) < tol or abs(phi - hi) < tol:
                    verdict = -1
                    break
                if not lo < phi < hi:
                    continue
                if depths[k] > dmax + tol:
                    verdict = 1
                elif depths[k] >= dmin - tol and verdict == 0:
                    verdict = -1
            out[a, b] = verdict
    return out


def raycast_segments(occupancy, origin, angles, max_t):
    """Distance to the first occupied cell along each ray, by testing every occupied cell."""
    occ = np.argwhere(occupancy).astype(np.float64)
    n, m = occupancy.shape
    # the outside of the grid acts as a wall
    border = np.concatenate([
        np.stack([np.full(m + 2, -1.0), np.arange(-1, m + 1)], axis=1),
        np.stack([np.full(m + 2, float(n)), np.arange(-1, m + 1)], axis=1),
        np.stack([np.arange(n, dtype=float), np.full(n, -1.0)], axis=1),
        np.stack([np.arange(n, dtype=float), np.full(n, float(m))], axis=1),
    ])
    boxes = np.concatenate([occ, border])
    lo, hi = boxes, boxes + 1.0
    out = []
    for ang in angles:
        d = np.array([math.cos(ang), math.sin(ang)])
        t0 = np.zeros(len(boxes))
        t1 = np.full(len(boxes), np.inf)
        for ax in range(2):
            if abs(d[ax]) < 1e-15:
                outside = (origin[ax] < lo[:, ax]) | (origin[ax] >= hi[:, ax])
                t1[outside] = -1.0
                continue
            ta = (lo[:, ax] - origin[ax]) / d[ax]
            tb = (hi[:, ax] - origin[ax]) / d[ax]
            t0 = np.maximum(t0, np.minimum(ta, tb))
            t1 = np.minimum(t1, np.maximum(ta, tb))
        entering = t1 > t0
        t = t0[entering].min() if np.any(entering) else np.inf
        out.append(min(t, max_t))
    return np.array(out)


# -- planning ---------------------------------------------------------------------------


def grid_shortest_cost(free, start, goal):
    """Dijkstra over the 8-connected free-cell graph; diagonals may not cut corners."""
    n, m = free.shape
    idx = np.arange(n * m).reshape(n, m)
    rows, cols, w = [], [], []
    for a in range(n):
        for b in range(m):
            if not free[a, b]:
                continue
            for da in (-1, 0, 1):
                for db in (-1, 0, 1):
                    if da == db == 0:
                        continue
                    na, nb = a + da, b + db
                    if not (0 <= na < n and 0 <= nb < m) or not free[na, nb]:
                        continue
                    if da and db and not (free[a + da, b] and free[a, b + db]):
                        continue
                    rows.append(idx[a, b])
                    cols.append(idx[na, nb])
                    w.append(math.sqrt(2.0) if da and db else 1.0)
    graph = coo_matrix((w, (rows, cols)), shape=(n * m, n * m)).tocsr()
    dist = dijkstra(graph, indices=idx[start])
    return float(dist[idx[goal]])


def disk_dilation(mask, r):
    """Every cell within Euclidean distance r (in cells) of a set cell."""
    out = np.zeros_like(mask, dtype=bool)
    pts = np.argwhere(mask)
    n, m = mask.shape
    for a in range(n):
        for b in range(m):
            if pts.size and np.min((pts[:, 0] - a) ** 2 + (pts[:, 1] - b) ** 2) <= r * r:
                out[a, b] = True
    return out


# -- dataset ----------------------------------------------------------------------------


def dedup_quadratic(poses, dist, ang):
    """Kept indices when each pose is compared against every previously kept pose."""
    kept = []
    for k, (x, y, th) in enumerate(poses):
        dup = False
        for j in kept:
            xj, yj, tj = poses[j]
            dth = (th - tj + math.pi) % (2 * math.pi) - math.pi
            if math.hypot(x - xj, y - yj) <= dist and abs(dth) <= ang:
                dup = True
                break
        if not dup:
            kept.append(k)
    return kept


# -- fusion -----------------------------------------------------------------------------


def running_mean(seq):
    return np.mean(np.asarray(seq, dtype=np.float64), axis=0)


def normalized_product(seq, eps):
    """First observation copied, then prior * max(obs, eps) renormalised."""
    seq = [np.asarray(s, dtype=np.float64) for s in seq]
    post = seq[0].copy()
    for obs in seq[1:]:
        post = post * np.maximum(obs, eps)
        post = post / post.sum()
    return post
