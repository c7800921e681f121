"""Register egocentric maps into the world frame and fuse them into a global map."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import EgocentricMap, GlobalMap, Pose

BAYES_EPS = 1e-4
P_HIT = 0.7
P_FREE = 0.3
_OCC_CLIP = 1e-9


class FusionRule(enum.Enum):
    MOVING_AVERAGE = "avg"
    BAYESIAN = "bayes"


@dataclass
class RegisteredCells:
    """Observed local cells resampled onto global indices (parallel arrays)."""

    index: np.ndarray
    occupancy: np.ndarray
    explored: np.ndarray
    region: np.ndarray
    dropped: int = 0

    def __len__(self) -> int:
        return self.index.shape[0]


def _footprint_bounds(local: EgocentricMap, pose: Pose, origin, cell_size) -> tuple[int, int, int, int]:
    L = local.size
    cs = local.cell_size
    # corners of the observed part of the local grid in (forward, left) meters
    rows = np.flatnonzero(local.obs_count.any(axis=1))
    cols = np.flatnonzero(local.obs_count.any(axis=0))
    if rows.size == 0:
        return 0, 0, 0, 0
    r0, r1 = rows[0] - 0.5, rows[-1] + 0.5
    q0, q1 = cols[0] - L // 2 - 0.5, cols[-1] - L // 2 + 0.5
    f = np.array([r0, r1, r1, r0]) * cs
    l = np.array([q0, q0, q1, q1]) * cs
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    wx = pose.x + f * c - l * s
    wy = pose.y + f * s + l * c
    i0 = math.floor((wx.min() - origin[0]) / cell_size) - 1
    i1 = math.floor((wx.max() - origin[0]) / cell_size) + 2
    j0 = math.floor((wy.min() - origin[1]) / cell_size) - 1
    j1 = math.floor((wy.max() - origin[1]) / cell_size) + 2
    return i0, i1, j0, j1


def register(local: EgocentricMap, pose: Pose, global_map: GlobalMap) -> RegisteredCells:
    """Inverse-sample the local map onto the global cells covered by its footprint.

    Each candidate global cell center is brought into the agent frame and
    takes the value of the local cell containing it; candidates landing
    outside the local grid or on unobserved local cells are skipped, and
    observed samples outside the global grid are counted in ``dropped``.
    """
    cs_g = global_map.cell_size
    i0, i1, j0, j1 = _footprint_bounds(local, pose, global_map.origin, cs_g)
    ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    dx = global_map.origin[0] + (ii + 0.5) * cs_g - pose.x
    dy = global_map.origin[1] + (jj + 0.5) * cs_g - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    fwd = dx * c + dy * s
    left = -dx * s + dy * c
    L = local.size
    r = np.floor(fwd / local.cell_size + 0.5).astype(np.int64)
    q = np.floor(left / local.cell_size + L // 2 + 0.5).astype(np.int64)
    ok = (r >= 0) & (r < L) & (q >= 0) & (q < L)
    ii, jj, r, q = ii[ok], jj[ok], r[ok], q[ok]
    seen = local.obs_count[r, q] > 0
    ii, jj, r, q = ii[seen], jj[seen], r[seen], q[seen]
    G = global_map.size
    inside = (ii >= 0) & (ii < G) & (jj >= 0) & (jj < G)
    dropped = int(np.count_nonzero(~inside))
    ii, jj, r, q = ii[inside], jj[inside], r[inside], q[inside]
    return RegisteredCells(np.stack([ii, jj], axis=1), local.occupancy[r, q], local.explored[r, q],
                           local.region[r, q], dropped)


@dataclass
class FusionStats:
    cells: int = 0
    fallbacks: int = 0


def _logit(p):
    p = np.clip(p, _OCC_CLIP, 1.0 - _OCC_CLIP)
    return np.log(p / (1.0 - p))


def fuse(global_map: GlobalMap, cells: RegisteredCells, rule: FusionRule | str = FusionRule.MOVING_AVERAGE,
         eps: float = BAYES_EPS, p_hit: float = P_HIT, p_free: float = P_FREE,
         stats: FusionStats | None = None) -> GlobalMap:
    """Fuse registered observations into ``global_map`` in place and return it.

    Moving average keeps a count-weighted running mean of every channel.
    Bayesian multiplies the stored region distribution by the incoming one
    (floored at ``eps``) and renormalizes, and accumulates occupancy in
    log-odds using ``p_hit``/``p_free`` as the inverse sensor model. A cell's
    first observation is copied verbatim under both rules, except that the
    Bayesian occupancy is the inverse-sensor probability.
    """
    rule = FusionRule(rule)
    stats = stats if stats is not None else FusionStats()
    if len(cells) == 0:
        return global_map
    ii, jj = cells.index[:, 0], cells.index[:, 1]
    n = global_map.obs_count[ii, jj].astype(np.float64)
    stats.cells += len(cells)
    if rule is FusionRule.MOVING_AVERAGE:
        w = (n / (n + 1.0))
        global_map.region[ii, jj] = w[:, None] * global_map.region[ii, jj] + cells.region / (n + 1.0)[:, None]
        global_map.occupancy[ii, jj] = w * global_map.occupancy[ii, jj] + cells.occupancy / (n + 1.0)
        global_map.explored[ii, jj] = w * global_map.explored[ii, jj] + cells.explored / (n + 1.0)
    else:
        prior = global_map.region[ii, jj]
        first = n == 0
        post = prior * np.maximum(cells.region, eps)
        mass = post.sum(axis=1)
        degenerate = ~first & ~(mass > 0)
        stats.fallbacks += int(np.count_nonzero(degenerate))
        use_new = first | degenerate
        post[~use_new] /= mass[~use_new, None]
        post[use_new] = cells.region[use_new]
        global_map.region[ii, jj] = post
        meas = p_free + (p_hit - p_free) * cells.occupancy
        prev = np.where(first, 0.0, _logit(global_map.occupancy[ii, jj]))
        global_map.occupancy[ii, jj] = 1.0 / (1.0 + np.exp(-(prev + _logit(meas))))
        global_map.explored[ii, jj] = np.where(first, cells.explored,
                                               (n * global_map.explored[ii, jj] + cells.explored) / (n + 1.0))
    global_map.obs_count[ii, jj] += 1
    return global_map


def fuse_sequence(distributions: np.ndarray, rule: FusionRule | str, eps: float = BAYES_EPS) -> np.ndarray:
    """Fuse a stream of region distributions into a single cell; returns the final vector."""
    distributions = np.atleast_2d(distributions)
    g = GlobalMap(1, distributions.shape[1])
    index = np.zeros((1, 2), dtype=np.int64)
    for d in distributions:
        cells = RegisteredCells(index, np.zeros(1), np.ones(1), d[None, :])
        fuse(g, cells, rule, eps=eps)
    return g.region[0, 0].copy()


@dataclass
class SpuriousStreamResult:
    rule: FusionRule
    errors: int
    trials: int
    final_argmax: list[int] = field(default_factory=list)

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials


def spurious_stream(seed: int, num_labels: int = 14, length: int = 50, spurious_fraction: float = 0.1,
                    eps: float = 1e-3, true_label: int = 0, spurious_label: int = 1) -> np.ndarray:
    """Observation stream of one cell: mostly one-hot ``true_label``, some near-one-hot ``spurious_label``.

    Exactly ``round(spurious_fraction * length)`` positions (chosen by seed)
    carry probability ``1 - eps`` on the spurious label with ``eps`` spread
    over the remaining labels.
    """
    rng = np.random.default_rng(seed)
    stream = np.zeros((length, num_labels))
    stream[:, true_label] = 1.0
    n_spur = int(round(spurious_fraction * length))
    where = rng.choice(length, size=n_spur, replace=False)
    spur = np.full(num_labels, eps / (num_labels - 1))
    spur[spurious_label] = 1.0 - eps
    stream[where] = spur
    return stream


def spurious_stream_trial(rule: FusionRule | str, seeds, **kw) -> SpuriousStreamResult:
    rule = FusionRule(rule)
    true_label = kw.get("true_label", 0)
    finals = [int(np.argmax(fuse_sequence(spurious_stream(s, **kw), rule))) for s in seeds]
    errors = sum(f != true_label for f in finals)
    return SpuriousStreamResult(rule, errors, len(finals), finals)
