"""Depth scan to egocentric map: ray endpoints, top-down sweep and region painting.

A depth observation is a single row of ``W`` range readings. Ray ``k`` has
bearing ``hfov * (k / (W - 1) - 1/2)`` measured clockwise from the forward
axis, so ray 0 is the leftmost one. Agent-frame points are returned as
``(x_right, y_forward)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .classifier import ObservationDistribution, ObservationMode
from .grid import CELL_SIZE, EGO_SIZE, EgocentricMap

DEFAULT_WIDTH = 224
DEFAULT_HFOV = math.radians(79.0)
DEFAULT_MAX_RANGE = 10.0


@dataclass
class DepthScan:
    depths: np.ndarray
    hfov: float = DEFAULT_HFOV
    max_range: float = DEFAULT_MAX_RANGE
    min_range: float = 0.0

    def __post_init__(self):
        depths = np.atleast_1d(np.asarray(self.depths, dtype=np.float64))
        if depths.ndim != 1 or depths.size < 1:
            raise ValueError("a depth scan needs at least one ray")
        if not 0.0 < self.hfov < math.pi:
            raise ValueError(f"hfov must lie in (0, pi), got {self.hfov}")
        self.depths = np.clip(depths, self.min_range, self.max_range)

    @property
    def W(self) -> int:
        return self.depths.size

    @property
    def hits(self) -> np.ndarray:
        """True for rays that ended on a surface before max range."""
        return self.depths < self.max_range

    def bearings(self) -> np.ndarray:
        return ray_bearings(self.W, self.hfov)


def ray_bearings(width: int, hfov: float) -> np.ndarray:
    if width == 1:
        return np.zeros(1)
    return hfov * (np.arange(width) / (width - 1) - 0.5)


_SCAN_HEADER = struct.Struct("<4sIddd")


def scan_to_bytes(scan: DepthScan) -> bytes:
    """``b"ISDS" | u32 W | f64 hfov | f64 max_range | f64 min_range`` then W f32 depths."""
    header = _SCAN_HEADER.pack(b"ISDS", scan.W, scan.hfov, scan.max_range, scan.min_range)
    return header + scan.depths.astype("<f4").tobytes()


def scan_from_bytes(data: bytes) -> DepthScan:
    magic, width, hfov, max_range, min_range = _SCAN_HEADER.unpack_from(data)
    if magic != b"ISDS":
        raise ValueError(f"bad depth scan magic {magic!r}")
    depths = np.frombuffer(data, dtype="<f4", count=width, offset=_SCAN_HEADER.size)
    return DepthScan(depths.astype(np.float64), hfov, max_range, min_range)


def save_scan(scan: DepthScan, path) -> None:
    Path(path).write_bytes(scan_to_bytes(scan))


def load_scan(path) -> DepthScan:
    return scan_from_bytes(Path(path).read_bytes())


def rays_to_points(scan: DepthScan) -> tuple[np.ndarray, np.ndarray]:
    """Agent-frame ``(x_right, y_forward)`` endpoints and the per-ray hit flag."""
    theta = scan.bearings()
    points = np.stack([scan.depths * np.sin(theta), scan.depths * np.cos(theta)], axis=1)
    return points, scan.hits


@dataclass
class TopDownProjection:
    """Result of sweeping a scan through the egocentric grid.

    ``visibility`` includes the endpoint cells; ``free`` excludes cells marked
    as hits. ``sweep_ray``/``sweep_cell`` list every (ray, flattened cell)
    incidence, one entry per ray per cell.
    """

    visibility: np.ndarray
    obstacle_hits: np.ndarray
    sweep_ray: np.ndarray
    sweep_cell: np.ndarray
    num_rays: int
    cell_size: float

    @property
    def L(self) -> int:
        return self.visibility.shape[0]

    @property
    def free(self) -> np.ndarray:
        return self.visibility & ~self.obstacle_hits


def ego_cell_coords(L: int) -> tuple[float, float]:
    """Continuous (row, col) coordinate of the agent in cell units."""
    return 0.5, L // 2 + 0.5


def collapse_to_topdown(scan: DepthScan, L: int = EGO_SIZE, cell_size: float = CELL_SIZE) -> TopDownProjection:
    """Sweep every ray through the L x L egocentric grid with DDA traversal."""
    theta = scan.bearings()
    # row axis is forward, column axis is the agent's left
    dirs = np.stack([np.cos(theta), -np.sin(theta)], axis=1)
    lengths = scan.depths / cell_size
    a0, b0 = ego_cell_coords(L)
    max_pairs = scan.W * (2 * L + 2)
    visible, hits, pair_ray, pair_cell = _kernels.sweep_rays(
        a0, b0, dirs, lengths, scan.hits, L, max_pairs)
    return TopDownProjection(visible, hits, pair_ray, pair_cell, scan.W, cell_size)


def paint_egocentric(proj: TopDownProjection, dist: ObservationDistribution) -> EgocentricMap:
    """Write occupancy, exploration and region channels for the visible cells."""
    L = proj.L
    num_labels = dist.num_labels
    ego = EgocentricMap(L, num_labels, proj.cell_size)
    vis = proj.visibility
    ego.explored[vis] = 1.0
    ego.obs_count[vis] = 1
    ego.occupancy[proj.obstacle_hits] = 1.0
    if dist.mode is ObservationMode.REPEATED:
        ego.region[vis] = dist.repeated
        return ego
    if dist.spatial.shape[0] != proj.num_rays:
        raise ValueError(f"spatial distribution has {dist.spatial.shape[0]} rays, scan has {proj.num_rays}")
    _kernels.average_by_cell(proj.sweep_ray, proj.sweep_cell, np.ascontiguousarray(dist.spatial, dtype=np.float64),
                             ego.region.reshape(L * L, num_labels))
    return ego
