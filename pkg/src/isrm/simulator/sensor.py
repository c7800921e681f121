"""Raycast depth sensor over a floorplan, with optional pose and depth noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..grid import Pose
from ..projection import DEFAULT_HFOV, DEFAULT_MAX_RANGE, DEFAULT_WIDTH, DepthScan, ray_bearings
from .floorplan import Floorplan


class PoseInObstacle(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    pose_sigma_trans: float = 0.01
    pose_sigma_rot: float = 0.005
    depth_sigma_rel: float = 0.02
    depth_dropout_p: float = 0.01

    def __post_init__(self):
        for name in ("pose_sigma_trans", "pose_sigma_rot", "depth_sigma_rel", "depth_dropout_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.depth_dropout_p > 1:
            raise ValueError("depth_dropout_p must be a probability")

    def corrupt_depths(self, depths: np.ndarray, max_range: float, rng: np.random.Generator) -> np.ndarray:
        # multiplicative error: the standard deviation is depth_sigma_rel * depth
        noisy = depths * (1.0 + rng.normal(size=depths.shape) * self.depth_sigma_rel)
        noisy[rng.random(depths.shape) < self.depth_dropout_p] = max_range
        return noisy

    def corrupt_pose(self, pose: Pose, rng: np.random.Generator) -> Pose:
        dx, dy = rng.normal(0.0, self.pose_sigma_trans, size=2) if self.pose_sigma_trans > 0 else (0.0, 0.0)
        dth = rng.normal(0.0, self.pose_sigma_rot) if self.pose_sigma_rot > 0 else 0.0
        return Pose(pose.x + dx, pose.y + dy, pose.theta + dth)


@dataclass
class Reading:
    scan: DepthScan
    labels: np.ndarray
    reported_pose: Pose


def _cell_of(fp: Floorplan, pose: Pose) -> tuple[int, int]:
    return math.floor(pose.x / fp.cell_size), math.floor(pose.y / fp.cell_size)


def is_free(fp: Floorplan, x: float, y: float) -> bool:
    i, j = math.floor(x / fp.cell_size), math.floor(y / fp.cell_size)
    return 0 <= i < fp.width and 0 <= j < fp.height and not fp.occupancy[i, j]


def sense(fp: Floorplan, pose: Pose, width: int = DEFAULT_WIDTH, hfov: float = DEFAULT_HFOV,
          max_range: float = DEFAULT_MAX_RANGE, noise: NoiseModel | None = None,
          rng: np.random.Generator | None = None) -> Reading:
    """Cast ``width`` rays across the field of view from the true pose.

    Depth is the distance to the boundary of the first occupied cell, clipped
    at ``max_range``; a ray's label is the region of the last free cell it
    crossed. Noise, when given, corrupts the depths and the reported pose.
    """
    if not is_free(fp, pose.x, pose.y):
        raise PoseInObstacle(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in free space")
    cs = fp.cell_size
    angles = pose.theta - ray_bearings(width, hfov)
    dist, last = _kernels.cast_rays(fp.occupancy, pose.x / cs, pose.y / cs, angles, max_range / cs)
    depths = np.minimum(dist * cs, max_range)
    labels = fp.region[last[:, 0], last[:, 1]].astype(np.int64)
    reported = pose
    if noise is not None:
        rng = rng if rng is not None else np.random.default_rng()
        depths = noise.corrupt_depths(depths, max_range, rng)
        reported = noise.corrupt_pose(pose, rng)
    return Reading(DepthScan(depths, hfov, max_range), labels, reported)
