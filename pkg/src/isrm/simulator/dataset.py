"""Offline dataset extraction: deduplicated (observation, egocentric ground truth) pairs."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..classifier import FeatureGenerator, majority_label, save_feature_dataset
from ..grid import EGO_SIZE, Pose, angle_diff
from ..projection import DepthScan, collapse_to_topdown
from .episode import EpisodeConfig, run_episode
from .floorplan import NO_REGION, Floorplan
from .sensor import Reading

DEDUP_DISTANCE = 0.1
DEDUP_ANGLE = 0.1


class PoseDeduplicator:
    """Accepts a pose unless a kept pose is within both ``distance`` and ``angle``.

    Kept positions are bucketed on a ``distance``-sized grid so each query
    only looks at the 3 x 3 neighbouring buckets.
    """

    def __init__(self, distance: float = DEDUP_DISTANCE, angle: float = DEDUP_ANGLE):
        self.distance = distance
        self.angle = angle
        self._buckets: dict[tuple[int, int], list[Pose]] = defaultdict(list)

    def _key(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(x / self.distance), math.floor(y / self.distance)

    def is_duplicate(self, pose: Pose) -> bool:
        bx, by = self._key(pose.x, pose.y)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for kept in self._buckets.get((bx + dx, by + dy), ()):
                    if (math.hypot(kept.x - pose.x, kept.y - pose.y) <= self.distance
                            and abs(angle_diff(kept.theta, pose.theta)) <= self.angle):
                        return True
        return False

    def offer(self, pose: Pose) -> bool:
        """Keep ``pose`` if it is new; returns whether it was kept."""
        if self.is_duplicate(pose):
            return False
        self._buckets[self._key(pose.x, pose.y)].append(pose)
        return True


def dedup_poses(poses, distance: float = DEDUP_DISTANCE, angle: float = DEDUP_ANGLE) -> list[int]:
    """Indices of the poses kept by a single pass of :class:`PoseDeduplicator`."""
    d = PoseDeduplicator(distance, angle)
    return [k for k, p in enumerate(poses) if d.offer(p)]


def egocentric_ground_truth(fp: Floorplan, pose: Pose, scan: DepthScan, L: int = EGO_SIZE) -> np.ndarray:
    """Region label of every cell the scan makes visible, NO_REGION elsewhere.

    Visible cells are found with the same projection the mapper uses; each
    visible egocentric cell center is looked up in the floorplan at ``pose``.
    """
    proj = collapse_to_topdown(scan, L, fp.cell_size)
    out = np.full((L, L), NO_REGION, dtype=np.int16)
    r, q = np.nonzero(proj.visibility)
    cs = fp.cell_size
    fwd = r * cs
    left = (q - L // 2) * cs
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    i = np.floor((pose.x + fwd * c - left * s) / cs).astype(np.int64)
    j = np.floor((pose.y + fwd * s + left * c) / cs).astype(np.int64)
    inside = (i >= 0) & (i < fp.width) & (j >= 0) & (j < fp.height)
    out[r[inside], q[inside]] = fp.region[i[inside], j[inside]]
    return out


@dataclass
class RegionDataset:
    """Flat arrays of stored samples; ``split`` is 0 for train and 1 for val."""

    env: np.ndarray
    poses: np.ndarray
    depths: np.ndarray
    ray_labels: np.ndarray
    ground_truth: np.ndarray
    split: np.ndarray
    hfov: float
    max_range: float
    num_labels: int
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.env.shape[0])

    def subset(self, which: str) -> "RegionDataset":
        mask = self.split == {"train": 0, "val": 1}[which]
        return RegionDataset(self.env[mask], self.poses[mask], self.depths[mask], self.ray_labels[mask],
                             self.ground_truth[mask], self.split[mask], self.hfov, self.max_range,
                             self.num_labels)

    def majority_labels(self) -> np.ndarray:
        return np.array([majority_label(r[r >= 0], self.num_labels) for r in self.ray_labels], dtype=np.int64)

    def save(self, path) -> None:
        np.savez_compressed(path, env=self.env, poses=self.poses, depths=self.depths.astype(np.float32),
                            ray_labels=self.ray_labels.astype(np.int16), ground_truth=self.ground_truth,
                            split=self.split.astype(np.int8),
                            meta=np.array([self.hfov, self.max_range, self.num_labels]))

    @classmethod
    def load(cls, path) -> "RegionDataset":
        with np.load(path) as z:
            hfov, max_range, c = z["meta"]
            return cls(z["env"], z["poses"], z["depths"].astype(np.float64), z["ray_labels"].astype(np.int64),
                       z["ground_truth"], z["split"].astype(np.int64), float(hfov), float(max_range), int(c))


def split_environments(num_envs: int, val_fraction: float, seed: int) -> np.ndarray:
    """Boolean mask of validation environments; at least one of each side when possible."""
    n_val = int(round(val_fraction * num_envs))
    if num_envs > 1:
        n_val = min(max(n_val, 1), num_envs - 1)
    val = np.zeros(num_envs, dtype=bool)
    val[np.random.default_rng(seed).permutation(num_envs)[:n_val]] = True
    return val


def extract_dataset(floorplans, episodes=None, distance: float = DEDUP_DISTANCE, angle: float = DEDUP_ANGLE,
                    val_fraction: float = 0.2, seed: int = 0, ego_size: int = EGO_SIZE,
                    config: EpisodeConfig | None = None) -> RegionDataset:
    """Collect deduplicated samples from exploration runs in each floorplan.

    ``episodes[k]`` is a list of ``(true pose, Reading)`` pairs for floorplan
    ``k``; when omitted, one noise-free exploration episode per floorplan is
    run with ``config``. Dedup is per environment and order-dependent: a
    sample is dropped iff an already stored sample of the same environment is
    within both thresholds. Train and val are split by environment.
    """
    floorplans = list(floorplans)
    if episodes is None:
        config = config or EpisodeConfig(seed=seed)
        episodes = [record_episode(fp, EpisodeConfig(**{**config.__dict__, "seed": config.seed + k}))
                    for k, fp in enumerate(floorplans)]
    if len(episodes) != len(floorplans):
        raise ValueError("need one episode list per floorplan")
    val_env = split_environments(len(floorplans), val_fraction, seed)
    rows = defaultdict(list)
    hfov = max_range = None
    for k, (fp, steps) in enumerate(zip(floorplans, episodes)):
        dedup = PoseDeduplicator(distance, angle)
        for pose, reading in steps:
            if not dedup.offer(pose):
                continue
            scan = reading.scan
            hfov, max_range = scan.hfov, scan.max_range
            rows["env"].append(k)
            rows["poses"].append((pose.x, pose.y, pose.theta))
            rows["depths"].append(scan.depths)
            rows["ray_labels"].append(reading.labels)
            rows["ground_truth"].append(egocentric_ground_truth(fp, pose, scan, ego_size))
            rows["split"].append(int(val_env[k]))
    num_labels = floorplans[0].labels.C if floorplans else 0
    if not rows:
        return RegionDataset(np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 0)), np.zeros((0, 0), np.int64),
                             np.zeros((0, ego_size, ego_size), np.int16), np.zeros(0, np.int64), 0.0, 0.0, num_labels)
    return RegionDataset(np.asarray(rows["env"], dtype=np.int64), np.asarray(rows["poses"]),
                         np.asarray(rows["depths"]), np.asarray(rows["ray_labels"], dtype=np.int64),
                         np.asarray(rows["ground_truth"]), np.asarray(rows["split"], dtype=np.int64),
                         hfov, max_range, num_labels)


def record_episode(fp: Floorplan, config: EpisodeConfig) -> list[tuple[Pose, Reading]]:
    steps = []
    run_episode(fp, config, observer=lambda t, pose, reading: steps.append((pose, reading)))
    return steps


def export_features(dataset: RegionDataset, generator: FeatureGenerator, out_dir, seed: int = 0) -> dict:
    """Write ``train.feat`` and ``val.feat`` with raw features for each sample's majority label."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    counts = {}
    for which in ("train", "val"):
        part = dataset.subset(which)
        labels = part.majority_labels()
        raw = generator.sample(labels, rng) if len(labels) else np.zeros((0, generator.prototypes.shape[1]))
        save_feature_dataset(out_dir / f"{which}.feat", raw, labels, dataset.num_labels)
        counts[which] = len(labels)
    return counts
