"""Procedural environments, the depth sensor, the episode loop and dataset extraction."""

from .floorplan import Floorplan, FloorplanConfig, InfeasibleFloorplan, Room, generate_floorplan, load_floorplan, save_floorplan
from .sensor import NoiseModel, PoseInObstacle, Reading, sense
from .episode import EpisodeConfig, EpisodeResult, random_start, run_episode
from .dataset import PoseDeduplicator, RegionDataset, dedup_poses, egocentric_ground_truth, export_features, extract_dataset, record_episode

__all__ = [
    "Floorplan", "FloorplanConfig", "InfeasibleFloorplan", "Room", "generate_floorplan", "load_floorplan",
    "save_floorplan", "NoiseModel", "PoseInObstacle", "Reading", "sense", "EpisodeConfig", "EpisodeResult",
    "random_start", "run_episode", "PoseDeduplicator", "RegionDataset", "dedup_poses", "egocentric_ground_truth",
    "export_features", "extract_dataset", "record_episode",
]
