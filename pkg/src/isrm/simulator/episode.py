"""Closed-loop episode: sense, classify, project, register, fuse, navigate, move."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from ..classifier import ObservationMode, confusion_matrix, synth_classify
from ..fusion import FusionRule, FusionStats, fuse, register
from ..grid import Action, GlobalMap, Pose, compose_pose, world_to_cell
from ..metrics import MapMetrics, compute_metrics, coverage
from ..navigation import ExplorationComplete, Navigator, NavState, obstacle_mask, radius_in_cells
from ..projection import DEFAULT_HFOV, DEFAULT_MAX_RANGE, DEFAULT_WIDTH, collapse_to_topdown, paint_egocentric
from .floorplan import Floorplan
from .sensor import NoiseModel, Reading, is_free, sense

log = logging.getLogger(__name__)


@dataclass
class EpisodeConfig:
    max_steps: int = 1500
    fusion: str = "avg"
    mode: str = "spatial"
    noise: bool = False
    seed: int = 0
    confusion_diag: float = 1.0
    sample_classifier: bool = True
    width: int = DEFAULT_WIDTH
    hfov: float = DEFAULT_HFOV
    max_range: float = DEFAULT_MAX_RANGE
    ego_size: int = 101
    eta: int = 25
    agent_radius: float = 0.1
    start_clearance: float = 0.3
    pose_sigma_trans: float = 0.01
    pose_sigma_rot: float = 0.005
    depth_sigma_rel: float = 0.02
    depth_dropout_p: float = 0.01

    def noise_model(self) -> NoiseModel | None:
        if not self.noise:
            return None
        return NoiseModel(self.pose_sigma_trans, self.pose_sigma_rot, self.depth_sigma_rel, self.depth_dropout_p)

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "EpisodeConfig":
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse(value, types[key])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "EpisodeConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(value: str, typ: str):
    if typ == "bool":
        if value.lower() not in ("on", "off", "true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return value.lower() in ("on", "true", "1", "yes")
    if typ == "int":
        return int(value)
    if typ == "float":
        return float(value)
    return value


@dataclass
class StepRecord:
    t: int
    x: float
    y: float
    theta: float
    action: int
    global_goal: tuple[int, int] | None
    local_goal: tuple[int, int] | None
    refresh_reason: str
    est_x: float
    est_y: float
    est_theta: float
    vetoed: bool = False
    collided: bool = False


LOG_FIELDS = ("t", "x", "y", "theta", "action", "g_t", "l_t", "refresh_reason",
              "est_x", "est_y", "est_theta", "vetoed", "collided")


def _cell_str(c) -> str:
    return "" if c is None else f"{c[0]}:{c[1]}"


def write_trajectory_csv(records: list[StepRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in records:
        w.writerow([r.t, repr(r.x), repr(r.y), repr(r.theta), Action(r.action).name.lower(),
                    _cell_str(r.global_goal), _cell_str(r.local_goal), r.refresh_reason,
                    repr(r.est_x), repr(r.est_y), repr(r.est_theta), int(r.vetoed), int(r.collided)])


@dataclass
class EpisodeResult:
    global_map: GlobalMap
    log: list[StepRecord]
    metrics: MapMetrics
    coverage: float
    collisions: int = 0
    violations: int = 0
    vetoes: int = 0
    complete: bool = False
    error: str | None = None
    fusion_stats: FusionStats = field(default_factory=FusionStats)


Classifier = Callable[[np.ndarray, np.random.Generator], object]
Observer = Callable[[int, Pose, Reading], None]


def random_start(fp: Floorplan, seed: int, clearance: float = 0.3) -> Pose:
    """Uniform free cell at least ``clearance`` from any wall, seeded heading."""
    rng = np.random.default_rng(seed)
    dist = ndimage.distance_transform_edt(fp.free) * fp.cell_size
    cand = np.argwhere(dist >= clearance)
    if cand.size == 0:
        raise ValueError("no free cell with the requested clearance")
    i, j = cand[rng.integers(len(cand))]
    return Pose((i + 0.5) * fp.cell_size, (j + 0.5) * fp.cell_size, rng.uniform(-math.pi, math.pi))


def _move_blocked(fp: Floorplan, pose: Pose, action: Action) -> tuple[Pose, tuple[float, float] | None]:
    """True kinematics; a forward move into a wall leaves the agent in place."""
    new = compose_pose(pose, action)
    if action is not Action.FORWARD:
        return new, None
    n = 20
    for k in range(1, n + 1):
        t = k / n
        px = pose.x + t * (new.x - pose.x)
        py = pose.y + t * (new.y - pose.y)
        if not is_free(fp, px, py):
            return pose, (px, py)
    return new, None


def run_episode(fp: Floorplan, config: EpisodeConfig | None = None, start: Pose | None = None,
                classifier: Classifier | None = None, observer: Observer | None = None) -> EpisodeResult:
    """Run one exploration episode; deterministic for a given floorplan, config and start.

    The mapper and navigator only see the reported (possibly noisy) pose; the
    agent moves with exact kinematics from the true pose.
    """
    config = config or EpisodeConfig()
    streams = np.random.SeedSequence(config.seed).spawn(3)
    noise_rng, cls_rng = (np.random.default_rng(s) for s in streams[:2])
    if start is None:
        start = random_start(fp, int(streams[2].generate_state(1)[0]), config.start_clearance)
    mode = ObservationMode(config.mode)
    rule = FusionRule(config.fusion)
    noise = config.noise_model()
    if classifier is None:
        confusion = confusion_matrix(fp.labels.C, config.confusion_diag)
        sample = config.sample_classifier and config.confusion_diag < 1.0

        def classifier(labels, rng):
            return synth_classify(labels, confusion, mode, rng, sample=sample)

    if fp.width != fp.height:
        raise ValueError("episodes need a square floorplan")
    gmap = GlobalMap(fp.width, fp.labels.C, fp.cell_size)
    nav = Navigator(radius_cells=radius_in_cells(config.agent_radius, fp.cell_size), eta=config.eta)
    state = NavState(eta=config.eta)
    result = EpisodeResult(gmap, [], None, 0.0)
    pose = start
    try:
        for t in range(config.max_steps):
            reading = sense(fp, pose, config.width, config.hfov, config.max_range, noise, noise_rng)
            if observer is not None:
                observer(t, pose, reading)
            est = reading.reported_pose
            dist = classifier(reading.labels, cls_rng)
            ego = paint_egocentric(collapse_to_topdown(reading.scan, config.ego_size, fp.cell_size), dist)
            fuse(gmap, register(ego, est, gmap), rule, stats=result.fusion_stats)
            try:
                event = nav.update_goals(state, gmap, est)
            except ExplorationComplete:
                result.complete = True
                break
            action, vetoed = nav.act(state, gmap, est)
            result.vetoes += vetoed
            if action is Action.FORWARD:
                obstacles = obstacle_mask(gmap, nav.blocked)
                dest = compose_pose(pose, action)
                try:
                    if obstacles[world_to_cell(gmap, (dest.x, dest.y))]:
                        result.violations += 1
                except IndexError:
                    result.violations += 1
            new_pose, hit_point = _move_blocked(fp, pose, action)
            collided = hit_point is not None
            if collided:
                result.collisions += 1
                # remember the bump where the agent believes it happened
                reach = math.dist((pose.x, pose.y), hit_point)
                bump = (est.x + reach * math.cos(est.theta), est.y + reach * math.sin(est.theta))
                try:
                    nav.blocked[world_to_cell(gmap, bump)] = True
                except IndexError:
                    pass
                state.force_replan = True
            result.log.append(StepRecord(
                t, pose.x, pose.y, pose.theta, int(action), state.global_goal, state.local_goal,
                event.reason.value if event is not None else "", est.x, est.y, est.theta, vetoed, collided))
            pose = new_pose
    except Exception as exc:  # abort cleanly with partial outputs
        log.error("episode aborted at step %d: %s", len(result.log), exc)
        result.error = f"{type(exc).__name__}: {exc}"
    result.metrics = compute_metrics(gmap, fp)
    result.coverage = coverage(gmap, fp)
    return result
