"""Spatial data model: region labels, poses, actions and probabilistic grid maps.

Grid arrays are indexed ``[i, j]`` where ``i`` runs along world x and ``j``
along world y, so ``world_to_cell`` returns ``(i, j)`` in axis order.

Egocentric maps use a fixed anchor: the agent sits at the center of cell
``(0, L // 2)``, rows grow in the forward direction and columns grow toward
the agent's left. With that choice a heading of zero maps local rows onto
world x and local columns onto world y without any mirroring.
"""

from __future__ import annotations

import enum
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CELL_SIZE = 0.05
EGO_SIZE = 101
GLOBAL_SIZE = 2001
FORWARD_STEP = 0.25
TURN_STEP = math.radians(10.0)
UNOBSERVED = -1

DEFAULT_LABELS = (
    "bathroom",
    "bedroom",
    "closet",
    "dining room",
    "garage",
    "gym",
    "hallway",
    "kitchen",
    "library",
    "living room",
    "office",
    "other room",
    "outdoor",
    "stairs",
)

_MAGIC = b"ISRM"
_VERSION = 1
_TEXT_MAGIC = "ISRM-TEXT"
_NORM_TOL = 1e-6


class MapBoundsError(IndexError):
    """A world point or cell index falls outside the map."""


class MapFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RegionLabelSet:
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("label set is empty")
        if any(not name for name in labels):
            raise ValueError("label names must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError("label names must be unique")
        object.__setattr__(self, "labels", labels)

    @property
    def C(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        return self.labels.index(name)

    def __getitem__(self, i: int) -> str:
        return self.labels[i]


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod/addition can round up onto the excluded end point
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def angle_diff(a: float, b: float) -> float:
    return normalize_angle(a - b)


@dataclass(frozen=True)
class Pose:
    """2-D position in meters and heading in radians (CCW from world +x)."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


class Action(enum.IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2


def compose_pose(pose: Pose, action: Action, step: float = FORWARD_STEP, turn: float = TURN_STEP) -> Pose:
    """Apply one discrete action to a pose."""
    action = Action(action)
    if action is Action.FORWARD:
        return Pose(pose.x + step * math.cos(pose.theta), pose.y + step * math.sin(pose.theta), pose.theta)
    if action is Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.theta + turn)
    return Pose(pose.x, pose.y, pose.theta - turn)


def compose_actions(pose: Pose, actions: Sequence[Action]) -> Pose:
    for a in actions:
        pose = compose_pose(pose, a)
    return pose


@dataclass
class CategoricalCell:
    """Copy of a single map cell. Maps store cells as parallel arrays."""

    occupancy: float = 0.0
    explored: float = 0.0
    region: np.ndarray = field(default_factory=lambda: np.zeros(len(DEFAULT_LABELS)))
    obs_count: int = 0

    def argmax(self) -> int:
        return argmax_region(self.region)


def argmax_region(region: np.ndarray) -> int:
    """Most probable label index, lowest index on ties, UNOBSERVED for an all-zero vector."""
    region = np.asarray(region)
    if not np.any(region > 0):
        return UNOBSERVED
    return int(np.argmax(region))


class GridMap:
    """Square grid of categorical cells with (2 + C) probability channels plus a count.

    ``origin`` is the world coordinate of the lower corner of cell (0, 0).
    """

    def __init__(self, size: int, num_labels: int = len(DEFAULT_LABELS), cell_size: float = CELL_SIZE,
                 origin: tuple[float, float] = (0.0, 0.0)):
        if size < 1:
            raise ValueError("map size must be positive")
        if num_labels < 1:
            raise ValueError("need at least one region label")
        self.size = int(size)
        self.num_labels = int(num_labels)
        self.cell_size = float(cell_size)
        self.origin = (float(origin[0]), float(origin[1]))
        self.occupancy = np.zeros((size, size))
        self.explored = np.zeros((size, size))
        self.region = np.zeros((size, size, num_labels))
        self.obs_count = np.zeros((size, size), dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    @property
    def C(self) -> int:
        return self.num_labels

    def copy(self):
        other = self.__class__.__new__(self.__class__)
        other.__dict__.update(self.__dict__)
        for name in ("occupancy", "explored", "region", "obs_count"):
            setattr(other, name, getattr(self, name).copy())
        return other

    def cell(self, i: int, j: int) -> CategoricalCell:
        self._check_index(i, j)
        return CategoricalCell(float(self.occupancy[i, j]), float(self.explored[i, j]),
                               self.region[i, j].copy(), int(self.obs_count[i, j]))

    def set_cell(self, i: int, j: int, cell: CategoricalCell) -> None:
        self._check_index(i, j)
        self.occupancy[i, j] = cell.occupancy
        self.explored[i, j] = cell.explored
        self.region[i, j] = cell.region
        self.obs_count[i, j] = cell.obs_count

    def _check_index(self, i: int, j: int) -> None:
        if not (0 <= i < self.size and 0 <= j < self.size):
            raise MapBoundsError(f"cell ({i}, {j}) outside {self.size}x{self.size} map")

    def labels(self) -> np.ndarray:
        """Per-cell argmax label, UNOBSERVED where the region vector is all-zero."""
        out = np.argmax(self.region, axis=-1).astype(np.int64)
        out[~np.any(self.region > 0, axis=-1)] = UNOBSERVED
        return out

    def observed(self) -> np.ndarray:
        return self.obs_count > 0

    def channels(self) -> np.ndarray:
        """Stacked ``(size, size, 2 + C)`` view: occupancy, explored, regions."""
        return np.concatenate([self.occupancy[..., None], self.explored[..., None], self.region], axis=-1)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (self.size == other.size and self.num_labels == other.num_labels
                and self.cell_size == other.cell_size and self.origin == other.origin
                and np.array_equal(self.occupancy, other.occupancy)
                and np.array_equal(self.explored, other.explored)
                and np.array_equal(self.region, other.region)
                and np.array_equal(self.obs_count, other.obs_count))


class EgocentricMap(GridMap):
    """L x L agent-frame map; see the module docstring for the anchor convention."""

    def __init__(self, size: int = EGO_SIZE, num_labels: int = len(DEFAULT_LABELS), cell_size: float = CELL_SIZE):
        super().__init__(size, num_labels, cell_size)

    @property
    def L(self) -> int:
        return self.size

    @property
    def anchor(self) -> tuple[int, int]:
        return (0, self.size // 2)


class GlobalMap(GridMap):
    """G x G world-frame map."""

    def __init__(self, size: int = GLOBAL_SIZE, num_labels: int = len(DEFAULT_LABELS), cell_size: float = CELL_SIZE,
                 origin: tuple[float, float] = (0.0, 0.0)):
        super().__init__(size, num_labels, cell_size, origin)

    @property
    def G(self) -> int:
        return self.size


def world_to_cell(m: GridMap, p) -> tuple[int, int]:
    """Index of the cell containing world point ``p``; raises MapBoundsError outside the map."""
    px, py = float(p[0]), float(p[1])
    i = math.floor((px - m.origin[0]) / m.cell_size)
    j = math.floor((py - m.origin[1]) / m.cell_size)
    if not (0 <= i < m.size and 0 <= j < m.size):
        raise MapBoundsError(f"point ({px:.3f}, {py:.3f}) maps to cell ({i}, {j}) outside the map")
    return i, j


def cell_center(m: GridMap, idx) -> tuple[float, float]:
    i, j = int(idx[0]), int(idx[1])
    m._check_index(i, j)
    return (m.origin[0] + (i + 0.5) * m.cell_size, m.origin[1] + (j + 0.5) * m.cell_size)


def cell_centers(m: GridMap, idx: np.ndarray) -> np.ndarray:
    """Vectorized cell_center for an ``(n, 2)`` index array, no bounds check."""
    idx = np.asarray(idx, dtype=np.float64)
    return np.asarray(m.origin) + (idx + 0.5) * m.cell_size


def validate_map(m: GridMap) -> None:
    """Raise ValueError if any cell breaks the categorical-cell invariants."""
    problems = []
    for name in ("occupancy", "explored"):
        arr = getattr(m, name)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            problems.append(f"{name} outside [0, 1]")
    if not np.all(np.isfinite(m.region)) or np.any(m.region < 0) or np.any(m.region > 1 + _NORM_TOL):
        problems.append("region entries outside [0, 1]")
    if np.any(m.obs_count < 0):
        problems.append("negative obs_count")
    mass = m.region.sum(axis=-1)
    empty = ~np.any(m.region != 0, axis=-1)
    bad_norm = ~empty & (np.abs(mass - 1.0) > _NORM_TOL)
    if np.any(bad_norm):
        problems.append(f"{int(bad_norm.sum())} region vectors not normalized")
    unseen = m.obs_count == 0
    if np.any(unseen != (m.explored == 0)) or np.any(unseen != empty):
        problems.append("obs_count, explored and region disagree on which cells are observed")
    if problems:
        raise ValueError("; ".join(problems))


# -- serialization ---------------------------------------------------------------
#
# Binary layout (little endian):
#   b"ISRM" | u16 version | u32 G | u32 C | f64 cell_size | f64 origin_x | f64 origin_y
#   then G*G cells in row-major [i, j] order, each as (3 + C) f32 values:
#   occupancy, explored, region[0..C), obs_count
# Values are stored as f32, so a load/save cycle reproduces the file bytes exactly.

_HEADER = struct.Struct("<4sHIIddd")


def _cell_block(m: GridMap) -> np.ndarray:
    block = np.empty((m.size, m.size, 3 + m.num_labels), dtype="<f4")
    block[..., 0] = m.occupancy
    block[..., 1] = m.explored
    block[..., 2:2 + m.num_labels] = m.region
    block[..., -1] = m.obs_count
    return block


def _from_block(block: np.ndarray, size: int, num_labels: int, cell_size: float,
                origin: tuple[float, float], cls=GlobalMap) -> GridMap:
    m = GridMap.__new__(cls)
    GridMap.__init__(m, size, num_labels, cell_size, origin)
    block = block.reshape(size, size, 3 + num_labels).astype(np.float64)
    m.occupancy[:] = block[..., 0]
    m.explored[:] = block[..., 1]
    m.region[:] = block[..., 2:2 + num_labels]
    m.obs_count[:] = block[..., -1].astype(np.int64)
    return m


def map_to_bytes(m: GridMap) -> bytes:
    header = _HEADER.pack(_MAGIC, _VERSION, m.size, m.num_labels, m.cell_size, *m.origin)
    return header + _cell_block(m).tobytes()


def map_from_bytes(data: bytes, cls=GlobalMap) -> GridMap:
    if len(data) < _HEADER.size:
        raise MapFormatError("truncated map header")
    magic, version, size, num_labels, cell_size, ox, oy = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise MapFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise MapFormatError(f"unsupported map version {version}")
    expected = size * size * (3 + num_labels) * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise MapFormatError(f"expected {expected} payload bytes, got {len(payload)}")
    block = np.frombuffer(payload, dtype="<f4")
    return _from_block(block, size, num_labels, cell_size, (ox, oy), cls)


def save_map(m: GridMap, path) -> None:
    Path(path).write_bytes(map_to_bytes(m))


def load_map(path, cls=GlobalMap) -> GridMap:
    return map_from_bytes(Path(path).read_bytes(), cls)


def map_to_text(m: GridMap) -> str:
    """Debug variant: header lines then one line of f32 values per cell."""
    out = io.StringIO()
    out.write(f"{_TEXT_MAGIC} {_VERSION}\n")
    out.write(f"G {m.size}\nC {m.num_labels}\n")
    out.write(f"cell_size {m.cell_size!r}\norigin {m.origin[0]!r} {m.origin[1]!r}\n")
    for row in _cell_block(m).reshape(-1, 3 + m.num_labels):
        out.write(" ".join(f"{v:.9g}" for v in row.tolist()))
        out.write("\n")
    return out.getvalue()


def map_from_text(text: str, cls=GlobalMap) -> GridMap:
    lines = text.splitlines()
    try:
        magic, version = lines[0].split()
        if magic != _TEXT_MAGIC or int(version) != _VERSION:
            raise MapFormatError(f"bad text header {lines[0]!r}")
        size = int(lines[1].split()[1])
        num_labels = int(lines[2].split()[1])
        cell_size = float(lines[3].split()[1])
        _, ox, oy = lines[4].split()
    except (IndexError, ValueError) as exc:
        raise MapFormatError(f"malformed text map header: {exc}") from exc
    body = lines[5:5 + size * size]
    if len(body) != size * size:
        raise MapFormatError("truncated text map body")
    block = np.array([[float(v) for v in line.split()] for line in body], dtype="<f4")
    return _from_block(block, size, num_labels, cell_size, (float(ox), float(oy)), cls)
