"""Procedural BSP floorplans with ground-truth region labels."""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..grid import CELL_SIZE, RegionLabelSet

NO_REGION = -1


class InfeasibleFloorplan(RuntimeError):
    pass


@dataclass(frozen=True)
class Room:
    label: int
    rect: tuple[int, int, int, int]  # i0, j0, i1, j1 (half-open, walls included)

    @property
    def interior(self) -> tuple[int, int, int, int]:
        i0, j0, i1, j1 = self.rect
        return i0 + 1, j0 + 1, i1 - 1, j1 - 1


@dataclass
class Floorplan:
    """Boolean occupancy and per-cell region index (NO_REGION on walls), indexed [i, j]."""

    occupancy: np.ndarray
    region: np.ndarray
    rooms: list[Room]
    doors: list[tuple[int, int, int, int]]
    cell_size: float = CELL_SIZE
    labels: RegionLabelSet = field(default_factory=RegionLabelSet)

    @property
    def width(self) -> int:
        return self.occupancy.shape[0]

    @property
    def height(self) -> int:
        return self.occupancy.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.occupancy

    def distinct_labels(self) -> set[int]:
        return {r.label for r in self.rooms}

    def is_connected(self) -> bool:
        _, count = ndimage.label(self.free)
        return count == 1

    def __eq__(self, other):
        if not isinstance(other, Floorplan):
            return NotImplemented
        return (np.array_equal(self.occupancy, other.occupancy) and np.array_equal(self.region, other.region)
                and self.rooms == other.rooms and self.doors == other.doors
                and self.cell_size == other.cell_size and self.labels == other.labels)


@dataclass
class FloorplanConfig:
    extent: tuple[float, float] = (10.0, 10.0)
    min_room: float = 2.0
    max_room: float = 4.0
    door_width: float = 0.9
    split_prob: float = 0.5
    label_weights: tuple[float, ...] | None = None
    min_rooms: int = 1
    min_labels: int = 1
    cell_size: float = CELL_SIZE
    seed: int = 0
    max_retries: int = 200
    labels: RegionLabelSet = field(default_factory=RegionLabelSet)


def _cells(meters: float, cell_size: float) -> int:
    return int(round(meters / cell_size))


def _bsp(rect, min_c, max_c, split_prob, rng, leaves, splits):
    """Recursively split ``rect``; appends leaf rects and (leaves below, leaves above) per split."""
    i0, j0, i1, j1 = rect
    w, h = i1 - i0, j1 - j0
    can = {0: w >= 2 * min_c, 1: h >= 2 * min_c}
    must = {0: w > max_c and can[0], 1: h > max_c and can[1]}
    axis = None
    if must[0] or must[1]:
        axis = 0 if must[0] and (not must[1] or w >= h) else 1
    elif (can[0] or can[1]) and rng.random() < split_prob:
        axis = 0 if can[0] and (not can[1] or w >= h) else 1
    if axis is None:
        leaves.append(rect)
        return
    size = w if axis == 0 else h
    cut = int(rng.integers(min_c, size - min_c + 1))
    if axis == 0:
        lo, hi = (i0, j0, i0 + cut, j1), (i0 + cut, j0, i1, j1)
    else:
        lo, hi = (i0, j0, i1, j0 + cut), (i0, j0 + cut, i1, j1)
    first = len(leaves)
    _bsp(lo, min_c, max_c, split_prob, rng, leaves, splits)
    middle = len(leaves)
    _bsp(hi, min_c, max_c, split_prob, rng, leaves, splits)
    splits.append((range(first, middle), range(middle, len(leaves))))


def _shared_walls(a: Room, b: Room):
    """Yield (axis, wall coordinate, lo, hi) where ``a`` lies below ``b`` across the wall.

    ``lo:hi`` is the span along the wall where both rooms' interiors overlap.
    """
    ai0, aj0, ai1, aj1 = a.rect
    bi0, bj0, bi1, bj1 = b.rect
    if ai1 == bi0 or bi1 == ai0:
        lo, hi = max(aj0, bj0) + 1, min(aj1, bj1) - 1
        yield 0, (ai1 if ai1 == bi0 else ai0), lo, hi
    if aj1 == bj0 or bj1 == aj0:
        lo, hi = max(ai0, bi0) + 1, min(ai1, bi1) - 1
        yield 1, (aj1 if aj1 == bj0 else aj0), lo, hi


def _build(config: FloorplanConfig, rng: np.random.Generator) -> Floorplan | None:
    cs = config.cell_size
    nx, ny = _cells(config.extent[0], cs), _cells(config.extent[1], cs)
    min_c, max_c = _cells(config.min_room, cs), _cells(config.max_room, cs)
    door_c = _cells(config.door_width, cs)
    rects, splits = [], []
    _bsp((0, 0, nx, ny), min_c, max_c, config.split_prob, rng, rects, splits)
    weights = None
    if config.label_weights is not None:
        weights = np.asarray(config.label_weights, dtype=np.float64)
        weights = weights / weights.sum()
    room_labels = rng.choice(config.labels.C, size=len(rects), p=weights)
    rooms = [Room(int(lbl), rect) for lbl, rect in zip(room_labels, rects)]

    occ = np.ones((nx, ny), dtype=bool)
    region = np.full((nx, ny), NO_REGION, dtype=np.int16)
    for room in rooms:
        i0, j0, i1, j1 = room.interior
        occ[i0:i1, j0:j1] = False
        region[i0:i1, j0:j1] = room.label

    doors = []
    for below, above in splits:
        # one door in the wall created by this split, between a random pair of touching rooms
        options = []
        for a in below:
            for b in above:
                for axis, wall, lo, hi in _shared_walls(rooms[a], rooms[b]):
                    if hi - lo >= door_c:
                        options.append((a, b, axis, wall, lo, hi))
        if not options:
            return None
        a, b, axis, wall, lo, hi = options[int(rng.integers(len(options)))]
        d0 = int(rng.integers(lo, hi - door_c + 1))
        # each half of the two-cell wall keeps the label of its own room
        la, lb = rooms[a].label, rooms[b].label
        if axis == 0:
            span = (wall - 1, d0, wall + 1, d0 + door_c)
            occ[wall - 1:wall + 1, d0:d0 + door_c] = False
            region[wall - 1, d0:d0 + door_c] = la
            region[wall, d0:d0 + door_c] = lb
        else:
            span = (d0, wall - 1, d0 + door_c, wall + 1)
            occ[d0:d0 + door_c, wall - 1:wall + 1] = False
            region[d0:d0 + door_c, wall - 1] = la
            region[d0:d0 + door_c, wall] = lb
        doors.append(span)
    return Floorplan(occ, region, rooms, doors, cs, config.labels)


def generate_floorplan(config: FloorplanConfig | None = None, **overrides) -> Floorplan:
    """BSP-split the extent into rooms with one door in every split wall; retry until valid."""
    config = config or FloorplanConfig()
    if overrides:
        config = FloorplanConfig(**{**config.__dict__, **overrides})
    if config.min_room <= 0 or config.max_room < config.min_room:
        raise InfeasibleFloorplan("need 0 < min_room <= max_room")
    if max(config.extent) < 2 * config.min_room:
        raise InfeasibleFloorplan("extent must be at least twice the minimum room size")
    rng = np.random.default_rng(config.seed)
    for _ in range(config.max_retries):
        fp = _build(config, rng)
        if fp is None:
            continue
        if (fp.is_connected() and len(fp.rooms) >= config.min_rooms
                and len(fp.distinct_labels()) >= config.min_labels):
            return fp
    raise InfeasibleFloorplan(f"no valid floorplan after {config.max_retries} attempts (seed {config.seed})")


# -- file format ------------------------------------------------------------------------
#
#   ISRM-FLOORPLAN 1
#   size <width> <height>
#   cell_size <meters>
#   labels <C>
#   <index> <name>            (C lines)
#   rooms <n>
#   <label> <i0> <j0> <i1> <j1>
#   doors <m>
#   <i0> <j0> <i1> <j1>
#   occupancy                 (then <width> lines, run-length encoded along j)
#   region                    (then <width> lines, run-length encoded along j)
#
# A run-length line is a sequence of "value*count" tokens.


def _rle(row) -> str:
    out = []
    for value, group in itertools.groupby(row.tolist()):
        out.append(f"{int(value)}*{sum(1 for _ in group)}")
    return " ".join(out)


def _unrle(line: str) -> list[int]:
    out = []
    for tok in line.split():
        value, count = tok.split("*")
        out.extend([int(value)] * int(count))
    return out


def floorplan_to_text(fp: Floorplan) -> str:
    buf = io.StringIO()
    buf.write("ISRM-FLOORPLAN 1\n")
    buf.write(f"size {fp.width} {fp.height}\ncell_size {fp.cell_size!r}\nlabels {fp.labels.C}\n")
    for k, name in enumerate(fp.labels.labels):
        buf.write(f"{k} {name}\n")
    buf.write(f"rooms {len(fp.rooms)}\n")
    for room in fp.rooms:
        buf.write(f"{room.label} {' '.join(map(str, room.rect))}\n")
    buf.write(f"doors {len(fp.doors)}\n")
    for span in fp.doors:
        buf.write(" ".join(map(str, span)) + "\n")
    buf.write("occupancy\n")
    for row in fp.occupancy.astype(np.int64):
        buf.write(_rle(row) + "\n")
    buf.write("region\n")
    for row in fp.region:
        buf.write(_rle(row) + "\n")
    return buf.getvalue()


def floorplan_from_text(text: str) -> Floorplan:
    lines = iter(text.splitlines())
    if next(lines).split() != ["ISRM-FLOORPLAN", "1"]:
        raise ValueError("not a floorplan file")
    _, w, h = next(lines).split()
    w, h = int(w), int(h)
    cell_size = float(next(lines).split()[1])
    n_labels = int(next(lines).split()[1])
    names = [next(lines).split(" ", 1)[1] for _ in range(n_labels)]
    n_rooms = int(next(lines).split()[1])
    rooms = []
    for _ in range(n_rooms):
        vals = [int(v) for v in next(lines).split()]
        rooms.append(Room(vals[0], tuple(vals[1:])))
    n_doors = int(next(lines).split()[1])
    doors = [tuple(int(v) for v in next(lines).split()) for _ in range(n_doors)]
    if next(lines).strip() != "occupancy":
        raise ValueError("missing occupancy block")
    occ = np.array([_unrle(next(lines)) for _ in range(w)], dtype=bool)
    if next(lines).strip() != "region":
        raise ValueError("missing region block")
    region = np.array([_unrle(next(lines)) for _ in range(w)], dtype=np.int16)
    if occ.shape != (w, h) or region.shape != (w, h):
        raise ValueError("grid size does not match header")
    return Floorplan(occ, region, rooms, doors, cell_size, RegionLabelSet(tuple(names)))


def save_floorplan(fp: Floorplan, path) -> None:
    Path(path).write_text(floorplan_to_text(fp))


def load_floorplan(path) -> Floorplan:
    return floorplan_from_text(Path(path).read_text())
