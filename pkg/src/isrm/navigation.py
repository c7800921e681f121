"""Hierarchical exploration: frontier global goals, grid planning, local goals, geometric control."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .grid import FORWARD_STEP, Action, GridMap, Pose, angle_diff, cell_center, world_to_cell

OCCUPIED = 0.5
AGENT_RADIUS = 0.1
LOCAL_RADIUS = 0.25
REACHED = 0.1
HEADING_TOL = math.radians(5.0)
ETA = 25


class ExplorationComplete(Exception):
    """No reachable frontier remains."""


class Unreachable(Exception):
    pass


class Refresh(enum.Enum):
    INIT = "init"
    GLOBAL_PERIOD = "global_period"
    GLOBAL_UNREACHABLE = "global_unreachable"
    LOCAL_OCCUPIED = "local_occupied"
    LOCAL_REACHED = "local_reached"
    PATH_BLOCKED = "path_blocked"


def _disk(radius_cells: int) -> np.ndarray:
    r = radius_cells
    a, b = np.mgrid[-r:r + 1, -r:r + 1]
    return a * a + b * b <= r * r


def obstacle_mask(m: GridMap, blocked: np.ndarray | None = None) -> np.ndarray:
    obstacles = (m.obs_count > 0) & (m.occupancy >= OCCUPIED)
    if blocked is not None:
        obstacles |= blocked
    return obstacles


def inflate(obstacles: np.ndarray, radius_cells: int) -> np.ndarray:
    if radius_cells <= 0:
        return obstacles.copy()
    # OR of shifted copies is much faster than binary_dilation for small disks
    r = radius_cells
    n, m = obstacles.shape
    padded = np.zeros((n + 2 * r, m + 2 * r), dtype=bool)
    padded[r:r + n, r:r + m] = obstacles
    out = np.zeros_like(obstacles, dtype=bool)
    for da, db in np.argwhere(_disk(r)):
        out |= padded[da:da + n, db:db + m]
    return out


def radius_in_cells(radius: float, cell_size: float) -> int:
    return int(math.ceil(radius / cell_size - 1e-9))


def frontier_mask(m: GridMap) -> np.ndarray:
    """Explored, free cells with at least one unobserved 8-neighbour inside the map."""
    observed = m.obs_count > 0
    free = observed & (m.occupancy < OCCUPIED)
    unobserved = ~observed
    near_unobserved = ndimage.binary_dilation(unobserved, structure=np.ones((3, 3), dtype=bool))
    return free & near_unobserved


def select_global_goal(m: GridMap, pose: Pose | None = None, exclude: np.ndarray | None = None) -> tuple[int, int]:
    """Cell nearest the centroid of the largest 8-connected frontier component.

    ``exclude`` removes cells from consideration (e.g. inflated obstacles or
    frontiers already found unreachable); the agent's own cell is never a
    goal. Ties on component size, and on distance to the centroid, go to the
    lowest (i, j).
    """
    frontier = frontier_mask(m)
    if exclude is not None:
        frontier &= ~exclude
    if pose is not None:
        try:
            frontier[world_to_cell(m, (pose.x, pose.y))] = False
        except IndexError:
            pass
    labels, count = ndimage.label(frontier, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        raise ExplorationComplete("no frontier left")
    sizes = np.bincount(labels.ravel())[1:]
    best = None
    for comp in np.flatnonzero(sizes == sizes.max()) + 1:
        cells = np.argwhere(labels == comp)
        centroid = cells.mean(axis=0)
        d2 = np.sum((cells - centroid) ** 2, axis=1)
        # argwhere is already sorted by (i, j), so argmin takes the lowest index on ties
        cand = tuple(int(v) for v in cells[np.argmin(d2)])
        if best is None or cand < best:
            best = cand
    return best


def plan(occupancy: np.ndarray, start, goal, radius_cells: int = 2) -> list[tuple[int, int]]:
    """Shortest 8-connected path on a boolean obstacle grid after inflation.

    ``occupancy`` is a boolean array of obstacles (observed occupied cells);
    unobserved space counts as free. Diagonal steps cost sqrt(2) and may not
    cut obstacle corners. The start cell is always traversable (the agent is
    standing on it, whatever the map says), and a start inside the inflation
    margin may escape through other margin cells within the same radius.
    """
    obstacles = np.asarray(occupancy, dtype=bool)
    blocked = inflate(obstacles, radius_cells)
    sa, sb = int(start[0]), int(start[1])
    ga, gb = int(goal[0]), int(goal[1])
    shape = obstacles.shape
    if not (0 <= ga < shape[0] and 0 <= gb < shape[1]) or blocked[ga, gb]:
        raise Unreachable(f"goal {goal} is inside an inflated obstacle")
    if not (0 <= sa < shape[0] and 0 <= sb < shape[1]):
        raise Unreachable(f"start {start} is outside the map")
    free = ~blocked
    if blocked[sa, sb]:
        r = radius_cells + 1
        a0, a1 = max(sa - r, 0), min(sa + r + 1, shape[0])
        b0, b1 = max(sb - r, 0), min(sb + r + 1, shape[1])
        free[a0:a1, b0:b1] |= ~obstacles[a0:a1, b0:b1]
        free[sa, sb] = True
    cost, path = _kernels.astar(free, sa, sb, ga, gb)
    if not np.isfinite(cost):
        raise Unreachable(f"no path from {start} to {goal}")
    return [(int(a), int(b)) for a, b in path]


def path_cost(path) -> float:
    steps = np.diff(np.asarray(path), axis=0)
    return float(np.sum(np.where(np.abs(steps).sum(axis=1) == 2, math.sqrt(2.0), 1.0)))


def sample_local_goal(path, pose: Pose, m: GridMap, radius: float = LOCAL_RADIUS) -> tuple[int, int]:
    """Farthest path cell within ``radius`` of the agent (first cell if none qualifies)."""
    if len(path) == 0:
        raise ValueError("empty path")
    centers = np.asarray(m.origin) + (np.asarray(path, dtype=np.float64) + 0.5) * m.cell_size
    d = np.hypot(centers[:, 0] - pose.x, centers[:, 1] - pose.y)
    within = np.flatnonzero(d <= radius + 1e-9)
    if within.size == 0:
        return tuple(path[0])
    # farthest by distance; among equals, the one furthest along the path
    best = within[np.lexsort((within, d[within]))[-1]]
    return tuple(path[best])


def local_step(pose: Pose, goal_xy, heading_tol: float = HEADING_TOL) -> Action:
    err = angle_diff(math.atan2(goal_xy[1] - pose.y, goal_xy[0] - pose.x), pose.theta)
    if abs(err) > heading_tol:
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.FORWARD


def forward_cells(m: GridMap, pose: Pose, step: float = FORWARD_STEP) -> list[tuple[int, int]]:
    """Cells touched by the straight forward segment, sampled every quarter cell."""
    n = max(1, int(math.ceil(step / (m.cell_size / 4))))
    out = []
    for k in range(1, n + 1):
        t = step * k / n
        p = (pose.x + t * math.cos(pose.theta), pose.y + t * math.sin(pose.theta))
        try:
            c = world_to_cell(m, p)
        except IndexError:
            c = None
        if c is not None and (not out or out[-1] != c):
            out.append(c)
        elif c is None:
            out.append(None)
    return out


def forward_is_safe(m: GridMap, pose: Pose, blocked: np.ndarray | None = None) -> bool:
    """Whether a forward step would end in a known-free (or unobserved) cell inside the map.

    Only the destination is checked: cells crossed on the way are left to the
    kinematics, and a bump there feeds the collision memory.
    """
    dest = (pose.x + FORWARD_STEP * math.cos(pose.theta), pose.y + FORWARD_STEP * math.sin(pose.theta))
    try:
        c = world_to_cell(m, dest)
    except IndexError:
        return False
    return not obstacle_mask(m, blocked)[c]


@dataclass
class NavState:
    global_goal: tuple[int, int] | None = None
    local_goal: tuple[int, int] | None = None
    steps_since_global: int = 0
    eta: int = ETA
    path: list = field(default_factory=list)
    complete: bool = False
    force_replan: bool = False


@dataclass
class RefreshEvent:
    reason: Refresh
    global_refreshed: bool
    local_refreshed: bool


@dataclass
class Navigator:
    """Holds per-episode navigation parameters and the collision memory."""

    radius_cells: int = 2
    eta: int = ETA
    reached: float = REACHED
    local_radius: float = LOCAL_RADIUS
    blocked: np.ndarray | None = None
    max_goal_attempts: int = 8

    def obstacles(self, m: GridMap) -> np.ndarray:
        if self.blocked is None or self.blocked.shape != m.shape:
            self.blocked = np.zeros(m.shape, dtype=bool)
        return obstacle_mask(m, self.blocked)

    def _choose_and_plan(self, m: GridMap, pose: Pose, obstacles: np.ndarray, start) -> tuple[tuple[int, int], list]:
        exclude = inflate(obstacles, self.radius_cells)
        for _ in range(self.max_goal_attempts):
            goal = select_global_goal(m, pose, exclude)
            try:
                return goal, plan(obstacles, start, goal, self.radius_cells)
            except Unreachable:
                labels, _ = ndimage.label(frontier_mask(m) & ~exclude, structure=np.ones((3, 3), dtype=int))
                exclude = exclude | (labels == labels[goal])
        raise ExplorationComplete("no reachable frontier among the largest components")

    def update_goals(self, state: NavState, m: GridMap, pose: Pose) -> RefreshEvent | None:
        """Advance the step counter and refresh goals when a refresh condition holds.

        Returns the refresh event (with its single reason) or None.
        """
        obstacles = self.obstacles(m)
        start = world_to_cell(m, (pose.x, pose.y))
        state.steps_since_global += 1
        reason = None
        refresh_global = False
        if state.global_goal is None:
            reason, refresh_global = Refresh.INIT, True
        elif state.steps_since_global >= state.eta:
            reason, refresh_global = Refresh.GLOBAL_PERIOD, True
        elif state.force_replan:
            reason = Refresh.PATH_BLOCKED
        elif obstacles[state.local_goal]:
            reason = Refresh.LOCAL_OCCUPIED
        elif math.dist(cell_center(m, state.local_goal), (pose.x, pose.y)) <= self.reached:
            reason = Refresh.LOCAL_REACHED
        if reason is None:
            return None
        state.force_replan = False
        if not refresh_global:
            try:
                state.path = plan(obstacles, start, state.global_goal, self.radius_cells)
            except Unreachable:
                reason, refresh_global = Refresh.GLOBAL_UNREACHABLE, True
        if refresh_global:
            state.steps_since_global = 0
            try:
                state.global_goal, state.path = self._choose_and_plan(m, pose, obstacles, start)
            except ExplorationComplete:
                state.complete = True
                state.global_goal = state.local_goal = None
                state.path = []
                raise
        state.local_goal = sample_local_goal(state.path, pose, m, self.local_radius)
        return RefreshEvent(reason, refresh_global, True)

    def act(self, state: NavState, m: GridMap, pose: Pose) -> tuple[Action, bool]:
        """Controller action toward the local goal, vetoing unsafe forward moves.

        Returns ``(action, vetoed)``; a veto turns in place and forces a
        replan at the next update.
        """
        action = local_step(pose, cell_center(m, state.local_goal))
        if action is Action.FORWARD and not forward_is_safe(m, pose, self.blocked):
            state.force_replan = True
            return Action.TURN_LEFT, True
        return action, False
