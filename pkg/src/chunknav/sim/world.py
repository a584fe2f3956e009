"""2D occupancy-grid world with continuous poses.

Heading 0 degrees points along +x and turning left increases the heading.
Grid row ``r`` spans ``y in [r*cell, (r+1)*cell)`` and column ``c`` spans
``x in [c*cell, (c+1)*cell)``; anything outside the grid counts as occupied.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ..grammar import Action, ActionUnits


class Pose(NamedTuple):
    x: float
    y: float
    heading: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.heading]

    @classmethod
    def from_seq(cls, seq) -> "Pose":
        x, y, h = seq
        return cls(float(x), float(y), normalize_heading(float(h)))


def normalize_heading(h: float) -> float:
    h = math.fmod(h, 360.0)
    if h < 0:
        h += 360.0
    if h >= 360.0:
        h -= 360.0
    return h


def heading_delta(target: float, current: float) -> float:
    """Signed angle from ``current`` to ``target`` in (-180, 180]."""
    d = math.fmod(target - current, 360.0)
    if d <= -180.0:
        d += 360.0
    elif d > 180.0:
        d -= 360.0
    return d


class WorldFormatError(ValueError):
    pass


@dataclass(eq=False)
class World:
    occupancy: np.ndarray  # bool, True = occupied
    cell_size: float
    start: Pose
    goal: tuple[float, float]
    success_radius: float = 3.0
    max_steps: int = 500
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self._grid = self.occupancy.tolist()
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")
        if self.occupied(*self.start.position) or self.occupied(*self.goal):
            raise ValueError("start and goal must lie in free cells")

    @property
    def rows(self) -> int:
        return self.occupancy.shape[0]

    @property
    def cols(self) -> int:
        return self.occupancy.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size)

    def cell_blocked(self, r: int, c: int) -> bool:
        if r < 0 or c < 0 or r >= self.rows or c >= self.cols:
            return True
        return self._grid[r][c]

    def occupied(self, x: float, y: float) -> bool:
        return self.cell_blocked(*self.cell_of(x, y))

    def segment_cells(self, x0: float, y0: float, x1: float, y1: float) -> list[tuple[int, int]]:
        """Cells whose interior the segment passes through, in order."""
        cs = self.cell_size
        ts = [0.0, 1.0]
        for a0, a1 in ((x0, x1), (y0, y1)):
            if a1 != a0:
                lo, hi = sorted((a0, a1))
                k = math.floor(lo / cs) + 1
                while k * cs < hi:
                    t = (k * cs - a0) / (a1 - a0)
                    if 0.0 < t < 1.0:
                        ts.append(t)
                    k += 1
        ts.sort()
        cells = [self.cell_of(x0, y0)]
        for t0, t1 in zip(ts, ts[1:]):
            if t1 - t0 <= 1e-12:
                continue
            tm = 0.5 * (t0 + t1)
            cell = self.cell_of(x0 + tm * (x1 - x0), y0 + tm * (y1 - y0))
            if cell != cells[-1]:
                cells.append(cell)
        end = self.cell_of(x1, y1)
        if end != cells[-1]:
            cells.append(end)
        return cells

    def segment_free(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        return not any(self.cell_blocked(r, c) for r, c in self.segment_cells(x0, y0, x1, y1))

    def with_start(self, start: Pose) -> "World":
        return replace(self, start=start)

    def copy(self) -> "World":
        return replace(self, occupancy=self.occupancy.copy())


def step(pose: Pose, action: Action, world: World | None = None,
         units: ActionUnits = ActionUnits()) -> tuple[Pose, bool]:
    """Apply one atomic action; returns ``(new_pose, collided)``.

    A blocked forward move leaves the pose unchanged.  ``world=None`` means
    unobstructed free space.
    """
    if action is Action.FORWARD:
        rad = math.radians(pose.heading)
        nx = pose.x + units.forward_m * math.cos(rad)
        ny = pose.y + units.forward_m * math.sin(rad)
        if world is not None and not world.segment_free(pose.x, pose.y, nx, ny):
            return pose, True
        return Pose(nx, ny, pose.heading), False
    if action is Action.TURN_LEFT:
        return Pose(pose.x, pose.y, normalize_heading(pose.heading + units.turn_deg)), False
    if action is Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, normalize_heading(pose.heading - units.turn_deg)), False
    return pose, False


def execute(pose: Pose, actions, world: World | None = None,
            units: ActionUnits = ActionUnits()) -> Pose:
    for a in actions:
        if a is Action.STOP:
            break
        pose, _ = step(pose, a, world, units)
    return pose


# -- world files -------------------------------------------------------------

_HEADER_KEYS = {
    "cell_size": float,
    "success_radius": float,
    "max_steps": int,
    "start_heading": float,
}


def parse_world(text: str) -> World:
    """Parse a world file: one ``key=value`` header line, then the grid.

    Grid lines are listed by increasing row (y) index; ``#`` occupied,
    ``.`` free, ``S`` start, ``G`` goal.
    """
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise WorldFormatError("empty world file")
    header: dict = {"cell_size": 0.5, "success_radius": 3.0, "max_steps": 500, "start_heading": 0.0}
    for item in lines[0].split():
        if "=" not in item:
            raise WorldFormatError(f"bad header item {item!r}")
        key, value = item.split("=", 1)
        if key not in _HEADER_KEYS:
            raise WorldFormatError(f"unknown header key {key!r}")
        try:
            header[key] = _HEADER_KEYS[key](value)
        except ValueError:
            raise WorldFormatError(f"bad value for {key}: {value!r}") from None
    grid = lines[1:]
    if not grid:
        raise WorldFormatError("world file has no grid")
    width = len(grid[0])
    occ = np.zeros((len(grid), width), dtype=bool)
    start = goal = None
    for r, row in enumerate(grid):
        if len(row) != width:
            raise WorldFormatError(f"grid row {r} has length {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            if ch == "#":
                occ[r, c] = True
            elif ch == "S":
                start = (r, c)
            elif ch == "G":
                goal = (r, c)
            elif ch != ".":
                raise WorldFormatError(f"unknown grid character {ch!r}")
    if start is None or goal is None:
        raise WorldFormatError("grid needs exactly one S and one G")
    cs = header["cell_size"]
    sx, sy = (start[1] + 0.5) * cs, (start[0] + 0.5) * cs
    gx, gy = (goal[1] + 0.5) * cs, (goal[0] + 0.5) * cs
    return World(
        occupancy=occ,
        cell_size=cs,
        start=Pose(sx, sy, normalize_heading(header["start_heading"])),
        goal=(gx, gy),
        success_radius=header["success_radius"],
        max_steps=header["max_steps"],
    )


def format_world(world: World) -> str:
    """Inverse of :func:`parse_world` for worlds whose start/goal sit on cell centers."""
    rows = [["#" if v else "." for v in row] for row in world.occupancy]
    sr, sc = world.cell_of(*world.start.position)
    gr, gc = world.cell_of(*world.goal)
    rows[sr][sc] = "S"
    rows[gr][gc] = "G"
    header = (
        f"cell_size={world.cell_size!r} success_radius={world.success_radius!r} "
        f"max_steps={world.max_steps} start_heading={world.start.heading!r}"
    )
    return "\n".join([header] + ["".join(r) for r in rows]) + "\n"


def empty_world(width_m: float = 10.0, height_m: float = 10.0, cell_size: float = 0.5,
                start: Pose | None = None, goal: tuple[float, float] | None = None,
                **kwargs) -> World:
    rows = int(round(height_m / cell_size))
    cols = int(round(width_m / cell_size))
    occ = np.zeros((rows, cols), dtype=bool)
    if start is None:
        start = Pose(cell_size * 0.5, cell_size * 0.5, 0.0)
    if goal is None:
        goal = ((cols - 0.5) * cell_size, (rows - 0.5) * cell_size)
    return World(occ, cell_size, start, goal, **kwargs)


def safe_mask(occ: np.ndarray) -> np.ndarray:
    """Free cells whose eight neighbours are also free (grid border counts as wall)."""
    padded = np.pad(occ, 1, constant_values=True)
    blocked = np.zeros_like(occ)
    rows, cols = occ.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            blocked |= padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
    return ~blocked


def random_world(rng: random.Random, rows: int = 24, cols: int = 24, cell_size: float = 0.5,
                 n_obstacles: tuple[int, int] = (3, 8), min_goal_dist: float = 4.0,
                 success_radius: float = 3.0, max_steps: int = 500,
                 turn_deg: int = 15) -> World:
    """Random rectangular clutter with start and goal on safe cells of one component."""
    from scipy import ndimage

    for _ in range(1000):
        occ = np.zeros((rows, cols), dtype=bool)
        occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
        for _ in range(rng.randint(*n_obstacles)):
            h, w = rng.randint(1, 5), rng.randint(1, 5)
            r, c = rng.randint(1, rows - 1 - h), rng.randint(1, cols - 1 - w)
            occ[r:r + h, c:c + w] = True
        safe = safe_mask(occ)
        labels, n = ndimage.label(safe, structure=np.ones((3, 3)))
        if n == 0:
            continue
        sizes = np.bincount(labels.ravel())[1:]
        comp = int(np.argmax(sizes)) + 1
        cells = [(int(r), int(c)) for r, c in zip(*np.nonzero(labels == comp))]
        if len(cells) < 2:
            continue
        for _ in range(50):
            s = cells[rng.randrange(len(cells))]
            g = cells[rng.randrange(len(cells))]
            sx, sy = (s[1] + 0.5) * cell_size, (s[0] + 0.5) * cell_size
            gx, gy = (g[1] + 0.5) * cell_size, (g[0] + 0.5) * cell_size
            if math.hypot(gx - sx, gy - sy) >= min_goal_dist:
                heading = float(rng.randrange(0, 360, turn_deg))
                return World(occ, cell_size, Pose(sx, sy, heading), (gx, gy),
                             success_radius=success_radius, max_steps=max_steps)
    raise RuntimeError("could not generate a world with the requested goal distance")
