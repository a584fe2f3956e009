"""Grid shortest paths to the goal and their any-angle smoothing.

The distance field is a Dijkstra search over 8-connected free cells (no
corner cutting) with a surcharge for cells adjacent to obstacles, so paths
keep a one-cell margin whenever the map allows it.  Smoothed paths only pass
through such margin-safe cells or through cells of the grid path itself.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .world import World, safe_mask

UNSAFE_COST = 3.0
_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


class Unreachable(RuntimeError):
    pass


class Planner:
    def __init__(self, world: World):
        self.world = world
        rows, cols = world.rows, world.cols
        occ = world.occupancy
        self.safe = safe_mask(occ)
        self._safe = self.safe.tolist()
        src, dst, w = [], [], []
        for r in range(rows):
            for c in range(cols):
                if occ[r, c]:
                    continue
                for dr, dc in _NEIGHBOURS:
                    nr, nc = r + dr, c + dc
                    if world.cell_blocked(nr, nc):
                        continue
                    if dr and dc and (world.cell_blocked(r + dr, c) or world.cell_blocked(r, c + dc)):
                        continue
                    step = math.sqrt(2.0) if dr and dc else 1.0
                    src.append(r * cols + c)
                    dst.append(nr * cols + nc)
                    w.append(step * world.cell_size * (1.0 if self.safe[nr, nc] else UNSAFE_COST))
        n = rows * cols
        graph = csr_matrix((w, (src, dst)), shape=(n, n))
        gr, gc = world.cell_of(*world.goal)
        # transpose: distances from the goal along reversed edges are costs-to-go
        dist, pred = dijkstra(graph.T.tocsr(), directed=True, indices=gr * cols + gc,
                              return_predecessors=True)
        self.cost_to_go = dist.reshape(rows, cols)
        self._next = pred.tolist()
        self.goal_cell = (gr, gc)

    def grid_path(self, cell: tuple[int, int]) -> list[tuple[int, int]]:
        r, c = cell
        cols = self.world.cols
        if self.world.cell_blocked(r, c) or not np.isfinite(self.cost_to_go[r, c]):
            raise Unreachable(f"goal unreachable from cell {cell}")
        path = [cell]
        idx = r * cols + c
        while (r, c) != self.goal_cell:
            idx = self._next[idx]
            r, c = divmod(idx, cols)
            path.append((r, c))
        return path

    def _los(self, x0, y0, x1, y1, allowed: set) -> bool:
        for r, c in self.world.segment_cells(x0, y0, x1, y1):
            if (r, c) in allowed:
                continue
            if self.world.cell_blocked(r, c) or not self._safe[r][c]:
                return False
        return True

    def polyline(self, x: float, y: float, max_scan: int = 24) -> list[tuple[float, float]]:
        """Any-angle path from ``(x, y)`` to the goal, starting at ``(x, y)``."""
        world = self.world
        cells = self.grid_path(world.cell_of(x, y))
        pts = [(x, y)] + [world.cell_center(r, c) for r, c in cells[1:]]
        pts[-1] = tuple(world.goal)
        if len(pts) == 1:
            return [(x, y), tuple(world.goal)]
        allowed = set(cells)
        out = [pts[0]]
        i = 0
        while i < len(pts) - 1:
            ax, ay = pts[i]
            best = i + 1
            for j in range(i + 2, min(len(pts), i + 1 + max_scan)):
                if self._los(ax, ay, pts[j][0], pts[j][1], allowed):
                    best = j
                else:
                    break
            out.append(pts[best])
            i = best
        return out

    def shortest_length(self, x: float, y: float) -> float:
        return polyline_length(self.polyline(x, y))


def polyline_length(pts) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


def resample(pts, spacing: float) -> list[tuple[float, float]]:
    """Points every ``spacing`` meters along a polyline, endpoints included."""
    out = [tuple(pts[0])]
    carry = 0.0
    for (ax, ay), (bx, by) in zip(pts, pts[1:]):
        seg = math.hypot(bx - ax, by - ay)
        if seg == 0:
            continue
        d = spacing - carry
        while d < seg - 1e-9:
            t = d / seg
            out.append((ax + t * (bx - ax), ay + t * (by - ay)))
            d += spacing
        carry = seg - (d - spacing)
    if out[-1] != tuple(pts[-1]):
        out.append(tuple(pts[-1]))
    return out


def planner_for(world: World) -> Planner:
    planner = world._cache.get("planner")
    if planner is None:
        planner = world._cache["planner"] = Planner(world)
    return planner
