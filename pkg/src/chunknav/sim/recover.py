"""Analytic inverse dynamics: the chunk that moves one pose onto another.

Candidates are searched in order of segment count.  A segment is a rotation
onto a lattice heading (start heading plus a multiple of the turn step)
followed by a run of forward steps; the chunk ends with a rotation onto the
target heading.  Rotations always take the shorter way round (left on a tie).
Among solutions with the fewest segments the one with the fewest atomic
actions wins.  Every answer is checked by execution before it is returned.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import permutations

import numpy as np

from ..grammar import Action, ActionChunk, ActionUnits, regroup_runs
from .world import Pose, World, execute, heading_delta, step

TOL = 1e-6


class NotReachable(ValueError):
    pass


def _turns(delta_steps: int, n_dirs: int) -> list[Action]:
    k = delta_steps % n_dirs
    if k > n_dirs // 2:
        return [Action.TURN_RIGHT] * (n_dirs - k)
    return [Action.TURN_LEFT] * k


def _turn_cost(delta_steps: int, n_dirs: int) -> int:
    k = delta_steps % n_dirs
    return min(k, n_dirs - k)


def _sequence(segments, final_dir: int, n_dirs: int) -> list[Action]:
    actions: list[Action] = []
    cur = 0
    for d, m in segments:
        actions += _turns(d - cur, n_dirs)
        actions += [Action.FORWARD] * m
        cur = d
    actions += _turns(final_dir - cur, n_dirs)
    return actions


def _as_count(v: float, step_m: float) -> int | None:
    m = round(v / step_m)
    if m >= 1 and abs(v - m * step_m) <= TOL:
        return int(m)
    return None


class _Lattice:
    """Forward-run decompositions in the frame of the start heading."""

    def __init__(self, units: ActionUnits):
        self.n = 360 // units.turn_deg
        self.step = units.forward_m
        angles = np.radians(units.turn_deg * np.arange(self.n))
        self.u = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pairs = np.array(list(permutations(range(self.n), 2)))
        # drop collinear pairs (parallel or opposite) before inverting
        keep = [(j - i) % (self.n // 2) != 0 for i, j in pairs]
        self.pairs = pairs[keep]
        mats = np.stack([self.u[self.pairs[:, 0]], self.u[self.pairs[:, 1]]], axis=2)
        self.inv = np.linalg.inv(mats)

    def one(self, D) -> list[tuple]:
        dist = math.hypot(*D)
        m = _as_count(dist, self.step)
        if m is None:
            return []
        hits = np.nonzero((np.abs(self.u * (m * self.step) - D) <= TOL).all(axis=1))[0]
        return [((int(d), m),) for d in hits]

    def _solve(self, R):
        """Integer run pairs for each row of remainders ``R``: (rows, pairs) mask and counts."""
        scaled = np.tensordot(R / self.step, self.inv, axes=([1], [2]))  # (rows, pairs, 2)
        counts = np.rint(scaled)
        ok = ((counts >= 1) & (np.abs(scaled - counts) <= TOL / self.step)).all(axis=2)
        return ok, counts.astype(int)

    def two(self, D) -> list[tuple]:
        ok, counts = self._solve(np.asarray(D)[None, :])
        return [((int(i), int(a)), (int(j), int(b)))
                for (i, j), (a, b) in zip(self.pairs[ok[0]], counts[0][ok[0]])]

    def three(self, D, max_run: int) -> list[tuple]:
        dirs = np.repeat(np.arange(self.n), max_run)
        runs = np.tile(np.arange(1, max_run + 1), self.n)
        R = np.asarray(D)[None, :] - self.u[dirs] * (runs * self.step)[:, None]
        ok, counts = self._solve(R)
        out = []
        for r, p in zip(*np.nonzero(ok)):
            i, j = self.pairs[p]
            if i != dirs[r]:
                a, b = counts[r, p]
                out.append(((int(dirs[r]), int(runs[r])), (int(i), int(a)), (int(j), int(b))))
        return out


@lru_cache(maxsize=8)
def _lattice(units: ActionUnits) -> _Lattice:
    return _Lattice(units)


def recover_chunk(start: Pose, end: Pose, units: ActionUnits = ActionUnits(),
                  max_segments: int = 3, max_run: int = 9,
                  world: World | None = None) -> ActionChunk:
    """Chunk whose execution from ``start`` lands on ``end`` within 1e-6.

    Coinciding poses give the single-stop chunk, the only chunk without motion.
    Raises :class:`NotReachable` when the heading change is not a multiple of
    the turn step or no lattice decomposition with at most ``max_segments``
    forward runs exists.  ``max_run`` bounds the free run of a three-segment
    search.
    """
    dh = heading_delta(end.heading, start.heading)
    k = round(dh / units.turn_deg)
    if abs(dh - k * units.turn_deg) > TOL:
        raise NotReachable(f"heading change {dh:.6f} is not a multiple of {units.turn_deg}")
    lattice = _lattice(units)
    final_dir = k % lattice.n
    c, s = math.cos(math.radians(start.heading)), math.sin(math.radians(start.heading))
    dx, dy = end.x - start.x, end.y - start.y
    D = np.array([c * dx + s * dy, -s * dx + c * dy])

    if math.hypot(*D) <= TOL:
        if final_dir == 0:
            return ActionChunk.of((Action.STOP, 1))
        candidates = [()]
    else:
        candidates = []
        searches = [lattice.one, lattice.two, lambda v: lattice.three(v, max_run)]
        for search in searches[:max_segments]:
            candidates = search(D)
            if candidates:
                break
    if not candidates:
        raise NotReachable(f"displacement ({D[0]:.6f}, {D[1]:.6f}) is off the action lattice")

    def cost(segs):
        cur, total = 0, 0
        for d, m in segs:
            total += _turn_cost(d - cur, lattice.n) + m
            cur = d
        return total + _turn_cost(final_dir - cur, lattice.n), segs

    for segs in sorted(candidates, key=cost):
        actions = _sequence(segs, final_dir, lattice.n)
        if _lands(start, end, actions, units, world):
            return ActionChunk(tuple(regroup_runs(actions)))
    raise NotReachable("no candidate decomposition survives execution")


def _lands(start: Pose, end: Pose, actions, units, world) -> bool:
    if world is None:
        pose = execute(start, actions, None, units)
    else:
        pose = start
        for a in actions:
            pose, hit = step(pose, a, world, units)
            if hit:
                return False
    return (abs(pose.x - end.x) <= TOL and abs(pose.y - end.y) <= TOL
            and abs(heading_delta(pose.heading, end.heading)) <= TOL)
