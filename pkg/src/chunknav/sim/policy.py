"""Chunk policies for the simulator.

:class:`OraclePolicy` follows the smoothed shortest path with a pure-pursuit
controller quantized to the atomic action set, chunks its plan with HPAC and
emits near point-mass action-type distributions.  :class:`NoisyPolicy`
corrupts those chunks with a probability that grows along the horizon and
reports calibrated (or, occasionally, overconfident) distributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..entropy import ChunkPrediction
from ..grammar import ACTION_INDEX, ACTION_VOCAB, Action, ActionChunk, ActionUnits, SubChunk
from ..hpac import HpacConfig, chunk_trajectory, make_rng
from .planner import planner_for
from .world import Pose, World, heading_delta, step

ORACLE_EPS = 1e-6


class PolicyFailure(RuntimeError):
    pass


@dataclass
class PolicyOutput:
    predictions: list[ChunkPrediction]

    def __post_init__(self):
        if not self.predictions:
            raise PolicyFailure("policy returned no chunks")


class Policy(Protocol):
    def __call__(self, world: World, pose: Pose, k_max: int) -> PolicyOutput: ...


def type_distribution(action: Action, confidence: float) -> np.ndarray:
    """``confidence`` on ``action``, the rest spread evenly over the other types."""
    probs = np.full(len(ACTION_VOCAB), (1.0 - confidence) / (len(ACTION_VOCAB) - 1))
    probs[ACTION_INDEX[action]] = confidence
    return probs


def predictions_for(chunks, confidence: float) -> list[ChunkPrediction]:
    return [
        ChunkPrediction(c, [type_distribution(sc.action, confidence) for sc in c.sub_chunks])
        for c in chunks
    ]


class PursuitController:
    """Pure pursuit on the smoothed path with 15-degree style heading quantization.

    Turns whenever the bearing to the look-ahead point is more than half a
    turn step away, otherwise moves forward; stops once within
    ``stop_factor`` forward steps of the goal.
    """

    def __init__(self, world: World, pose: Pose, units: ActionUnits = ActionUnits(),
                 lookahead: float = 0.5, stop_factor: float = 0.6, max_actions: int = 2000):
        self.world = world
        self.units = units
        self.lookahead = lookahead
        self.stop_radius = stop_factor * units.forward_m
        self.pose = pose
        self.max_actions = max_actions
        self.emitted = 0
        self.done = False
        self._blocked = 0
        self._set_path(planner_for(world).polyline(pose.x, pose.y))

    def _set_path(self, pts):
        self.pts = pts
        self.cum = [0.0]
        for a, b in zip(pts, pts[1:]):
            self.cum.append(self.cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))
        self.seg = 0
        self.s = 0.0

    def _project(self, x, y):
        pts, cum = self.pts, self.cum
        best_d, best_s, best_k = math.inf, self.s, self.seg
        for k in range(self.seg, min(self.seg + 4, len(pts) - 1)):
            (ax, ay), (bx, by) = pts[k], pts[k + 1]
            dx, dy = bx - ax, by - ay
            ll = dx * dx + dy * dy
            t = 0.0 if ll == 0 else max(0.0, min(1.0, ((x - ax) * dx + (y - ay) * dy) / ll))
            px, py = ax + t * dx, ay + t * dy
            d = math.hypot(x - px, y - py)
            if d < best_d - 1e-12:
                best_d, best_s, best_k = d, cum[k] + t * math.sqrt(ll), k
        if best_s >= self.s:
            self.s, self.seg = best_s, best_k

    def _point_at(self, s):
        pts, cum = self.pts, self.cum
        if s >= cum[-1]:
            return pts[-1]
        k = self.seg
        while cum[k + 1] < s:
            k += 1
        seg_len = cum[k + 1] - cum[k]
        t = 0.0 if seg_len == 0 else (s - cum[k]) / seg_len
        (ax, ay), (bx, by) = pts[k], pts[k + 1]
        return ax + t * (bx - ax), ay + t * (by - ay)

    def next_action(self) -> Action:
        if self.done:
            raise PolicyFailure("controller already stopped")
        pose = self.pose
        gx, gy = self.world.goal
        if math.hypot(gx - pose.x, gy - pose.y) <= self.stop_radius or self.emitted >= self.max_actions:
            self.done = True
            self.emitted += 1
            return Action.STOP
        self._project(pose.x, pose.y)
        tx, ty = self._point_at(self.s + self.lookahead)
        half = self.units.turn_deg / 2.0
        err = heading_delta(math.degrees(math.atan2(ty - pose.y, tx - pose.x)), pose.heading)
        if err > half + 1e-9:
            action = Action.TURN_LEFT
        elif err < -half - 1e-9:
            action = Action.TURN_RIGHT
        else:
            action = Action.FORWARD
        new_pose, collided = step(pose, action, self.world, self.units)
        if collided:
            # back off to the current cell centre, then follow a fresh path
            self._blocked += 1
            if self._blocked > 3:
                raise PolicyFailure(f"controller stuck at {pose}")
            r, c = self.world.cell_of(pose.x, pose.y)
            cx, cy = self.world.cell_center(r, c)
            tail = planner_for(self.world).polyline(cx, cy)
            self._set_path([(pose.x, pose.y)] + tail)
            return self.next_action()
        self._blocked = 0
        self.pose = new_pose
        self.emitted += 1
        return action

    def rollout(self, limit: int | None = None) -> list[Action]:
        out = []
        while not self.done and (limit is None or len(out) < limit):
            out.append(self.next_action())
        return out


def oracle_actions(world: World, pose: Pose | None = None, units: ActionUnits = ActionUnits(),
                   lookahead: float = 0.5) -> tuple[list[Action], list[Pose]]:
    """Full oracle rollout from ``pose`` (default: world start) with its poses."""
    pose = world.start if pose is None else pose
    ctrl = PursuitController(world, pose, units, lookahead=lookahead,
                             max_actions=world.max_steps)
    actions, poses = [], [pose]
    while not ctrl.done:
        a = ctrl.next_action()
        actions.append(a)
        poses.append(ctrl.pose)
    return actions, poses


class OraclePolicy:
    """Shortest-path follower emitting HPAC chunks of its own plan.

    The plan is cached and reused while the agent stays on it; any deviation
    triggers a fresh rollout from the observed pose.
    """

    def __init__(self, units: ActionUnits = ActionUnits(), hpac: HpacConfig = HpacConfig(),
                 seed: int | None = None, lookahead: float = 0.5):
        self.units = units
        self.hpac = hpac
        self.rng = make_rng(hpac.seed if seed is None else seed)
        self.lookahead = lookahead
        self._world = None
        self._ctrl: PursuitController | None = None
        self._poses: list[Pose] = []
        self._actions: list[Action] = []
        self._cursor = 0

    def _replan(self, world: World, pose: Pose):
        self._world = world
        self._ctrl = PursuitController(world, pose, self.units, lookahead=self.lookahead,
                                       max_actions=world.max_steps)
        self._poses = [pose]
        self._actions = []
        self._cursor = 0

    def _locate(self, world: World, pose: Pose):
        if world is self._world:
            try:
                self._cursor = self._poses.index(pose, self._cursor)
                return
            except ValueError:
                pass
        self._replan(world, pose)

    def plan_ahead(self, world: World, pose: Pose, n_actions: int) -> list[Action]:
        self._locate(world, pose)
        ctrl = self._ctrl
        while len(self._actions) - self._cursor < n_actions and not ctrl.done:
            self._actions.append(ctrl.next_action())
            self._poses.append(ctrl.pose)
        return self._actions[self._cursor:self._cursor + n_actions]

    def __call__(self, world: World, pose: Pose, k_max: int) -> PolicyOutput:
        need = 3 * self.hpac.max_chunk_size * k_max + 1
        actions = self.plan_ahead(world, pose, need)
        chunks = chunk_trajectory(actions, self.hpac, self.rng).chunks[:k_max]
        return PolicyOutput(predictions_for(chunks, 1.0 - ORACLE_EPS))


@dataclass(frozen=True)
class NoiseModel:
    q0: float = 0.05
    g: float = 0.15
    m: float = 0.3

    def __post_init__(self):
        for name in ("q0", "g", "m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def corruption_prob(self, t: int) -> float:
        """Probability that the ``t``-th (1-based) predicted chunk is corrupted."""
        return min(1.0, self.q0 + self.g * (t - 1))


def corrupt_chunk(chunk: ActionChunk, rng) -> tuple[ActionChunk, int]:
    """Swap the action type of one random sub-chunk; returns the chunk and position."""
    subs = list(chunk.sub_chunks)
    pos = rng.randrange(len(subs))
    old = subs[pos]
    choices = [a for a in ACTION_VOCAB if a is not old.action]
    new_action = choices[rng.randrange(len(choices))]
    count = 1 if Action.STOP in (new_action, old.action) else old.count
    subs[pos] = SubChunk(new_action, count)
    return ActionChunk(tuple(subs)), pos


class NoisyPolicy:
    """Wraps a base policy with horizon-growing corruption and calibrated confidences."""

    def __init__(self, base, noise: NoiseModel = NoiseModel(), seed: int = 0):
        self.base = base
        self.noise = noise
        self.rng = make_rng(seed)

    def __call__(self, world: World, pose: Pose, k_max: int) -> PolicyOutput:
        clean = self.base(world, pose, k_max)
        preds = []
        for t, pred in enumerate(clean.predictions, start=1):
            q = self.noise.corruption_prob(t)
            chunk = pred.chunk
            corrupted = self.rng.random() < q
            overconfident = False
            if corrupted:
                chunk, _ = corrupt_chunk(chunk, self.rng)
                overconfident = self.rng.random() < self.noise.m
            confidence = 1.0 - ORACLE_EPS if overconfident else 1.0 - max(q, ORACLE_EPS)
            preds.append(ChunkPrediction(
                chunk, [type_distribution(sc.action, confidence) for sc in chunk.sub_chunks]
            ))
        return PolicyOutput(preds)


class ScriptedPolicy:
    """Replays fixed chunk lists, one per query (used for tests and demos)."""

    def __init__(self, outputs, confidence: float = 1.0 - ORACLE_EPS):
        self.outputs = list(outputs)
        self.confidence = confidence
        self.calls = 0

    def __call__(self, world: World, pose: Pose, k_max: int) -> PolicyOutput:
        chunks = self.outputs[min(self.calls, len(self.outputs) - 1)]
        self.calls += 1
        return PolicyOutput(predictions_for(chunks[:k_max], self.confidence))


def calibrated_entropy(q: float, vocab: int = len(ACTION_VOCAB)) -> float:
    """Entropy (nats) of one type position emitted with confidence ``1 - q``."""
    q = max(q, ORACLE_EPS)
    rest = q / (vocab - 1)
    return -(1 - q) * math.log(1 - q) - q * math.log(rest) if q < 1 else math.log(vocab - 1)


__all__ = [
    "NoiseModel", "NoisyPolicy", "OraclePolicy", "Policy", "PolicyFailure", "PolicyOutput",
    "PursuitController", "ScriptedPolicy", "calibrated_entropy", "corrupt_chunk",
    "oracle_actions", "predictions_for", "type_distribution",
]
