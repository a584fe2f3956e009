"""Synthetic oracle trajectory corpora, including the one shipped with the package."""
from __future__ import annotations

import io
import math
from importlib import resources

from .grammar import ActionUnits
from .ids import Trajectory, read_trajectories, write_records
from .sim.episode import make_worlds
from .sim.policy import PolicyFailure, oracle_actions

BUNDLED = "synthetic_corpus.jsonl"
BUNDLED_SIZE = 200
BUNDLED_SEED = 2024


def describe_goal(world) -> str:
    gx, gy = world.goal
    sx, sy = world.start.position
    dist = math.hypot(gx - sx, gy - sy)
    bearing = math.degrees(math.atan2(gy - sy, gx - sx)) % 360.0
    return f"go to the goal {dist:.1f} meters away at bearing {bearing:.0f} degrees and stop there"


def generate_corpus(n: int, seed: int, units: ActionUnits = ActionUnits(),
                    **world_kwargs) -> list[Trajectory]:
    """Oracle rollouts on ``n`` random worlds; worlds the oracle fails on are skipped."""
    out = []
    for episode_id, world in make_worlds(n, seed, **world_kwargs):
        try:
            actions, poses = oracle_actions(world, units=units)
        except PolicyFailure:
            continue
        out.append(Trajectory(episode_id, describe_goal(world), actions, poses))
    return out


def corpus_text(trajectories) -> str:
    buf = io.StringIO()
    write_records(trajectories, buf)
    return buf.getvalue()


def load_bundled() -> list[Trajectory]:
    with resources.files("chunknav.data").joinpath(BUNDLED).open("r", encoding="utf-8") as fh:
        return read_trajectories(fh)


def bundled_path():
    return resources.files("chunknav.data").joinpath(BUNDLED)
