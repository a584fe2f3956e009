"""Desk-scale navigation testbed: worlds, planner, policies, episodes, recovery."""
from .episode import (EpisodeResult, QueryRecord, build_policy, drive, make_worlds,
                      read_episode_log, reference_for, run_batch, run_episode,
                      write_episode_log)
from .planner import Planner, Unreachable, planner_for
from .policy import (NoiseModel, NoisyPolicy, OraclePolicy, PolicyFailure, PolicyOutput,
                     PursuitController, ScriptedPolicy, oracle_actions)
from .recover import NotReachable, recover_chunk
from .world import (Pose, World, WorldFormatError, empty_world, execute, format_world,
                    parse_world, random_world, step)

__all__ = [
    "EpisodeResult", "NoiseModel", "NoisyPolicy", "NotReachable", "OraclePolicy", "Planner",
    "PolicyFailure", "PolicyOutput", "Pose", "PursuitController", "QueryRecord",
    "ScriptedPolicy", "Unreachable", "World", "WorldFormatError", "build_policy", "drive",
    "empty_world", "execute", "format_world", "make_worlds", "oracle_actions", "parse_world",
    "planner_for", "random_world", "read_episode_log", "recover_chunk", "reference_for",
    "run_batch", "run_episode", "step", "write_episode_log",
]
