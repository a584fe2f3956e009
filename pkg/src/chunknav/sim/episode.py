"""Episode execution under the stop-or-budget protocol, plus result logs."""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from ..entropy import ExecMode
from ..grammar import Action, ActionChunk, ActionUnits, chunk_text
from ..hpac import HpacConfig, derive_seed
from .planner import planner_for, polyline_length, resample
from .policy import NoiseModel, NoisyPolicy, OraclePolicy, PolicyFailure
from .world import Pose, World, random_world, step

# query(pose) -> (chunks, entropies, t_star)
QueryFn = Callable[[Pose], tuple[Sequence[ActionChunk], Sequence[float], int]]


@dataclass
class QueryRecord:
    chunks: list[str]
    entropies: list[float]
    t_star: int


@dataclass
class EpisodeResult:
    episode_id: str
    path: list[tuple[float, float]]
    atomic_step_count: int
    stopped: bool
    collisions: int
    reference_path: list[tuple[float, float]]
    goal: tuple[float, float]
    success_radius: float
    shortest_path_length: float
    final_heading: float = 0.0
    mode: str = ""
    seed: int | None = None
    queries: list[QueryRecord] = field(default_factory=list)

    def to_record(self) -> dict:
        d = asdict(self)
        d["path"] = [list(p) for p in self.path]
        d["reference_path"] = [list(p) for p in self.reference_path]
        d["goal"] = list(self.goal)
        return d

    @classmethod
    def from_record(cls, d: dict) -> "EpisodeResult":
        d = dict(d)
        d["path"] = [tuple(p) for p in d["path"]]
        d["reference_path"] = [tuple(p) for p in d["reference_path"]]
        d["goal"] = tuple(d["goal"])
        d["queries"] = [QueryRecord(**q) for q in d.get("queries", [])]
        return cls(**d)


def reference_for(world: World, units: ActionUnits = ActionUnits()) -> tuple[list, float]:
    """Dense shortest-path reference from the start and its length."""
    pts = planner_for(world).polyline(*world.start.position)
    return resample(pts, units.forward_m), polyline_length(pts)


def drive(world: World, query: QueryFn, units: ActionUnits = ActionUnits(),
          episode_id: str = "", mode: str = "", seed: int | None = None) -> EpisodeResult:
    """Query-execute loop shared by in-process and remote episodes."""
    pose = world.start
    path = [pose.position]
    steps = collisions = 0
    stopped = False
    queries: list[QueryRecord] = []
    while not stopped and steps < world.max_steps:
        chunks, H, t_star = query(pose)
        queries.append(QueryRecord([chunk_text(c, units) for c in chunks], [float(h) for h in H], t_star))
        for chunk in chunks[:t_star]:
            for a in chunk.actions():
                if a is Action.STOP:
                    stopped = True
                    break
                if steps >= world.max_steps:
                    break
                pose, hit = step(pose, a, world, units)
                collisions += hit
                steps += 1
                path.append(pose.position)
            if stopped or steps >= world.max_steps:
                break
    reference, L = reference_for(world, units)
    return EpisodeResult(
        episode_id=episode_id,
        path=path,
        atomic_step_count=steps,
        stopped=stopped,
        collisions=collisions,
        reference_path=reference,
        goal=tuple(world.goal),
        success_radius=world.success_radius,
        shortest_path_length=L,
        final_heading=pose.heading,
        mode=mode,
        seed=seed,
        queries=queries,
    )


def run_episode(world: World, policy, exec_mode: ExecMode | str = "entropy",
                units: ActionUnits = ActionUnits(), k_max: int = 3,
                episode_id: str = "", seed: int | None = None) -> EpisodeResult:
    mode = ExecMode.parse(exec_mode) if isinstance(exec_mode, str) else exec_mode

    def query(pose: Pose):
        try:
            out = policy(world, pose, k_max)
        except PolicyFailure:
            raise
        except Exception as exc:  # surfaced uniformly to callers
            raise PolicyFailure(str(exc)) from exc
        t_star, H = mode.horizon(out.predictions)
        return [p.chunk for p in out.predictions], H, t_star

    return drive(world, query, units, episode_id=episode_id, mode=str(mode), seed=seed)


def build_policy(kind: str, seed: int, units: ActionUnits = ActionUnits(),
                 hpac: HpacConfig = HpacConfig(), noise: NoiseModel = NoiseModel()):
    """``oracle`` or ``noisy`` policy with sub-seeds derived from ``seed``."""
    oracle = OraclePolicy(units, hpac, seed=derive_seed(seed, "hpac"))
    if kind == "oracle":
        return oracle
    if kind == "noisy":
        return NoisyPolicy(oracle, noise, seed=derive_seed(seed, "noise"))
    raise ValueError(f"unknown policy {kind!r}")


def make_worlds(n: int, seed: int, **kwargs) -> list[tuple[str, World]]:
    """``n`` random worlds with ids ``ep00000``...; deterministic in ``seed``."""
    rng = random.Random(seed)
    return [(f"ep{i:05d}", random_world(rng, **kwargs)) for i in range(n)]


def run_batch(worlds: Iterable[tuple[str, World]], policy_kind: str, exec_mode: ExecMode | str,
              seed: int, units: ActionUnits = ActionUnits(), hpac: HpacConfig = HpacConfig(),
              noise: NoiseModel = NoiseModel(), k_max: int = 3) -> list[EpisodeResult]:
    results = []
    for episode_id, world in worlds:
        ep_seed = derive_seed(seed, episode_id)
        policy = build_policy(policy_kind, ep_seed, units, hpac, noise)
        results.append(run_episode(world, policy, exec_mode, units, k_max,
                                   episode_id=episode_id, seed=ep_seed))
    return sorted(results, key=lambda r: r.episode_id)


def write_episode_log(results: Iterable[EpisodeResult], fh) -> None:
    for r in results:
        fh.write(json.dumps(r.to_record(), sort_keys=True, separators=(",", ":")) + "\n")


def read_episode_log(fh) -> list[EpisodeResult]:
    out = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            out.append(EpisodeResult.from_record(json.loads(line)))
        except (ValueError, TypeError, KeyError) as exc:
            raise ValueError(f"line {lineno}: bad episode record ({exc})") from exc
    return out
