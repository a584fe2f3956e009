"""Inverse-dynamics triplets, chunked navigation samples and dataset statistics.

Each trajectory is chunked with HPAC; chunk boundaries act as waypoints.
Adjacent waypoints give one triplet (view at chunk start, view at chunk end,
chunk label) and one navigation sample (history up to the boundary, next
``k_max`` chunks as target).  Views are poses plus optional frame references.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .grammar import Action, ActionUnits, chunk_text
from .hpac import ChunkedSequence, HpacConfig, chunk_trajectory, derive_seed, make_rng
from .sim.world import Pose, heading_delta, step

HISTORY_CAP = 8
POSITION_TOL = 1e-6
HEADING_TOL = 1e-6
IMAGE = "<image>"


class InvalidTrajectory(ValueError):
    pass


class MissingInstruction(ValueError):
    pass


@dataclass
class Trajectory:
    episode_id: str
    instruction: str
    actions: list[Action]
    poses: list[Pose]
    frame_refs: list[str] | None = None

    def to_record(self) -> dict:
        d = {
            "episode_id": self.episode_id,
            "instruction": self.instruction,
            "actions": [a.value for a in self.actions],
            "poses": [p.to_list() for p in self.poses],
        }
        if self.frame_refs is not None:
            d["frame_refs"] = list(self.frame_refs)
        return d

    @classmethod
    def from_record(cls, d: dict) -> "Trajectory":
        try:
            traj = cls(
                episode_id=str(d["episode_id"]),
                instruction=str(d["instruction"]),
                actions=[Action.parse(a) for a in d["actions"]],
                poses=[Pose.from_seq(p) for p in d["poses"]],
                frame_refs=d.get("frame_refs"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTrajectory(f"bad trajectory record: {exc}") from exc
        if len(traj.poses) != len(traj.actions) + 1:
            raise InvalidTrajectory(
                f"{traj.episode_id}: {len(traj.poses)} poses for {len(traj.actions)} actions"
            )
        if traj.frame_refs is not None and len(traj.frame_refs) != len(traj.poses):
            raise InvalidTrajectory(f"{traj.episode_id}: frame_refs length mismatch")
        return traj

    def view(self, index: int) -> dict:
        v = {"pose": self.poses[index].to_list()}
        if self.frame_refs is not None:
            v["frame_ref"] = self.frame_refs[index]
        return v


@dataclass
class IdsTriplet:
    episode_id: str
    start_index: int
    end_index: int
    current_view: dict
    goal_view: dict
    label: str
    prompt: str

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class VlnSample:
    episode_id: str
    step_index: int
    history_indices: list[int]
    instruction: str
    target: list[str]
    prompt: str

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class ReplayIssue:
    index: int
    expected: list[float]
    actual: list[float]


@dataclass
class DatasetStats:
    chunk_size_histogram: dict[int, int]
    progress_profile: list[float | None]
    n_chunks: int = 0
    progress_counts: list[int] = field(default_factory=list)

    def mode(self) -> int:
        return max(self.chunk_size_histogram.items(), key=lambda kv: (kv[1], -kv[0]))[0]

    def to_record(self) -> dict:
        d = asdict(self)
        d["chunk_size_histogram"] = {str(k): v for k, v in sorted(self.chunk_size_histogram.items())}
        return d

    def summary(self) -> str:
        lines = ["atomic actions per chunk", f"{'size':>6} {'count':>8} {'share':>7}"]
        total = max(self.n_chunks, 1)
        for size, count in sorted(self.chunk_size_histogram.items()):
            lines.append(f"{size:>6d} {count:>8d} {100 * count / total:>6.1f}%")
        lines.append(f"{'total':>6} {self.n_chunks:>8d}")
        lines.append("")
        lines.append("mean chunk size by navigation progress")
        lines.append(f"{'bin':>11} {'mean':>6} {'count':>7}")
        for i, (m, c) in enumerate(zip(self.progress_profile, self.progress_counts)):
            mean = "-" if m is None else f"{m:.2f}"
            lines.append(f"{i / 10:>4.1f}-{(i + 1) / 10:<4.1f}  {mean:>6} {c:>7d}")
        return "\n".join(lines) + "\n"


# -- prompts -----------------------------------------------------------------

_VLN_TEMPLATE = (
    "Imagine you are a robot programmed for navigation tasks. You have been given a video "
    "of historical observations: {history} and current observation: <image>. Your assigned "
    "task is: {instruction}. Analyze this series of images to decide your next move, which "
    "could involve turning left or right by a specific degree, moving forward a certain distance."
)
_IDS_TEMPLATE = (
    "Imagine you are a robot programmed for navigation tasks. You have been given an image of "
    "current view <image> and an image of the goal view <image>. Analyze the two images to "
    "predict the navigation action that would move the robot from the current viewpoint to the "
    "goal view, which could involve turning left or right by a specific degree or moving forward "
    "a certain distance."
)
# "and and" is reproduced from the published template
_FDS_TEMPLATE = (
    "Imagine you are a robot programmed for navigation tasks. You have been given a video "
    "of historical observations: {history} and and current observation: <image>. Your assigned "
    "task is: {instruction}. Analyze this series of images to predict the future observation."
)


def render_prompt(kind: str, instruction: str | None = None, n_history: int | None = None) -> str:
    """Prompt text for ``VLN``, ``IDS`` or ``FDS``.

    ``n_history`` counts frames including the current one; ``None`` keeps the
    generic ``<image>,...,<image>`` placeholder.
    """
    kind = kind.upper()
    if kind == "IDS":
        return _IDS_TEMPLATE
    if kind not in ("VLN", "FDS"):
        raise ValueError(f"unknown prompt kind {kind!r}")
    if not instruction:
        raise MissingInstruction(f"{kind} prompt needs an instruction")
    if n_history is None:
        history = f"{IMAGE},...,{IMAGE}"
    else:
        history = ",".join([IMAGE] * max(n_history - 1, 0))
    template = _VLN_TEMPLATE if kind == "VLN" else _FDS_TEMPLATE
    return template.format(history=history, instruction=instruction)


# -- construction ------------------------------------------------------------

def subsample_history(indices: Sequence[int], cap: int = HISTORY_CAP) -> list[int]:
    """Keep at most ``cap`` indices, evenly spread and always keeping both ends."""
    indices = list(indices)
    if len(indices) <= cap:
        return indices
    if cap == 1:
        return [indices[-1]]
    n = len(indices)
    # round half up so results do not depend on banker's rounding
    return [indices[int(math.floor(j * (n - 1) / (cap - 1) + 0.5))] for j in range(cap)]


def validate_trajectory(traj: Trajectory, units: ActionUnits = ActionUnits()) -> list[ReplayIssue]:
    """Steps whose replay from ``poses[t]`` misses ``poses[t+1]`` (free-space kinematics)."""
    issues = []
    if len(traj.poses) != len(traj.actions) + 1:
        return [ReplayIssue(-1, [], [])]
    for t, a in enumerate(traj.actions):
        expected, _ = step(traj.poses[t], a, None, units)
        actual = traj.poses[t + 1]
        if (
            abs(expected.x - actual.x) > POSITION_TOL
            or abs(expected.y - actual.y) > POSITION_TOL
            or abs(heading_delta(expected.heading, actual.heading)) > HEADING_TOL
        ):
            issues.append(ReplayIssue(t, expected.to_list(), actual.to_list()))
    return issues


def episode_rng(config: HpacConfig, episode_id: str):
    return make_rng(derive_seed(config.seed, episode_id))


def chunk_episode(traj: Trajectory, config: HpacConfig, units: ActionUnits) -> ChunkedSequence:
    issues = validate_trajectory(traj, units)
    if issues:
        raise InvalidTrajectory(
            f"{traj.episode_id}: replay mismatch at steps {[i.index for i in issues[:5]]}"
        )
    try:
        return chunk_trajectory(traj.actions, config, episode_rng(config, traj.episode_id))
    except ValueError as exc:
        raise InvalidTrajectory(f"{traj.episode_id}: {exc}") from exc


def build_ids_triplets(traj: Trajectory, config: HpacConfig = HpacConfig(),
                       units: ActionUnits = ActionUnits(),
                       chunked: ChunkedSequence | None = None) -> list[IdsTriplet]:
    if chunked is None:
        chunked = chunk_episode(traj, config, units)
    prompt = render_prompt("IDS")
    return [
        IdsTriplet(
            episode_id=traj.episode_id,
            start_index=start,
            end_index=end,
            current_view=traj.view(start),
            goal_view=traj.view(end),
            label=chunk_text(chunk, units),
            prompt=prompt,
        )
        for chunk, (start, end) in zip(chunked.chunks, chunked.boundaries)
    ]


def build_vln_samples(traj: Trajectory, config: HpacConfig = HpacConfig(),
                      units: ActionUnits = ActionUnits(), k_max: int = 3,
                      chunked: ChunkedSequence | None = None) -> list[VlnSample]:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if chunked is None:
        chunked = chunk_episode(traj, config, units)
    texts = [chunk_text(c, units) for c in chunked.chunks]
    samples = []
    for b, (start, _) in enumerate(chunked.boundaries):
        history = subsample_history(range(start + 1))
        samples.append(VlnSample(
            episode_id=traj.episode_id,
            step_index=start,
            history_indices=history,
            instruction=traj.instruction,
            target=texts[b:b + k_max],
            prompt=render_prompt("VLN", traj.instruction, len(history)),
        ))
    return samples


def build_dataset(trajectories: Iterable[Trajectory], config: HpacConfig = HpacConfig(),
                  units: ActionUnits = ActionUnits(),
                  k_max: int = 3) -> tuple[list[IdsTriplet], list[VlnSample]]:
    """Triplets and samples for a corpus, sorted by episode id then index."""
    triplets: list[IdsTriplet] = []
    samples: list[VlnSample] = []
    for traj in trajectories:
        chunked = chunk_episode(traj, config, units)
        triplets.extend(build_ids_triplets(traj, config, units, chunked))
        samples.extend(build_vln_samples(traj, config, units, k_max, chunked))
    triplets.sort(key=lambda t: (t.episode_id, t.start_index))
    samples.sort(key=lambda s: (s.episode_id, s.step_index))
    return triplets, samples


def compute_stats(triplets: Sequence[IdsTriplet], n_bins: int = 10) -> DatasetStats:
    hist: dict[int, int] = {}
    episode_len: dict[str, int] = {}
    for t in triplets:
        episode_len[t.episode_id] = max(episode_len.get(t.episode_id, 0), t.end_index)
    sums = [0.0] * n_bins
    counts = [0] * n_bins
    for t in triplets:
        size = t.end_index - t.start_index
        hist[size] = hist.get(size, 0) + 1
        T = episode_len[t.episode_id]
        b = min(n_bins - 1, int(n_bins * t.start_index / T)) if T else 0
        sums[b] += size
        counts[b] += 1
    profile = [s / c if c else None for s, c in zip(sums, counts)]
    return DatasetStats(dict(sorted(hist.items())), profile, len(triplets), counts)


# -- line-delimited IO --------------------------------------------------------

def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_records(records: Iterable, fh) -> int:
    n = 0
    for r in records:
        fh.write(dumps_record(r.to_record() if hasattr(r, "to_record") else r) + "\n")
        n += 1
    return n


def read_trajectories(fh) -> list[Trajectory]:
    out = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            out.append(Trajectory.from_record(json.loads(line)))
        except (ValueError, InvalidTrajectory) as exc:
            raise InvalidTrajectory(f"line {lineno}: {exc}") from exc
    return out


def read_triplets(fh) -> list[IdsTriplet]:
    return [IdsTriplet(**json.loads(line)) for line in fh if line.strip()]
