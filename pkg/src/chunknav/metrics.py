"""Navigation metrics: NE, SR, OSR, SPL and nDTW.

Distances are Euclidean; shortest-path lengths come from grid search in the
simulator and are passed in by the caller.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

Point = Sequence[float]


class EmptyPath(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class NonPositiveReference(ValueError):
    pass


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def navigation_error(final_pos: Point, goal: Point) -> float:
    return distance(final_pos, goal)


def success(final_pos: Point, goal: Point, tau: float, stopped: bool) -> bool:
    return bool(stopped) and distance(final_pos, goal) <= tau


def oracle_success(path: Sequence[Point], goal: Point, tau: float) -> bool:
    if not len(path):
        raise EmptyPath("path is empty")
    return min(distance(p, goal) for p in path) <= tau


def path_length(path: Sequence[Point]) -> float:
    return sum(distance(path[i], path[i + 1]) for i in range(len(path) - 1))


def spl(succeeded: bool, shortest: float, actual: float) -> float:
    if shortest <= 0:
        raise NonPositiveReference(f"shortest-path length {shortest} <= 0")
    if not succeeded:
        return 0.0
    return shortest / max(actual, shortest)


def dtw(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Dynamic time warping with Euclidean point costs and unit step pattern."""
    if not len(a) or not len(b):
        raise EmptyPath("DTW needs two non-empty paths")
    inf = math.inf
    prev = [inf] * (len(b) + 1)
    prev[0] = 0.0
    for ax, ay, *_ in a:
        cur = [inf] * (len(b) + 1)
        for j, (bx, by, *_) in enumerate(b, start=1):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = math.hypot(ax - bx, ay - by) + best
        prev = cur
    return prev[-1]


def dtw_bruteforce(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Minimum cost over every monotone warping path, enumerated explicitly.

    Exponential; meant for cross-checking :func:`dtw` on tiny inputs.
    """
    if not len(a) or not len(b):
        raise EmptyPath("DTW needs two non-empty paths")
    n, m = len(a), len(b)
    best = math.inf
    stack = [(0, 0, distance(a[0], b[0]))]
    while stack:
        i, j, total = stack.pop()
        if i == n - 1 and j == m - 1:
            best = min(best, total)
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                stack.append((ni, nj, total + distance(a[ni], b[nj])))
    return best


def ndtw(path: Sequence[Point], reference: Sequence[Point], eta: float) -> float:
    if eta <= 0:
        raise ValueError("eta must be positive")
    return math.exp(-dtw(path, reference) / eta)


ETA_MODES = ("tau_len", "shortest")


def default_eta(reference: Sequence[Point], tau: float, mode: str = "tau_len") -> float:
    """``tau_len``: tau x number of reference points; ``shortest``: reference length."""
    if mode == "tau_len":
        return tau * len(reference)
    if mode == "shortest":
        return max(path_length(reference), 1e-9)
    raise ValueError(f"unknown eta mode {mode!r}")


@dataclass
class EpisodeMetrics:
    episode_id: str
    ne: float
    success: bool
    oracle_success: bool
    spl: float
    ndtw: float
    path_length: float


@dataclass
class MetricReport:
    ne: float
    sr: float
    osr: float
    spl: float
    ndtw: float
    n: int
    per_episode: list[EpisodeMetrics] = field(default_factory=list)

    def to_dict(self, with_episodes: bool = True) -> dict:
        d = asdict(self)
        if not with_episodes:
            d.pop("per_episode")
        return d


def evaluate_episode(ep, eta_mode: str = "tau_len") -> EpisodeMetrics:
    """Score one episode result (anything with path/goal/stopped/reference fields)."""
    path = ep.path
    final = path[-1]
    tau = ep.success_radius
    ok = success(final, ep.goal, tau, ep.stopped)
    P = path_length(path)
    eta = default_eta(ep.reference_path, tau, eta_mode)
    return EpisodeMetrics(
        episode_id=ep.episode_id,
        ne=navigation_error(final, ep.goal),
        success=ok,
        oracle_success=oracle_success(path, ep.goal, tau),
        spl=spl(ok, ep.shortest_path_length, P),
        ndtw=ndtw(path, ep.reference_path, eta),
        path_length=P,
    )


def aggregate(episodes: Iterable, eta_mode: str = "tau_len") -> MetricReport:
    per = [e if isinstance(e, EpisodeMetrics) else evaluate_episode(e, eta_mode) for e in episodes]
    if not per:
        raise EmptyCorpus("no episodes to aggregate")
    n = len(per)
    return MetricReport(
        ne=sum(e.ne for e in per) / n,
        sr=sum(e.success for e in per) / n,
        osr=sum(e.oracle_success for e in per) / n,
        spl=sum(e.spl for e in per) / n,
        ndtw=sum(e.ndtw for e in per) / n,
        n=n,
        per_episode=per,
    )


def format_table(rows: Sequence[tuple[str, MetricReport]], title: str = "") -> str:
    """Plain-text table with columns NE, OS, SR, SPL, nDTW (rates in percent)."""
    header = f"{'Method':<20} {'NE↓':>7} {'OS↑':>7} {'SR↑':>7} {'SPL↑':>7} {'nDTW↑':>7} {'N':>6}"
    lines = [title] if title else []
    lines += [header, "-" * len(header)]
    for name, r in rows:
        lines.append(
            f"{name:<20} {r.ne:>7.2f} {100 * r.osr:>7.1f} {100 * r.sr:>7.1f} "
            f"{100 * r.spl:>7.1f} {100 * r.ndtw:>7.1f} {r.n:>6d}"
        )
    return "\n".join(lines) + "\n"
