"""Execution-horizon ablation: one metric row per mode, pooled over policy seeds."""
from __future__ import annotations

from dataclasses import dataclass

from .entropy import ExecMode
from .grammar import ActionUnits
from .hpac import HpacConfig
from .metrics import MetricReport, aggregate, format_table
from .sim.episode import EpisodeResult, run_batch
from .sim.policy import NoiseModel


@dataclass
class AblationRow:
    mode: str
    report: MetricReport
    per_seed_sr: list[float]


def run_ablation(worlds, modes: list[ExecMode], seeds: list[int], policy: str = "noisy",
                 units: ActionUnits = ActionUnits(), hpac: HpacConfig = HpacConfig(),
                 noise: NoiseModel = NoiseModel(), k_max: int = 3,
                 eta_mode: str = "tau_len") -> tuple[list[AblationRow], list[EpisodeResult]]:
    rows, everything = [], []
    for mode in modes:
        pooled, per_seed = [], []
        for seed in seeds:
            results = run_batch(worlds, policy, mode, seed, units, hpac, noise, k_max)
            per_seed.append(aggregate(results, eta_mode).sr)
            pooled.extend(results)
        rows.append(AblationRow(str(mode), aggregate(pooled, eta_mode), per_seed))
        everything.extend(pooled)
    return rows, everything


def ablation_table(rows: list[AblationRow], title: str = "") -> str:
    return format_table([(r.mode, r.report) for r in rows], title)
