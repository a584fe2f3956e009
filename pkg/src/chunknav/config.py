"""Shared tool configuration: one flat ``key = value`` file plus flag overrides.

Every field of :class:`ToolConfig` is a file key and a ``--key-with-dashes``
flag; flags win over the file, the file wins over defaults.
"""
from __future__ import annotations

import argparse
import configparser
from dataclasses import dataclass, fields, replace

from .entropy import ExecMode
from .grammar import ActionUnits
from .hpac import HpacConfig
from .metrics import ETA_MODES
from .sim.policy import NoiseModel

_SECTION = "chunknav"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ToolConfig:
    seed: int = 0
    forward_cm: int = 25
    turn_deg: int = 15
    merge_prob: float = 0.7
    max_chunk_size: int = 3
    k_max: int = 3
    exec_mode: str = "entropy"
    policy: str = "noisy"
    noise_q0: float = 0.05
    noise_g: float = 0.15
    noise_m: float = 0.3
    eta_mode: str = "tau_len"
    success_radius: float = 3.0
    max_steps: int = 500
    episodes: int = 100
    n_seeds: int = 1
    world_rows: int = 24
    world_cols: int = 24
    cell_size: float = 0.5
    host: str = "127.0.0.1"
    port: int = 7070
    timeout: float = 5.0

    def validate(self) -> "ToolConfig":
        try:
            self.units()
            self.hpac()
            self.noise()
            if not self.exec_modes():
                raise ValueError("exec_mode is empty")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (self.k_max >= 1, "k_max must be >= 1"),
            (self.policy in ("oracle", "noisy"), "policy must be oracle or noisy"),
            (self.eta_mode in ETA_MODES, f"eta_mode must be one of {sorted(ETA_MODES)}"),
            (self.success_radius > 0, "success_radius must be positive"),
            (self.max_steps >= 1, "max_steps must be >= 1"),
            (self.episodes >= 1, "episodes must be >= 1"),
            (self.n_seeds >= 1, "n_seeds must be >= 1"),
            (self.world_rows >= 5 and self.world_cols >= 5, "worlds need at least 5x5 cells"),
            (self.cell_size > 0, "cell_size must be positive"),
            (0 <= self.port <= 65535, "port out of range"),
            (self.timeout > 0, "timeout must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def units(self) -> ActionUnits:
        return ActionUnits(self.forward_cm, self.turn_deg)

    def hpac(self) -> HpacConfig:
        return HpacConfig(self.merge_prob, self.max_chunk_size, self.seed)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.noise_q0, self.noise_g, self.noise_m)

    def exec_modes(self) -> list[ExecMode]:
        """``exec_mode`` may list several modes separated by commas."""
        return [ExecMode.parse(m.strip()) for m in self.exec_mode.split(",") if m.strip()]

    def world_kwargs(self) -> dict:
        return dict(rows=self.world_rows, cols=self.world_cols, cell_size=self.cell_size,
                    success_radius=self.success_radius, max_steps=self.max_steps,
                    turn_deg=self.turn_deg)


FIELDS = {f.name: f.type for f in fields(ToolConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def flag_for(key: str) -> str:
    return "--" + key.replace("_", "-")


def _cast(key: str, value):
    try:
        return _CASTS[FIELDS[key]](value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {FIELDS[key]}") from None


def read_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config file: {exc}") from None
    if parser.sections() != [_SECTION]:
        raise ConfigError("config file must be flat key = value lines without sections")
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _cast(key, raw)
    return values


def load_config(path: str | None = None, overrides: dict | None = None) -> ToolConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(read_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for key, value in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = _cast(key, value)
    return replace(ToolConfig(), **values).validate()


def dump_config(cfg: ToolConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration (each flag overrides the config file key)")
    group.add_argument("--config", metavar="FILE", help="key = value configuration file")
    defaults = ToolConfig()
    for name, typ in FIELDS.items():
        group.add_argument(flag_for(name), dest=name, type=_CASTS[typ], default=None,
                           metavar=typ.upper(),
                           help=f"config key {name} (default: {getattr(defaults, name)})")


def config_from_args(args: argparse.Namespace) -> ToolConfig:
    return load_config(getattr(args, "config", None),
                       {name: getattr(args, name, None) for name in FIELDS})
