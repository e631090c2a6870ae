"""Run configuration: one versioned schema shared by every CLI command.

A config can come from a JSON file, from command-line flags, or both
(flags win). Unknown fields fail loudly with the offending field named,
so typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .gain import SensingParams
from .network import ScenarioConfig
from .pool import PoolConfig
from .sac import SacConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


def _check_keys(section: str, given: dict, allowed: type) -> None:
    valid = {f.name for f in fields(allowed)}
    for key in given:
        if key not in valid:
            raise ConfigError(
                f"{section}.{key}",
                f"unknown field; valid: {', '.join(sorted(valid))}",
            )


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    scenario: dict = field(default_factory=dict)
    pool: dict = field(default_factory=dict)
    sensing: dict = field(default_factory=dict)
    sac: dict = field(default_factory=dict)
    mode: str = "zeros"
    policy: str = "greedy"
    rounds: int = 5
    seeds: tuple = (0,)
    slots: int = 9
    episode_seed_stride: int = 1
    out: str = "runs"
    params: str | None = None
    negative_control: bool = False

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                "schema_version",
                f"expected {SCHEMA_VERSION}, got {self.schema_version}",
            )
        if not self.seeds:
            raise ConfigError("seeds", "must list at least one seed")
        if any(not isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds", "seeds must be integers")
        if self.rounds < 1:
            raise ConfigError("rounds", "must be at least 1")
        if self.slots < 2:
            raise ConfigError("slots", "frame needs at least 2 slots")
        if self.mode not in ("zeros", "serial"):
            raise ConfigError("mode", "must be 'zeros' or 'serial'")
        if self.episode_seed_stride < 0:
            raise ConfigError("episode_seed_stride", "must be nonnegative")
        _check_keys("scenario", self.scenario, ScenarioConfig)
        _check_keys("pool", self.pool, PoolConfig)
        _check_keys("sensing", self.sensing, SensingParams)
        _check_keys("sac", self.sac, SacConfig)
        if "num_slots" in self.pool and self.pool["num_slots"] != self.slots:
            raise ConfigError("pool.num_slots", "conflicts with slots; set slots only")

    # -- section builders ---------------------------------------------------

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(**self.scenario)

    def pool_config(self, slots: int | None = None) -> PoolConfig:
        overrides = {k: v for k, v in self.pool.items() if k != "num_slots"}
        return PoolConfig(num_slots=slots if slots is not None else self.slots,
                          **overrides)

    def sensing_params(self) -> SensingParams:
        return SensingParams(**self.sensing)

    def sac_config(self) -> SacConfig:
        merged = dict(self.sac)
        merged.setdefault("seed", self.seeds[0])
        return SacConfig(**merged)

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["seeds"] = list(self.seeds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        valid = {f.name for f in fields(cls)}
        for key in data:
            if key not in valid:
                raise ConfigError(key, f"unknown field; valid: {', '.join(sorted(valid))}")
        merged = dict(data)
        if "seeds" in merged:
            merged["seeds"] = tuple(merged["seeds"])
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}")
        except json.JSONDecodeError as err:
            raise ConfigError("config", f"{path} line {err.lineno}: {err.msg}")
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
        return cls.from_dict(data)


def parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ConfigError("seeds", f"not a comma-separated integer list: {text!r}")
