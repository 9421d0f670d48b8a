"""World tuning knobs.

Defaults live in ``data/world_config.json``; a user file only needs the keys it
overrides. Keys:

``settle_period``            ticks between global economy settlements (must divide a week)
``qol_lambda``               per-tick fraction by which each quality-of-life indicator
                             moves toward its projection target
``starting_treasury``        currency granted to a newly registered city
``tax_coefficient``          currency per citizen per tick at a 100% tax rate
``maintenance_per_stage``    currency per tick per building stage at 50% maintenance funding
``funding_cost``             currency per tick per unit of funding allocation, times city level
``investment_interest``      interest per tick on deposited capital
``role_caps``                maximum employees per staff role
``slots_by_level``           license slots unlocked at each city level (8 entries)
``build_quota_by_level``     distinct buildings allowed per category at each level (8 entries)
``level_thresholds``         7 promotion rules (level k -> k+1): min_buildings, min_qol, min_cooperation
``cooperation_gate_level``   promotion beyond this level needs cooperation > 0
``npcs_per_registration``    staff added to the common marketplace per new city
``call_duration``            default ticks before an open procurement call expires
``service_fee_divisor``      provided-service fee per tick = base cost in cents // divisor
``service_value``            infrastructure bonus a provided service gives the consumer
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError

DEFAULT_PATH = Path(__file__).parent / "data" / "world_config.json"
WEEK_TICKS = 7 * 24 * 3600

LEVEL_NAMES = ("village", "town", "small_city", "city", "large_city", "region_capital", "metropolitan_area", "metropolis")


@dataclass(frozen=True)
class LevelThreshold:
    min_buildings: int
    min_qol: float
    min_cooperation: int


@dataclass(frozen=True)
class WorldConfig:
    settle_period: int = 3600
    qol_lambda: float = 0.05
    starting_treasury: float = 100000.0
    tax_coefficient: float = 0.0015
    maintenance_per_stage: float = 0.002
    funding_cost: float = 0.004
    investment_interest: float = 2e-7
    role_caps: dict = field(default_factory=dict)
    slots_by_level: tuple = ()
    build_quota_by_level: tuple = ()
    level_thresholds: tuple = ()
    cooperation_gate_level: int = 3
    npcs_per_registration: int = 8
    call_duration: int = 21600
    service_fee_divisor: int = 20000
    service_value: float = 2.0

    def __post_init__(self):
        if self.settle_period <= 0 or WEEK_TICKS % self.settle_period:
            raise ConfigurationError("settle_period must be a positive divisor of one week of ticks")
        if not 0.0 < self.qol_lambda <= 1.0:
            raise ConfigurationError("qol_lambda must lie in (0, 1]")
        for name in ("slots_by_level", "build_quota_by_level"):
            seq = getattr(self, name)
            if len(seq) != 8:
                raise ConfigurationError(f"{name} needs 8 entries")
            if any(b < a for a, b in zip(seq, seq[1:])):
                raise ConfigurationError(f"{name} must be non-decreasing")
        if len(self.level_thresholds) != 7:
            raise ConfigurationError("level_thresholds needs 7 entries")

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "slots_by_level" in data:
            data["slots_by_level"] = tuple(data["slots_by_level"])
        if "build_quota_by_level" in data:
            data["build_quota_by_level"] = tuple(data["build_quota_by_level"])
        if "level_thresholds" in data:
            data["level_thresholds"] = tuple(
                t if isinstance(t, LevelThreshold) else LevelThreshold(**t) for t in data["level_thresholds"]
            )
        return cls(**data)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "level_thresholds":
                v = [t.__dict__ for t in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def replace(self, **changes) -> "WorldConfig":
        data = self.to_dict()
        data.update(changes)
        return WorldConfig.from_dict(data)


def load_config(path=None) -> WorldConfig:
    base = json.loads(DEFAULT_PATH.read_text())
    if path is not None:
        try:
            base.update(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return WorldConfig.from_dict(base)


def default_config() -> WorldConfig:
    return load_config()
