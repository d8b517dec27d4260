"""Run configuration: one JSON-compatible record that fully determines a run."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ..core import ConfigurationError
from ..radio import PROFILES
from ..roadnet import KMH

SCENARIOS = ("grid", "highway")
PROTOCOLS = ("rvep", "rp", "ccn-r", "ccn-p")

_SCENARIO_DEFAULTS = {
    "grid": {"radio": "80211n", "hop_limit": 5, "tomp_distance": 300.0},
    "highway": {"radio": "80211p", "hop_limit": 50, "tomp_distance": 1000.0},
}


@dataclass
class RunConfig:
    scenario: str = "grid"
    protocol: str = "rvep"
    seed: int = 1
    duration: float = 300.0  # s
    flow: float = 300.0  # veh/h per entry corridor
    grid_blocks: int = 2
    spacing: float = 300.0  # m between adjacent intersections
    highway_length: float = 2000.0  # m
    scale: float = 1.0  # multiplies the desk road geometry
    radio: Optional[str] = None
    radio_overrides: dict = field(default_factory=dict)
    interest_table: Optional[dict] = None
    collisions: bool = True
    forward_cancellation: bool = True
    hop_limit: Optional[int] = None  # RP / CCN protocol maximum
    rvep_max_hops: int = 50
    tomp_distance: Optional[float] = None
    prefix_fields: int = 8
    prefix_values: int = 8
    obstacle_length: float = 10.0
    obstacle_speed: float = 20 * KMH
    on_distance: float = 500.0  # notifier placement before the obstacle
    poll_period: float = 1.0
    phase_adjust: float = 300.0
    pit_lifetime: float = 2.0
    collect_window: float = 1.0
    max_reexpress: int = 10
    ccn_timer_k: Optional[float] = None
    ccn_data_addressing: str = "pit"  # or "breadcrumb"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.duration <= 0 or self.flow <= 0:
            raise ConfigurationError("duration and flow must be positive")
        if self.grid_blocks < 1 or self.scale <= 0:
            raise ConfigurationError("grid_blocks and scale must be positive")
        if self.radio is not None and self.radio not in PROFILES:
            raise ConfigurationError(f"unknown radio profile {self.radio!r}")
        if self.prefix_fields < 1 or self.prefix_values < 1:
            raise ConfigurationError("prefix dimensions must be positive")
        if self.hop_limit is not None and not 1 <= self.hop_limit <= 255:
            raise ConfigurationError("hop_limit must be in [1, 255]")
        if self.ccn_data_addressing not in ("breadcrumb", "pit"):
            raise ConfigurationError(f"ccn_data_addressing must be 'breadcrumb' or 'pit', got {self.ccn_data_addressing!r}")

    # resolved values --------------------------------------------------------

    @property
    def radio_profile(self):
        name = self.radio or _SCENARIO_DEFAULTS[self.scenario]["radio"]
        return PROFILES[name].with_overrides(**self.radio_overrides)

    @property
    def protocol_hops(self) -> int:
        return self.hop_limit if self.hop_limit is not None else _SCENARIO_DEFAULTS[self.scenario]["hop_limit"]

    @property
    def reference_distance(self) -> float:
        if self.tomp_distance is not None:
            return self.tomp_distance
        return _SCENARIO_DEFAULTS[self.scenario]["tomp_distance"]

    @property
    def blocks(self) -> int:
        return max(1, int(round(self.grid_blocks * self.scale)))

    @property
    def road_length(self) -> float:
        return self.highway_length * self.scale

    # serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def desk_config(scenario: str = "grid", protocol: str = "rvep", **kw) -> RunConfig:
    return RunConfig(scenario=scenario, protocol=protocol, **kw)


def full_scale_config(scenario: str = "grid", protocol: str = "rvep", **kw) -> RunConfig:
    """Full-size settings: 3x3 blocks or a 10 km highway, 1500 veh/h, 3600 s."""
    base = dict(duration=3600.0, flow=1500.0, grid_blocks=3, highway_length=10000.0, tomp_distance=None)
    if scenario == "highway":
        base["tomp_distance"] = 10000.0
    base.update(kw)
    return RunConfig(scenario=scenario, protocol=protocol, **base)
