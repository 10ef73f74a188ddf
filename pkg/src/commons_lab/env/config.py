from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from commons_lab.env.maps import GridMap, default_map, parse_map, sanity_map, small_map
from commons_lab.errors import ConfigError


@dataclass(frozen=True)
class EnvConfig:
    map: GridMap = field(default_factory=default_map)
    num_agents: int = 2
    episode_length: int = 1000
    regrowth_rate_per_neighbor: float = 0.005
    regrowth_radius: int = 2
    apple_reward: float = 1.0
    beam_length: int = 5
    beam_width: int = 1
    removal_duration: int = 25
    observation_window: int = 9
    # Variant knob: after regrowth, top the patch back up to this many apples.
    # 0 (default) keeps the pure neighbour-proportional law.
    min_apples: int = 0

    def __post_init__(self):
        if self.observation_window < 3 or self.observation_window % 2 == 0:
            raise ConfigError(f"observation_window must be odd and >= 3, got {self.observation_window}")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        if self.num_agents < 0:
            raise ConfigError("num_agents must be >= 0")
        if self.num_agents > len(self.map.agent_spawn_points):
            raise ConfigError(
                f"num_agents={self.num_agents} but map has {len(self.map.agent_spawn_points)} spawn points"
            )
        if not 0.0 <= self.regrowth_rate_per_neighbor <= 1.0:
            raise ConfigError("regrowth_rate_per_neighbor must lie in [0, 1]")
        if self.regrowth_radius < 0:
            raise ConfigError("regrowth_radius must be >= 0")
        if self.regrowth_rate_per_neighbor * self.max_neighbor_count() > 1.0:
            raise ConfigError(
                "regrowth_rate_per_neighbor x max neighbour count exceeds 1 on this map"
            )
        if self.beam_length < 0 or self.beam_width < 1 or self.beam_width % 2 == 0:
            raise ConfigError("beam_length must be >= 0 and beam_width odd and >= 1")
        if self.removal_duration < 0:
            raise ConfigError("removal_duration must be >= 0")
        if not 0 <= self.min_apples <= len(self.map.apple_spawn_cells):
            raise ConfigError("min_apples must be within [0, number of apple spawn cells]")

    def max_neighbor_count(self) -> int:
        rad = self.regrowth_radius
        cells = self.map.apple_spawn_cells
        best = 0
        for (r, c) in cells:
            n = sum(1 for (r2, c2) in cells
                    if (r2, c2) != (r, c) and max(abs(r - r2), abs(c - c2)) <= rad)
            best = max(best, n)
        return best

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "map"}
        d["map"] = self.map.to_text()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        names = {f.name for f in fields(cls)} | {"preset"}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown env config keys: {sorted(unknown)}")
        base = preset(data.pop("preset")) if "preset" in data else cls()
        if "map" in data:
            m = data.pop("map")
            data["map"] = m if isinstance(m, GridMap) else parse_map(m)
        try:
            return replace(base, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def preset(name: str) -> EnvConfig:
    """Named environment variants.

    ``default``: the 15x15 two-agent arena. ``small7``: 7x7 two-agent variant.
    ``small7_single``: the same map with one agent and at least one apple
    always present. ``sanity5``: 5x5 single agent, patch always regrows.
    """
    if name == "default":
        return EnvConfig()
    if name == "small7":
        return EnvConfig(map=small_map(2), num_agents=2, episode_length=100,
                         regrowth_rate_per_neighbor=0.05, observation_window=7,
                         removal_duration=10, beam_length=3)
    if name == "small7_single":
        return EnvConfig(map=small_map(1), num_agents=1, episode_length=100,
                         regrowth_rate_per_neighbor=0.05, observation_window=7,
                         removal_duration=10, beam_length=3, min_apples=1)
    if name == "sanity5":
        return EnvConfig(map=sanity_map(), num_agents=1, episode_length=50,
                         regrowth_rate_per_neighbor=0.2, observation_window=5,
                         beam_length=3, min_apples=1)
    raise ConfigError(f"unknown env preset {name!r}")


PRESETS = ("default", "small7", "small7_single", "sanity5")
