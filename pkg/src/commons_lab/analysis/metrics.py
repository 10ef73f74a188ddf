"""Population efficiency, training-curve aggregation and the random baseline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from commons_lab.errors import UsageError


def efficiency(returns) -> float:
    """Per-capita consumption: sum(R_i) / N."""
    returns = list(returns)
    if not returns:
        raise UsageError("efficiency needs at least one return")
    return math.fsum(returns) / len(returns)


@dataclass
class PopulationMetrics:
    returns: list
    depletion_step: int | None
    beam_fires: list
    episode: int = 0
    seed: int = 0
    efficiency: float = field(init=False)

    def __post_init__(self):
        self.efficiency = efficiency(self.returns)

    @property
    def n(self) -> int:
        return len(self.returns)

    def to_dict(self) -> dict:
        return asdict(self)


def consumption_from_log(log) -> list:
    """Apples eaten per agent, counted from a re-simulation of the EpisodeLog."""
    from commons_lab.env.episode_log import resimulate

    counts = [0] * log.config.num_agents

    def on_result(result):
        for agent_id, _ in result.consumed:
            counts[agent_id] += 1

    resimulate(log, on_result=on_result)
    return counts


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over at most ``window`` points (shorter at the start)."""
    x = np.asarray(series, dtype=np.float64)
    if window <= 1 or x.size == 0:
        return x.copy()
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty_like(x)
    for i in range(x.size):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


@dataclass
class TrainingCurve:
    """Per-run efficiency series aggregated across runs, episode by episode."""

    runs: dict = field(default_factory=dict)  # run id -> list of efficiencies
    smoothing: int = 20

    def add(self, run_id, series) -> None:
        self.runs[run_id] = list(series)

    def aggregate(self) -> tuple[np.ndarray, np.ndarray]:
        """(mean, std) across runs after smoothing each run; truncated to the shortest run."""
        if not self.runs:
            raise UsageError("no runs to aggregate")
        n = min(len(s) for s in self.runs.values())
        smoothed = np.stack([moving_average(s[:n], self.smoothing) for s in self.runs.values()])
        mean = smoothed.mean(axis=0)
        std = np.sqrt(np.maximum(((smoothed - mean) ** 2).mean(axis=0), 0.0))
        return mean, std


def random_baseline(config, episodes: int, seed: int, fire_probability: float = 1 / 8) -> tuple[float, float]:
    """Mean and (population) std of per-episode efficiency for uniformly random agents."""
    from commons_lab.agents.scripted import ScriptedAgent, ScriptedPolicyConfig
    from commons_lab.rollout import episode_seed, run_episode

    if episodes < 1:
        raise UsageError("episodes must be >= 1")
    effs = []
    agents = [ScriptedAgent(ScriptedPolicyConfig("random", fire_probability=fire_probability))
              for _ in range(config.num_agents)]
    for ep in range(episodes):
        out = run_episode(config, agents, episode_seed(seed, ep), explore=True, learn=False, episode=ep)
        effs.append(efficiency(out.returns))
    return float(np.mean(effs)), float(np.std(effs))
