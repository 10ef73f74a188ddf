"""EpisodeLog: JSON-lines trajectory record and re-simulation.

Line 1 is a header ``{"type": "header", "config": {...}, "seed": int,
"episode": int}``. Every following line is one step::

    {"t": 0, "actions": [...], "rewards": [...], "apple_count": 13,
     "beam_hits": [[shooter, victim], ...], "agent_cells": [[r, c], ...],
     "removed_flags": [false, ...]}

``t`` is the step index (the state counter before the step). Observations are
not stored; they are re-rendered from the re-simulated states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from commons_lab.env.config import EnvConfig
from commons_lab.env.engine import StepResult, WorldState, create_env, step
from commons_lab.errors import IntegrityError


@dataclass
class EpisodeLog:
    config: EnvConfig
    seed: int
    episode: int = 0
    records: list = field(default_factory=list)

    def append(self, t: int, actions, result: StepResult, state: WorldState) -> None:
        self.records.append({
            "t": t,
            "actions": [int(a) for a in actions],
            "rewards": [float(r) for r in result.rewards],
            "apple_count": result.apple_count,
            "beam_hits": [list(h) for h in result.beam_hits],
            "agent_cells": [list(a.cell) for a in state.agents],
            "removed_flags": [not a.present for a in state.agents],
        })

    def header(self) -> dict:
        return {"type": "header", "config": self.config.to_dict(), "seed": self.seed,
                "episode": self.episode}

    def dumps(self) -> str:
        lines = [json.dumps(self.header())]
        lines += [json.dumps(r) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EpisodeLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise IntegrityError("empty episode log")
        try:
            head = json.loads(lines[0])
            records = [json.loads(ln) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"malformed episode log: {exc}") from None
        if head.get("type") != "header":
            raise IntegrityError("episode log is missing its header record")
        return cls(EnvConfig.from_dict(head["config"]), int(head["seed"]),
                   int(head.get("episode", 0)), records)

    @classmethod
    def load(cls, path) -> "EpisodeLog":
        return cls.loads(Path(path).read_text())

    def returns(self) -> list:
        totals = [0.0] * self.config.num_agents
        for rec in self.records:
            for i, r in enumerate(rec["rewards"]):
                totals[i] += r
        return totals


def run_logged_episode(config: EnvConfig, seed: int, policy, episode: int = 0):
    """Roll out ``policy(state, observations) -> actions`` for one episode."""
    from commons_lab.env.render import render_observation

    state = create_env(config, seed)
    log = EpisodeLog(config, seed, episode)
    obs = [render_observation(state, i) for i in range(config.num_agents)]
    while not state.done:
        actions = policy(state, obs)
        t = state.t
        state, result = step(state, actions)
        log.append(t, actions, result, state)
        obs = result.observations
    return log, state


def resimulate(log: EpisodeLog, on_state=None, on_result=None) -> list:
    """Replay the logged actions from (config, seed) and compare every field.

    Calls ``on_state(state)`` for the initial state and after each step, and
    ``on_result(result)`` after each step. Raises IntegrityError on the first
    mismatch. Returns the list of states.
    """
    state = create_env(log.config, log.seed)
    if on_state:
        on_state(state)
    states = [state]
    for k, rec in enumerate(log.records):
        if rec.get("t") != state.t:
            raise IntegrityError(f"record {k}: logged t={rec.get('t')} but simulator is at t={state.t}")
        state, result = step(state, rec["actions"])
        expected = {
            "rewards": [float(r) for r in result.rewards],
            "apple_count": result.apple_count,
            "beam_hits": [list(h) for h in result.beam_hits],
            "agent_cells": [list(a.cell) for a in state.agents],
            "removed_flags": [not a.present for a in state.agents],
        }
        for key, value in expected.items():
            if rec.get(key) != value:
                raise IntegrityError(
                    f"step {rec['t']}: logged {key}={rec.get(key)!r} but re-simulation gives {value!r}"
                )
        if on_state:
            on_state(state)
        if on_result:
            on_result(result)
        states.append(state)
    return states
