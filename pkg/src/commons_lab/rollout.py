"""Run one episode of a population in the engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from commons_lab.env.config import EnvConfig
from commons_lab.env.engine import create_env, step
from commons_lab.env.episode_log import EpisodeLog
from commons_lab.env.render import render_observation


def episode_seed(seed: int, episode: int, salt: int = 0) -> int:
    """Deterministic 63-bit seed for (run seed, episode index, purpose)."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, episode, salt])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)


@dataclass
class EpisodeOutcome:
    returns: list
    depletion_step: int | None
    beam_fires: list
    apple_counts: list
    log: EpisodeLog | None = None
    consumed: list | None = None  # apples eaten per agent


def run_episode(config: EnvConfig, agents, seed: int, explore: bool = True, learn: bool = True,
                record: bool = False, episode: int = 0, on_step=None) -> EpisodeOutcome:
    """Play a full episode. Agents get their transitions only when ``learn`` is set.

    ``depletion_step`` is the first post-step counter value at which the patch
    is empty (None if never).
    """
    state = create_env(config, seed)
    for i, agent in enumerate(agents):
        agent.reset(episode_seed(seed, i, salt=1))
    n = config.num_agents
    obs = [render_observation(state, i) for i in range(n)]
    returns = [0.0] * n
    fires = [0] * n
    eaten = [0] * n
    counts = []
    depletion = None
    log = EpisodeLog(config, seed, episode) if record else None
    while not state.done:
        actions = [int(agent.act(o, explore=explore)) for agent, o in zip(agents, obs)]
        t = state.t
        state, res = step(state, actions)
        for i in res.fired:
            fires[i] += 1
        for i, _ in res.consumed:
            eaten[i] += 1
        if learn:
            for i, agent in enumerate(agents):
                agent.observe_transition(obs[i], actions[i], res.rewards[i], res.observations[i],
                                         res.episode_done)
        for i in range(n):
            returns[i] += res.rewards[i]
        counts.append(res.apple_count)
        if depletion is None and res.apple_count == 0:
            depletion = state.t
        if log is not None:
            log.append(t, actions, res, state)
        if on_step is not None:
            on_step(state, res)
        obs = res.observations
    return EpisodeOutcome(returns, depletion, fires, counts, log, eaten)
