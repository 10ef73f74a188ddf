"""Open-loop dream rollouts and latent-state collection from a world-model agent."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from commons_lab.env.engine import create_env, step
from commons_lab.env.render import render_observation, write_ppm
from commons_lab.errors import UsageError
from commons_lab.nn import Tensor, no_grad
from commons_lab.world_model.agent import agent_act
from commons_lab.world_model.behavior import imagine


@dataclass
class DreamRollout:
    frames: np.ndarray  # (delta_t + 1, H, W, 3), frames[0] decodes the context posterior
    rewards: np.ndarray  # (delta_t,) predicted rewards
    actions: np.ndarray  # (delta_t,) actions fed to the prior

    @property
    def delta_t(self) -> int:
        return len(self.frames) - 1

    @property
    def initial_frame(self) -> np.ndarray:
        return self.frames[0]

    @property
    def final_frame(self) -> np.ndarray:
        return self.frames[-1]

    def write(self, directory, context_id) -> list:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for t, frame in enumerate(self.frames):
            p = directory / f"dream_{context_id}_{t}.ppm"
            write_ppm(p, frame)
            paths.append(p)
        return paths


def context_observations(log, length: int, agent_index: int = 0):
    """Observations and previous actions of one agent over the first ``length`` states of a log.

    Only ``length - 1`` logged steps are simulated. Returns (obs list, prev
    actions with -1 first, the state after the prefix).
    """
    if length < 1:
        raise UsageError("context length must be >= 1")
    if length - 1 > len(log.records):
        raise UsageError(f"context length {length} exceeds the {len(log.records) + 1} states in the log")
    if not 0 <= agent_index < log.config.num_agents:
        raise UsageError(f"agent index {agent_index} out of range")
    state = create_env(log.config, log.seed)
    obs = [render_observation(state, agent_index)]
    prev = [-1]
    for rec in log.records[:length - 1]:
        state, res = step(state, rec["actions"])
        obs.append(res.observations[agent_index])
        prev.append(int(rec["actions"][agent_index]))
    return obs, prev, state


def _require_trained(agent) -> None:
    if getattr(agent, "kind", None) != "world_model":
        raise UsageError(f"dream rollouts need a world_model agent, got {getattr(agent, 'kind', type(agent).__name__)!r}")
    if agent.train_steps == 0:
        raise UsageError("world-model agent has never been trained; load a trained checkpoint")


def filter_context(agent, obs, prev, rng: np.random.Generator):
    """Fold a context through observe_step; returns the final posterior LatentState."""
    wm = agent.wm
    state = wm.initial(1)
    with no_grad():
        for o, a in zip(obs, prev):
            state, _, _ = wm.observe_step(state, wm.action_onehot(np.array([a])),
                                          np.asarray(o, wm.dtype).reshape(1, -1), rng)
    return state


def dream_rollout(agent, log, context_length: int, delta_t: int, agent_index: int = 0,
                  seed: int = 0, actions=None) -> DreamRollout:
    """Imagine ``delta_t`` steps after a logged context without touching the simulator.

    Actions come from the agent's actor unless a fixed sequence is given.
    """
    _require_trained(agent)
    if delta_t < 0:
        raise UsageError("delta_t must be >= 0")
    if actions is not None and len(actions) != delta_t:
        raise UsageError(f"got {len(actions)} actions for delta_t={delta_t}")
    rng = np.random.default_rng(seed)
    obs, prev, _ = context_observations(log, context_length, agent_index)
    start = filter_context(agent, obs, prev, rng)
    wm = agent.wm
    with no_grad():
        fixed = None if actions is None else np.asarray(actions, dtype=np.int64)
        traj = imagine(wm, agent.ac, start, delta_t, rng, actions=fixed)
        feats = np.concatenate([s.feature().data for s in traj.states])
        frames = wm.decode(Tensor(feats)).data
    frames = np.clip(frames.astype(np.float32), 0.0, 1.0).reshape(delta_t + 1, *agent.obs_shape)
    rewards = np.array([float(r.data[0]) for r in traj.rewards], dtype=np.float64)
    taken = np.array([int(a.data[0].argmax()) for a in traj.actions], dtype=np.int64)
    return DreamRollout(frames, rewards, taken)


@dataclass
class LatentSamples:
    features: np.ndarray  # (n, feature_size) concat(h, z)
    values: np.ndarray  # (n,) critic estimate
    episode: np.ndarray
    step: np.ndarray
    agent: np.ndarray

    def __len__(self):
        return len(self.values)


def collect_latents(agent, config, episodes: int, seed: int, agent_index: int = 0) -> LatentSamples:
    """Greedy evaluation episodes; records the tracked agent's latent and value every step.

    Every agent slot is driven by the same trained model with its own
    recurrent state.
    """
    from commons_lab.rollout import episode_seed

    if getattr(agent, "kind", None) != "world_model":
        raise UsageError("collect_latents needs a world_model agent")
    feats, vals, eps, steps = [], [], [], []
    wm, ac = agent.wm, agent.ac
    n = config.num_agents
    for ep in range(episodes):
        state = create_env(config, episode_seed(seed, ep))
        rngs = [np.random.default_rng([seed, ep, i]) for i in range(n)]
        carried = [None] * n
        obs = [render_observation(state, i) for i in range(n)]
        while not state.done:
            actions = []
            for i in range(n):
                a, carried[i] = agent_act(wm, ac, carried[i], obs[i], False, rngs[i])
                actions.append(a)
            f = carried[agent_index][0].feature().data
            with no_grad():
                v = ac.value(Tensor(f)).data[0]
            feats.append(f[0].copy())
            vals.append(v)
            eps.append(ep)
            steps.append(state.t)
            state, res = step(state, actions)
            obs = res.observations
    k = len(vals)
    return LatentSamples(np.array(feats).reshape(k, -1), np.array(vals, dtype=np.float64),
                         np.array(eps, dtype=np.int64), np.array(steps, dtype=np.int64),
                         np.full(k, agent_index, dtype=np.int64))

