"""Evaluation, replay and analysis commands. Each writes its artifacts under ``out``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from commons_lab.analysis.dream import collect_latents, dream_rollout
from commons_lab.analysis.metrics import random_baseline
from commons_lab.analysis.projection import project_2d
from commons_lab.env.config import EnvConfig
from commons_lab.env.engine import create_env, step
from commons_lab.env.episode_log import EpisodeLog, resimulate
from commons_lab.env.render import render_global, render_observation, write_frame_dump
from commons_lab.errors import IncompatibleCheckpointError, UsageError
from commons_lab.harness.runner import evaluate, load_agent, obs_shape
from commons_lab.world_model.agent import agent_act


def _out_dir(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_eval(agents: list, env: EnvConfig, episodes: int, seed: int, out) -> dict:
    """``agents``: one checkpoint path or scripted kind per population slot."""
    if len(agents) != env.num_agents:
        raise UsageError(f"{len(agents)} agents given but the environment has {env.num_agents} slots")
    if episodes < 1:
        raise UsageError("episodes must be >= 1")
    shape = obs_shape(env)
    population = [load_agent(a, shape, seed=i) for i, a in enumerate(agents)]
    summary = evaluate(env, population, episodes, seed, salt=0)
    summary.update(agents=list(agents), seed=seed)
    (_out_dir(out) / "eval_summary.json").write_text(json.dumps(summary, indent=1))
    return summary


def cmd_replay(log_path, out, upscale: int = 1) -> dict:
    """Re-simulate a logged episode and write one global frame per state (IntegrityError on mismatch)."""
    if upscale < 1:
        raise UsageError("upscale must be >= 1")
    log = EpisodeLog.load(log_path)
    frames = []
    resimulate(log, on_state=lambda s: frames.append((s.t, render_global(s, upscale))))
    names = write_frame_dump(_out_dir(out), frames, episode=log.episode)
    return {"frames": len(names), "dir": str(out), "returns": log.returns()}


def _wm_agent(checkpoint, env: EnvConfig | None = None):
    agent = load_agent(str(checkpoint), obs_shape(env) if env else None)
    if agent.kind != "world_model":
        raise IncompatibleCheckpointError(f"{checkpoint} is a {agent.kind!r} checkpoint; this command needs world_model")
    return agent


def context_log(agent, env: EnvConfig, length: int, seed: int) -> EpisodeLog:
    """A fresh logged prefix of ``length`` states where every slot is driven greedily by ``agent``."""
    state = create_env(env, seed)
    log = EpisodeLog(env, seed)
    rng = np.random.default_rng(seed)
    carried = [None] * env.num_agents
    obs = [render_observation(state, i) for i in range(env.num_agents)]
    for _ in range(length - 1):
        actions = []
        for i in range(env.num_agents):
            a, carried[i] = agent_act(agent.wm, agent.ac, carried[i], obs[i], False, rng)
            actions.append(a)
        t = state.t
        state, res = step(state, actions)
        log.append(t, actions, res, state)
        obs = res.observations
    return log


def cmd_dream(checkpoint, delta_t: int, out, log_path=None, env: EnvConfig | None = None,
              context_length: int = 5, seed: int = 0, agent_index: int = 0, context_id: str | None = None) -> dict:
    """Dream ``delta_t`` steps after a context from ``log_path`` (or a fresh greedy prefix in ``env``)."""
    if log_path is not None:
        log = EpisodeLog.load(log_path)
        agent = _wm_agent(checkpoint, log.config)
        cid = context_id or f"{Path(log_path).stem}_{context_length}"
    else:
        if env is None:
            raise UsageError("cmd_dream needs a log path or an environment config")
        agent = _wm_agent(checkpoint, env)
        log = context_log(agent, env, context_length, seed)
        cid = context_id or f"seed{seed}_{context_length}"
    roll = dream_rollout(agent, log, context_length, delta_t, agent_index=agent_index, seed=seed)
    d = _out_dir(out)
    paths = roll.write(d, cid)
    meta = {"context_id": cid, "delta_t": roll.delta_t, "frames": [p.name for p in paths],
            "rewards": roll.rewards.tolist(), "actions": roll.actions.tolist()}
    (d / f"dream_{cid}.json").write_text(json.dumps(meta, indent=1))
    return meta


def cmd_project(checkpoint, env: EnvConfig, episodes: int, out, method: str = "tsne", seed: int = 0,
                perplexity: float = 30.0, iterations: int = 1000, agent_index: int = 0) -> dict:
    agent = _wm_agent(checkpoint, env)
    samples = collect_latents(agent, env, episodes, seed, agent_index)
    proj = project_2d(samples.features, samples.values, method, perplexity, iterations, seed,
                      episode=samples.episode, step=samples.step)
    path = _out_dir(out) / f"projection_{method}.csv"
    proj.write_csv(path)
    res = {"csv": str(path), "rows": len(proj), "samples": len(samples), "method": method}
    if proj.kl_history:
        res["final_kl"] = proj.kl_history[-1]
    return res


def cmd_baseline(env: EnvConfig, episodes: int, seed: int, out=None) -> dict:
    mean, std = random_baseline(env, episodes, seed)
    res = {"mean_eff": mean, "std_eff": std, "episodes": episodes, "seed": seed}
    if out is not None:
        (_out_dir(out) / "baseline.json").write_text(json.dumps(res, indent=1))
    return res

