"""World-model agent: acting, experience collection and the training loop."""

from __future__ import annotations

import contextlib

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS
from commons_lab.errors import IncompatibleCheckpointError
from commons_lab.nn import Tensor, adam_step, backward, clip_grad_norm, no_grad
from commons_lab.nn import checkpoint as ckpt
from commons_lab.world_model.behavior import ActorCritic, actor_critic_update, imagine
from commons_lab.world_model.config import TrainConfig
from commons_lab.world_model.replay import SequenceReplay
from commons_lab.world_model.rssm import LatentState, WorldModel


@contextlib.contextmanager
def frozen(store):
    store.set_requires_grad(False)
    try:
        yield
    finally:
        store.set_requires_grad(True)


class WorldModelAgent:
    kind = "world_model"
    learns = True

    def __init__(self, obs_shape: tuple, cfg: TrainConfig | None = None, seed: int = 0):
        self.cfg = cfg or TrainConfig()
        self.obs_shape = tuple(obs_shape)
        self.obs_dim = int(np.prod(obs_shape))
        self.seed = seed
        init_rng = np.random.default_rng([seed, 0])
        self.wm = WorldModel(self.obs_dim, self.cfg, init_rng)
        self.ac = ActorCritic(self.cfg, init_rng)
        self.rng = np.random.default_rng([seed, 1])
        self.replay = SequenceReplay(self.cfg.replay_capacity)
        self.carried: tuple | None = None
        self._episode: list = []
        self.train_steps = 0

    # -- acting --------------------------------------------------------
    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.rng = np.random.default_rng([seed, 1])
        self.carried = None
        self._episode = []

    def act(self, obs: np.ndarray, explore: bool = True) -> int:
        action, self.carried = agent_act(self.wm, self.ac, self.carried, obs, explore, self.rng)
        return action

    def observe_transition(self, obs, action, reward, next_obs, done) -> None:
        if not self._episode:
            self._episode.append((np.asarray(obs, np.float32).reshape(-1), -1, 0.0))
        self._episode.append((np.asarray(next_obs, np.float32).reshape(-1), int(action), float(reward)))
        if done:
            self.end_episode()

    def end_episode(self) -> None:
        if len(self._episode) > 1:
            obs = np.stack([e[0] for e in self._episode])
            acts = np.array([e[1] for e in self._episode], dtype=np.int64)
            rews = np.array([e[2] for e in self._episode], dtype=np.float32)
            self.replay.add_episode(obs, acts, rews)
        self._episode = []

    # -- learning ------------------------------------------------------
    def train_epoch(self) -> dict:
        return train_epoch(self)

    # -- persistence ---------------------------------------------------
    def state_tensors(self) -> dict:
        out = {}
        for prefix, store in (("wm.", self.wm.store), ("actor.", self.ac.actor_store),
                              ("critic.", self.ac.critic_store), ("target.", self.ac.target_store)):
            for n, p in store:
                out[prefix + n] = p.data
        return out

    def save(self, path) -> None:
        meta = {"kind": self.kind, "obs_shape": list(self.obs_shape), "num_actions": NUM_ACTIONS,
                "train_config": self.cfg.to_dict(), "train_steps": self.train_steps, "seed": self.seed}
        ckpt.save(path, self.state_tensors(), meta)

    @classmethod
    def load(cls, path, obs_shape: tuple | None = None) -> "WorldModelAgent":
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != cls.kind:
            raise IncompatibleCheckpointError(
                f"{path} holds a {meta.get('kind')!r} checkpoint, expected a world_model checkpoint")
        stored = tuple(meta["obs_shape"])
        if obs_shape is not None and tuple(obs_shape) != stored:
            raise IncompatibleCheckpointError(
                f"checkpoint observation shape {stored} does not match environment shape {tuple(obs_shape)}")
        agent = cls(stored, TrainConfig.from_dict(meta["train_config"]), seed=meta.get("seed", 0))
        for prefix, store in (("wm.", agent.wm.store), ("actor.", agent.ac.actor_store),
                              ("critic.", agent.ac.critic_store), ("target.", agent.ac.target_store)):
            store.load_state_dict({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})
        agent.train_steps = meta.get("train_steps", 0)
        return agent


def agent_act(wm: WorldModel, ac: ActorCritic, carried, obs: np.ndarray, explore: bool,
              rng: np.random.Generator):
    """Filter one observation and pick an action.

    ``carried`` is (LatentState, previous action) or None at episode start.
    Returns (action, new carried).
    """
    with no_grad():
        if carried is None:
            state, prev = wm.initial(1), -1
        else:
            state, prev = carried
        a_prev = wm.action_onehot(np.array([prev]))
        flat = np.asarray(obs, wm.dtype).reshape(1, -1)
        state, _, _ = wm.observe_step(state, a_prev, flat, rng)
        logits = ac.actor(state.feature()).data[0].astype(np.float64)
        if explore:
            p = np.exp(logits - logits.max())
            p /= p.sum()
            action = int(rng.choice(len(p), p=p))
        else:
            action = int(np.argmax(logits))
    return action, (state, action)


def train_epoch(agent: WorldModelAgent, steps: int | None = None) -> dict:
    """``steps`` (default train_steps_per_episode) rounds of model then behaviour learning."""
    cfg = agent.cfg
    wm, ac, rng = agent.wm, agent.ac, agent.rng
    if not agent.replay.can_sample(cfg.batch_size, cfg.seq_len):
        return {"status": "warming_up", "replay_steps": len(agent.replay)}
    steps = cfg.train_steps_per_episode if steps is None else steps
    sums: dict = {}
    for _ in range(steps):
        obs, prev_action, reward, _ = agent.replay.sample(cfg.batch_size, cfg.seq_len, rng)
        loss, parts, states = wm.loss(obs, prev_action, reward, rng)
        wm.store.zero_grad()
        backward(loss)
        clip_grad_norm(wm.store, cfg.grad_clip)
        adam_step(wm.store, cfg.model_lr)

        start = LatentState(Tensor(np.concatenate([s.h.data for s in states])),
                            Tensor(np.concatenate([s.z.data for s in states])))
        with frozen(wm.store):
            traj = imagine(wm, ac, start, cfg.horizon, rng)
            stats = actor_critic_update(wm, ac, traj)
        parts.update(stats)
        for k, v in parts.items():
            sums[k] = sums.get(k, 0.0) + v
        agent.train_steps += 1
    out = {k: v / steps for k, v in sums.items()}
    out["status"] = "trained"
    return out

