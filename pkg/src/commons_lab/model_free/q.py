"""Replay Q-learner with frame stacking and double-Q targets (R2D2 analog)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS
from commons_lab.errors import ConfigError, IncompatibleCheckpointError, UsageError
from commons_lab.model_free.stacking import FrameStack
from commons_lab.nn import MLP, ParamStore, Tensor, adam_step, backward, clip_grad_norm, mse, no_grad
from commons_lab.nn import checkpoint as ckpt
from commons_lab.nn import tensor as T


@dataclass
class QConfig:
    frame_stack: int = 4
    replay_capacity: int = 50_000
    batch_size: int = 64
    sync_every: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 50_000
    discount: float = 0.95
    lr: float = 1e-4
    hidden_sizes: list = field(default_factory=lambda: [128, 128])
    learning_starts: int = 1000
    train_every: int = 1
    grad_clip: float = 10.0

    def __post_init__(self):
        if self.frame_stack < 1:
            raise ConfigError("frame_stack must be >= 1")
        if self.eps_end > self.eps_start:
            raise ConfigError("epsilon schedule must be non-increasing (eps_end <= eps_start)")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)")
        for name in ("replay_capacity", "batch_size", "sync_every", "eps_decay_steps", "train_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def epsilon(self, step: int) -> float:
        frac = min(1.0, step / self.eps_decay_steps)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "QConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown q config keys: {sorted(unknown)}")
        return cls(**data)


class TransitionReplay:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, obs_size: int, dtype=np.float16):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_size), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0
        self.added = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.added += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size < batch_size:
            raise UsageError(f"replay holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {"obs": self.obs[idx].astype(np.float32), "actions": self.actions[idx],
                "rewards": self.rewards[idx], "next_obs": self.next_obs[idx].astype(np.float32),
                "dones": self.dones[idx]}


class QNetwork:
    def __init__(self, obs_size: int, hidden: list, rng: np.random.Generator, dtype=np.float32,
                 num_actions: int = NUM_ACTIONS):
        self.store = ParamStore(dtype)
        self.net = MLP(self.store, "q", [obs_size, *hidden, num_actions], rng)

    def __call__(self, obs) -> Tensor:
        x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, self.store.dtype))
        return self.net(x)


def double_q_targets(online: QNetwork, target: QNetwork, batch: dict, discount: float) -> np.ndarray:
    """y = r + discount * Q_target(s', argmax_a Q_online(s', a)); y = r on terminal transitions."""
    with no_grad():
        best = online(batch["next_obs"]).data.argmax(axis=-1)
        q_next = np.take_along_axis(target(batch["next_obs"]).data, best[:, None], axis=-1)[:, 0]
    r = np.asarray(batch["rewards"], dtype=np.float64)
    boot = np.where(batch["dones"], 0.0, discount * q_next.astype(np.float64))
    return r + boot


def q_update(online: QNetwork, target: QNetwork, batch: dict, cfg: QConfig) -> dict:
    y = double_q_targets(online, target, batch, cfg.discount)
    q = T.take_along_last(online(batch["obs"]), batch["actions"])
    loss = mse(q, y.astype(q.dtype))
    online.store.zero_grad()
    backward(loss)
    clip_grad_norm(online.store, cfg.grad_clip)
    adam_step(online.store, cfg.lr)
    return {"loss": float(loss.data), "mean_q": float(q.data.mean())}


def sync_target(online: QNetwork, target: QNetwork) -> None:
    target.store.copy_from(online.store)


class QAgent:
    kind = "q"
    learns = True

    def __init__(self, obs_shape: tuple, cfg: QConfig | None = None, seed: int = 0):
        self.cfg = cfg or QConfig()
        self.obs_shape = tuple(obs_shape)
        self.seed = seed
        frame = int(np.prod(obs_shape))
        size = frame * self.cfg.frame_stack
        init = np.random.default_rng([seed, 0])
        self.online = QNetwork(size, list(self.cfg.hidden_sizes), init)
        self.target = QNetwork(size, list(self.cfg.hidden_sizes), init)
        self.target.store.set_requires_grad(False)
        sync_target(self.online, self.target)
        self.replay = TransitionReplay(self.cfg.replay_capacity, size)
        self.rng = np.random.default_rng([seed, 1])
        self.stack = FrameStack(self.cfg.frame_stack, frame)
        self.env_steps = 0
        self.updates = 0
        self._last = None
        self._stats: list = []

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.rng = np.random.default_rng([seed, 1])
        self.stack.reset()
        self._last = None

    def q_values(self, stacked: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.online(stacked[None]).data[0]

    def act(self, obs: np.ndarray, explore: bool = True) -> int:
        x = self.stack.push(obs)
        self._last = x if explore else None
        if explore and self.rng.random() < self.cfg.epsilon(self.env_steps):
            return int(self.rng.integers(0, NUM_ACTIONS))
        return int(np.argmax(self.q_values(x)))

    def observe_transition(self, obs, action, reward, next_obs, done) -> None:
        if self._last is None:
            return
        nxt = self.stack.peek(next_obs)
        self.replay.add(self._last, action, reward, nxt, done)
        self._last = None
        self.env_steps += 1
        cfg = self.cfg
        if (len(self.replay) >= max(cfg.batch_size, cfg.learning_starts)
                and self.env_steps % cfg.train_every == 0):
            self._stats.append(q_update(self.online, self.target, self.replay.sample(cfg.batch_size, self.rng), cfg))
            self.updates += 1
            if self.updates % cfg.sync_every == 0:
                sync_target(self.online, self.target)

    def train_epoch(self) -> dict:
        if not self._stats:
            return {"status": "warming_up", "replay": len(self.replay)}
        out = {k: float(np.mean([s[k] for s in self._stats])) for k in self._stats[0]}
        out.update(status="trained", updates=len(self._stats), epsilon=self.cfg.epsilon(self.env_steps))
        self._stats = []
        return out

    def save(self, path) -> None:
        meta = {"kind": self.kind, "obs_shape": list(self.obs_shape), "num_actions": NUM_ACTIONS,
                "q_config": self.cfg.to_dict(), "seed": self.seed}
        ckpt.save(path, self.online.store.state_dict(), meta)

    @classmethod
    def load(cls, path, obs_shape: tuple | None = None) -> "QAgent":
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != cls.kind:
            raise IncompatibleCheckpointError(f"{path} is a {meta.get('kind')!r} checkpoint, not q")
        stored = tuple(meta["obs_shape"])
        if obs_shape is not None and tuple(obs_shape) != stored:
            raise IncompatibleCheckpointError(
                f"checkpoint observation shape {stored} does not match environment shape {tuple(obs_shape)}")
        cfg = QConfig.from_dict(meta["q_config"])
        cfg.replay_capacity = 1  # evaluation only
        agent = cls(stored, cfg, seed=meta.get("seed", 0))
        agent.online.store.load_state_dict(tensors)
        sync_target(agent.online, agent.target)
        return agent
