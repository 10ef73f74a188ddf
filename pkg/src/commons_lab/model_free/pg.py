"""Clipped-surrogate policy gradient learner with GAE (PPO analog)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS
from commons_lab.errors import ConfigError, IncompatibleCheckpointError
from commons_lab.model_free.stacking import FrameStack
from commons_lab.nn import MLP, ParamStore, Tensor, adam_step, backward, clip_grad_norm, mse, no_grad
from commons_lab.nn import checkpoint as ckpt
from commons_lab.nn import tensor as T
from commons_lab.nn.functional import categorical_entropy


@dataclass
class PGConfig:
    clip: float = 0.2
    gae_lambda: float = 0.95
    discount: float = 0.95
    rollout_length: int = 256
    epochs: int = 4
    minibatch_size: int = 64
    entropy_scale: float = 0.01
    value_scale: float = 0.5
    lr: float = 3e-4
    hidden_size: int = 128
    frame_stack: int = 1
    grad_clip: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must lie in (0, 1)")
        for name in ("gae_lambda", "discount"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        for name in ("rollout_length", "epochs", "minibatch_size", "hidden_size", "frame_stack"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PGConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown pg config keys: {sorted(unknown)}")
        return cls(**data)


def gae(rewards, values, dones, last_value: float, discount: float, lambda_: float):
    """Generalised advantage estimates and value targets for one rollout.

    ``dones[t]`` marks that the episode ended after step t (no bootstrap).
    """
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    next_value = last_value
    for t in reversed(range(n)):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + discount * next_value * nonterminal - values[t]
        running = delta + discount * lambda_ * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + np.asarray(values, dtype=np.float64)


class PolicyValueNet:
    def __init__(self, obs_dim: int, cfg: PGConfig, rng: np.random.Generator, dtype=np.float32):
        self.store = ParamStore(dtype)
        hid = cfg.hidden_size
        self.policy = MLP(self.store, "pi", [obs_dim, hid, hid, NUM_ACTIONS], rng, out_scale=0.01)
        self.value = MLP(self.store, "v", [obs_dim, hid, hid, 1], rng)

    def __call__(self, obs):
        x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, self.store.dtype))
        return self.policy(x), self.value(x).reshape(x.shape[0])


def surrogate_loss(logits: Tensor, actions, old_logprob, advantages, clip: float):
    """-mean(min(r A, clip(r, 1 - clip, 1 + clip) A)); also returns the ratios."""
    logp = T.take_along_last(T.log_softmax(logits), np.asarray(actions))
    ratio = T.exp(logp - Tensor(np.asarray(old_logprob, logits.dtype)))
    adv = Tensor(np.asarray(advantages, logits.dtype))
    surr = T.minimum(ratio * adv, T.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)
    return -surr.mean(), ratio


def pg_update(net: PolicyValueNet, cfg: PGConfig, rollout: dict, rng: np.random.Generator) -> dict:
    """Several epochs of minibatch updates on one completed rollout.

    ``rollout`` holds arrays obs, actions, rewards, values, logprobs, dones and
    the scalar ``last_value`` used to bootstrap an unfinished final episode.
    """
    adv, ret = gae(rollout["rewards"], rollout["values"], rollout["dones"], rollout["last_value"],
                   cfg.discount, cfg.gae_lambda)
    norm_adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    obs, actions, old_logp = rollout["obs"], rollout["actions"], rollout["logprobs"]
    n = len(actions)
    ratios, losses, clipped = [], [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            logits, value = net(obs[idx])
            pol_loss, ratio = surrogate_loss(logits, actions[idx], old_logp[idx], norm_adv[idx], cfg.clip)
            v_loss = mse(value, ret[idx].astype(value.dtype))
            ent = categorical_entropy(logits).mean()
            loss = pol_loss + cfg.value_scale * v_loss - cfg.entropy_scale * ent
            net.store.zero_grad()
            backward(loss)
            clip_grad_norm(net.store, cfg.grad_clip)
            adam_step(net.store, cfg.lr)
            ratios.append(float(ratio.data.mean()))
            clipped.append(float((np.abs(ratio.data - 1.0) > cfg.clip).mean()))
            losses.append(float(loss.data))
    return {"loss": float(np.mean(losses)), "mean_ratio": float(np.mean(ratios)),
            "clip_fraction": float(np.mean(clipped)), "mean_advantage": float(adv.mean())}


class PGAgent:
    kind = "pg"
    learns = True

    def __init__(self, obs_shape: tuple, cfg: PGConfig | None = None, seed: int = 0):
        self.cfg = cfg or PGConfig()
        self.obs_shape = tuple(obs_shape)
        self.seed = seed
        obs_dim = int(np.prod(obs_shape)) * self.cfg.frame_stack
        self.net = PolicyValueNet(obs_dim, self.cfg, np.random.default_rng([seed, 0]))
        self.rng = np.random.default_rng([seed, 1])
        self.stack = FrameStack(self.cfg.frame_stack, int(np.prod(obs_shape)))
        self._buf = {k: [] for k in ("obs", "actions", "rewards", "values", "logprobs", "dones")}
        self._pending = None
        self._stats: list = []

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.rng = np.random.default_rng([seed, 1])
        self.stack.reset()
        self._pending = None

    def act(self, obs: np.ndarray, explore: bool = True) -> int:
        x = self.stack.push(obs)
        with no_grad():
            logits, value = self.net(x[None])
        lg = logits.data[0].astype(np.float64)
        logp = lg - lg.max()
        logp -= np.log(np.exp(logp).sum())
        if explore:
            a = int(self.rng.choice(NUM_ACTIONS, p=np.exp(logp)))
        else:
            a = int(np.argmax(lg))
        self._pending = (x, a, float(value.data[0]), float(logp[a])) if explore else None
        return a

    def observe_transition(self, obs, action, reward, next_obs, done) -> None:
        if self._pending is None:
            return
        x, a, v, lp = self._pending
        self._pending = None
        for key, val in zip(("obs", "actions", "rewards", "values", "logprobs", "dones"),
                            (x, a, float(reward), v, lp, bool(done))):
            self._buf[key].append(val)
        if len(self._buf["actions"]) >= self.cfg.rollout_length:
            last_value = 0.0
            if not done:
                nxt = self.stack.peek(next_obs)
                with no_grad():
                    last_value = float(self.net(nxt[None])[1].data[0])
            rollout = {k: np.asarray(v) for k, v in self._buf.items()}
            rollout["last_value"] = last_value
            self._stats.append(pg_update(self.net, self.cfg, rollout, self.rng))
            self._buf = {k: [] for k in self._buf}

    def train_epoch(self) -> dict:
        if not self._stats:
            return {"status": "collecting", "rollout_steps": len(self._buf["actions"])}
        out = {k: float(np.mean([s[k] for s in self._stats])) for k in self._stats[0]}
        out["updates"] = len(self._stats)
        out["status"] = "trained"
        self._stats = []
        return out

    def save(self, path) -> None:
        meta = {"kind": self.kind, "obs_shape": list(self.obs_shape), "num_actions": NUM_ACTIONS,
                "pg_config": self.cfg.to_dict(), "seed": self.seed}
        ckpt.save(path, self.net.store.state_dict(), meta)

    @classmethod
    def load(cls, path, obs_shape: tuple | None = None) -> "PGAgent":
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != cls.kind:
            raise IncompatibleCheckpointError(f"{path} is a {meta.get('kind')!r} checkpoint, not pg")
        stored = tuple(meta["obs_shape"])
        if obs_shape is not None and tuple(obs_shape) != stored:
            raise IncompatibleCheckpointError(
                f"checkpoint observation shape {stored} does not match environment shape {tuple(obs_shape)}")
        agent = cls(stored, PGConfig.from_dict(meta["pg_config"]), seed=meta.get("seed", 0))
        agent.net.store.load_state_dict(tensors)
        return agent
