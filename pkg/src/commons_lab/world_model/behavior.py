"""Actor-critic trained on imagined latent trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS
from commons_lab.nn import (
    MLP,
    ParamStore,
    Tensor,
    adam_step,
    backward,
    categorical_entropy,
    clip_grad_norm,
    mse,
    sample_categorical_st,
    stop_gradient,
)
from commons_lab.nn import tensor as T
from commons_lab.world_model.config import TrainConfig
from commons_lab.world_model.rssm import LatentState, WorldModel


def lambda_returns(rewards, values, discount: float, lambda_: float):
    """Backward recursion over an imagined horizon.

    ``rewards[t]`` and ``values[t]`` belong to the state reached after action t
    (t = 0..H-1). Returns R[t] = rewards[t] + discount * ((1 - lambda_) * values[t]
    + lambda_ * R[t + 1]) with R[H] = values[H - 1]. Works on numpy arrays or Tensors.
    """
    H = len(rewards)
    if H == 0:
        return []
    out = [None] * H
    nxt = values[H - 1]
    for t in reversed(range(H)):
        nxt = rewards[t] + discount * ((1.0 - lambda_) * values[t] + lambda_ * nxt)
        out[t] = nxt
    return out


@dataclass
class ImaginedTrajectory:
    states: list  # H + 1 LatentStates, states[0] is the start
    actions: list  # H action tensors (one-hot, straight-through)
    action_logits: list  # H
    rewards: list = field(default_factory=list)  # H predicted reward tensors

    def __len__(self):
        return len(self.actions)


class ActorCritic:
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32,
                 num_actions: int = NUM_ACTIONS):
        self.cfg = cfg
        self.num_actions = num_actions
        sizes = [cfg.feature_size, cfg.hidden_size, cfg.hidden_size]
        self.actor_store = ParamStore(dtype)
        self.actor = MLP(self.actor_store, "actor", sizes + [num_actions], rng, out_scale=0.1)
        self.critic_store = ParamStore(dtype)
        self.critic = MLP(self.critic_store, "critic", sizes + [1], rng)
        self.target_store = ParamStore(dtype)
        self.target = MLP(self.target_store, "critic", sizes + [1], rng)
        self.target_store.copy_from(self.critic_store)
        self.target_store.set_requires_grad(False)
        self.updates = 0

    def value(self, feature: Tensor, target: bool = False) -> Tensor:
        net = self.target if target else self.critic
        return net(feature).reshape(feature.shape[0])

    def sync_target(self) -> None:
        self.target_store.copy_from(self.critic_store)


def imagine(wm: WorldModel, ac: ActorCritic, start: LatentState, horizon: int,
            rng: np.random.Generator, actions=None) -> ImaginedTrajectory:
    """Roll the prior forward ``horizon`` steps without looking at observations.

    Actions come from the actor (straight-through samples) unless a fixed
    integer sequence ``actions[t]`` (shape (H,) or (H, B)) is supplied.
    """
    traj = ImaginedTrajectory([start], [], [])
    state = start
    b = start.h.shape[0]
    for t in range(horizon):
        feat = state.feature()
        logits = ac.actor(feat)
        if actions is None:
            a = sample_categorical_st(logits, rng)
        else:
            a_t = np.broadcast_to(np.asarray(actions[t]), (b,))
            a = Tensor(wm.action_onehot(a_t))
        state, _ = wm.imagine_step(state, a, rng)
        traj.states.append(state)
        traj.actions.append(a)
        traj.action_logits.append(logits)
        traj.rewards.append(wm.reward(state.feature()))
    return traj


def actor_critic_update(wm: WorldModel, ac: ActorCritic, traj: ImaginedTrajectory,
                        discount: float | None = None, lambda_: float | None = None,
                        entropy_scale: float | None = None) -> dict:
    """One actor and one critic step on an imagined batch.

    Actor: maximise the lambda-returns (gradients pass through the learned
    dynamics and the straight-through action samples) plus an entropy bonus.
    Critic: regress onto the stop-gradient lambda-returns, whose bootstrap
    values come from the periodically synced target critic.
    """
    cfg = ac.cfg
    discount = cfg.discount if discount is None else discount
    lambda_ = cfg.lambda_ if lambda_ is None else lambda_
    entropy_scale = cfg.entropy_scale if entropy_scale is None else entropy_scale
    H = len(traj)
    if H == 0:
        return {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0, "value": 0.0}

    values = [ac.value(s.feature(), target=True) for s in traj.states[1:]]
    returns = lambda_returns(traj.rewards, values, discount, lambda_)
    ret = T.stack(returns, axis=0)  # (H, B)
    entropy = T.stack([categorical_entropy(lg) for lg in traj.action_logits], axis=0)
    actor_loss = -(ret.mean()) - entropy_scale * entropy.mean()

    ac.actor_store.zero_grad()
    wm.store.zero_grad()
    backward(actor_loss)
    clip_grad_norm(ac.actor_store, cfg.grad_clip)
    adam_step(ac.actor_store, cfg.actor_lr)
    wm.store.zero_grad()

    feats = T.stack([Tensor(s.feature().data) for s in traj.states[:-1]], axis=0)
    feats = feats.reshape(-1, cfg.feature_size)
    v = ac.value(feats)
    critic_loss = mse(v, stop_gradient(ret).reshape(-1))
    ac.critic_store.zero_grad()
    backward(critic_loss)
    clip_grad_norm(ac.critic_store, cfg.grad_clip)
    adam_step(ac.critic_store, cfg.critic_lr)

    ac.updates += 1
    if ac.updates % cfg.target_update_every == 0:
        ac.sync_target()
    return {
        "actor_loss": float(actor_loss.data),
        "critic_loss": float(critic_loss.data),
        "entropy": float(entropy.data.mean()),
        "value": float(v.data.mean()),
    }
