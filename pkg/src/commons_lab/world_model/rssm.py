"""Recurrent state-space world model with grouped categorical latents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS
from commons_lab.nn import (
    GRU,
    MLP,
    Dense,
    ParamStore,
    Tensor,
    categorical_kl,
    concat,
    elu,
    mse,
    onehot,
    sample_categorical_st,
    stop_gradient,
)
from commons_lab.nn import tensor as T
from commons_lab.world_model.config import TrainConfig


@dataclass
class LatentState:
    h: Tensor  # (B, D_h)
    z: Tensor  # (B, G, K) one-hot per group

    def feature(self) -> Tensor:
        b = self.h.shape[0]
        return concat([self.h, self.z.reshape(b, -1)], axis=-1)

    def detach(self) -> "LatentState":
        return LatentState(Tensor(self.h.data.copy()), Tensor(self.z.data.copy()))


class WorldModel:
    def __init__(self, obs_dim: int, cfg: TrainConfig, rng: np.random.Generator,
                 dtype=np.float32, num_actions: int = NUM_ACTIONS):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.num_actions = num_actions
        self.store = ParamStore(dtype)
        s, hid, G, K = self.store, cfg.hidden_size, cfg.groups, cfg.classes
        self.encoder = MLP(s, "enc", [obs_dim, hid, cfg.embed_size], rng)
        self.img_in = Dense(s, "img_in", G * K + num_actions, hid, rng)
        self.gru = GRU(s, "gru", hid, cfg.deter_size, rng)
        self.prior_head = MLP(s, "prior", [cfg.deter_size, hid, G * K], rng)
        self.post_head = MLP(s, "post", [cfg.deter_size + cfg.embed_size, hid, G * K], rng)
        self.decoder = MLP(s, "dec", [cfg.feature_size, hid, obs_dim], rng)
        self.reward_head = MLP(s, "rew", [cfg.feature_size, hid, 1], rng)

    @property
    def dtype(self):
        return self.store.dtype

    def initial(self, batch: int) -> LatentState:
        cfg = self.cfg
        return LatentState(Tensor(np.zeros((batch, cfg.deter_size), self.dtype)),
                           Tensor(np.zeros((batch, cfg.groups, cfg.classes), self.dtype)))

    def action_onehot(self, actions) -> np.ndarray:
        """Integer actions to one-hot rows; negative entries (no action) map to zeros."""
        a = np.asarray(actions)
        out = onehot(np.maximum(a, 0), self.num_actions, self.dtype)
        out[a < 0] = 0.0
        return out

    def _logits(self, head, x: Tensor) -> Tensor:
        return head(x).reshape(x.shape[0], self.cfg.groups, self.cfg.classes)

    def transition(self, state: LatentState, action) -> Tensor:
        """Deterministic path h' = GRU(h, elu(W [z, a]))."""
        b = state.h.shape[0]
        a = action if isinstance(action, Tensor) else Tensor(np.asarray(action, self.dtype))
        x = elu(self.img_in(concat([state.z.reshape(b, -1), a], axis=-1)))
        return self.gru(state.h, x)

    def observe_step(self, state: LatentState, action, obs, rng: np.random.Generator):
        """One filtering step. Returns (posterior state, prior logits, posterior logits)."""
        h = self.transition(state, action)
        obs = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, self.dtype))
        embed = self.encoder(obs.reshape(obs.shape[0], -1))
        post_logits = self._logits(self.post_head, concat([h, embed], axis=-1))
        prior_logits = self._logits(self.prior_head, h)
        z = sample_categorical_st(post_logits, rng)
        return LatentState(h, z), prior_logits, post_logits

    def imagine_step(self, state: LatentState, action, rng: np.random.Generator):
        """Open-loop step: z drawn from the prior. Returns (state, prior logits)."""
        h = self.transition(state, action)
        prior_logits = self._logits(self.prior_head, h)
        return LatentState(h, sample_categorical_st(prior_logits, rng)), prior_logits

    def decode(self, feature: Tensor) -> Tensor:
        return self.decoder(feature)

    def reward(self, feature: Tensor) -> Tensor:
        return self.reward_head(feature).reshape(feature.shape[0])

    def observe_sequence(self, obs: np.ndarray, prev_action: np.ndarray, rng: np.random.Generator,
                         state: LatentState | None = None):
        """Filter a batch of sequences obs[B, L, ...]. Sequence start uses a zero action."""
        B, L = prev_action.shape
        state = state or self.initial(B)
        acts = self.action_onehot(prev_action)
        acts[:, 0] = 0.0
        states, priors, posts = [], [], []
        flat_obs = np.asarray(obs, self.dtype).reshape(B, L, -1)
        for t in range(L):
            state, prior, post = self.observe_step(state, acts[:, t], flat_obs[:, t], rng)
            states.append(state)
            priors.append(prior)
            posts.append(post)
        return states, priors, posts

    def loss(self, obs: np.ndarray, prev_action: np.ndarray, reward: np.ndarray,
             rng: np.random.Generator):
        """Composite model loss over a batch [B, L].

        reconstruction: squared pixel error summed per frame, mean over B and L
        reward: mean squared error of the reward head
        kl: balanced KL, mean over B, L and groups
        """
        cfg = self.cfg
        B, L = prev_action.shape
        states, priors, posts = self.observe_sequence(obs, prev_action, rng)
        feats = T.stack([s.feature() for s in states], axis=1).reshape(B * L, cfg.feature_size)
        target = np.asarray(obs, self.dtype).reshape(B * L, -1)
        recon = mse(self.decode(feats), target) * float(self.obs_dim)
        rew = mse(self.reward(feats), np.asarray(reward, self.dtype).reshape(B * L))
        prior = T.stack(priors, axis=1)
        post = T.stack(posts, axis=1)
        a = cfg.kl_balance
        kl_lhs = categorical_kl(stop_gradient(post), prior).mean()
        kl_rhs = categorical_kl(post, stop_gradient(prior)).mean()
        kl = a * kl_lhs + (1.0 - a) * kl_rhs
        total = recon + rew + cfg.kl_scale * kl
        # kl_lhs and kl_rhs share a value; report the undifferentiated KL
        return total, {"reconstruction": float(recon.data), "reward": float(rew.data),
                       "kl": float(kl_lhs.data)}, states
