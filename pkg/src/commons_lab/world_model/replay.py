from __future__ import annotations

from collections import deque

import numpy as np

from commons_lab.errors import UsageError


class SequenceReplay:
    """Ring buffer of whole episodes, bounded by total step count.

    Each stored episode holds aligned arrays ``obs[t]``, ``prev_action[t]``
    (-1 at the first step) and ``reward[t]`` (reward that came with obs[t]).
    Sampling returns contiguous windows from a single episode.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise UsageError("replay capacity must be >= 1")
        self.capacity = capacity
        self.episodes: deque = deque()
        self.total_steps = 0

    def __len__(self):
        return self.total_steps

    def add_episode(self, obs: np.ndarray, prev_action: np.ndarray, reward: np.ndarray) -> None:
        n = len(obs)
        if not (len(prev_action) == len(reward) == n):
            raise UsageError("episode arrays must have equal length")
        if n > self.capacity:
            obs, prev_action, reward = obs[-self.capacity:], prev_action[-self.capacity:], reward[-self.capacity:]
            n = self.capacity
        self.episodes.append((np.asarray(obs, np.float32), np.asarray(prev_action, np.int64),
                              np.asarray(reward, np.float32)))
        self.total_steps += n
        while self.total_steps > self.capacity:
            old = self.episodes.popleft()
            self.total_steps -= len(old[0])

    def can_sample(self, batch_size: int, seq_len: int) -> bool:
        return (self.total_steps >= batch_size * seq_len
                and any(len(e[0]) >= seq_len for e in self.episodes))

    def sample(self, batch_size: int, seq_len: int, rng: np.random.Generator):
        """Return (obs[B, L, ...], prev_action[B, L], reward[B, L], is_first[B, L])."""
        eligible = [e for e in self.episodes if len(e[0]) >= seq_len]
        if not eligible:
            raise UsageError(f"no stored episode is at least {seq_len} steps long")
        weights = np.array([len(e[0]) - seq_len + 1 for e in eligible], dtype=np.float64)
        picks = rng.choice(len(eligible), size=batch_size, p=weights / weights.sum())
        obs, act, rew = [], [], []
        for k in picks:
            o, a, r = eligible[k]
            start = int(rng.integers(0, len(o) - seq_len + 1))
            obs.append(o[start:start + seq_len])
            act.append(a[start:start + seq_len])
            rew.append(r[start:start + seq_len])
        act = np.stack(act)
        return np.stack(obs), act, np.stack(rew), act < 0
