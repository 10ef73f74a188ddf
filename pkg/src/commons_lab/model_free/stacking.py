from __future__ import annotations

from collections import deque

import numpy as np


class FrameStack:
    """Last ``depth`` flattened observations, oldest first, zero-padded at episode start."""

    def __init__(self, depth: int, frame_size: int):
        self.depth = depth
        self.frame_size = frame_size
        self.frames: deque = deque(maxlen=depth)
        self.reset()

    def reset(self) -> None:
        self.frames.clear()
        for _ in range(self.depth):
            self.frames.append(np.zeros(self.frame_size, dtype=np.float32))

    def push(self, obs) -> np.ndarray:
        self.frames.append(np.asarray(obs, dtype=np.float32).reshape(-1))
        return np.concatenate(self.frames)

    def peek(self, obs) -> np.ndarray:
        """Stack as it would be after pushing ``obs``, without changing state."""
        frames = list(self.frames)[1:] + [np.asarray(obs, dtype=np.float32).reshape(-1)]
        return np.concatenate(frames)
