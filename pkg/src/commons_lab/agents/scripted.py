"""Agent interface and non-learning baseline policies.

Scripted agents read only their own Observation, like the learners do.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from commons_lab.env.engine import NUM_ACTIONS, Action
from commons_lab.env.render import APPLE, OTHER, WALL
from commons_lab.errors import ConfigError

# first-move preference order for ties
MOVE_ORDER = (
    (Action.MOVE_NORTH, (-1, 0)),
    (Action.MOVE_EAST, (0, 1)),
    (Action.MOVE_SOUTH, (1, 0)),
    (Action.MOVE_WEST, (0, -1)),
)
MOVES = tuple(a for a, _ in MOVE_ORDER)


class Agent(Protocol):
    """What the harness needs from any population member."""

    kind: str

    def reset(self, seed: int) -> None:
        """Start of an episode. Clears per-episode carried state."""

    def act(self, obs: np.ndarray, explore: bool = True) -> int:
        ...

    def observe_transition(self, obs, action, reward, next_obs, done) -> None:
        ...


@dataclass
class ScriptedPolicyConfig:
    kind: str = "random"  # random | greedy | restrained
    restraint_threshold: int = 1
    fire_probability: float = 1.0 / 8.0

    def __post_init__(self):
        if self.kind not in ("random", "greedy", "restrained"):
            raise ConfigError(f"unknown scripted policy kind {self.kind!r}")
        if self.restraint_threshold < 1:
            raise ConfigError("restraint_threshold must be >= 1")
        if not 0.0 <= self.fire_probability <= 1.0:
            raise ConfigError("fire_probability must lie in [0, 1]")


def _mask(obs: np.ndarray, color) -> np.ndarray:
    return np.all(obs == np.asarray(color, dtype=obs.dtype), axis=-1)


def apple_mask(obs: np.ndarray) -> np.ndarray:
    return _mask(obs, APPLE)


def _distance_to_apples(passable: np.ndarray, apples: np.ndarray) -> np.ndarray:
    """Multi-source BFS distance from every cell to its nearest apple (-1 if none)."""
    h, w = passable.shape
    dist = np.full((h, w), -1, dtype=np.int64)
    queue = deque()
    for r, c in zip(*np.nonzero(apples)):
        dist[r, c] = 0
        queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        for _, (dr, dc) in MOVE_ORDER:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and passable[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = dist[r, c] + 1
                queue.append((nr, nc))
    return dist


def greedy_move(obs: np.ndarray) -> int | None:
    """First move of a shortest path to the nearest visible apple, or None."""
    apples = apple_mask(obs)
    if not apples.any():
        return None
    passable = ~_mask(obs, WALL)
    dist = _distance_to_apples(passable, apples)
    h, w = apples.shape
    cr, cc = h // 2, w // 2
    best = None
    for action, (dr, dc) in MOVE_ORDER:
        nr, nc = cr + dr, cc + dc
        if 0 <= nr < h and 0 <= nc < w and dist[nr, nc] >= 0:
            if best is None or dist[nr, nc] < best[0]:
                best = (dist[nr, nc], action)
    return None if best is None else int(best[1])


def random_action(rng: np.random.Generator, fire_probability: float) -> int:
    if rng.random() < fire_probability:
        return int(Action.FIRE_BEAM)
    return int(rng.integers(0, NUM_ACTIONS - 1))  # 0..6, FIRE_BEAM is 7


class ScriptedAgent:
    """Random, greedy or restrained harvester with its own seeded generator."""

    learns = False

    def __init__(self, config: ScriptedPolicyConfig | None = None, seed: int = 0):
        self.config = config or ScriptedPolicyConfig()
        self.kind = self.config.kind
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.rng = np.random.default_rng(seed)

    def act(self, obs: np.ndarray, explore: bool = True) -> int:
        kind = self.config.kind
        if kind == "random":
            return random_action(self.rng, self.config.fire_probability)
        if kind == "restrained":
            return restrained_act(obs, self.rng, self.config.restraint_threshold)
        return greedy_act(obs, self.rng)

    def observe_transition(self, obs, action, reward, next_obs, done) -> None:
        pass


def random_policy_act(obs, rng: np.random.Generator, fire_probability: float = 1 / 8) -> int:
    return random_action(rng, fire_probability)


def greedy_act(obs, rng: np.random.Generator) -> int:
    move = greedy_move(obs)
    return int(MOVES[rng.integers(0, 4)]) if move is None else move


def restrained_act(obs, rng: np.random.Generator, restraint_threshold: int = 1) -> int:
    """Greedy while more than ``restraint_threshold`` apples are visible.

    Each visible rival raises the threshold by one, since both may eat in the
    same step. At or below the threshold the agent still walks towards the
    patch but emits Noop instead of any move that would land on an apple.
    """
    apples = apple_mask(obs)
    rivals = int(_mask(obs, OTHER).sum())
    if int(apples.sum()) <= restraint_threshold + rivals:
        move = greedy_move(obs)
        if move is None:
            return int(MOVES[rng.integers(0, 4)])
        h, w = apples.shape
        dr, dc = dict(MOVE_ORDER)[Action(move)]
        if apples[h // 2 + dr, w // 2 + dc]:
            return int(Action.NOOP)
        return move
    return greedy_act(obs, rng)
