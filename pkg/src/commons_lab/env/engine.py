"""Simulation core for the apple-harvest commons game.

A call to :func:`step` runs these phases in order:

1. clear last step's beams
2. turns
3. moves (conflicts resolved by a per-step priority permutation)
4. beam firing and hit resolution
5. apple consumption by present agents standing on apples
6. regrowth
7. respawn of agents whose removal expired
8. ``t += 1``

Randomness comes from two xoshiro256** streams derived from the seed: the
*conflict* stream draws exactly one Fisher-Yates permutation of the agent
indices per step (phase 3), and the *regrowth* stream draws one uniform per
empty apple spawn cell, scanned row-major, per step (phase 6), followed by
top-up draws when ``min_apples`` is set. Removed agents' actions are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from commons_lab.env.config import EnvConfig
from commons_lab.env.maps import DELTAS, ORIENTATIONS, Cell
from commons_lab.env.rng import Xoshiro256, derive_seed
from commons_lab.errors import UsageError

REGROWTH_STREAM = 1
CONFLICT_STREAM = 2


class Action(IntEnum):
    NOOP = 0
    MOVE_NORTH = 1
    MOVE_SOUTH = 2
    MOVE_EAST = 3
    MOVE_WEST = 4
    TURN_LEFT = 5
    TURN_RIGHT = 6
    FIRE_BEAM = 7


NUM_ACTIONS = len(Action)
MOVE_DIRECTION = {
    Action.MOVE_NORTH: "N",
    Action.MOVE_SOUTH: "S",
    Action.MOVE_EAST: "E",
    Action.MOVE_WEST: "W",
}


@dataclass
class AgentBody:
    id: int
    cell: Cell
    orientation: str
    spawn_point: tuple
    removed_until: int | None = None

    @property
    def present(self) -> bool:
        return self.removed_until is None


@dataclass(frozen=True)
class Beam:
    shooter: int
    origin: Cell
    direction: str
    cells: tuple


@dataclass
class WorldState:
    config: EnvConfig
    apples: set
    agents: list
    active_beams: list
    t: int
    rng_regrowth: Xoshiro256
    rng_conflict: Xoshiro256

    @property
    def done(self) -> bool:
        return self.t >= self.config.episode_length

    def copy(self) -> "WorldState":
        return WorldState(
            config=self.config,
            apples=set(self.apples),
            agents=[AgentBody(a.id, a.cell, a.orientation, a.spawn_point, a.removed_until)
                    for a in self.agents],
            active_beams=list(self.active_beams),
            t=self.t,
            rng_regrowth=self.rng_regrowth.copy(),
            rng_conflict=self.rng_conflict.copy(),
        )

    def snapshot(self) -> tuple:
        """Hashable, complete description of the state (for equality checks)."""
        return (
            tuple(sorted(self.apples)),
            tuple((a.id, a.cell, a.orientation, a.removed_until) for a in self.agents),
            tuple(self.active_beams),
            self.t,
            self.rng_regrowth.state(),
            self.rng_conflict.state(),
        )

    def occupied(self) -> dict:
        return {a.cell: a.id for a in self.agents if a.present}


@dataclass
class StepResult:
    observations: list
    rewards: list
    episode_done: bool
    apple_count: int
    beam_hits: list = field(default_factory=list)
    consumed: list = field(default_factory=list)  # (agent id, cell)
    regrown: list = field(default_factory=list)
    fired: list = field(default_factory=list)  # shooter ids


def create_env(config: EnvConfig, seed: int) -> WorldState:
    agents = []
    for i in range(config.num_agents):
        cell, orient = config.map.agent_spawn_points[i]
        agents.append(AgentBody(i, cell, orient, (cell, orient)))
    return WorldState(
        config=config,
        apples=set(config.map.apple_spawn_cells),
        agents=agents,
        active_beams=[],
        t=0,
        rng_regrowth=Xoshiro256(derive_seed(seed, REGROWTH_STREAM)),
        rng_conflict=Xoshiro256(derive_seed(seed, CONFLICT_STREAM)),
    )


def count_apples_within(state: WorldState, cell: Cell, radius: int) -> int:
    if not state.config.map.in_bounds(cell):
        raise UsageError(f"cell {cell} outside the {state.config.map.height}x{state.config.map.width} map")
    r, c = cell
    return sum(1 for (ar, ac) in state.apples if max(abs(ar - r), abs(ac - c)) <= radius)


def regrowth_probability(state: WorldState, cell: Cell) -> float:
    cfg = state.config
    n = count_apples_within(state, cell, cfg.regrowth_radius)
    return min(1.0, cfg.regrowth_rate_per_neighbor * n)


def regrowth_update(state: WorldState) -> list:
    """Phase 6, in place. Returns the cells that regrew, in scan order.

    Neighbour counts use the apple set from before this update, so apples
    that appear in this phase do not feed other cells in the same step.
    """
    cfg = state.config
    rng = state.rng_regrowth
    empty = sorted(c for c in cfg.map.apple_spawn_cells if c not in state.apples)
    probs = [regrowth_probability(state, c) for c in empty]
    grown = []
    for cell, p in zip(empty, probs):
        if rng.uniform() < p:
            grown.append(cell)
    state.apples.update(grown)
    if len(state.apples) < cfg.min_apples:
        # top-up: uniform choice among empty spawn cells, row-major indexed
        free = sorted(c for c in cfg.map.apple_spawn_cells
                      if c not in state.apples and c not in state.occupied())
        while len(state.apples) < cfg.min_apples and free:
            cell = free.pop(rng.below(len(free)))
            state.apples.add(cell)
            grown.append(cell)
    return grown


def turn(orientation: str, left: bool) -> str:
    i = ORIENTATIONS.index(orientation)
    return ORIENTATIONS[(i - 1) % 4 if left else (i + 1) % 4]


def _resolve_moves(state: WorldState, desired: dict, priority: list) -> dict:
    """Final cell per present agent. ``desired`` maps id -> target cell."""
    current = {a.id: a.cell for a in state.agents if a.present}
    target = dict(current)
    target.update(desired)
    rank = {aid: k for k, aid in enumerate(priority)}
    changed = True
    while changed:
        changed = False
        claims: dict = {}
        for aid, cell in target.items():
            if cell != current[aid]:
                claims.setdefault(cell, []).append(aid)
        for cell, ids in claims.items():
            if len(ids) > 1:
                winner = min(ids, key=rank.__getitem__)
                for aid in ids:
                    if aid != winner:
                        target[aid] = current[aid]
                        changed = True
        holder = {cell: aid for aid, cell in current.items()}
        for aid in list(target):
            cell = target[aid]
            if cell == current[aid]:
                continue
            other = holder.get(cell)
            if other is None:
                continue
            if target[other] == current[other]:
                target[aid] = current[aid]
                changed = True
            elif target[other] == current[aid]:
                # swap through each other: both stay
                target[aid] = current[aid]
                target[other] = current[other]
                changed = True
    return target


def beam_cells(state: WorldState, origin: Cell, direction: str) -> tuple:
    """Cells covered by a beam: ``beam_length`` deep, ``beam_width`` lanes wide,
    each lane cut at its first wall."""
    cfg = state.config
    dr, dc = DELTAS[direction]
    pr, pc = -dc, dr  # perpendicular
    half = cfg.beam_width // 2
    cells = []
    for lane in range(-half, half + 1):
        lr, lc = origin[0] + lane * pr, origin[1] + lane * pc
        if lane != 0 and cfg.map.is_wall((lr, lc)):
            continue
        for k in range(1, cfg.beam_length + 1):
            cell = (lr + k * dr, lc + k * dc)
            if cfg.map.is_wall(cell):
                break
            cells.append(cell)
    return tuple(cells)


def step(state: WorldState, actions) -> tuple[WorldState, StepResult]:
    from commons_lab.env.render import render_observation

    cfg = state.config
    actions = list(actions)
    if len(actions) != cfg.num_agents:
        raise UsageError(f"expected {cfg.num_agents} actions, got {len(actions)}")
    if state.done:
        raise UsageError("episode is done; create a new environment")
    try:
        actions = [Action(int(a)) for a in actions]
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    s = state.copy()
    # 1
    s.active_beams = []
    # 2
    for a, act in zip(s.agents, actions):
        if not a.present:
            continue
        if act == Action.TURN_LEFT:
            a.orientation = turn(a.orientation, left=True)
        elif act == Action.TURN_RIGHT:
            a.orientation = turn(a.orientation, left=False)
    # 3
    priority = s.rng_conflict.permutation(cfg.num_agents)
    desired = {}
    for a, act in zip(s.agents, actions):
        if a.present and act in MOVE_DIRECTION:
            direction = MOVE_DIRECTION[act]
            a.orientation = direction
            dr, dc = DELTAS[direction]
            cell = (a.cell[0] + dr, a.cell[1] + dc)
            if not cfg.map.is_wall(cell):
                desired[a.id] = cell
    for aid, cell in _resolve_moves(s, desired, priority).items():
        s.agents[aid].cell = cell
    # 4
    hits, fired = [], []
    for a, act in zip(s.agents, actions):
        if a.present and act == Action.FIRE_BEAM:
            cells = beam_cells(s, a.cell, a.orientation)
            s.active_beams.append(Beam(a.id, a.cell, a.orientation, cells))
            fired.append(a.id)
    victims = set()
    for beam in s.active_beams:
        covered = set(beam.cells)
        for other in s.agents:
            if other.present and other.id != beam.shooter and other.cell in covered:
                hits.append((beam.shooter, other.id))
                victims.add(other.id)
    for vid in sorted(victims):
        s.agents[vid].removed_until = s.t + cfg.removal_duration
    # 5
    rewards = [0.0] * cfg.num_agents
    consumed = []
    for a in s.agents:
        if a.present and a.cell in s.apples:
            s.apples.discard(a.cell)
            rewards[a.id] += cfg.apple_reward
            consumed.append((a.id, a.cell))
    # 6
    regrown = regrowth_update(s)
    # 7
    for a in s.agents:
        if a.removed_until is not None and s.t >= a.removed_until:
            cell, orient = a.spawn_point
            if cell not in s.occupied():
                a.cell, a.orientation, a.removed_until = cell, orient, None
    # 8
    s.t += 1
    obs = [render_observation(s, i) for i in range(cfg.num_agents)]
    result = StepResult(
        observations=obs,
        rewards=rewards,
        episode_done=s.done,
        apple_count=len(s.apples),
        beam_hits=hits,
        consumed=consumed,
        regrown=regrown,
        fired=fired,
    )
    return s, result
