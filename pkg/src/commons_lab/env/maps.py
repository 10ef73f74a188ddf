"""Grid maps, the text map format and the built-in layouts.

Map text format::

    @orientations 0=E 1=W
    #####
    #0A.#
    #.A1#
    #####

The optional first line starts with ``@orientations`` and gives the initial
facing of each numbered spawn (N, E, S or W, default N). After it, one
character per cell: ``#`` wall, ``.`` empty, ``A`` apple spawn, ``0``-``9``
agent spawn points (ordered by digit). Coordinates are (row, col) with row 0
at the top; North is row - 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from commons_lab.errors import ConfigError

ORIENTATIONS = ("N", "E", "S", "W")
# row/col delta per orientation
DELTAS = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    walls: frozenset
    apple_spawn_cells: frozenset
    agent_spawn_points: tuple = field(default_factory=tuple)  # ((row, col), orientation)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"map must be at least 1x1, got {self.width}x{self.height}")
        for r in range(self.height):
            for c in range(self.width):
                border = r in (0, self.height - 1) or c in (0, self.width - 1)
                if border and (r, c) not in self.walls:
                    raise ConfigError(f"border cell {(r, c)} is not a wall")
        bad = [c for c in self.apple_spawn_cells if c in self.walls]
        if bad:
            raise ConfigError(f"apple spawn cells on walls: {sorted(bad)}")
        cells = [p[0] for p in self.agent_spawn_points]
        if len(set(cells)) != len(cells):
            raise ConfigError("agent spawn points overlap")
        for cell, orient in self.agent_spawn_points:
            if cell in self.walls:
                raise ConfigError(f"agent spawn {cell} is on a wall")
            if orient not in ORIENTATIONS:
                raise ConfigError(f"bad spawn orientation {orient!r}")
            if not self.in_bounds(cell):
                raise ConfigError(f"agent spawn {cell} outside the map")

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_wall(self, cell: Cell) -> bool:
        return not self.in_bounds(cell) or cell in self.walls

    def to_text(self) -> str:
        rows = []
        spawn_at = {cell: i for i, (cell, _) in enumerate(self.agent_spawn_points)}
        for r in range(self.height):
            line = []
            for c in range(self.width):
                cell = (r, c)
                if cell in self.walls:
                    line.append("#")
                elif cell in spawn_at:
                    line.append(str(spawn_at[cell]))
                elif cell in self.apple_spawn_cells:
                    line.append("A")
                else:
                    line.append(".")
            rows.append("".join(line))
        header = "@orientations " + " ".join(
            f"{i}={o}" for i, (_, o) in enumerate(self.agent_spawn_points)
        )
        return header + "\n" + "\n".join(rows) + "\n"


def parse_map(text: str) -> GridMap:
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    orient: dict[int, str] = {}
    if lines and lines[0].startswith("@"):
        head = lines.pop(0).split()
        if head[0] != "@orientations":
            raise ConfigError(f"unknown map header {head[0]!r}")
        for tok in head[1:]:
            try:
                k, v = tok.split("=")
                orient[int(k)] = v.upper()
            except ValueError:
                raise ConfigError(f"bad orientation token {tok!r}") from None
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ConfigError("empty map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise ConfigError("map rows have unequal length")
    walls, apples, spawns = set(), set(), {}
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#":
                walls.add((r, c))
            elif ch == "A":
                apples.add((r, c))
            elif ch.isdigit():
                if int(ch) in spawns:
                    raise ConfigError(f"duplicate agent spawn digit {ch}")
                spawns[int(ch)] = (r, c)
            elif ch != ".":
                raise ConfigError(f"unknown map character {ch!r} at {(r, c)}")
    ids = sorted(spawns)
    if ids != list(range(len(ids))):
        raise ConfigError(f"agent spawn digits must be 0..n-1, got {ids}")
    points = tuple((spawns[i], orient.get(i, "N")) for i in ids)
    return GridMap(width, len(lines), frozenset(walls), frozenset(apples), points)


def _bordered(width: int, height: int) -> set:
    return {(r, c) for r in range(height) for c in range(width)
            if r in (0, height - 1) or c in (0, width - 1)}


def default_map() -> GridMap:
    """15x15 arena, 13-cell diamond patch at (7, 7), spawns in opposite corners."""
    walls = _bordered(15, 15)
    patch = {(7 + dr, 7 + dc) for dr in range(-2, 3) for dc in range(-2, 3)
             if abs(dr) + abs(dc) <= 2}
    spawns = (((1, 1), "E"), ((13, 13), "W"))
    return GridMap(15, 15, frozenset(walls), frozenset(patch), spawns)


def small_map(num_agents: int = 2) -> GridMap:
    """7x7 arena with a 5-cell plus-shaped patch; one or two agents."""
    walls = _bordered(7, 7)
    patch = {(3, 3), (2, 3), (4, 3), (3, 2), (3, 4)}
    spawns = (((1, 1), "E"), ((5, 5), "W"))[:num_agents]
    return GridMap(7, 7, frozenset(walls), frozenset(patch), spawns)


def sanity_map() -> GridMap:
    """5x5 arena, one agent, three apple cells."""
    walls = _bordered(5, 5)
    patch = {(1, 3), (2, 3), (3, 3)}
    return GridMap(5, 5, frozenset(walls), frozenset(patch), (((2, 1), "E"),))
