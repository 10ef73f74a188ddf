"""Observation and full-map rendering, plus PPM frame output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from commons_lab.errors import UsageError

WALL = (0.5, 0.5, 0.5)
EMPTY = (0.0, 0.0, 0.0)
APPLE = (0.0, 1.0, 0.0)
SELF = (0.0, 0.0, 1.0)
OTHER = (1.0, 0.0, 0.0)
BEAM = (1.0, 1.0, 0.0)

PALETTE = {"wall": WALL, "empty": EMPTY, "apple": APPLE, "self": SELF, "other": OTHER, "beam": BEAM}

_static_cache: dict = {}


def _static_layer(grid_map, pad: int) -> np.ndarray:
    key = (id(grid_map), pad)
    hit = _static_cache.get(key)
    if hit is not None and hit[0] is grid_map:
        return hit[1]
    h, w = grid_map.height, grid_map.width
    img = np.empty((h + 2 * pad, w + 2 * pad, 3), dtype=np.float32)
    img[:] = WALL
    img[pad:pad + h, pad:pad + w] = EMPTY
    for (r, c) in grid_map.walls:
        img[pad + r, pad + c] = WALL
    if len(_static_cache) > 64:
        _static_cache.clear()
    _static_cache[key] = (grid_map, img)
    return img


def _paint(state, pad: int, observer: int | None) -> np.ndarray:
    img = _static_layer(state.config.map, pad).copy()
    for (r, c) in state.apples:
        img[pad + r, pad + c] = APPLE
    for beam in state.active_beams:
        for (r, c) in beam.cells:
            img[pad + r, pad + c] = BEAM
    for a in state.agents:
        if a.present and a.id != observer:
            img[pad + a.cell[0], pad + a.cell[1]] = OTHER if observer is not None else SELF
    if observer is not None:
        me = state.agents[observer]
        img[pad + me.cell[0], pad + me.cell[1]] = SELF
    return img


def render_observation(state, agent_id: int) -> np.ndarray:
    """Axis-aligned ``window x window x 3`` view centred on the agent."""
    if not 0 <= agent_id < len(state.agents):
        raise UsageError(f"agent id {agent_id} out of range")
    win = state.config.observation_window
    me = state.agents[agent_id]
    if not me.present:
        return np.zeros((win, win, 3), dtype=np.float32)
    half = win // 2
    img = _paint(state, half, agent_id)
    r, c = me.cell
    return img[r:r + win, c:c + win].copy()


def render_global(state, upscale: int = 1) -> np.ndarray:
    """Whole map, one ``upscale x upscale`` block per cell; all agents in SELF colour."""
    if upscale < 1:
        raise UsageError("upscale must be >= 1")
    img = _paint(state, 0, None)
    if upscale > 1:
        img = np.repeat(np.repeat(img, upscale, axis=0), upscale, axis=1)
    return img


def classify_cells(frame: np.ndarray) -> np.ndarray:
    """Nearest palette entry per pixel; returns an array of palette names."""
    names = list(PALETTE)
    colors = np.array([PALETTE[n] for n in names], dtype=np.float32)
    d = ((frame[..., None, :] - colors) ** 2).sum(-1)
    return np.array(names)[d.argmin(-1)]


def apple_intensity(frame: np.ndarray) -> float:
    """Mean apple-channel strength: green minus the mean of red and blue."""
    f = np.asarray(frame, dtype=np.float64)
    return float(np.clip(f[..., 1] - 0.5 * (f[..., 0] + f[..., 2]), 0.0, None).mean())


def to_bytes(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, frame: np.ndarray) -> None:
    """Binary P6, maxval 255."""
    data = to_bytes(frame)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float32) / maxval


def write_frame_dump(directory, frames, episode: int = 0) -> list:
    """Write ``frames`` (iterable of (step, frame)) and append to ``index.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = directory / "index.csv"
    new = not index.exists()
    names = []
    with open(index, "a") as idx:
        if new:
            idx.write("episode,step,file\n")
        for step_i, frame in frames:
            name = f"ep{episode:05d}_t{step_i:05d}.ppm"
            write_ppm(directory / name, frame)
            idx.write(f"{episode},{step_i},{name}\n")
            names.append(name)
    return names
