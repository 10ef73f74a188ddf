import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commons_lab.env import Action, EnvConfig, create_env, parse_map, preset, render_global, render_observation, step
from commons_lab.env.engine import CONFLICT_STREAM, beam_cells, count_apples_within, regrowth_probability, regrowth_update
from commons_lab.env.maps import GridMap, default_map
from commons_lab.env.render import APPLE, EMPTY, OTHER, SELF, WALL, read_ppm, write_frame_dump, write_ppm
from commons_lab.env.rng import Xoshiro256, derive_seed, splitmix64
from commons_lab.errors import ConfigError, UsageError


def chebyshev(a, b):
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def make(text, **kw):
    return EnvConfig(map=parse_map(text), num_agents=kw.pop("num_agents", None) or
                     len(parse_map(text).agent_spawn_points), **kw)


# -- rng -------------------------------------------------------------------

def test_splitmix64_reference_output():
    assert splitmix64(0)[1] == 0xE220A8397B1DCDAF


def test_xoshiro256starstar_reference_outputs():
    r = Xoshiro256.from_state([1, 2, 3, 4])
    assert [r.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]


def test_below_and_permutation_are_in_range():
    r = Xoshiro256(5)
    assert all(0 <= r.below(7) < 7 for _ in range(1000))
    for n in range(1, 6):
        assert sorted(r.permutation(n)) == list(range(n))


# -- create_env ------------------------------------------------------------

def test_default_env_has_full_patch_and_corner_agents():
    s = create_env(EnvConfig(), 0)
    assert len(s.apples) == 13
    assert [a.cell for a in s.agents] == [(1, 1), (13, 13)]
    assert [a.orientation for a in s.agents] == ["E", "W"]
    assert s.t == 0


def test_default_patch_is_the_diamond():
    m = default_map()
    expected = {(r, c) for r in range(15) for c in range(15) if abs(r - 7) + abs(c - 7) <= 2}
    assert m.apple_spawn_cells == expected


def test_create_env_is_deterministic():
    assert create_env(EnvConfig(), 0).snapshot() == create_env(EnvConfig(), 0).snapshot()


def test_even_observation_window_is_rejected():
    with pytest.raises(ConfigError):
        EnvConfig(observation_window=4)


@pytest.mark.parametrize("text", [
    "#####\n#0.0#\n#####",  # duplicate spawn digit
    "#####\n#0A.#\n#...",  # ragged rows
    "####\n#0.#\n#..\n####",
    "#####\n.0A.#\n#####",  # open border
])
def test_invalid_maps_are_config_errors(text):
    with pytest.raises(ConfigError):
        parse_map(text)


def test_spawn_on_wall_rejected():
    with pytest.raises(ConfigError):
        GridMap(3, 3, frozenset({(r, c) for r in range(3) for c in range(3)}), frozenset(), (((1, 1), "N"),))


def test_map_text_round_trip():
    m = default_map()
    assert parse_map(m.to_text()) == m


def test_regrowth_rate_times_neighbours_must_not_exceed_one():
    with pytest.raises(ConfigError):
        EnvConfig(regrowth_rate_per_neighbor=0.5)


# -- step ------------------------------------------------------------------

def test_move_onto_apple_rewards_and_removes_it():
    cfg = make("@orientations 0=E\n#####\n#0A.#\n#####", regrowth_rate_per_neighbor=0.0)
    s = create_env(cfg, 0)
    s2, res = step(s, [Action.MOVE_EAST])
    assert res.rewards == [1.0]
    assert (1, 2) not in s2.apples
    assert s2.agents[0].cell == (1, 2)


def test_wrong_action_count_is_usage_error():
    s = create_env(EnvConfig(), 0)
    with pytest.raises(UsageError):
        step(s, [0])


def test_stepping_a_finished_episode_is_usage_error():
    cfg = EnvConfig(episode_length=1)
    s, _ = step(create_env(cfg, 0), [0, 0])
    with pytest.raises(UsageError):
        step(s, [0, 0])


CONFLICT_MAP = "@orientations 0=N 1=E\n#####\n#1..#\n#.0.#\n#####"


def conflict_winner(seed):
    cfg = make(CONFLICT_MAP)
    s = create_env(cfg, seed)
    s2, _ = step(s, [Action.MOVE_NORTH, Action.MOVE_EAST])  # both target (1, 2)
    moved = [a.id for a in s2.agents if a.cell == (1, 2)]
    assert len(moved) == 1
    loser = 1 - moved[0]
    assert s2.agents[loser].cell == s.agents[loser].cell
    return moved[0]


def test_move_conflict_single_winner_and_regression_value():
    assert conflict_winner(0) == 0
    assert conflict_winner(0) == conflict_winner(0)


def test_move_conflict_winner_follows_priority_permutation():
    for seed in range(20):
        perm = Xoshiro256(derive_seed(seed, CONFLICT_STREAM)).permutation(2)
        assert conflict_winner(seed) == perm[0]


def test_swap_is_blocked():
    cfg = make("@orientations 0=E 1=W\n#####\n#01.#\n#####")
    s2, _ = step(create_env(cfg, 0), [Action.MOVE_EAST, Action.MOVE_WEST])
    assert [a.cell for a in s2.agents] == [(1, 1), (1, 2)]


def test_move_into_wall_stays_and_turns():
    cfg = make("@orientations 0=E\n####\n#0.#\n####")
    s2, _ = step(create_env(cfg, 0), [Action.MOVE_NORTH])
    assert s2.agents[0].cell == (1, 1)
    assert s2.agents[0].orientation == "N"


def test_beam_hits_agent_three_cells_ahead_and_removes_it():
    cfg = make("@orientations 0=E 1=W\n########\n#0..1..#\n########", removal_duration=25)
    s2, res = step(create_env(cfg, 0), [Action.FIRE_BEAM, Action.NOOP])
    assert res.beam_hits == [(0, 1)]
    assert not s2.agents[1].present
    assert s2.agents[1].removed_until == 25


def test_beam_stops_at_wall():
    cfg = make("@orientations 0=E 1=W\n########\n#0.#.1.#\n########")
    s2, res = step(create_env(cfg, 0), [Action.FIRE_BEAM, Action.NOOP])
    assert res.beam_hits == []
    assert s2.active_beams[0].cells == ((1, 2),)


def test_removal_lasts_exactly_removal_duration():
    D = 4
    cfg = make("@orientations 0=E 1=W\n########\n#0..1..#\n########", removal_duration=D)
    s = create_env(cfg, 0)
    t_hit = s.t
    s, _ = step(s, [Action.FIRE_BEAM, Action.NOOP])
    absent = 1
    s, _ = step(s, [Action.NOOP, Action.NOOP])
    while not s.agents[1].present:
        absent += 1
        s, _ = step(s, [Action.NOOP, Action.NOOP])
    assert absent == D
    assert s.t == t_hit + D + 1
    assert (s.agents[1].cell, s.agents[1].orientation) == ((1, 4), "W")


def test_removed_agents_actions_are_ignored():
    cfg = make("@orientations 0=E 1=W\n########\n#0..1..#\n########")
    s, _ = step(create_env(cfg, 0), [Action.FIRE_BEAM, Action.NOOP])
    s2, res = step(s, [Action.NOOP, Action.FIRE_BEAM])
    assert res.beam_hits == [] and res.fired == []
    assert s2.agents[1].cell == s.agents[1].cell


def test_removed_observer_sees_black():
    cfg = make("@orientations 0=E 1=W\n########\n#0..1..#\n########")
    _, res = step(create_env(cfg, 0), [Action.FIRE_BEAM, Action.NOOP])
    assert not res.observations[1].any()


# -- regrowth --------------------------------------------------------------

def test_regrowth_probability_formula():
    cfg = EnvConfig()
    s = create_env(cfg, 0)
    centre = (7, 7)
    s.apples = {(7, 5), (7, 6), (6, 7)}
    assert count_apples_within(s, centre, 2) == 3
    assert regrowth_probability(s, centre) == pytest.approx(0.015)


def test_count_apples_matches_brute_force():
    s = create_env(EnvConfig(), 0)
    for cell in [(7, 7), (5, 7), (1, 1), (9, 9)]:
        for radius in range(4):
            brute = sum(1 for a in s.config.map.apple_spawn_cells if chebyshev(a, cell) <= radius)
            assert count_apples_within(s, cell, radius) == brute


def test_count_apples_edge_cases():
    s = create_env(EnvConfig(), 0)
    assert count_apples_within(s, (7, 7), 0) == 1
    s.apples = set()
    assert count_apples_within(s, (7, 7), 2) == 0
    with pytest.raises(UsageError):
        count_apples_within(s, (20, 3), 1)


def test_full_depletion_never_regrows():
    s = create_env(EnvConfig(), 0)
    s.apples = set()
    for _ in range(1000):
        assert regrowth_update(s) == []


def test_regrowth_monte_carlo_n4():
    """One empty cell with 4 neighbouring apples, 100k trials: [0.0186, 0.0214]."""
    s = create_env(EnvConfig(), 0)
    near = {(6, 7), (8, 7), (7, 6), (7, 8)}
    hits = 0
    for _ in range(100_000):
        s.apples = set(near)
        hits += (7, 7) in regrowth_update(s)
    assert 0.0186 <= hits / 100_000 <= 0.0214


def test_regrowth_uses_pre_update_counts():
    cfg = make("@orientations 0=N\n#######\n#AAA..#\n#0....#\n#######", regrowth_rate_per_neighbor=0.3,
               regrowth_radius=1)
    # (1,4) neighbours (1,3) only; (1,5) has no apple within radius 1 before the update
    s = create_env(cfg, 0)
    for _ in range(2000):
        s.apples = {(1, 1), (1, 2), (1, 3)}
        grown = regrowth_update(s)
        assert (1, 5) not in grown


# -- invariants under random play -------------------------------------------

def random_actions(seed, n_agents, steps):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 8, size=(steps, n_agents)).tolist()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), action_seed=st.integers(0, 2**32 - 1))
def test_determinism_bit_identical(seed, action_seed):
    cfg = preset("small7")
    acts = random_actions(action_seed, 2, 60)

    def run():
        s = create_env(cfg, seed)
        out = []
        for a in acts:
            s, r = step(s, a)
            out.append((s.snapshot(), tuple(r.rewards), tuple(map(tuple, r.beam_hits)),
                        tuple(o.tobytes() for o in r.observations)))
        return out

    assert run() == run()


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_bookkeeping_occupancy_and_rewards(seed):
    cfg = preset("small7")
    s = create_env(cfg, seed)
    for a in random_actions(seed, 2, 100):
        before = set(s.apples)
        s2, r = step(s, a)
        eaten = {cell for _, cell in r.consumed}
        assert s2.apples == (before - eaten) | set(r.regrown)
        assert not (set(r.regrown) & (before - eaten))
        assert math.fsum(r.rewards) == cfg.apple_reward * len(r.consumed)
        assert s2.apples <= cfg.map.apple_spawn_cells
        cells = [b.cell for b in s2.agents if b.present]
        assert len(cells) == len(set(cells))
        assert not any(cfg.map.is_wall(c) for c in cells)
        assert r.episode_done == (s2.t == cfg.episode_length)
        assert r.apple_count == len(s2.apples)
        s = s2


def test_beam_geometry_property():
    cfg = EnvConfig()
    s = create_env(cfg, 0)
    for origin in [(1, 1), (7, 7), (13, 12), (2, 13)]:
        for d in "NESW":
            cells = beam_cells(s, origin, d)
            assert len(cells) <= cfg.beam_length
            assert not any(cfg.map.is_wall(c) for c in cells)


def test_depletion_is_permanent_over_10000_steps():
    cfg = EnvConfig(episode_length=10_000)
    s = create_env(cfg, 3)
    s.apples = set()
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        s, r = step(s, rng.integers(0, 8, size=2).tolist())
        assert r.apple_count == 0 and not r.regrown


# -- rendering -------------------------------------------------------------

def test_observation_centre_agent_sees_only_itself():
    cfg = make("@orientations 0=N\n#######\n#.....#\n#.....#\n#..0..#\n#.....#\n#.....#\n#######",
               observation_window=5)
    obs = render_observation(create_env(cfg, 0), 0)
    expected = np.zeros((5, 5, 3), np.float32)
    expected[:] = EMPTY
    expected[2, 2] = SELF
    np.testing.assert_array_equal(obs, expected)


def test_observation_in_corner_pads_with_wall():
    s = create_env(EnvConfig(), 0)
    obs = render_observation(s, 0)  # agent at (1, 1), window 9
    np.testing.assert_array_equal(obs[:4, :], np.broadcast_to(WALL, (4, 9, 3)))
    np.testing.assert_array_equal(obs[:, :4], np.broadcast_to(WALL, (9, 4, 3)))
    np.testing.assert_array_equal(obs[4, 4], SELF)


def test_adjacent_agents_see_each_other_mirrored():
    cfg = make("@orientations 0=E 1=W\n#######\n#.....#\n#.01..#\n#.....#\n#######", observation_window=5)
    s = create_env(cfg, 0)
    o0, o1 = render_observation(s, 0), render_observation(s, 1)
    np.testing.assert_array_equal(o0[2, 3], OTHER)
    np.testing.assert_array_equal(o1[2, 1], OTHER)


def test_global_frame_counts_and_shape():
    s = create_env(EnvConfig(), 0)
    frame = render_global(s)
    assert frame.shape == (15, 15, 3)
    assert int(np.all(frame == APPLE, axis=-1).sum()) == 13
    assert int(np.all(frame == SELF, axis=-1).sum()) == 2
    big = render_global(s, upscale=3)
    assert big.shape == (45, 45, 3)


def test_all_wall_map_renders_uniform_wall():
    m = GridMap(3, 3, frozenset({(r, c) for r in range(3) for c in range(3)}), frozenset(), ())
    cfg = EnvConfig(map=m, num_agents=0, regrowth_rate_per_neighbor=0.0)
    frame = render_global(create_env(cfg, 0))
    np.testing.assert_array_equal(frame, np.broadcast_to(WALL, (3, 3, 3)))


def test_observation_locality():
    cfg = EnvConfig()
    s = create_env(cfg, 0)
    before = render_observation(s, 0)
    s2 = s.copy()
    s2.apples = set()  # patch cells are all outside agent 0's window at (1, 1)
    s2.agents[1].cell = (12, 13)
    np.testing.assert_array_equal(render_observation(s2, 0), before)


def test_ppm_round_trip_and_index(tmp_path):
    s = create_env(EnvConfig(), 0)
    frame = render_global(s, 2)
    write_ppm(tmp_path / "f.ppm", frame)
    np.testing.assert_allclose(read_ppm(tmp_path / "f.ppm"), frame, atol=1 / 255)
    names = write_frame_dump(tmp_path / "dump", [(0, frame), (1, frame)], episode=3)
    assert len(names) == 2
    lines = (tmp_path / "dump" / "index.csv").read_text().splitlines()
    assert lines[0] == "episode,step,file" and lines[1].startswith("3,0,")
