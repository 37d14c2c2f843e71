"""Engine: tick phases, SIS bookkeeping, neighbor search, determinism."""

import io

import numpy as np
import pytest

from _helpers import check_event_log
from memesim.core import ConfigurationError, EventKind, torus_distance, Position
from memesim.decision import SharingModel, share_probability
from memesim.core import perceive_features
from memesim.engine import (
    SimConfig,
    UniformGrid,
    init_world,
    neighbor_sets_bruteforce,
    neighbor_sets_grid,
    recovery_step,
    recruit_step,
    run,
    share_step,
    step,
    walk_step,
)
from memesim import logio

ALWAYS = SharingModel(1e6, 0.0, 0.0, 0.0)
NEVER = SharingModel(-1e6, 0.0, 0.0, 0.0)


def small_config(**kw):
    base = dict(population=60, recruits=6, memes_per_recruit=2,
                recruit_interval_ticks=4, horizon_ticks=80,
                world_width=20.0, world_height=20.0, step_size=1.0,
                neighbor_radius=2.0, infection_duration_ticks=5,
                master_seed=7)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------

def test_default_config_is_valid():
    assert SimConfig().validate() == []


def test_recruits_above_population_rejected():
    cfg = SimConfig(population=10, recruits=11)
    bad = dict(cfg.validate())
    assert "recruits" in bad
    with pytest.raises(ConfigurationError) as err:
        cfg.ensure_valid()
    assert "recruits" in err.value.fields


def test_validation_lists_every_violated_field():
    cfg = SimConfig(population=0, neighbor_radius=-1.0, horizon_ticks=-5)
    fields = {name for name, _ in cfg.validate()}
    assert {"population", "neighbor_radius", "horizon_ticks"} <= fields


def test_full_recruitment_flag():
    cfg = SimConfig(population=50, recruits=10, recruit_interval_ticks=4,
                    horizon_ticks=20, require_full_recruitment=True)
    assert any(name == "horizon_ticks" for name, _ in cfg.validate())
    assert cfg.with_overrides(horizon_ticks=40).validate() == []


# ---------------------------------------------------------------------------
# init_world
# ---------------------------------------------------------------------------

def test_init_default_world():
    world = init_world(SimConfig())
    assert len(world.xs) == 15000
    assert world.recruited_count == 0
    assert world.meme_count == 0
    assert not world.infections
    assert np.all((world.xs >= 0) & (world.xs < 200.0))
    assert np.all((world.ys >= 0) & (world.ys < 200.0))


def test_init_single_agent_world():
    world = init_world(small_config(population=1, recruits=1))
    assert len(world.xs) == 1


def test_init_is_deterministic():
    a = init_world(small_config())
    b = init_world(small_config())
    assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
    assert np.array_equal(a.perception_seeds, b.perception_seeds)


# ---------------------------------------------------------------------------
# recruit_step
# ---------------------------------------------------------------------------

def test_recruit_cadence_and_quota():
    cfg = small_config(horizon_ticks=40, recruits=6, sharing_model=NEVER)
    world = init_world(cfg)
    seen = []
    for _ in range(cfg.horizon_ticks):
        recruit_step(world)
        seen.append(world.recruited_count)
        world.tick += 1
    # One per eligible tick (0, 4, 8, ...) until the quota of 6.
    assert seen[0] == 1 and seen[3] == 1 and seen[4] == 2
    assert seen[-1] == 6
    assert world.meme_count == 12
    # Recruited count never decreases.
    assert all(b >= a for a, b in zip(seen, seen[1:]))


def test_recruit_off_cadence_is_noop():
    world = init_world(small_config())
    world.tick = 3
    recruit_step(world)
    assert world.recruited_count == 0


def test_recruit_batch_size_session_reading():
    # Alternative cadence reading: a session of several agents per interval.
    cfg = small_config(recruits=7, recruit_batch_size=3, sharing_model=NEVER,
                       horizon_ticks=9)
    out = run(cfg)
    by_tick = {}
    for rec in out.event_records():
        if rec.kind is EventKind.RECRUIT:
            by_tick[rec.tick] = by_tick.get(rec.tick, 0) + 1
    assert by_tick == {0: 3, 4: 3, 8: 1}  # quota caps the last session


def test_recruited_agents_start_infected():
    # View at the first tick boundary: the recruit from tick 0 still has the
    # full duration ahead of it.
    world = init_world(small_config(memes_per_recruit=2, sharing_model=NEVER))
    step(world)
    agent = int(np.flatnonzero(world.recruited)[0])
    state = world.agent_state(agent)
    assert state.recruited
    assert set(state.infections) == {0, 1}
    assert all(v == world.config.infection_duration_ticks
               for v in state.infections.values())
    assert all(v >= 1 for v in state.infections.values())


def test_full_scale_recruitment_totals():
    cfg = SimConfig(sharing_model=NEVER, master_seed=5)
    out = run(cfg)
    counts = {}
    for rec in out.event_records():
        counts[rec.kind] = counts.get(rec.kind, 0) + 1
    assert counts[EventKind.RECRUIT] == 118
    assert counts[EventKind.CREATE] == 236
    recruit_ticks = [r.tick for r in out.event_records()
                     if r.kind is EventKind.RECRUIT]
    assert recruit_ticks == [4 * k for k in range(118)]


# ---------------------------------------------------------------------------
# walk_step
# ---------------------------------------------------------------------------

def test_zero_step_keeps_positions():
    world = init_world(small_config(step_size=0.0))
    xs, ys = world.xs.copy(), world.ys.copy()
    walk_step(world)
    assert np.array_equal(world.xs, xs) and np.array_equal(world.ys, ys)


def test_walk_stays_in_bounds_and_moves_step_size():
    cfg = small_config(step_size=1.5)
    world = init_world(cfg)
    for _ in range(25):
        before = (world.xs.copy(), world.ys.copy())
        walk_step(world)
        assert np.all((world.xs >= 0) & (world.xs < cfg.world_width))
        assert np.all((world.ys >= 0) & (world.ys < cfg.world_height))
        for i in range(0, cfg.population, 7):
            d = torus_distance(Position(before[0][i], before[1][i]),
                               Position(world.xs[i], world.ys[i]),
                               cfg.world_width, cfg.world_height)
            assert d == pytest.approx(1.5, rel=1e-12)


# ---------------------------------------------------------------------------
# share_step / recovery_step
# ---------------------------------------------------------------------------

def test_no_infections_no_events():
    world = init_world(small_config())
    walk_step(world)
    n = len(world.events)
    share_step(world)
    recovery_step(world)
    assert len(world.events) == n


def test_forced_zero_probability_never_exposes():
    out = run(small_config(sharing_model=NEVER, horizon_ticks=60))
    kinds = {r.kind for r in out.event_records()}
    assert EventKind.EXPOSE not in kinds and EventKind.SHARE not in kinds
    assert out.cumulative_exposures[-1] == 0
    # Only recruiter infections exist.
    infects = [r for r in out.event_records() if r.kind is EventKind.INFECT]
    assert len(infects) == 12


def test_two_agent_forced_share():
    # Hand-traced: creator shares at its creation tick, the single neighbor
    # is exposed once and infected once.
    cfg = SimConfig(population=2, recruits=1, memes_per_recruit=1,
                    horizon_ticks=1, world_width=10.0, world_height=10.0,
                    neighbor_radius=15.0, sharing_model=ALWAYS, master_seed=3)
    out = run(cfg)
    counts = {}
    for rec in out.event_records():
        counts[rec.kind] = counts.get(rec.kind, 0) + 1
    assert counts[EventKind.SHARE] == 1
    assert counts[EventKind.EXPOSE] == 1
    assert counts[EventKind.INFECT] == 2  # recruiter seed + the contact
    check_event_log(out.event_records())


def test_infection_lasts_duration_share_steps():
    # With timer resets off, a share-acquired infection takes part in
    # exactly `duration` share phases after the tick it was acquired.
    d = 3
    cfg = SimConfig(population=2, recruits=1, memes_per_recruit=1,
                    horizon_ticks=10, world_width=10.0, world_height=10.0,
                    neighbor_radius=15.0, infection_duration_ticks=d,
                    sharing_model=ALWAYS, reinfection_resets_timer=False,
                    master_seed=3)
    out = run(cfg)
    events = list(out.event_records())
    creator = next(r.agent_id for r in events if r.kind is EventKind.RECRUIT)
    other = 1 - creator
    shares_by_other = [r.tick for r in events
                       if r.kind is EventKind.SHARE and r.agent_id == other]
    assert shares_by_other == [1, 2, d]  # infected at tick 0
    shares_by_creator = [r.tick for r in events
                         if r.kind is EventKind.SHARE and r.agent_id == creator]
    assert shares_by_creator == [0, 1, 2, d]  # creation-tick attempt plus d
    recover_ticks = sorted(r.tick for r in events if r.kind is EventKind.RECOVER)
    assert recover_ticks == [d, d]


def test_timer_one_removes_this_tick():
    cfg = SimConfig(population=2, recruits=1, memes_per_recruit=1,
                    horizon_ticks=4, world_width=50.0, world_height=50.0,
                    neighbor_radius=0.001, step_size=0.0,
                    infection_duration_ticks=1, sharing_model=NEVER,
                    master_seed=1)
    out = run(cfg)
    # Infected at tick 0 with duration 1: shows remaining 1 at the boundary,
    # gone by the end of tick 1.
    assert list(out.currently_infected) == [1, 0, 0, 0]
    recover = [r for r in out.event_records() if r.kind is EventKind.RECOVER]
    assert len(recover) == 1 and recover[0].tick == 1


def test_sis_reinfection_round_trip():
    # Chain of three agents on a line: staggered expiries force a recovered
    # pair to be re-exposed and re-infected later.
    cfg = SimConfig(population=3, recruits=1, memes_per_recruit=1,
                    horizon_ticks=8, world_width=30.0, world_height=30.0,
                    neighbor_radius=1.2, step_size=0.0,
                    infection_duration_ticks=3, sharing_model=ALWAYS,
                    reinfection_resets_timer=False, master_seed=2)
    world = init_world(cfg)
    recruit_step(world)  # quota 1, so the step() below cannot recruit again
    creator = int(np.flatnonzero(world.recruited)[0])
    others = [i for i in range(3) if i != creator]
    # Creator at the end of the line: expiries stagger down the chain.
    world.xs[creator] = 5.0
    world.xs[others[0]] = 6.0
    world.xs[others[1]] = 7.0
    world.ys[:] = 5.0
    for _ in range(cfg.horizon_ticks):
        step(world)
    counts = {}
    for rec in world.events.records():
        if rec.kind is EventKind.INFECT:
            key = (rec.agent_id, rec.meme_id)
            counts[key] = counts.get(key, 0) + 1
    assert max(counts.values()) >= 2  # somebody was reinfected after recovery
    check_event_log(world.events.records())


def test_timer_reset_policy_extends_infection():
    base = dict(population=2, recruits=1, memes_per_recruit=1,
                horizon_ticks=12, world_width=10.0, world_height=10.0,
                neighbor_radius=15.0, infection_duration_ticks=3,
                sharing_model=ALWAYS, master_seed=3)
    with_reset = run(SimConfig(**base, reinfection_resets_timer=True))
    without = run(SimConfig(**base, reinfection_resets_timer=False))
    # Mutual re-exposure keeps resetting timers, so the pair outlives the
    # no-reset run, which dies out at tick d.
    assert int(with_reset.currently_infected[-1]) == 2
    assert int(without.currently_infected[-1]) == 0


# ---------------------------------------------------------------------------
# run-level invariants
# ---------------------------------------------------------------------------

def test_horizon_zero_is_empty():
    out = run(small_config(horizon_ticks=0))
    assert len(out.currently_infected) == 0
    assert len(out.cumulative_exposures) == 0
    assert len(out.events) == 0
    assert out.per_meme_hits == {}


def test_run_determinism_byte_identical_logs(tmp_path):
    cfg = small_config(horizon_ticks=120, sharing_model=SharingModel(-2.0, 0.4, 0.4, 0.2))
    out1 = run(cfg)
    out2 = run(cfg)
    p1, p2 = tmp_path / "a.log", tmp_path / "b.log"
    out1.write_event_log(p1)
    out2.write_event_log(p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(out1.currently_infected, out2.currently_infected)
    assert np.array_equal(out1.cumulative_exposures, out2.cumulative_exposures)
    assert out1.per_meme_hits == out2.per_meme_hits
    other = run(cfg.with_overrides(master_seed=8))
    assert other.per_meme_hits != out1.per_meme_hits


def test_series_consistent_with_event_log():
    cfg = small_config(horizon_ticks=100,
                       sharing_model=SharingModel(-2.0, 0.4, 0.4, 0.2))
    out = run(cfg)
    expose_by_tick = np.zeros(cfg.horizon_ticks, dtype=np.int64)
    for rec in out.event_records():
        if rec.kind is EventKind.EXPOSE:
            expose_by_tick[rec.tick] += 1
    assert np.array_equal(np.cumsum(expose_by_tick), out.cumulative_exposures)
    # Hits table equals EXPOSE counts per meme, zero-filled for every CREATE.
    per_meme = {}
    for rec in out.event_records():
        if rec.kind is EventKind.CREATE:
            per_meme.setdefault(rec.meme_id, 0)
        elif rec.kind is EventKind.EXPOSE:
            per_meme[rec.meme_id] = per_meme.get(rec.meme_id, 0) + 1
    assert per_meme == out.per_meme_hits
    assert np.all(out.currently_infected >= 0)


def test_transition_checker_on_randomized_small_worlds():
    rng = np.random.default_rng(99)
    for trial in range(6):
        cfg = SimConfig(
            population=50,
            recruits=int(rng.integers(2, 10)),
            memes_per_recruit=int(rng.integers(1, 3)),
            recruit_interval_ticks=int(rng.integers(1, 6)),
            horizon_ticks=200,
            world_width=15.0, world_height=15.0,
            step_size=float(rng.uniform(0.2, 1.5)),
            neighbor_radius=float(rng.uniform(0.5, 3.0)),
            infection_duration_ticks=int(rng.integers(1, 12)),
            sharing_model=SharingModel(float(rng.uniform(-3, 0)), 0.5, 0.5, 0.25),
            reinfection_resets_timer=bool(rng.integers(0, 2)),
            master_seed=int(rng.integers(0, 2**32)),
        )
        out = run(cfg)
        check_event_log(out.event_records(), horizon=cfg.horizon_ticks)


def test_saturation_with_global_radius():
    # Radius beyond the torus diameter plus share probability ~1: the meme
    # reaches the whole 50-agent population as soon as its creator shares.
    cfg = SimConfig(population=50, recruits=1, memes_per_recruit=1,
                    horizon_ticks=3, world_width=10.0, world_height=10.0,
                    neighbor_radius=8.0, sharing_model=ALWAYS, master_seed=4)
    out = run(cfg)
    assert int(out.currently_infected[0]) == 50


def test_raising_intercept_does_not_reduce_mean_exposures():
    lo_model = SharingModel(-3.0, 0.4, 0.4, 0.2)
    hi_model = SharingModel(-2.0, 0.4, 0.4, 0.2)
    lo_total = hi_total = 0
    for seed in range(20):
        base = small_config(population=150, horizon_ticks=60, master_seed=seed)
        lo = run(base.with_overrides(sharing_model=lo_model))
        hi = run(base.with_overrides(sharing_model=hi_model))
        lo_total += int(lo.cumulative_exposures[-1])
        hi_total += int(hi.cumulative_exposures[-1])
    assert hi_total >= lo_total


def test_share_decisions_consume_one_uniform_per_pair():
    # Stream accounting: the share phase draws exactly one decisions-stream
    # uniform per infected pair, in (agent_id, meme_id) order.
    from memesim.core import RngStream, StreamLabel

    cfg = SimConfig(population=30, recruits=3, memes_per_recruit=2,
                    recruit_interval_ticks=1, horizon_ticks=1,
                    world_width=10.0, world_height=10.0, neighbor_radius=2.0,
                    sharing_model=SharingModel(-0.5, 0.4, 0.4, 0.2),
                    master_seed=21)
    world = init_world(cfg)
    recruit_step(world)
    recruit_step(world)  # second manual call recruits one more agent
    walk_step(world)
    pairs = sorted(world.infections)
    share_step(world)
    replay = RngStream(cfg.master_seed, StreamLabel.DECISIONS)
    u = replay.uniforms(len(pairs))
    expected_sharers = [pair for pair, draw in zip(pairs, u)
                        if draw < world._prob_cache[pair]]
    actual_sharers = [(r.agent_id, r.meme_id) for r in world.events.records()
                      if r.kind is EventKind.SHARE]
    assert actual_sharers == expected_sharers


def test_engine_probability_cache_matches_contract_path():
    cfg = small_config(horizon_ticks=40,
                       sharing_model=SharingModel(-1.5, 0.6, 0.4, 0.2))
    world = init_world(cfg)
    for _ in range(cfg.horizon_ticks):
        step(world)
    assert world._prob_cache
    items = sorted(world._prob_cache.items())[:50]
    for (agent_id, meme_id), cached in items:
        f = perceive_features(world.agent_state(agent_id), world.meme(meme_id),
                              cfg.perception_noise_sd)
        assert share_probability(cfg.sharing_model, f) == cached


# ---------------------------------------------------------------------------
# Neighbor search
# ---------------------------------------------------------------------------

def test_grid_matches_bruteforce_on_random_configs():
    rng = np.random.default_rng(17)
    for _ in range(30):
        n = 120
        w = float(rng.uniform(15, 120))
        h = float(rng.uniform(15, 120))
        radius = float(rng.uniform(0.5, 0.45 * min(w, h)))
        xs = rng.uniform(0, w, n)
        ys = rng.uniform(0, h, n)
        got = neighbor_sets_grid(xs, ys, w, h, radius)
        want = neighbor_sets_bruteforce(xs, ys, w, h, radius)
        for g, b in zip(got, want):
            assert np.array_equal(g, b)


def test_grid_handles_radius_larger_than_world():
    rng = np.random.default_rng(18)
    xs = rng.uniform(0, 5, 40)
    ys = rng.uniform(0, 5, 40)
    got = neighbor_sets_grid(xs, ys, 5.0, 5.0, 30.0)
    for i, g in enumerate(got):
        assert np.array_equal(g, np.array([j for j in range(40) if j != i]))


def test_grid_query_excludes_self_but_not_coincident():
    xs = np.array([1.0, 1.0, 3.0])
    ys = np.array([1.0, 1.0, 1.0])
    grid = UniformGrid(xs, ys, 10.0, 10.0, 1.5)
    assert list(grid.query(1.0, 1.0, exclude_id=0)) == [1]


# ---------------------------------------------------------------------------
# Event log serialization
# ---------------------------------------------------------------------------

def test_event_log_fast_writer_matches_emit_line():
    out = run(small_config(horizon_ticks=60,
                           sharing_model=SharingModel(-2.0, 0.4, 0.4, 0.2)))
    buf = io.StringIO()
    out.events.write_lines(buf)
    expected = "".join(logio.emit_line(r) for r in out.event_records())
    assert buf.getvalue() == expected
