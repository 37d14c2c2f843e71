"""Discrete-time SIS simulation of meme sharing on a toroidal world.

Each tick runs four phases in a fixed order -- recruit, walk, share,
recovery -- so a run is fully determined by its config and master seed.
Randomness is split across named streams (placement, walk, meme content,
decisions, perception) so that, for example, changing the sharing model
leaves agent trajectories untouched.

Infection bookkeeping stores an absolute expiry tick per (agent, meme)
pair: a pair infected at tick t with duration d takes part in the share
phases of ticks t+1 .. t+d and is removed by the recovery phase of tick
t+d (a recruiter-seeded pair also shares on its creation tick, since the
recruit phase precedes the share phase).  Re-exposure of an infected pair
resets the timer by default (`reinfection_resets_timer`).
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, replace

import numpy as np

from . import logio
from .core import (
    AgentState,
    ConfigurationError,
    EventKind,
    EventRecord,
    MemeVector,
    Position,
    RngStream,
    StreamLabel,
    perception_noise_batch,
    sample_meme_vector,
    wrap_coords,
)
from .decision import DEFAULT_SHARING_MODEL, SharingModel, sigmoid_array

_KIND_CODE = {kind: i for i, kind in enumerate(EventKind)}
_KIND_BY_CODE = list(EventKind)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """All knobs of one simulation run (defaults give the full 15k-agent world)."""

    population: int = 15000
    recruits: int = 118
    memes_per_recruit: int = 2
    recruit_interval_ticks: int = 4
    recruit_batch_size: int = 1
    horizon_ticks: int = 600
    world_width: float = 200.0
    world_height: float = 200.0
    step_size: float = 1.0
    neighbor_radius: float = 3.0
    infection_duration_ticks: int = 10
    perception_noise_sd: float = 0.5
    meme_dim: int = 3
    sharing_model: SharingModel = DEFAULT_SHARING_MODEL
    master_seed: int = 42
    reinfection_resets_timer: bool = True
    require_full_recruitment: bool = False
    analysis_bin_width: int = 10

    def validate(self) -> list:
        """Return (field, reason) for every violated invariant; empty if valid."""
        bad = []

        def check(ok, fname, reason):
            if not ok:
                bad.append((fname, reason))

        check(_is_int(self.population) and self.population >= 1,
              "population", "must be a positive integer")
        check(_is_int(self.recruits) and self.recruits >= 1,
              "recruits", "must be a positive integer")
        if _is_int(self.population) and _is_int(self.recruits):
            check(self.recruits <= self.population,
                  "recruits", "must not exceed population")
        check(_is_int(self.memes_per_recruit) and self.memes_per_recruit >= 1,
              "memes_per_recruit", "must be a positive integer")
        check(_is_int(self.recruit_interval_ticks) and self.recruit_interval_ticks >= 1,
              "recruit_interval_ticks", "must be a positive integer")
        check(_is_int(self.recruit_batch_size) and self.recruit_batch_size >= 1,
              "recruit_batch_size", "must be a positive integer")
        check(_is_int(self.horizon_ticks) and self.horizon_ticks >= 0,
              "horizon_ticks", "must be a non-negative integer")
        check(_is_real(self.world_width) and self.world_width > 0,
              "world_width", "must be a positive real")
        check(_is_real(self.world_height) and self.world_height > 0,
              "world_height", "must be a positive real")
        check(_is_real(self.step_size) and self.step_size >= 0,
              "step_size", "must be a non-negative real")
        check(_is_real(self.neighbor_radius) and self.neighbor_radius > 0,
              "neighbor_radius", "must be a positive real")
        check(_is_int(self.infection_duration_ticks) and self.infection_duration_ticks >= 1,
              "infection_duration_ticks", "must be a positive integer")
        check(_is_real(self.perception_noise_sd) and self.perception_noise_sd >= 0,
              "perception_noise_sd", "must be a non-negative real")
        check(_is_int(self.meme_dim) and self.meme_dim >= 3,
              "meme_dim", "must be an integer >= 3 (first three components feed the model)")
        check(isinstance(self.sharing_model, SharingModel), "sharing_model",
              "must be a SharingModel")
        check(_is_int(self.master_seed) and 0 <= self.master_seed < 2 ** 64,
              "master_seed", "must be an unsigned 64-bit integer")
        check(isinstance(self.reinfection_resets_timer, bool),
              "reinfection_resets_timer", "must be a boolean")
        check(isinstance(self.require_full_recruitment, bool),
              "require_full_recruitment", "must be a boolean")
        check(_is_int(self.analysis_bin_width) and self.analysis_bin_width >= 1,
              "analysis_bin_width", "must be a positive integer")
        if (self.require_full_recruitment is True and _is_int(self.horizon_ticks)
                and _is_int(self.recruits) and _is_int(self.recruit_interval_ticks)):
            check(self.horizon_ticks >= self.recruits * self.recruit_interval_ticks,
                  "horizon_ticks",
                  "must cover recruits * recruit_interval_ticks when full recruitment is required")
        return bad

    def ensure_valid(self):
        bad = self.validate()
        if bad:
            msg = "; ".join(f"{name}: {reason}" for name, reason in bad)
            raise ConfigurationError(f"invalid config: {msg}",
                                     fields=[name for name, _ in bad])

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)

    @property
    def max_memes(self) -> int:
        return self.recruits * self.memes_per_recruit


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(v))


# ---------------------------------------------------------------------------
# Event log (columnar, so million-event runs stay cheap)
# ---------------------------------------------------------------------------

class EventLog:
    """Append-only event store; iteration yields EventRecord in emission order."""

    __slots__ = ("_ticks", "_kinds", "_agents", "_memes")

    def __init__(self):
        self._ticks = array("q")
        self._kinds = array("b")
        self._agents = array("q")
        self._memes = array("q")  # -1 encodes "no meme" (RECRUIT)

    def append(self, tick: int, kind_code: int, agent_id: int, meme_id: int):
        self._ticks.append(tick)
        self._kinds.append(kind_code)
        self._agents.append(agent_id)
        self._memes.append(meme_id)

    def __len__(self) -> int:
        return len(self._ticks)

    def records(self):
        for tick, code, agent, meme in zip(self._ticks, self._kinds,
                                           self._agents, self._memes):
            yield EventRecord(tick=tick, kind=_KIND_BY_CODE[code],
                              agent_id=agent, meme_id=None if meme < 0 else meme)

    def __iter__(self):
        return self.records()

    def write_lines(self, fileobj):
        """Fast serialization; byte-identical to logio.emit_line per record."""
        names = [k.value for k in _KIND_BY_CODE]
        write = fileobj.write
        for tick, code, agent, meme in zip(self._ticks, self._kinds,
                                           self._agents, self._memes):
            path = "/" if meme < 0 else f"/m/{meme}"
            write(f'{tick} {agent} "GET {path}" {names[code]}\n')


# ---------------------------------------------------------------------------
# Neighbor search
# ---------------------------------------------------------------------------

class UniformGrid:
    """Torus-aware bucket grid with cell edges >= radius, so the 3x3 cell
    neighborhood always covers the query disk."""

    __slots__ = ("xs", "ys", "width", "height", "radius", "ncx", "ncy",
                 "cell_w", "cell_h", "_order", "_starts", "_cand_cache")

    def __init__(self, xs, ys, width, height, radius):
        self.xs = xs
        self.ys = ys
        self.width = width
        self.height = height
        self.radius = radius
        self.ncx = max(1, int(width // radius))
        self.ncy = max(1, int(height // radius))
        self.cell_w = width / self.ncx
        self.cell_h = height / self.ncy
        cx = np.minimum((xs / self.cell_w).astype(np.int64), self.ncx - 1)
        cy = np.minimum((ys / self.cell_h).astype(np.int64), self.ncy - 1)
        flat = cx * self.ncy + cy
        self._order = np.argsort(flat, kind="stable")
        self._starts = np.searchsorted(flat[self._order],
                                       np.arange(self.ncx * self.ncy + 1))
        self._cand_cache = {}

    def _candidates(self, cx: int, cy: int) -> np.ndarray:
        key = cx * self.ncy + cy
        cached = self._cand_cache.get(key)
        if cached is not None:
            return cached
        cells = sorted({((cx + dx) % self.ncx) * self.ncy + ((cy + dy) % self.ncy)
                        for dx in (-1, 0, 1) for dy in (-1, 0, 1)})
        parts = [self._order[self._starts[c]:self._starts[c + 1]] for c in cells]
        cand = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        self._cand_cache[key] = cand
        return cand

    def query(self, x: float, y: float, exclude_id: int = -1) -> np.ndarray:
        """Sorted ids of agents within `radius` of (x, y), minus exclude_id."""
        cx = min(int(x / self.cell_w), self.ncx - 1)
        cy = min(int(y / self.cell_h), self.ncy - 1)
        cand = self._candidates(cx, cy)
        dx = np.abs(self.xs[cand] - x)
        dx = np.minimum(dx, self.width - dx)
        dy = np.abs(self.ys[cand] - y)
        dy = np.minimum(dy, self.height - dy)
        hit = cand[np.sqrt(dx * dx + dy * dy) <= self.radius]
        if exclude_id >= 0:
            hit = hit[hit != exclude_id]
        return np.sort(hit)


def neighbor_sets_grid(xs, ys, width, height, radius) -> list:
    """Per-agent sorted neighbor ids via the bucket grid."""
    grid = UniformGrid(xs, ys, width, height, radius)
    return [grid.query(xs[i], ys[i], exclude_id=i) for i in range(len(xs))]


def neighbor_sets_bruteforce(xs, ys, width, height, radius) -> list:
    """Per-agent sorted neighbor ids by checking all O(N^2) pairs."""
    dx = np.abs(xs[:, None] - xs[None, :])
    dx = np.minimum(dx, width - dx)
    dy = np.abs(ys[:, None] - ys[None, :])
    dy = np.minimum(dy, height - dy)
    close = np.sqrt(dx * dx + dy * dy) <= radius
    np.fill_diagonal(close, False)
    return [np.flatnonzero(close[i]) for i in range(len(xs))]


# ---------------------------------------------------------------------------
# World state and tick phases
# ---------------------------------------------------------------------------

class WorldState:
    """Mutable state of a running simulation; built by init_world."""

    __slots__ = ("config", "tick", "xs", "ys", "recruited", "recruited_count",
                 "perception_seeds", "memes", "meme_latents", "meme_count",
                 "infections", "hits", "cumulative_exposures", "events",
                 "placement", "walk", "meme_content", "decisions",
                 "infected_series", "exposure_series",
                 "_expiry_buckets", "_prob_cache", "_grid")

    def __init__(self, config: SimConfig):
        self.config = config
        self.tick = 0
        n = config.population
        self.placement = RngStream(config.master_seed, StreamLabel.PLACEMENT)
        self.walk = RngStream(config.master_seed, StreamLabel.WALK)
        self.meme_content = RngStream(config.master_seed, StreamLabel.MEME_CONTENT)
        self.decisions = RngStream(config.master_seed, StreamLabel.DECISIONS)
        perception = RngStream(config.master_seed, StreamLabel.PERCEPTION)

        u = self.placement.uniforms(2 * n)
        self.xs = wrap_coords(u[0::2] * config.world_width, config.world_width)
        self.ys = wrap_coords(u[1::2] * config.world_height, config.world_height)
        self.perception_seeds = perception.raw(n)

        self.recruited = np.zeros(n, dtype=bool)
        self.recruited_count = 0
        self.memes = []
        self.meme_latents = np.zeros((config.max_memes, config.meme_dim))
        self.meme_count = 0
        self.infections = {}
        self.hits = np.zeros(config.max_memes, dtype=np.int64)
        self.cumulative_exposures = 0
        self.events = EventLog()
        self.infected_series = []
        self.exposure_series = []
        self._expiry_buckets = {}
        self._prob_cache = {}
        self._grid = None

    # -- views -------------------------------------------------------------

    def grid(self) -> UniformGrid:
        if self._grid is None:
            self._grid = UniformGrid(self.xs, self.ys, self.config.world_width,
                                     self.config.world_height,
                                     self.config.neighbor_radius)
        return self._grid

    def agent_state(self, agent_id: int) -> AgentState:
        """Materialize the per-agent view at the current tick boundary."""
        remaining = {m: expiry - self.tick + 1
                     for (a, m), expiry in self.infections.items() if a == agent_id}
        return AgentState(
            agent_id=agent_id,
            position=Position(float(self.xs[agent_id]), float(self.ys[agent_id])),
            recruited=bool(self.recruited[agent_id]),
            infections=remaining,
            perception_noise_seed=int(self.perception_seeds[agent_id]),
        )

    def meme(self, meme_id: int) -> MemeVector:
        return self.memes[meme_id]

    # -- internals ----------------------------------------------------------

    def _log(self, kind: EventKind, agent_id: int, meme_id: int = -1):
        self.events.append(self.tick, _KIND_CODE[kind], agent_id, meme_id)

    def _infect(self, agent_id: int, meme_id: int):
        expiry = self.tick + self.config.infection_duration_ticks
        self.infections[(agent_id, meme_id)] = expiry
        self._expiry_buckets.setdefault(expiry, []).append((agent_id, meme_id))

    def _share_probs(self, agents: np.ndarray, meme_ids: np.ndarray) -> np.ndarray:
        """Vectorized share probabilities for (agent, meme) pairs.

        Matches share_probability(model, perceive_features(...)) bit for bit:
        the linear term is accumulated in the same left-to-right order.
        """
        model = self.config.sharing_model
        noise = perception_noise_batch(self.perception_seeds[agents], meme_ids,
                                       self.config.perception_noise_sd)
        feats = self.meme_latents[meme_ids, :3] + noise
        z = model.intercept + model.w_humor * feats[:, 0]
        z = z + model.w_relevance * feats[:, 1]
        z = z + model.w_selfref * feats[:, 2]
        return sigmoid_array(z)


def init_world(config: SimConfig) -> WorldState:
    """Place the population uniformly at random; no memes, recruiter at tick 0."""
    config.ensure_valid()
    return WorldState(config)


def recruit_step(world: WorldState) -> WorldState:
    """Recruit up to recruit_batch_size agents when the tick is on cadence.

    Each recruit is drawn uniformly from the not-yet-recruited pool, creates
    memes_per_recruit fresh memes, and starts out infected with each.
    No-op off cadence or once the quota is reached.
    """
    cfg = world.config
    if world.tick % cfg.recruit_interval_ticks != 0:
        return world
    for _ in range(cfg.recruit_batch_size):
        if world.recruited_count >= cfg.recruits:
            break
        pool = np.flatnonzero(~world.recruited)
        agent = int(pool[world.placement.randbelow(len(pool))])
        world.recruited[agent] = True
        world.recruited_count += 1
        world._log(EventKind.RECRUIT, agent)
        for _ in range(cfg.memes_per_recruit):
            mid = world.meme_count
            meme = sample_meme_vector(world.meme_content, cfg.meme_dim, mid, agent)
            world.memes.append(meme)
            world.meme_latents[mid] = meme.components
            world.meme_count += 1
            world._log(EventKind.CREATE, agent, mid)
            world._log(EventKind.INFECT, agent, mid)
            world._infect(agent, mid)
    return world


def walk_step(world: WorldState) -> WorldState:
    """Move every agent one fixed-length step in a uniformly random direction."""
    cfg = world.config
    theta = (2.0 * np.pi) * world.walk.uniforms(cfg.population)
    world.xs = wrap_coords(world.xs + cfg.step_size * np.cos(theta), cfg.world_width)
    world.ys = wrap_coords(world.ys + cfg.step_size * np.sin(theta), cfg.world_height)
    world._grid = None
    return world


def share_step(world: WorldState) -> WorldState:
    """Every infected (agent, meme) pair decides once whether to share.

    Sharers expose every other agent within neighbor_radius (EXPOSE is logged
    even for already-infected neighbors -- repeat views count); susceptible
    neighbors become infected for infection_duration_ticks.  Pairs infected
    during this phase do not act until the next tick.
    """
    if not world.infections:
        return world
    cfg = world.config
    tick = world.tick
    pairs = sorted(world.infections)
    probs = np.empty(len(pairs))
    missing = [i for i, pair in enumerate(pairs) if pair not in world._prob_cache]
    if missing:
        agents = np.fromiter((pairs[i][0] for i in missing), dtype=np.int64)
        memes = np.fromiter((pairs[i][1] for i in missing), dtype=np.int64)
        fresh = world._share_probs(agents, memes)
        for i, p in zip(missing, fresh):
            world._prob_cache[pairs[i]] = float(p)
    cache = world._prob_cache
    for i, pair in enumerate(pairs):
        probs[i] = cache[pair]

    shared = world.decisions.uniforms(len(pairs)) < probs
    if not shared.any():
        return world

    grid = world.grid()
    neighbors_of = {}
    duration = cfg.infection_duration_ticks
    reset = cfg.reinfection_resets_timer
    infections = world.infections
    buckets = world._expiry_buckets
    for i in np.flatnonzero(shared):
        sharer, meme_id = pairs[i]
        world._log(EventKind.SHARE, sharer, meme_id)
        nb = neighbors_of.get(sharer)
        if nb is None:
            nb = grid.query(world.xs[sharer], world.ys[sharer], exclude_id=sharer)
            neighbors_of[sharer] = nb
        expiry = tick + duration
        for b in nb:
            b = int(b)
            world._log(EventKind.EXPOSE, b, meme_id)
            world.hits[meme_id] += 1
            world.cumulative_exposures += 1
            key = (b, meme_id)
            if key not in infections:
                world._log(EventKind.INFECT, b, meme_id)
                infections[key] = expiry
                buckets.setdefault(expiry, []).append(key)
            elif reset and infections[key] != expiry:
                infections[key] = expiry
                buckets.setdefault(expiry, []).append(key)
    return world


def recovery_step(world: WorldState) -> WorldState:
    """Remove every infection whose timer has run out (back to susceptible)."""
    due = world._expiry_buckets.pop(world.tick, None)
    if not due:
        return world
    # Buckets use lazy deletion: entries are stale when the timer was reset.
    expired = sorted({pair for pair in due
                      if world.infections.get(pair) == world.tick})
    for agent_id, meme_id in expired:
        del world.infections[(agent_id, meme_id)]
        world._log(EventKind.RECOVER, agent_id, meme_id)
    return world


def step(world: WorldState) -> WorldState:
    """One full tick: recruit, walk, share, recovery, then series snapshot."""
    recruit_step(world)
    walk_step(world)
    share_step(world)
    recovery_step(world)
    world.infected_series.append(len(world.infections))
    world.exposure_series.append(world.cumulative_exposures)
    world.tick += 1
    return world


# ---------------------------------------------------------------------------
# Run driver and output
# ---------------------------------------------------------------------------

@dataclass
class SimOutput:
    """Everything a finished run produced."""

    config: SimConfig
    currently_infected: np.ndarray
    cumulative_exposures: np.ndarray
    per_meme_hits: dict
    events: EventLog

    def event_records(self):
        return self.events.records()

    def write_event_log(self, path):
        with open(path, "w", newline="") as fh:
            self.events.write_lines(fh)

    def write_timeseries_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("tick,currently_infected,cumulative_exposures\n")
            for t, (inf, exp) in enumerate(zip(self.currently_infected,
                                               self.cumulative_exposures)):
                fh.write(f"{t},{inf},{exp}\n")

    def write_hits_csv(self, path):
        logio.write_hits_csv(self.per_meme_hits, path)


def run(config: SimConfig) -> SimOutput:
    """Execute horizon_ticks ticks and collect the full output.

    Pure function of the config: identical config and seed give a
    byte-identical event log.
    """
    config.ensure_valid()
    world = init_world(config)
    for _ in range(config.horizon_ticks):
        step(world)
    return SimOutput(
        config=config,
        currently_infected=np.asarray(world.infected_series, dtype=np.int64),
        cumulative_exposures=np.asarray(world.exposure_series, dtype=np.int64),
        per_meme_hits={mid: int(world.hits[mid]) for mid in range(world.meme_count)},
        events=world.events,
    )
