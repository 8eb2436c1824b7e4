"""Exact event-driven simulation of the infection process and its dual.

Two layers:

* Functional single-step operations (`wb_step`, `bcrw_step`) on immutable
  states, plus exact transition-law oracles.  These are slow but direct
  transcriptions of the jump rates, used for cross-checking.
* `wb_run` / `bcrw_run`, which drive the indexed event kernels in
  `_kernels` and return immutable `Trajectory` objects.

The infection process: infected vertices infect each healthy neighbor at
rate lambda and healthy vertices heal each infected neighbor at rate 1.
The dual is a branching-coalescing random walk: each particle moves
across each incident edge at rate 1 and branches across it at rate
lambda - 1.  Frozen boundary vertices act but never change; a dual
particle hitting a frozen - vertex dies, and one hitting a frozen +
vertex sticks there forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import _kernels
from . import arena as arena_mod
from . import tree
from .arena import AddressResolver
from .configs import (
    BoundarySpec,
    Configuration,
    NO_BOUNDARY,
    config_of,
    frozen_sign,
)
from .rng import RandomStream
from .tree import TreeParams, VertexAddr, sort_key


class Deadlock(RuntimeError):
    """The state is absorbing: no transition has positive rate."""


class InvalidForBoundary(ValueError):
    """Operation requires a boundary-free (all endpoints free) trajectory."""


class Event(NamedTuple):
    time: float
    kind: str  # infect | heal | move | branch | coalesce | exit | absorb
    u: VertexAddr
    v: VertexAddr


@dataclass(frozen=True)
class StopCondition:
    """Run until any enabled condition fires.

    At least one of t_max / max_events must be finite so that
    supercritical runs cannot loop forever.
    """

    t_max: float = math.inf
    max_events: int = 10_000_000
    extinction: bool = False
    size_reaches: int = 0
    includes_set: frozenset[VertexAddr] = frozenset()

    def __post_init__(self):
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if self.max_events is not None and self.max_events < 0:
            raise ValueError("max_events must be nonnegative")
        if not math.isfinite(self.t_max) and self.max_events is None:
            raise ValueError("need a finite bound among t_max and max_events")
        object.__setattr__(self, "includes_set", frozenset(self.includes_set))


# ---------------------------------------------------------------------------
# Functional states and single steps (reference transcription of the rates)


def _sign(params: TreeParams, boundary: BoundarySpec, config, x: VertexAddr) -> int:
    fs = frozen_sign(params, boundary, x)
    if fs != 0:
        return fs
    return 1 if x in config else -1


def _edge_pair(params, boundary, config, a, b) -> Optional[tuple[VertexAddr, VertexAddr]]:
    """Ordered (infected, healthy) pair for edge {a,b} if it is discordant
    with at least one free endpoint, else None."""
    sa = _sign(params, boundary, config, a)
    sb = _sign(params, boundary, config, b)
    if sa == sb:
        return None
    u, v = (a, b) if sa > 0 else (b, a)
    if frozen_sign(params, boundary, u) != 0 and frozen_sign(params, boundary, v) != 0:
        return None
    return (u, v)


def _discordant_pairs(params, config, boundary) -> tuple:
    pairs = set()
    for x in config:
        for nb in tree.neighbors(params, x):
            p = _edge_pair(params, boundary, config, x, nb)
            if p is not None:
                pairs.add(p)
    if boundary.kind == "plus":
        for inside, outside in tree.region_crossing_edges(params, boundary.region):
            p = _edge_pair(params, boundary, config, inside, outside)
            if p is not None:
                pairs.add(p)
    return tuple(sorted(pairs, key=lambda p: (sort_key(p[0]), sort_key(p[1]))))


def _pair_mass(params, boundary, lam, u, v) -> float:
    mass = 0.0
    if frozen_sign(params, boundary, v) == 0:
        mass += lam
    if frozen_sign(params, boundary, u) == 0:
        mass += 1.0
    return mass


@dataclass(frozen=True)
class WBState:
    """Infection-process state with its indexed discordant-edge set."""

    params: TreeParams
    lam: float
    config: Configuration
    boundary: BoundarySpec
    discordant: tuple
    time: float

    @property
    def total_rate(self) -> float:
        return sum(
            _pair_mass(self.params, self.boundary, self.lam, u, v)
            for u, v in self.discordant
        )


def make_wb_state(
    params: TreeParams,
    lam: float,
    config: Configuration,
    boundary: BoundarySpec = NO_BOUNDARY,
    time: float = 0.0,
) -> WBState:
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    for x in config:
        if frozen_sign(params, boundary, x) != 0:
            raise ValueError(f"initial vertex {x} is frozen by the boundary")
    return WBState(
        params, float(lam), config, boundary,
        _discordant_pairs(params, config, boundary), float(time),
    )


def _wb_after_flip(state: WBState, new_config: Configuration,
                   flipped: VertexAddr, new_time: float) -> WBState:
    """Incrementally rebuild the discordant index after flipping one vertex."""
    params, boundary = state.params, state.boundary
    keep = [p for p in state.discordant if flipped not in p]
    for nb in tree.neighbors(params, flipped):
        p = _edge_pair(params, boundary, new_config, flipped, nb)
        if p is not None:
            keep.append(p)
    pairs = tuple(sorted(set(keep), key=lambda p: (sort_key(p[0]), sort_key(p[1]))))
    return WBState(params, state.lam, new_config, boundary, pairs, new_time)


def wb_step(state: WBState, stream: RandomStream) -> tuple[WBState, Event]:
    if not state.discordant:
        raise Deadlock("no discordant edge: the state is absorbing")
    params, boundary, lam = state.params, state.boundary, state.lam
    masses = [_pair_mass(params, boundary, lam, u, v) for u, v in state.discordant]
    total = sum(masses)
    gen = stream.generator
    dt = -math.log(1.0 - gen.random()) / total
    r = gen.random() * total
    idx = 0
    acc = 0.0
    for i, m in enumerate(masses):
        acc += m
        if r < acc:
            idx = i
            break
    else:
        idx = len(masses) - 1
    u, v = state.discordant[idx]
    p_infect = (lam if frozen_sign(params, boundary, v) == 0 else 0.0) / masses[idx]
    new_time = state.time + dt
    if gen.random() < p_infect:
        new_config = Configuration(state.config.plus_set | {v})
        event = Event(new_time, "infect", u, v)
        flipped = v
    else:
        new_config = Configuration(state.config.plus_set - {u})
        event = Event(new_time, "heal", u, v)
        flipped = u
    return _wb_after_flip(state, new_config, flipped, new_time), event


def wb_transition_probs(state: WBState) -> dict[frozenset, float]:
    """Exact law of the next configuration of the embedded jump chain."""
    if not state.discordant:
        raise Deadlock("no discordant edge: the state is absorbing")
    params, boundary, lam = state.params, state.boundary, state.lam
    total = state.total_rate
    out: dict[frozenset, float] = {}
    for u, v in state.discordant:
        if frozen_sign(params, boundary, v) == 0:
            key = frozenset(state.config.plus_set | {v})
            out[key] = out.get(key, 0.0) + lam / total
        if frozen_sign(params, boundary, u) == 0:
            key = frozenset(state.config.plus_set - {u})
            out[key] = out.get(key, 0.0) + 1.0 / total
    return out


@dataclass(frozen=True)
class BCRWState:
    """Dual-walk state: active particles, stuck + particles, exit flag."""

    params: TreeParams
    lam: float
    occupied: Configuration
    absorbed_plus: Configuration
    exited_flag: bool
    boundary: BoundarySpec
    time: float

    @property
    def total_rate(self) -> float:
        return self.params.d * self.lam * len(self.occupied)


def make_bcrw_state(
    params: TreeParams,
    lam: float,
    occupied: Configuration,
    boundary: BoundarySpec = NO_BOUNDARY,
    absorbed_plus: Configuration = Configuration(frozenset()),
    exited_flag: bool = False,
    time: float = 0.0,
) -> BCRWState:
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    for x in occupied:
        if frozen_sign(params, boundary, x) != 0:
            raise ValueError(f"particle at {x} is frozen by the boundary")
    for x in absorbed_plus:
        if frozen_sign(params, boundary, x) != 1:
            raise ValueError(f"absorbed particle at {x} is not at a + vertex")
    return BCRWState(
        params, float(lam), occupied, absorbed_plus, bool(exited_flag),
        boundary, float(time),
    )


def _bcrw_apply(state: BCRWState, x: VertexAddr, w: VertexAddr,
                is_move: bool, new_time: float) -> tuple[BCRWState, Event]:
    params, boundary = state.params, state.boundary
    occ = set(state.occupied.plus_set)
    absorbed = set(state.absorbed_plus.plus_set)
    exited = state.exited_flag
    fs = frozen_sign(params, boundary, w)
    if fs == -1:
        kind = "exit"
        exited = True
        if is_move:
            occ.discard(x)
    elif fs == 1:
        kind = "absorb"
        exited = True
        absorbed.add(w)
        if is_move:
            occ.discard(x)
    elif w in occ:
        kind = "coalesce"
        if is_move:
            occ.discard(x)
    else:
        occ.add(w)
        if is_move:
            kind = "move"
            occ.discard(x)
        else:
            kind = "branch"
    new_state = BCRWState(
        params, state.lam, config_of(occ), config_of(absorbed),
        exited, boundary, new_time,
    )
    return new_state, Event(new_time, kind, x, w)


def bcrw_step(state: BCRWState, stream: RandomStream) -> tuple[BCRWState, Event]:
    if not state.occupied:
        raise Deadlock("no active particle: the state is absorbing")
    params, lam = state.params, state.lam
    particles = list(state.occupied)  # sorted deterministically
    total = state.total_rate
    gen = stream.generator
    dt = -math.log(1.0 - gen.random()) / total
    x = particles[min(int(gen.random() * len(particles)), len(particles) - 1)]
    j = min(int(gen.random() * params.d), params.d - 1)
    is_move = gen.random() * lam < 1.0
    w = tree.neighbors(params, x)[j]
    return _bcrw_apply(state, x, w, is_move, state.time + dt)


def bcrw_transition_probs(state: BCRWState) -> dict[tuple[frozenset, frozenset], float]:
    """Exact law of (occupied, absorbed) after one jump of the embedded chain."""
    if not state.occupied:
        raise Deadlock("no active particle: the state is absorbing")
    params, lam = state.params, state.lam
    particles = list(state.occupied)
    out: dict[tuple[frozenset, frozenset], float] = {}
    p_particle = 1.0 / len(particles)
    p_slot = 1.0 / params.d
    for x in particles:
        for w in tree.neighbors(params, x):
            for is_move, p_type in ((True, 1.0 / lam), (False, (lam - 1.0) / lam)):
                if p_type == 0.0:
                    continue
                new_state, _ = _bcrw_apply(state, x, w, is_move, state.time)
                key = (new_state.occupied.plus_set, new_state.absorbed_plus.plus_set)
                out[key] = out.get(key, 0.0) + p_particle * p_slot * p_type
    return out


# ---------------------------------------------------------------------------
# Kernel-backed runs


class Trajectory:
    """Immutable record of one run: event log, snapshots, final state."""

    def __init__(self, kind, params, lam, boundary, init_config, arena, raw, snap_times):
        self.kind = kind  # "wb" | "bcrw"
        self.params = params
        self.lam = lam
        self.boundary = boundary
        self.init_config = init_config
        self._arena = arena
        self._raw = raw
        self._snap_times = snap_times
        self.resolver = AddressResolver(arena, raw["born_from"], raw["born_slot"])
        self._events = None

    @property
    def stop_reason(self) -> str:
        return _kernels.STOP_NAMES[self._raw["stop_reason"]]

    @property
    def truncated(self) -> bool:
        return self.stop_reason == "max_events"

    @property
    def final_time(self) -> float:
        return self._raw["final_time"]

    @property
    def n_events(self) -> int:
        return len(self._raw["times"])

    @property
    def frozen_touched(self) -> bool:
        return self._raw["frozen_touched"]

    @property
    def exited_flag(self) -> bool:
        return self._raw["exited"]

    @property
    def events(self) -> list[Event]:
        if self._events is None:
            raw = self._raw
            addr = self.resolver.addr
            self._events = [
                Event(float(t), _kernels.KIND_NAMES[k], addr(int(u)), addr(int(v)))
                for t, k, u, v in zip(raw["times"], raw["kinds"], raw["eu"], raw["ev"])
            ]
        return self._events

    @property
    def moved_flags(self) -> np.ndarray:
        """Per event: 1 if the source particle vacated its vertex (dual runs)."""
        return self._raw["moved"]

    @property
    def final_config(self) -> Configuration:
        return config_of(self.resolver.addr(int(r)) for r in self._raw["final_rows"])

    @property
    def absorbed_plus(self) -> Configuration:
        return config_of(self.resolver.addr(int(r)) for r in self._raw["absorbed_rows"])

    @property
    def snapshots(self) -> list[tuple[float, Configuration]]:
        out = []
        for t, rows in zip(self._snap_times, self._raw["snap_rows"]):
            out.append((float(t), config_of(self.resolver.addr(int(r)) for r in rows)))
        return out

    @property
    def final_state(self):
        if self.kind == "wb":
            return make_wb_state(
                self.params, self.lam, self.final_config, self.boundary,
                time=self.final_time,
            )
        return make_bcrw_state(
            self.params, self.lam, self.final_config, self.boundary,
            absorbed_plus=self.absorbed_plus, exited_flag=self.exited_flag,
            time=self.final_time,
        )


def _as_config(init) -> Configuration:
    if isinstance(init, Configuration):
        return init
    return config_of(init)


def _prepare(params, lam, init, boundary, stop, snapshot_times):
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    init_config = _as_config(init)
    includes = sorted(stop.includes_set, key=sort_key)
    if boundary.kind == "none":
        seeds = list(init_config) + includes
        arena = arena_mod.lazy_hull(params, seeds)
    else:
        region_vertices = tree.enumerate_region(params, boundary.region)
        region_set = set(region_vertices)
        bad = [x for x in init_config if x not in region_set]
        if bad:
            raise ValueError(f"initial vertices outside the free region: {bad}")
        arena = arena_mod.for_region(params, region_vertices, boundary)
        missing = [x for x in includes if x not in arena.index]
        if missing:
            raise ValueError(f"inclusion targets outside the simulated region: {missing}")
    init_rows = arena.rows_of(init_config)
    include_rows = arena.rows_of(includes)
    snap = np.asarray(sorted(float(t) for t in snapshot_times), dtype=np.float64)
    return init_config, arena, init_rows, include_rows, snap


def wb_run(
    params: TreeParams,
    lam: float,
    init,
    boundary: BoundarySpec,
    stop: StopCondition,
    stream: RandomStream,
    snapshot_times: Iterable[float] = (),
    check_invariants: bool = False,
) -> Trajectory:
    init_config, arena, init_rows, include_rows, snap = _prepare(
        params, lam, init, boundary, stop, snapshot_times
    )
    feed = _kernels.make_feed(stream.generator)
    raw = _kernels.wb_simulate(
        params.d, float(lam), arena.nbr, arena.status, init_rows,
        arena.frozen_plus_rows, float(stop.t_max), int(stop.max_events),
        bool(stop.extinction), int(stop.size_reaches), include_rows, snap,
        feed, check_invariants,
    )
    return Trajectory("wb", params, float(lam), boundary, init_config, arena, raw, snap)


def bcrw_run(
    params: TreeParams,
    lam: float,
    init,
    boundary: BoundarySpec,
    stop: StopCondition,
    stream: RandomStream,
    snapshot_times: Iterable[float] = (),
) -> Trajectory:
    init_config, arena, init_rows, include_rows, snap = _prepare(
        params, lam, init, boundary, stop, snapshot_times
    )
    feed = _kernels.make_feed(stream.generator)
    raw = _kernels.bcrw_simulate(
        params.d, float(lam), arena.nbr, arena.status, init_rows,
        float(stop.t_max), int(stop.max_events), bool(stop.extinction),
        int(stop.size_reaches), include_rows, snap, feed,
    )
    return Trajectory("bcrw", params, float(lam), boundary, init_config, arena, raw, snap)


# ---------------------------------------------------------------------------
# Trajectory post-processing


def replay_states(tr: Trajectory):
    """Yield (time, covered set) along the trajectory, starting at t=0.

    For dual runs the covered set is occupied plus stuck-at-+ particles;
    replaying the event log this way reproduces the final state exactly.
    """
    if tr.kind == "wb":
        state = set(tr.init_config.plus_set)
        yield 0.0, frozenset(state)
        for ev in tr.events:
            if ev.kind == "infect":
                state.add(ev.v)
            else:
                state.discard(ev.u)
            yield ev.time, frozenset(state)
    else:
        occ = set(tr.init_config.plus_set)
        absorbed: set = set()
        yield 0.0, frozenset(occ)
        for ev, m in zip(tr.events, tr.moved_flags):
            if ev.kind in ("move", "branch"):
                occ.add(ev.v)
            elif ev.kind == "absorb":
                absorbed.add(ev.v)
            if m:
                occ.discard(ev.u)
            yield ev.time, frozenset(occ | absorbed)


def inclusion_time(tr: Trajectory, targets) -> Optional[float]:
    """First time the covered set contains all targets, None if never."""
    want = frozenset(targets)
    for t, covered in replay_states(tr):
        if want <= covered:
            return t
    return None


def embedded_size_walk(tr: Trajectory) -> list[int]:
    """Sizes |state| at t=0 and after each event; steps are exactly +-1."""
    if tr.kind != "wb":
        raise ValueError("embedded size walk is defined for infection runs")
    if tr.boundary.kind != "none" or tr.frozen_touched:
        raise InvalidForBoundary(
            "embedded size walk requires all event endpoints to be free"
        )
    sizes = [len(tr.init_config)]
    for k in tr._raw["kinds"]:
        sizes.append(sizes[-1] + (1 if k == _kernels.INFECT else -1))
    return sizes
