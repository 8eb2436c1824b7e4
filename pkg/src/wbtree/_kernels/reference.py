"""Pure-Python event-driven kernels (reference implementation).

The compiled core in `_core.pyx` mirrors these loops operation for
operation, consuming the same uniform stream, so both backends produce
bit-identical runs for a given seed.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

# Event kinds
INFECT, HEAL, MOVE, BRANCH, COALESCE, EXIT, ABSORB = range(7)
KIND_NAMES = ("infect", "heal", "move", "branch", "coalesce", "exit", "absorb")

# Stop reasons
ABSORBED, EXTINCT, SIZE, INCLUDE, TMAX, MAXEVENTS = range(6)
STOP_NAMES = ("absorbed", "extinct", "size", "include", "tmax", "max_events")

# Row statuses (match arena.py)
FREE, FROZEN_PLUS, FROZEN_MINUS = 0, 1, 2

# Discordant edge classes
BOTH, INF_ONLY, HEAL_ONLY = 0, 1, 2

DEFAULT_BATCH = 1 << 14


class UniformFeed:
    """Sequential uniforms drawn from a generator in fixed-size batches."""

    def __init__(self, gen: np.random.Generator, batch: int = DEFAULT_BATCH):
        self._gen = gen
        self._batch = batch
        self._buf = ()
        self._pos = 0

    def refill(self) -> np.ndarray:
        return self._gen.random(self._batch)

    def take(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.refill()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def make_feed(gen: np.random.Generator, batch: int = DEFAULT_BATCH) -> UniformFeed:
    return UniformFeed(gen, batch)


def _result(
    *,
    times,
    kinds,
    eu,
    ev,
    moved,
    born_from,
    born_slot,
    stop_reason,
    final_time,
    final_rows,
    snap_rows,
    snap_count,
    frozen_touched,
    absorbed_rows=None,
    exited=False,
):
    return {
        "times": np.asarray(times, dtype=np.float64),
        "kinds": np.asarray(kinds, dtype=np.int8),
        "eu": np.asarray(eu, dtype=np.int32),
        "ev": np.asarray(ev, dtype=np.int32),
        "moved": np.asarray(moved, dtype=np.int8),
        "born_from": np.asarray(born_from, dtype=np.int32),
        "born_slot": np.asarray(born_slot, dtype=np.int8),
        "stop_reason": stop_reason,
        "final_time": final_time,
        "final_rows": np.asarray(final_rows, dtype=np.int32),
        "snap_rows": snap_rows,
        "snap_count": snap_count,
        "frozen_touched": bool(frozen_touched),
        "absorbed_rows": np.asarray(
            absorbed_rows if absorbed_rows is not None else [], dtype=np.int32
        ),
        "exited": bool(exited),
    }


class _Grower:
    """Shared lazy-materialization bookkeeping for both kernels."""

    def __init__(self, nbr0, status0, d):
        self.d = d
        self.nbr = [list(row) for row in nbr0]
        self.status = list(status0)
        self.born_from = []
        self.born_slot = []

    def materialize(self, x: int, j: int) -> int:
        n = len(self.nbr)
        row = [-1] * self.d
        if j == 0:
            row[1] = x  # new row is x's parent; slot 1 = the child we came from
        else:
            row[0] = x
        self.nbr.append(row)
        self.status.append(FREE)
        self.nbr[x][j] = n
        self.born_from.append(x)
        self.born_slot.append(j)
        return n


def wb_simulate(
    d: int,
    lam: float,
    nbr0: np.ndarray,
    status0: np.ndarray,
    infected_rows: np.ndarray,
    frozen_plus_rows: np.ndarray,
    t_max: float,
    max_events: int,
    stop_extinct: bool,
    size_reaches: int,
    include_rows: np.ndarray,
    snap_times: np.ndarray,
    feed: UniformFeed,
    check_invariants: bool = False,
) -> dict:
    g = _Grower(nbr0, status0, d)
    nbr, status = g.nbr, g.status

    infected = [False] * len(nbr)
    n_infected = 0
    for x in infected_rows:
        x = int(x)
        if not infected[x]:
            infected[x] = True
            n_infected += 1

    in_target = set(int(x) for x in include_rows)
    target_hit = sum(1 for x in in_target if infected[x])

    def plus(r):
        return status[r] == FROZEN_PLUS or (status[r] == FREE and infected[r])

    # Discordant edge index: three rate classes, swap-remove lists + map.
    lists = ([], [], [])  # BOTH, INF_ONLY, HEAL_ONLY: entries (u, v)
    emap = {}  # unordered edge key -> (cls, idx)

    def refresh_edge(a, b):
        key = (a, b) if a < b else (b, a)
        old = emap.pop(key, None)
        if old is not None:
            cls, idx = old
            lst = lists[cls]
            last = lst.pop()
            if idx < len(lst):
                lst[idx] = last
                lu, lv = last
                lkey = (lu, lv) if lu < lv else (lv, lu)
                emap[lkey] = (cls, idx)
        pa, pb = plus(a), plus(b)
        if pa == pb:
            return
        u, v = (a, b) if pa else (b, a)
        su, sv = status[u], status[v]
        if su == FREE and sv == FREE:
            cls = BOTH
        elif su == FROZEN_PLUS and sv == FREE:
            cls = INF_ONLY
        elif su == FREE and sv == FROZEN_MINUS:
            cls = HEAL_ONLY
        else:
            return
        emap[key] = (cls, len(lists[cls]))
        lists[cls].append((u, v))

    def scan_vertex(x, materialize_missing):
        for j in range(d):
            w = nbr[x][j]
            if w < 0:
                if not materialize_missing:
                    continue
                w = g.materialize(x, j)
                infected.append(False)
            refresh_edge(x, w)

    for x in infected_rows:
        scan_vertex(int(x), True)
    for u in frozen_plus_rows:
        u = int(u)
        for j in range(d):
            w = nbr[u][j]
            if w >= 0:
                refresh_edge(u, w)

    times, kinds, eus, evs = [], [], [], []
    snap_rows, snap_count = [], 0
    n_snaps = len(snap_times)

    def flush_snaps_until(limit):
        nonlocal snap_count
        while snap_count < n_snaps and snap_times[snap_count] <= limit:
            snap_rows.append(np.array([r for r in range(len(nbr)) if infected[r]], dtype=np.int32))
            snap_count += 1

    time = 0.0
    n_events = 0
    frozen_touched = False
    p_inf = lam / (lam + 1.0)
    stop_reason = None

    def check_stops():
        if stop_extinct and n_infected == 0:
            return EXTINCT
        if size_reaches > 0 and n_infected >= size_reaches:
            return SIZE
        if in_target and target_hit == len(in_target):
            return INCLUDE
        return None

    stop_reason = check_stops()
    while stop_reason is None:
        n_both, n_inf, n_heal = len(lists[BOTH]), len(lists[INF_ONLY]), len(lists[HEAL_ONLY])
        total = (lam + 1.0) * n_both + lam * n_inf + n_heal
        if total <= 0.0:
            stop_reason = EXTINCT if (stop_extinct and n_infected == 0) else ABSORBED
            break
        u1 = feed.take()
        tnew = time + (-math.log(1.0 - u1) / total)
        flush_snaps_until(t_max if tnew > t_max else tnew)
        if tnew > t_max:
            time = t_max
            stop_reason = TMAX
            break
        time = tnew

        r = feed.take() * total
        mass_both = (lam + 1.0) * n_both
        mass_inf = lam * n_inf
        if r < mass_both:
            idx = min(int(r / (lam + 1.0)), n_both - 1)
            u, v = lists[BOTH][idx]
            do_infect = feed.take() * (lam + 1.0) < lam
        elif r - mass_both < mass_inf:
            idx = min(int((r - mass_both) / lam), n_inf - 1)
            u, v = lists[INF_ONLY][idx]
            do_infect = True
            frozen_touched = True
        elif n_heal > 0:
            idx = min(int(r - mass_both - mass_inf), n_heal - 1)
            u, v = lists[HEAL_ONLY][idx]
            do_infect = False
            frozen_touched = True
        elif n_inf > 0:  # float spill past the last nonempty class
            u, v = lists[INF_ONLY][n_inf - 1]
            do_infect = True
            frozen_touched = True
        else:
            u, v = lists[BOTH][n_both - 1]
            do_infect = feed.take() * (lam + 1.0) < lam

        if do_infect:
            x = v
            infected[x] = True
            n_infected += 1
            if x in in_target:
                target_hit += 1
            times.append(time)
            kinds.append(INFECT)
            eus.append(u)
            evs.append(v)
        else:
            x = u
            infected[x] = False
            n_infected -= 1
            if x in in_target:
                target_hit -= 1
            times.append(time)
            kinds.append(HEAL)
            eus.append(u)
            evs.append(v)
        scan_vertex(x, do_infect)
        n_events += 1

        if check_invariants:
            _check_wb_index(d, lam, nbr, status, infected, lists, emap)

        stop_reason = check_stops()
        if stop_reason is None and n_events >= max_events:
            stop_reason = MAXEVENTS

    if stop_reason in (ABSORBED, EXTINCT):
        flush_snaps_until(t_max)

    return _result(
        times=times,
        kinds=kinds,
        eu=eus,
        ev=evs,
        moved=[0] * len(times),
        born_from=g.born_from,
        born_slot=g.born_slot,
        stop_reason=stop_reason,
        final_time=time,
        final_rows=[r for r in range(len(nbr)) if infected[r]],
        snap_rows=snap_rows,
        snap_count=snap_count,
        frozen_touched=frozen_touched,
    )


def _check_wb_index(d, lam, nbr, status, infected, lists, emap):
    """Recompute the discordant index from scratch and compare (tests only)."""
    want = {}
    for a in range(len(nbr)):
        for j in range(d):
            b = nbr[a][j]
            if b < 0:
                continue
            key = (a, b) if a < b else (b, a)
            if key in want:
                continue
            pa = status[a] == FROZEN_PLUS or (status[a] == FREE and infected[a])
            pb = status[b] == FROZEN_PLUS or (status[b] == FREE and infected[b])
            if pa == pb:
                continue
            u, v = (a, b) if pa else (b, a)
            su, sv = status[u], status[v]
            if su == FREE and sv == FREE:
                want[key] = (BOTH, (u, v))
            elif su == FROZEN_PLUS and sv == FREE:
                want[key] = (INF_ONLY, (u, v))
            elif su == FREE and sv == FROZEN_MINUS:
                want[key] = (HEAL_ONLY, (u, v))
    have = {}
    for cls in (BOTH, INF_ONLY, HEAL_ONLY):
        for u, v in lists[cls]:
            key = (u, v) if u < v else (v, u)
            have[key] = (cls, (u, v))
    assert want == have, "incremental discordant index diverged from rescan"
    assert set(emap) == set(want)


def bcrw_simulate(
    d: int,
    lam: float,
    nbr0: np.ndarray,
    status0: np.ndarray,
    occupied_rows: np.ndarray,
    t_max: float,
    max_events: int,
    stop_extinct: bool,
    size_reaches: int,
    include_rows: np.ndarray,
    snap_times: np.ndarray,
    feed: UniformFeed,
) -> dict:
    g = _Grower(nbr0, status0, d)
    nbr, status = g.nbr, g.status

    occupied = [False] * len(nbr)
    absorbed = [False] * len(nbr)
    occ_list = []
    occ_pos = [-1] * len(nbr)

    def add_particle(x):
        occupied[x] = True
        occ_pos[x] = len(occ_list)
        occ_list.append(x)

    def remove_particle(x):
        occupied[x] = False
        i = occ_pos[x]
        occ_pos[x] = -1
        last = occ_list.pop()
        if i < len(occ_list):
            occ_list[i] = last
            occ_pos[last] = i

    for x in occupied_rows:
        x = int(x)
        if not occupied[x]:
            add_particle(x)

    in_target = set(int(x) for x in include_rows)
    target_hit = sum(1 for x in in_target if occupied[x] or absorbed[x])

    times, kinds, eus, evs, moveds = [], [], [], [], []
    snap_rows, snap_count = [], 0
    n_snaps = len(snap_times)

    def flush_snaps_until(limit):
        nonlocal snap_count
        while snap_count < n_snaps and snap_times[snap_count] <= limit:
            snap_rows.append(np.array(sorted(occ_list), dtype=np.int32))
            snap_count += 1

    time = 0.0
    n_events = 0
    exited = False
    frozen_touched = False
    absorbed_list = []
    rate_per_particle = d * lam

    def check_stops():
        if stop_extinct and not occ_list:
            return EXTINCT
        if size_reaches > 0 and len(occ_list) >= size_reaches:
            return SIZE
        if in_target and target_hit == len(in_target):
            return INCLUDE
        return None

    def cover(x):
        nonlocal target_hit
        if x in in_target:
            target_hit += 1

    def uncover(x):
        nonlocal target_hit
        if x in in_target:
            target_hit -= 1

    stop_reason = check_stops()
    while stop_reason is None:
        if not occ_list:
            stop_reason = EXTINCT if stop_extinct else ABSORBED
            break
        total = rate_per_particle * len(occ_list)
        u1 = feed.take()
        tnew = time + (-math.log(1.0 - u1) / total)
        flush_snaps_until(t_max if tnew > t_max else tnew)
        if tnew > t_max:
            time = t_max
            stop_reason = TMAX
            break
        time = tnew

        pi = min(int(feed.take() * len(occ_list)), len(occ_list) - 1)
        x = occ_list[pi]
        j = min(int(feed.take() * d), d - 1)
        is_move = feed.take() * lam < 1.0

        w = nbr[x][j]
        if w < 0:
            w = g.materialize(x, j)
            occupied.append(False)
            absorbed.append(False)
            occ_pos.append(-1)
        st = status[w]

        if st == FROZEN_MINUS:
            exited = True
            frozen_touched = True
            kind = EXIT
            if is_move:
                remove_particle(x)
                if not absorbed[x]:
                    uncover(x)
        elif st == FROZEN_PLUS:
            exited = True
            frozen_touched = True
            kind = ABSORB
            if not absorbed[w]:
                absorbed[w] = True
                absorbed_list.append(w)
                if not occupied[w]:
                    cover(w)
            if is_move:
                remove_particle(x)
                if not absorbed[x]:
                    uncover(x)
        elif occupied[w]:
            kind = COALESCE
            if is_move:
                remove_particle(x)
                if not absorbed[x]:
                    uncover(x)
        else:
            add_particle(w)
            if not absorbed[w]:
                cover(w)
            if is_move:
                kind = MOVE
                remove_particle(x)
                if not absorbed[x]:
                    uncover(x)
            else:
                kind = BRANCH

        times.append(time)
        kinds.append(kind)
        eus.append(x)
        evs.append(w)
        moveds.append(1 if is_move else 0)
        n_events += 1

        stop_reason = check_stops()
        if stop_reason is None and n_events >= max_events:
            stop_reason = MAXEVENTS

    if stop_reason in (ABSORBED, EXTINCT):
        flush_snaps_until(t_max)

    return _result(
        times=times,
        kinds=kinds,
        eu=eus,
        ev=evs,
        moved=moveds,
        born_from=g.born_from,
        born_slot=g.born_slot,
        stop_reason=stop_reason,
        final_time=time,
        final_rows=sorted(occ_list),
        snap_rows=snap_rows,
        snap_count=snap_count,
        frozen_touched=frozen_touched,
        absorbed_rows=absorbed_list,
        exited=exited,
    )
