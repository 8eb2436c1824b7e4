# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled event-driven kernels.

Mirrors `reference.py` operation for operation (including the order in
which uniforms are consumed), so the two backends are bit-identical for a
given seed.  Keep the twins in sync when touching either.
"""

from cython.operator cimport dereference as deref
from libc.math cimport log
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

cdef enum:
    INFECT = 0
    HEAL = 1
    MOVE = 2
    BRANCH = 3
    COALESCE = 4
    EXIT = 5
    ABSORB = 6

cdef enum:
    ABSORBED = 0
    EXTINCT = 1
    SIZE = 2
    INCLUDE = 3
    TMAX = 4
    MAXEVENTS = 5

cdef enum:
    FREE = 0
    FROZEN_PLUS = 1
    FROZEN_MINUS = 2

cdef enum:
    BOTH = 0
    INF_ONLY = 1
    HEAL_ONLY = 2

DEFAULT_BATCH = 1 << 14


cdef class UniformFeed:
    """Sequential uniforms drawn from a numpy generator in fixed batches."""
    cdef object _gen
    cdef int _batch
    cdef object _arr
    cdef double[::1] _buf
    cdef Py_ssize_t _pos, _n

    def __init__(self, gen, int batch=DEFAULT_BATCH):
        self._gen = gen
        self._batch = batch
        self._pos = 0
        self._n = 0

    cdef double take(self):
        if self._pos >= self._n:
            self._arr = self._gen.random(self._batch)
            self._buf = self._arr
            self._n = self._buf.shape[0]
            self._pos = 0
        cdef double u = self._buf[self._pos]
        self._pos += 1
        return u


cdef inline long long edge_key(int a, int b):
    if a < b:
        return ((<long long> a) << 32) | <unsigned int> b
    return ((<long long> b) << 32) | <unsigned int> a


cdef class _Sim:
    """State shared by the WB and BCRW loops (arena copy + growth)."""
    cdef int d
    cdef double lam
    cdef vector[int] nbr
    cdef vector[signed char] status
    cdef vector[int] born_from
    cdef vector[signed char] born_slot
    cdef vector[char] in_target
    cdef Py_ssize_t n_target
    cdef Py_ssize_t target_hit
    cdef vector[double] ev_t
    cdef vector[signed char] ev_k
    cdef vector[int] ev_u
    cdef vector[int] ev_v
    cdef vector[signed char] ev_m
    cdef vector[int] snap_flat
    cdef vector[long long] snap_off

    cdef void load(self, int d, double lam,
                   cnp.int32_t[:, ::1] nbr0, cnp.int8_t[::1] status0,
                   cnp.int32_t[::1] include_rows):
        cdef Py_ssize_t i, j, n0 = nbr0.shape[0]
        self.d = d
        self.lam = lam
        self.nbr.resize(n0 * d)
        self.status.resize(n0)
        for i in range(n0):
            self.status[i] = status0[i]
            for j in range(d):
                self.nbr[i * d + j] = nbr0[i, j]
        self.in_target.assign(n0, 0)
        self.n_target = include_rows.shape[0]
        self.target_hit = 0
        for i in range(self.n_target):
            self.in_target[include_rows[i]] = 1

    cdef int materialize(self, int x, int j):
        cdef int n = <int> self.status.size()
        cdef int s
        for s in range(self.d):
            self.nbr.push_back(-1)
        if j == 0:
            self.nbr[n * self.d + 1] = x
        else:
            self.nbr[n * self.d + 0] = x
        self.status.push_back(FREE)
        self.in_target.push_back(0)
        self.nbr[x * self.d + j] = n
        self.born_from.push_back(x)
        self.born_slot.push_back(<signed char> j)
        return n

    cdef void log_event(self, double t, int kind, int u, int v, int m):
        self.ev_t.push_back(t)
        self.ev_k.push_back(<signed char> kind)
        self.ev_u.push_back(u)
        self.ev_v.push_back(v)
        self.ev_m.push_back(<signed char> m)

    cdef dict result(self, int stop_reason, double final_time,
                     object final_rows, object absorbed_rows, bint exited,
                     bint frozen_touched, Py_ssize_t snap_count):
        cdef Py_ssize_t n = self.ev_t.size()
        cdef cnp.ndarray times = np.empty(n, dtype=np.float64)
        cdef cnp.ndarray kinds = np.empty(n, dtype=np.int8)
        cdef cnp.ndarray eu = np.empty(n, dtype=np.int32)
        cdef cnp.ndarray ev = np.empty(n, dtype=np.int32)
        cdef cnp.ndarray moved = np.empty(n, dtype=np.int8)
        cdef double[::1] tv = times
        cdef signed char[::1] kv = kinds
        cdef int[::1] uv = eu
        cdef int[::1] vv = ev
        cdef signed char[::1] mv = moved
        cdef Py_ssize_t i
        for i in range(n):
            tv[i] = self.ev_t[i]
            kv[i] = self.ev_k[i]
            uv[i] = self.ev_u[i]
            vv[i] = self.ev_v[i]
            mv[i] = self.ev_m[i]
        cdef Py_ssize_t nb = self.born_from.size()
        cdef cnp.ndarray bf = np.empty(nb, dtype=np.int32)
        cdef cnp.ndarray bs = np.empty(nb, dtype=np.int8)
        cdef int[::1] bfv = bf
        cdef signed char[::1] bsv = bs
        for i in range(nb):
            bfv[i] = self.born_from[i]
            bsv[i] = self.born_slot[i]
        snap_rows = []
        cdef Py_ssize_t k, lo, hi
        for k in range(<Py_ssize_t> self.snap_off.size() - 1 if self.snap_off.size() > 0 else 0):
            lo = self.snap_off[k]
            hi = self.snap_off[k + 1]
            arr = np.empty(hi - lo, dtype=np.int32)
            for i in range(hi - lo):
                arr[i] = self.snap_flat[lo + i]
            snap_rows.append(arr)
        return {
            "times": times,
            "kinds": kinds,
            "eu": eu,
            "ev": ev,
            "moved": moved,
            "born_from": bf,
            "born_slot": bs,
            "stop_reason": stop_reason,
            "final_time": final_time,
            "final_rows": np.asarray(final_rows, dtype=np.int32),
            "snap_rows": snap_rows,
            "snap_count": snap_count,
            "frozen_touched": bool(frozen_touched),
            "absorbed_rows": np.asarray(absorbed_rows, dtype=np.int32),
            "exited": bool(exited),
        }


cdef class _WBSim(_Sim):
    cdef vector[char] infected
    cdef Py_ssize_t n_infected
    cdef vector[int] lu0, lv0, lu1, lv1, lu2, lv2
    cdef unordered_map[long long, long long] emap

    cdef inline bint plus(self, int r):
        if self.status[r] == FROZEN_PLUS:
            return True
        return self.status[r] == FREE and self.infected[r]

    cdef inline void _pop_class(self, int cls, Py_ssize_t idx):
        cdef vector[int]* lu
        cdef vector[int]* lv
        if cls == BOTH:
            lu = &self.lu0; lv = &self.lv0
        elif cls == INF_ONLY:
            lu = &self.lu1; lv = &self.lv1
        else:
            lu = &self.lu2; lv = &self.lv2
        cdef int last_u = lu[0][lu[0].size() - 1]
        cdef int last_v = lv[0][lv[0].size() - 1]
        lu[0].pop_back()
        lv[0].pop_back()
        if idx < <Py_ssize_t> lu[0].size():
            lu[0][idx] = last_u
            lv[0][idx] = last_v
            self.emap[edge_key(last_u, last_v)] = ((<long long> cls) << 32) | <unsigned int> idx

    cdef void refresh_edge(self, int a, int b):
        cdef long long key = edge_key(a, b)
        cdef long long packed
        cdef unordered_map[long long, long long].iterator it = self.emap.find(key)
        if it != self.emap.end():
            packed = deref(it).second
            self.emap.erase(it)
            self._pop_class(<int> (packed >> 32), <Py_ssize_t> (packed & 0xffffffff))
        cdef bint pa = self.plus(a)
        cdef bint pb = self.plus(b)
        if pa == pb:
            return
        cdef int u, v
        if pa:
            u = a; v = b
        else:
            u = b; v = a
        cdef int su = self.status[u]
        cdef int sv = self.status[v]
        cdef int cls
        cdef Py_ssize_t idx
        if su == FREE and sv == FREE:
            cls = BOTH
            idx = self.lu0.size()
            self.lu0.push_back(u); self.lv0.push_back(v)
        elif su == FROZEN_PLUS and sv == FREE:
            cls = INF_ONLY
            idx = self.lu1.size()
            self.lu1.push_back(u); self.lv1.push_back(v)
        elif su == FREE and sv == FROZEN_MINUS:
            cls = HEAL_ONLY
            idx = self.lu2.size()
            self.lu2.push_back(u); self.lv2.push_back(v)
        else:
            return
        self.emap[key] = ((<long long> cls) << 32) | <unsigned int> idx

    cdef void scan_vertex(self, int x, bint materialize_missing):
        cdef int j, w
        for j in range(self.d):
            w = self.nbr[x * self.d + j]
            if w < 0:
                if not materialize_missing:
                    continue
                w = self.materialize(x, j)
                self.infected.push_back(0)
            self.refresh_edge(x, w)

    cdef void take_snapshot(self):
        cdef Py_ssize_t r
        if self.snap_off.size() == 0:
            self.snap_off.push_back(0)
        for r in range(<Py_ssize_t> self.status.size()):
            if self.infected[r]:
                self.snap_flat.push_back(<int> r)
        self.snap_off.push_back(<long long> self.snap_flat.size())

    cdef int check_stops(self, bint stop_extinct, long size_reaches):
        if stop_extinct and self.n_infected == 0:
            return EXTINCT
        if size_reaches > 0 and self.n_infected >= size_reaches:
            return SIZE
        if self.n_target > 0 and self.target_hit == self.n_target:
            return INCLUDE
        return -1


def wb_simulate(int d, double lam,
                cnp.ndarray[cnp.int32_t, ndim=2] nbr0,
                cnp.ndarray[cnp.int8_t, ndim=1] status0,
                cnp.ndarray[cnp.int32_t, ndim=1] infected_rows,
                cnp.ndarray[cnp.int32_t, ndim=1] frozen_plus_rows,
                double t_max, long max_events,
                bint stop_extinct, long size_reaches,
                cnp.ndarray[cnp.int32_t, ndim=1] include_rows,
                cnp.ndarray[cnp.float64_t, ndim=1] snap_times,
                UniformFeed feed,
                bint check_invariants=False):
    cdef _WBSim s = _WBSim()
    s.load(d, lam, nbr0, status0, include_rows)
    cdef Py_ssize_t i
    cdef int x, u, v, j
    s.infected.assign(s.status.size(), 0)
    s.n_infected = 0
    for i in range(infected_rows.shape[0]):
        x = infected_rows[i]
        if not s.infected[x]:
            s.infected[x] = 1
            s.n_infected += 1
            if s.in_target[x]:
                s.target_hit += 1
    for i in range(infected_rows.shape[0]):
        s.scan_vertex(infected_rows[i], True)
    cdef int w
    for i in range(frozen_plus_rows.shape[0]):
        u = frozen_plus_rows[i]
        for j in range(d):
            w = s.nbr[u * d + j]
            if w >= 0:
                s.refresh_edge(u, w)

    cdef Py_ssize_t snap_count = 0
    cdef Py_ssize_t n_snaps = snap_times.shape[0]
    cdef double time = 0.0, tnew, total, r, mass_both, mass_inf, limit
    cdef long n_events = 0
    cdef bint frozen_touched = False
    cdef bint do_infect
    cdef Py_ssize_t n_both, n_inf, n_heal, idx
    cdef int stop_reason = s.check_stops(stop_extinct, size_reaches)

    while stop_reason < 0:
        n_both = s.lu0.size()
        n_inf = s.lu1.size()
        n_heal = s.lu2.size()
        total = (lam + 1.0) * n_both + lam * n_inf + n_heal
        if total <= 0.0:
            stop_reason = EXTINCT if (stop_extinct and s.n_infected == 0) else ABSORBED
            break
        tnew = time + (-log(1.0 - feed.take()) / total)
        limit = t_max if tnew > t_max else tnew
        while snap_count < n_snaps and snap_times[snap_count] <= limit:
            s.take_snapshot()
            snap_count += 1
        if tnew > t_max:
            time = t_max
            stop_reason = TMAX
            break
        time = tnew

        r = feed.take() * total
        mass_both = (lam + 1.0) * n_both
        mass_inf = lam * n_inf
        if r < mass_both:
            idx = <Py_ssize_t> (r / (lam + 1.0))
            if idx > n_both - 1:
                idx = n_both - 1
            u = s.lu0[idx]; v = s.lv0[idx]
            do_infect = feed.take() * (lam + 1.0) < lam
        elif r - mass_both < mass_inf:
            idx = <Py_ssize_t> ((r - mass_both) / lam)
            if idx > n_inf - 1:
                idx = n_inf - 1
            u = s.lu1[idx]; v = s.lv1[idx]
            do_infect = True
            frozen_touched = True
        elif n_heal > 0:
            idx = <Py_ssize_t> (r - mass_both - mass_inf)
            if idx > n_heal - 1:
                idx = n_heal - 1
            u = s.lu2[idx]; v = s.lv2[idx]
            do_infect = False
            frozen_touched = True
        elif n_inf > 0:
            u = s.lu1[n_inf - 1]; v = s.lv1[n_inf - 1]
            do_infect = True
            frozen_touched = True
        else:
            u = s.lu0[n_both - 1]; v = s.lv0[n_both - 1]
            do_infect = feed.take() * (lam + 1.0) < lam

        if do_infect:
            x = v
            s.infected[x] = 1
            s.n_infected += 1
            if s.in_target[x]:
                s.target_hit += 1
            s.log_event(time, INFECT, u, v, 0)
        else:
            x = u
            s.infected[x] = 0
            s.n_infected -= 1
            if s.in_target[x]:
                s.target_hit -= 1
            s.log_event(time, HEAL, u, v, 0)
        s.scan_vertex(x, do_infect)
        n_events += 1

        stop_reason = s.check_stops(stop_extinct, size_reaches)
        if stop_reason < 0 and n_events >= max_events:
            stop_reason = MAXEVENTS

    if stop_reason == ABSORBED or stop_reason == EXTINCT:
        while snap_count < n_snaps and snap_times[snap_count] <= t_max:
            s.take_snapshot()
            snap_count += 1

    final_rows = [r2 for r2 in range(s.status.size()) if s.infected[r2]]
    return s.result(stop_reason, time, final_rows, [], False, frozen_touched, snap_count)


cdef class _BCRWSim(_Sim):
    cdef vector[char] occupied
    cdef vector[char] absorbed
    cdef vector[int] occ_list
    cdef vector[int] occ_pos

    cdef void add_particle(self, int x):
        self.occupied[x] = 1
        self.occ_pos[x] = <int> self.occ_list.size()
        self.occ_list.push_back(x)

    cdef void remove_particle(self, int x):
        self.occupied[x] = 0
        cdef int i = self.occ_pos[x]
        self.occ_pos[x] = -1
        cdef int last = self.occ_list[self.occ_list.size() - 1]
        self.occ_list.pop_back()
        if i < <int> self.occ_list.size():
            self.occ_list[i] = last
            self.occ_pos[last] = i

    cdef void take_snapshot(self):
        cdef Py_ssize_t r
        if self.snap_off.size() == 0:
            self.snap_off.push_back(0)
        for r in range(<Py_ssize_t> self.status.size()):
            if self.occupied[r]:
                self.snap_flat.push_back(<int> r)
        self.snap_off.push_back(<long long> self.snap_flat.size())

    cdef int check_stops(self, bint stop_extinct, long size_reaches):
        if stop_extinct and self.occ_list.size() == 0:
            return EXTINCT
        if size_reaches > 0 and <long> self.occ_list.size() >= size_reaches:
            return SIZE
        if self.n_target > 0 and self.target_hit == self.n_target:
            return INCLUDE
        return -1


def bcrw_simulate(int d, double lam,
                  cnp.ndarray[cnp.int32_t, ndim=2] nbr0,
                  cnp.ndarray[cnp.int8_t, ndim=1] status0,
                  cnp.ndarray[cnp.int32_t, ndim=1] occupied_rows,
                  double t_max, long max_events,
                  bint stop_extinct, long size_reaches,
                  cnp.ndarray[cnp.int32_t, ndim=1] include_rows,
                  cnp.ndarray[cnp.float64_t, ndim=1] snap_times,
                  UniformFeed feed):
    cdef _BCRWSim s = _BCRWSim()
    s.load(d, lam, nbr0, status0, include_rows)
    cdef Py_ssize_t i
    cdef int x, j, w, st, kind
    s.occupied.assign(s.status.size(), 0)
    s.absorbed.assign(s.status.size(), 0)
    s.occ_pos.assign(s.status.size(), -1)
    for i in range(occupied_rows.shape[0]):
        x = occupied_rows[i]
        if not s.occupied[x]:
            s.add_particle(x)
            if s.in_target[x]:
                s.target_hit += 1

    cdef Py_ssize_t snap_count = 0
    cdef Py_ssize_t n_snaps = snap_times.shape[0]
    cdef double time = 0.0, tnew, total, limit
    cdef double rate_per_particle = d * lam
    cdef long n_events = 0
    cdef bint exited = False, frozen_touched = False, is_move
    cdef Py_ssize_t pi
    absorbed_list = []
    cdef int stop_reason = s.check_stops(stop_extinct, size_reaches)

    while stop_reason < 0:
        if s.occ_list.size() == 0:
            stop_reason = EXTINCT if stop_extinct else ABSORBED
            break
        total = rate_per_particle * s.occ_list.size()
        tnew = time + (-log(1.0 - feed.take()) / total)
        limit = t_max if tnew > t_max else tnew
        while snap_count < n_snaps and snap_times[snap_count] <= limit:
            s.take_snapshot()
            snap_count += 1
        if tnew > t_max:
            time = t_max
            stop_reason = TMAX
            break
        time = tnew

        pi = <Py_ssize_t> (feed.take() * s.occ_list.size())
        if pi > <Py_ssize_t> s.occ_list.size() - 1:
            pi = s.occ_list.size() - 1
        x = s.occ_list[pi]
        j = <int> (feed.take() * d)
        if j > d - 1:
            j = d - 1
        is_move = feed.take() * lam < 1.0

        w = s.nbr[x * d + j]
        if w < 0:
            w = s.materialize(x, j)
            s.occupied.push_back(0)
            s.absorbed.push_back(0)
            s.occ_pos.push_back(-1)
        st = s.status[w]

        if st == FROZEN_MINUS:
            exited = True
            frozen_touched = True
            kind = EXIT
            if is_move:
                s.remove_particle(x)
                if not s.absorbed[x] and s.in_target[x]:
                    s.target_hit -= 1
        elif st == FROZEN_PLUS:
            exited = True
            frozen_touched = True
            kind = ABSORB
            if not s.absorbed[w]:
                s.absorbed[w] = 1
                absorbed_list.append(w)
                if not s.occupied[w] and s.in_target[w]:
                    s.target_hit += 1
            if is_move:
                s.remove_particle(x)
                if not s.absorbed[x] and s.in_target[x]:
                    s.target_hit -= 1
        elif s.occupied[w]:
            kind = COALESCE
            if is_move:
                s.remove_particle(x)
                if not s.absorbed[x] and s.in_target[x]:
                    s.target_hit -= 1
        else:
            s.add_particle(w)
            if not s.absorbed[w] and s.in_target[w]:
                s.target_hit += 1
            if is_move:
                kind = MOVE
                s.remove_particle(x)
                if not s.absorbed[x] and s.in_target[x]:
                    s.target_hit -= 1
            else:
                kind = BRANCH

        s.log_event(time, kind, x, w, 1 if is_move else 0)
        n_events += 1

        stop_reason = s.check_stops(stop_extinct, size_reaches)
        if stop_reason < 0 and n_events >= max_events:
            stop_reason = MAXEVENTS

    if stop_reason == ABSORBED or stop_reason == EXTINCT:
        while snap_count < n_snaps and snap_times[snap_count] <= t_max:
            s.take_snapshot()
            snap_count += 1

    final_rows = sorted(s.occ_list[i2] for i2 in range(s.occ_list.size()))
    return s.result(stop_reason, time, final_rows, absorbed_list, exited,
                    frozen_touched, snap_count)


def make_feed(gen, batch=DEFAULT_BATCH):
    return UniformFeed(gen, batch)
