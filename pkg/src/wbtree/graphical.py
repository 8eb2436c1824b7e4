"""Harris-style graphical representation on finite space-time windows.

Each ordered neighbor pair (u, v) inside the window carries two Poisson
point processes on (0, T]:

* ``circ`` points at rate 1: an arrow u -> v together with a hole just
  below (v, s) — the target copies the source's state.
* ``bullet`` points at rate lambda_max - 1, each with an i.i.d. uniform
  mark: a pure arrow — the target turns + if the source is +.  For any
  lambda <= lambda_max, keeping the points with mark < (lambda-1) /
  (lambda_max-1) yields the rate-(lambda-1) process, and these effective
  sets are nested in lambda, which realizes the monotone coupling.

The window has an implicit - boundary: vertices outside W are permanently
minus.  Incoming boundary pairs (u outside, v in W) therefore carry only
their circ process (their bullet points could never act, since the source
is never +); outgoing pairs carry nothing, since they cannot affect W.

A forward sweep of the merged event list gives the infection process on
the window; a backward sweep gives the dual walk; both sweeps read the
same realization, which makes the duality check exact per realization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Union

from . import tree
from .configs import BoundarySpec, Configuration, config_of, frozen_sign
from .rng import RandomStream
from .tree import TreeParams, VertexAddr, format_addr, sort_key


class LambdaExceedsWindow(ValueError):
    """Requested lambda is above the lambda_max the marks were drawn for."""


@dataclass(frozen=True)
class Window:
    params: TreeParams
    vertices: frozenset[VertexAddr]
    horizon: float
    lambda_max: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        if self.horizon <= 0:
            raise ValueError("window horizon must be positive")
        if self.lambda_max < 1.0:
            raise ValueError("lambda_max must be >= 1")


# One merged sweep entry: (time, u, v, kind, mark); kind "circ" | "bullet".
SweepEvent = tuple[float, VertexAddr, VertexAddr, str, float]


@dataclass(frozen=True)
class EdgeProcesses:
    window: Window
    circ: dict[tuple[VertexAddr, VertexAddr], tuple[float, ...]]
    bullets: dict[tuple[VertexAddr, VertexAddr], tuple[tuple[float, float], ...]]
    sweep: tuple[SweepEvent, ...] = field(default=None)

    def __post_init__(self):
        if self.sweep is None:
            events = []
            for (u, v), times in self.circ.items():
                events.extend((t, u, v, "circ", 0.0) for t in times)
            for (u, v), pts in self.bullets.items():
                events.extend((t, u, v, "bullet", mark) for t, mark in pts)
            events.sort(key=lambda e: (e[0], sort_key(e[1]), sort_key(e[2]), e[3]))
            object.__setattr__(self, "sweep", tuple(events))

    def effective_threshold(self, lam: float) -> float:
        """Mark threshold selecting the rate-(lam-1) bullet subset."""
        if lam > self.window.lambda_max:
            raise LambdaExceedsWindow(
                f"lambda {lam} exceeds window lambda_max {self.window.lambda_max}"
            )
        if lam < 1.0:
            raise ValueError("lambda must be >= 1")
        if self.window.lambda_max == 1.0:
            return 0.0
        return (lam - 1.0) / (self.window.lambda_max - 1.0)


def _poisson_times(stream: RandomStream, rate: float, horizon: float,
                   with_marks: bool):
    if rate <= 0.0:
        return ()
    import math

    gen = stream.generator
    out = []
    t = 0.0
    while True:
        t += -math.log(1.0 - gen.random()) / rate
        if t > horizon:
            return tuple(out)
        if with_marks:
            out.append((t, gen.random()))
        else:
            out.append(t)


def _ordered_pairs(window: Window):
    """(u, v) pairs whose processes can act on W: all intra-window ordered
    pairs, plus incoming boundary pairs (circ only)."""
    w = window.vertices
    intra = []
    for u in sorted(w, key=sort_key):
        for v in tree.neighbors(window.params, u):
            if v in w:
                intra.append((u, v))
    incoming = [
        (outside, inside)
        for inside, outside in sorted(
            tree.boundary_edges(window.params, w),
            key=lambda e: (sort_key(e[0]), sort_key(e[1])),
        )
    ]
    return intra, incoming


def sample_window(window: Window, seed: Union[int, RandomStream]) -> EdgeProcesses:
    """Independent Poisson processes per ordered pair.

    Streams are keyed by (seed, "edge", u, v, kind), and points are drawn
    as sequential exponential gaps, so enlarging W or T extends existing
    edges instead of resampling them.
    """
    root = seed if isinstance(seed, RandomStream) else RandomStream(seed)
    bullet_rate = window.lambda_max - 1.0
    intra, incoming = _ordered_pairs(window)
    circ = {}
    bullets = {}
    for u, v in intra:
        key = ("edge", format_addr(u), format_addr(v))
        circ[(u, v)] = _poisson_times(
            root.child(*key, "circ"), 1.0, window.horizon, with_marks=False
        )
        bullets[(u, v)] = _poisson_times(
            root.child(*key, "bullet"), bullet_rate, window.horizon, with_marks=True
        )
    for u, v in incoming:
        key = ("edge", format_addr(u), format_addr(v))
        circ[(u, v)] = _poisson_times(
            root.child(*key, "circ"), 1.0, window.horizon, with_marks=False
        )
    return EdgeProcesses(window, circ, bullets)


def _validate(ep: EdgeProcesses, subset, lam: float, t: float) -> float:
    if t < 0 or t > ep.window.horizon:
        raise ValueError(f"time {t} outside window horizon {ep.window.horizon}")
    extra = set(subset) - ep.window.vertices
    if extra:
        raise ValueError(f"vertices outside the window: {sorted(extra, key=sort_key)}")
    return ep.effective_threshold(lam)


def forward_reach(
    ep: EdgeProcesses, start: Iterable[VertexAddr], lam: float, t: float
) -> Configuration:
    """State at time t of the infection process on W^- started from `start`."""
    start = set(start)
    threshold = _validate(ep, start, lam, t)
    w = ep.window.vertices
    reach = set(start)
    for s, u, v, kind, mark in ep.sweep:
        if s > t:
            break
        if kind == "circ":
            if u in reach:
                reach.add(v)
            else:
                reach.discard(v)
        elif mark < threshold and u in reach:
            reach.add(v)
    return config_of(reach & w)


def backward_reach(
    ep: EdgeProcesses, targets: Iterable[VertexAddr], lam: float, t: float
) -> Configuration:
    """Dual-walk state: vertices at time 0 joined to (targets, t) by a path."""
    targets = set(targets)
    threshold = _validate(ep, targets, lam, t)
    w = ep.window.vertices
    s_set = set(targets)
    for s, u, v, kind, mark in reversed(ep.sweep):
        if s > t:
            continue
        if kind == "circ":
            if v in s_set:
                s_set.discard(v)
                if u in w:
                    s_set.add(u)
        elif mark < threshold and v in s_set and u in w:
            s_set.add(u)
    return config_of(s_set)


def forward_reach_bc(
    ep: EdgeProcesses,
    start: Iterable[VertexAddr],
    boundary: BoundarySpec,
    lam: float,
    t: float,
) -> Configuration:
    """Forward sweep with frozen boundary signs instead of the implicit -.

    Frozen + vertices are permanently in reach, frozen - never; arrows
    into frozen vertices are ignored.
    """
    params = ep.window.params
    start = set(start)
    threshold = _validate(ep, start, lam, t)
    for x in start:
        if frozen_sign(params, boundary, x) != 0:
            raise ValueError(f"start vertex {x} is frozen by the boundary")

    signs = {x: frozen_sign(params, boundary, x) for x in ep.window.vertices}
    reach = set(start)

    def in_reach(x):
        fs = signs.get(x)
        if fs is None:
            fs = frozen_sign(params, boundary, x)
            if fs == 0:
                fs = -1  # free but outside the simulated window: treat as -
        if fs != 0:
            return fs > 0
        return x in reach

    for s, u, v, kind, mark in ep.sweep:
        if s > t:
            break
        if signs.get(v, -1) != 0:
            continue
        if kind == "circ":
            if in_reach(u):
                reach.add(v)
            else:
                reach.discard(v)
        elif mark < threshold and in_reach(u):
            reach.add(v)
    plus_frozen = {x for x, fs in signs.items() if fs > 0}
    return config_of(reach | plus_frozen)


def check_duality(ep: EdgeProcesses, a, b, lam: float, t: float) -> bool:
    """Path-existence symmetry: the forward sweep from A meets B at time t
    iff the backward sweep from B meets A at time 0.  Always true."""
    a, b = set(a), set(b)
    fwd = forward_reach(ep, a, lam, t)
    bwd = backward_reach(ep, b, lam, t)
    return bool(fwd.plus_set & b) == bool(bwd.plus_set & a)


def check_monotone(ep: EdgeProcesses, a, a_big, lam: float, lam_big: float, t: float) -> bool:
    """Coupled containment: smaller start and lambda stay inside the larger
    run on the same realization.  Always true."""
    a, a_big = set(a), set(a_big)
    if not a <= a_big:
        raise ValueError("first start set must be contained in the second")
    if lam > lam_big:
        raise ValueError("first lambda must be <= the second")
    small = forward_reach(ep, a, lam, t)
    big = forward_reach(ep, a_big, lam_big, t)
    return small.plus_set <= big.plus_set


def dump_window_csv(ep: EdgeProcesses, fileobj) -> None:
    """Debug/golden dump: `u,v,kind,time,mark` rows in sweep order."""
    writer = csv.writer(fileobj)
    writer.writerow(["u", "v", "kind", "time", "mark"])
    for s, u, v, kind, mark in ep.sweep:
        writer.writerow([
            format_addr(u),
            format_addr(v),
            kind,
            repr(s),
            repr(mark) if kind == "bullet" else "",
        ])
