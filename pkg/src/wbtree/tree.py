"""Lazy canonical representation of the d-regular tree.

A distinguished origin and a fixed end (the "parent" direction) orient the
tree: every vertex has one parent and d-1 children.  A vertex is addressed
as ``(k, w)``: walk k steps from the origin up the distinguished ray to the
ancestor a(k), then descend along the child-index word w.  Child index 0 of
a ray vertex a(k), k >= 1, is reserved for a(k-1), so canonical addresses
with k > 0 never start their word with 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

MAX_DEGREE = 64


class InfiniteRegionError(ValueError):
    """Raised when a finite enumeration of an infinite region is requested."""


class AddressSyntaxError(ValueError):
    """Raised for malformed or non-canonical textual vertex addresses."""


@dataclass(frozen=True)
class TreeParams:
    """Degree parameter of the regular tree; d >= 3 (practical cap 64)."""

    d: int

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 3:
            raise ValueError(f"degree must be an integer >= 3, got {self.d!r}")
        if self.d > MAX_DEGREE:
            raise ValueError(f"degree {self.d} exceeds the practical cap {MAX_DEGREE}")


@dataclass(frozen=True)
class VertexAddr:
    """Canonical vertex address (k steps up the fixed ray, then descent word w)."""

    k: int
    w: tuple[int, ...] = ()

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        w = self.w
        if w:
            if min(w) < 0:
                raise ValueError("descent letters must be nonnegative")
            if self.k > 0 and w[0] == 0:
                # Child 0 of a ray vertex is a(k-1); that vertex is (k-1, ...).
                raise ValueError(
                    f"non-canonical address: k={self.k} with word starting in 0"
                )

    def __str__(self):
        return format_addr(self)


ORIGIN = VertexAddr(0, ())


def sort_key(x: VertexAddr) -> tuple:
    """Deterministic total order: by distance to origin, then (k, w)."""
    return (x.k + len(x.w), x.k, x.w)


def parent(x: VertexAddr) -> VertexAddr:
    """Unique neighbor of x toward the fixed end."""
    if x.w:
        return VertexAddr(x.k, x.w[:-1])
    return VertexAddr(x.k + 1, ())


def children(params: TreeParams, x: VertexAddr) -> list[VertexAddr]:
    """The d-1 children of x; for a ray vertex a(k), k >= 1, child 0 is a(k-1)."""
    d = params.d
    if x.k > 0 and not x.w:
        out = [VertexAddr(x.k - 1, ())]
        out.extend(VertexAddr(x.k, (j,)) for j in range(1, d - 1))
        return out
    return [VertexAddr(x.k, x.w + (j,)) for j in range(d - 1)]


def neighbors(params: TreeParams, x: VertexAddr) -> list[VertexAddr]:
    """All d neighbors: parent first, then children in index order."""
    return [parent(x)] + children(params, x)


def _lift(x: VertexAddr, big_k: int) -> tuple[int, ...]:
    """Descent word of x from a(big_k), for big_k >= x.k."""
    return (0,) * (big_k - x.k) + x.w


def distance(x: VertexAddr, y: VertexAddr) -> int:
    """Graph distance, via the common ancestor a(max(k_x, k_y))."""
    big_k = max(x.k, y.k)
    wx, wy = _lift(x, big_k), _lift(y, big_k)
    lcp = 0
    for a, b in zip(wx, wy):
        if a != b:
            break
        lcp += 1
    return len(wx) + len(wy) - 2 * lcp


def height(x: VertexAddr) -> int:
    """Signed depth relative to the origin through the fixed end: |w| - k."""
    return len(x.w) - x.k


def is_ancestor_or_equal(x: VertexAddr, y: VertexAddr) -> bool:
    """True iff y lies in the subtree rooted at x (x on the path y -> end)."""
    big_k = max(x.k, y.k)
    wx, wy = _lift(x, big_k), _lift(y, big_k)
    return len(wx) <= len(wy) and wy[: len(wx)] == wx


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class WholeTree:
    pass


@dataclass(frozen=True)
class Ball:
    center: VertexAddr
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True)
class Subtree:
    root: VertexAddr


@dataclass(frozen=True)
class SubtreeMinusBelow:
    """(T_root minus T_cut) union {cut}; cut must lie in T_root."""

    root: VertexAddr
    cut: VertexAddr

    def __post_init__(self):
        if not is_ancestor_or_equal(self.root, self.cut):
            raise ValueError("cut vertex must lie in the subtree of root")


@dataclass(frozen=True)
class Explicit:
    vertices: frozenset[VertexAddr]


Region = Union[WholeTree, Ball, Subtree, SubtreeMinusBelow, Explicit]


def region_contains(params: TreeParams, region: Region, x: VertexAddr) -> bool:
    if isinstance(region, WholeTree):
        return True
    if isinstance(region, Ball):
        return distance(region.center, x) <= region.radius
    if isinstance(region, Subtree):
        return is_ancestor_or_equal(region.root, x)
    if isinstance(region, SubtreeMinusBelow):
        if not is_ancestor_or_equal(region.root, x):
            return False
        return x == region.cut or not is_ancestor_or_equal(region.cut, x)
    if isinstance(region, Explicit):
        return x in region.vertices
    raise TypeError(f"not a region: {region!r}")


def ball_vertices(params: TreeParams, center: VertexAddr, radius: int) -> list[VertexAddr]:
    """All vertices within graph distance `radius` of `center`, BFS order."""
    seen = {center}
    frontier = [center]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            for u in neighbors(params, v):
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        frontier = nxt
    return sorted(seen, key=sort_key)


def sphere_vertices(params: TreeParams, center: VertexAddr, radius: int) -> list[VertexAddr]:
    return [v for v in ball_vertices(params, center, radius) if distance(center, v) == radius]


def subtree_ball_vertices(params: TreeParams, root: VertexAddr, radius: int) -> list[VertexAddr]:
    """T_root truncated at depth `radius` below the root (finite window)."""
    return [v for v in ball_vertices(params, root, radius) if is_ancestor_or_equal(root, v)]


def enumerate_region(params: TreeParams, region: Region) -> list[VertexAddr]:
    """All vertices of a finite region, sorted by (distance to origin, k, w)."""
    if isinstance(region, (WholeTree, Subtree, SubtreeMinusBelow)):
        raise InfiniteRegionError(f"region {type(region).__name__} is infinite")
    if isinstance(region, Ball):
        return ball_vertices(params, region.center, region.radius)
    if isinstance(region, Explicit):
        return sorted(region.vertices, key=sort_key)
    raise TypeError(f"not a region: {region!r}")


def boundary_edges(
    params: TreeParams, vertices: Iterable[VertexAddr]
) -> set[tuple[VertexAddr, VertexAddr]]:
    """Ordered pairs (u in U, v not in U) over tree edges leaving U."""
    vset = set(vertices)
    out = set()
    for u in vset:
        for v in neighbors(params, u):
            if v not in vset:
                out.add((u, v))
    return out


def region_crossing_edges(
    params: TreeParams, region: Region
) -> list[tuple[VertexAddr, VertexAddr]]:
    """Ordered pairs (inside, outside) over tree edges leaving the region.

    Finite for every region kind, including the infinite subtree regions
    (a subtree touches its complement only at the root's parent edge).
    """
    if isinstance(region, WholeTree):
        return []
    if isinstance(region, Subtree):
        return [(region.root, parent(region.root))]
    if isinstance(region, SubtreeMinusBelow):
        out = [(region.root, parent(region.root))]
        out.extend((region.cut, c) for c in children(params, region.cut))
        return out
    edges = boundary_edges(params, enumerate_region(params, region))
    return sorted(edges, key=lambda e: (sort_key(e[0]), sort_key(e[1])))


def path_to_origin(x: VertexAddr) -> list[VertexAddr]:
    """Vertices on the tree path from x to the origin, inclusive."""
    out = [VertexAddr(x.k, x.w[:i]) for i in range(len(x.w), -1, -1)]
    out.extend(VertexAddr(j, ()) for j in range(x.k - 1, -1, -1))
    return out


# ---------------------------------------------------------------------------
# Textual address grammar: "o" (origin) or "u<k>" optionally "/" i1 "." i2 ...

_ADDR_RE = re.compile(r"^u(\d+)(?:/(\d+(?:\.\d+)*))?$")


def format_addr(x: VertexAddr) -> str:
    if x == ORIGIN:
        return "o"
    tail = "/" + ".".join(str(c) for c in x.w) if x.w else ""
    return f"u{x.k}{tail}"


def parse_addr(text: str, params: TreeParams) -> VertexAddr:
    if text == "o":
        return ORIGIN
    m = _ADDR_RE.match(text)
    if m is None:
        raise AddressSyntaxError(f"malformed vertex address: {text!r}")
    k = int(m.group(1))
    w = tuple(int(p) for p in m.group(2).split(".")) if m.group(2) else ()
    if any(c > params.d - 2 for c in w):
        raise AddressSyntaxError(f"child index out of range for d={params.d}: {text!r}")
    try:
        return VertexAddr(k, w)
    except ValueError as exc:
        raise AddressSyntaxError(str(exc)) from exc
