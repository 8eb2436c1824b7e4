"""Configurations, boundary conditions, initial conditions and thinning.

A configuration is the finite set of + (infected / occupied) vertices; all
other vertices are -.  Frozen boundary signs are a property of the region,
not of the state, and are kept in BoundarySpec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .rng import RandomStream
from .tree import (
    Ball,
    Explicit,
    ORIGIN,
    Region,
    Subtree,
    SubtreeMinusBelow,
    TreeParams,
    VertexAddr,
    WholeTree,
    ball_vertices,
    format_addr,
    parse_addr,
    region_contains,
    sort_key,
)


@dataclass(frozen=True)
class Configuration:
    """Finite set of + vertices; equality is set equality."""

    plus_set: frozenset[VertexAddr]

    def __contains__(self, x: VertexAddr) -> bool:
        return x in self.plus_set

    def __len__(self) -> int:
        return len(self.plus_set)

    def __iter__(self):
        return iter(sorted(self.plus_set, key=sort_key))

    def __bool__(self) -> bool:
        return bool(self.plus_set)


EMPTY = Configuration(frozenset())


def config_of(vertices: Iterable[VertexAddr]) -> Configuration:
    return Configuration(frozenset(vertices))


def flip(c: Configuration, x: VertexAddr) -> Configuration:
    """Toggle the sign at x."""
    if x in c.plus_set:
        return Configuration(c.plus_set - {x})
    return Configuration(c.plus_set | {x})


def thin(c: Configuration, p: float, stream: RandomStream) -> Configuration:
    """Retain each + vertex independently with probability p.

    One uniform mark per vertex, keyed by (stream, "thin", address): the
    thinnings for p <= p' on the same stream are pointwise nested.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"retention probability must be in [0, 1], got {p}")
    kept = frozenset(
        x for x in c.plus_set if stream.keyed_uniform("thin", format_addr(x)) < p
    )
    return Configuration(kept)


# ---------------------------------------------------------------------------
# Boundary conditions


@dataclass(frozen=True)
class BoundarySpec:
    """Sign of the frozen vertices outside the free region.

    kind "none": the whole tree is free.  "plus"/"minus": vertices outside
    `region` are frozen with that sign; they act on the free region but
    never change.
    """

    kind: str  # "none" | "plus" | "minus"
    region: Optional[Region] = None

    def __post_init__(self):
        if self.kind not in ("none", "plus", "minus"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind != "none" and self.region is None:
            raise ValueError("plus/minus boundary conditions require a region")
        if self.kind == "none" and self.region is not None:
            raise ValueError("boundary kind 'none' takes no region")


NO_BOUNDARY = BoundarySpec("none")


def minus_outside(region: Region) -> BoundarySpec:
    return BoundarySpec("minus", region)


def plus_outside(region: Region) -> BoundarySpec:
    return BoundarySpec("plus", region)


def frozen_sign(params: TreeParams, boundary: BoundarySpec, x: VertexAddr) -> int:
    """0 if x is free, +1/-1 if frozen by the boundary conditions."""
    if boundary.kind == "none" or region_contains(params, boundary.region, x):
        return 0
    return 1 if boundary.kind == "plus" else -1


# ---------------------------------------------------------------------------
# Initial conditions


@dataclass(frozen=True)
class OriginInit:
    pass


@dataclass(frozen=True)
class ExplicitInit:
    vertices: tuple[VertexAddr, ...]


@dataclass(frozen=True)
class BernoulliBall:
    """Bernoulli(p) product signs restricted to Ball(origin, r)."""

    p: float
    r: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.r < 0:
            raise ValueError("radius must be nonnegative")


InitSpec = Union[OriginInit, ExplicitInit, BernoulliBall]


def realize_init(spec: InitSpec, params: TreeParams, stream: RandomStream) -> Configuration:
    if isinstance(spec, OriginInit):
        return config_of([ORIGIN])
    if isinstance(spec, ExplicitInit):
        return config_of(spec.vertices)
    if isinstance(spec, BernoulliBall):
        kept = [
            v
            for v in ball_vertices(params, ORIGIN, spec.r)
            if stream.keyed_uniform("init", format_addr(v)) < spec.p
        ]
        return config_of(kept)
    raise TypeError(f"not an init spec: {spec!r}")


# ---------------------------------------------------------------------------
# JSON forms (CLI / experiment specs)


def init_from_json(obj: dict, params: TreeParams) -> InitSpec:
    kind = obj.get("type")
    if kind == "origin":
        _reject_unknown(obj, {"type"})
        return OriginInit()
    if kind == "set":
        _reject_unknown(obj, {"type", "vertices"})
        return ExplicitInit(tuple(parse_addr(s, params) for s in obj["vertices"]))
    if kind == "bernoulli_ball":
        _reject_unknown(obj, {"type", "p", "r"})
        return BernoulliBall(float(obj["p"]), int(obj["r"]))
    raise ValueError(f"unknown init type {kind!r}")


def region_from_json(obj: dict, params: TreeParams) -> Region:
    kind = obj.get("type")
    if kind == "whole_tree":
        _reject_unknown(obj, {"type"})
        return WholeTree()
    if kind == "ball":
        _reject_unknown(obj, {"type", "center", "r"})
        return Ball(parse_addr(obj.get("center", "o"), params), int(obj["r"]))
    if kind == "subtree":
        _reject_unknown(obj, {"type", "root"})
        return Subtree(parse_addr(obj["root"], params))
    if kind == "subtree_minus_below":
        _reject_unknown(obj, {"type", "root", "cut"})
        return SubtreeMinusBelow(parse_addr(obj["root"], params), parse_addr(obj["cut"], params))
    if kind == "explicit":
        _reject_unknown(obj, {"type", "vertices"})
        return Explicit(frozenset(parse_addr(s, params) for s in obj["vertices"]))
    raise ValueError(f"unknown region type {kind!r}")


def boundary_from_json(obj: Optional[dict], params: TreeParams) -> BoundarySpec:
    if obj is None:
        return NO_BOUNDARY
    kind = obj.get("type")
    if kind == "none":
        _reject_unknown(obj, {"type"})
        return NO_BOUNDARY
    if kind in ("plus", "minus"):
        _reject_unknown(obj, {"type", "region"})
        return BoundarySpec(kind, region_from_json(obj["region"], params))
    raise ValueError(f"unknown boundary type {kind!r}")


def _reject_unknown(obj: dict, allowed: set):
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown fields {sorted(extra)} in {obj!r}")
