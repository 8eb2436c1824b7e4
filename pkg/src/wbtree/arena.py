"""Integer-indexed vertex arenas for the simulation kernels.

An arena maps a connected set of tree vertices to dense rows with a d-slot
neighbor table (slot 0 = parent, slot j = child j-1).  Kernels operate on
rows only; addresses are resolved lazily afterwards.  Arenas are immutable
and shared across replicas; lazy kernels append per-replica rows without
touching the arena (connectivity of the materialized set guarantees each
tree vertex gets at most one row).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tree
from .configs import BoundarySpec
from .tree import TreeParams, VertexAddr

FREE = 0
FROZEN_PLUS = 1
FROZEN_MINUS = 2


@dataclass
class Arena:
    params: TreeParams
    addrs: list[VertexAddr]
    index: dict[VertexAddr, int]
    nbr: np.ndarray  # int32 (n, d); -1 = not materialized
    status: np.ndarray  # int8 (n,)
    frozen_plus_rows: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.frozen_plus_rows is None:
            self.frozen_plus_rows = np.flatnonzero(self.status == FROZEN_PLUS).astype(np.int32)

    @property
    def n_rows(self) -> int:
        return len(self.addrs)

    def rows_of(self, vertices) -> np.ndarray:
        return np.array([self.index[v] for v in vertices], dtype=np.int32)

    def free_rows(self) -> np.ndarray:
        return np.flatnonzero(self.status == FREE).astype(np.int32)


def _link(params: TreeParams, addrs: list[VertexAddr], index: dict, fill_all: bool):
    """Neighbor table rows; slots follow the canonical parent/children order."""
    d = params.d
    nbr = np.full((len(addrs), d), -1, dtype=np.int32)
    for i, v in enumerate(addrs):
        for j, u in enumerate(tree.neighbors(params, v)):
            row = index.get(u, -1)
            if row >= 0 or fill_all:
                nbr[i, j] = row
    return nbr


def for_region(
    params: TreeParams, region_vertices: list[VertexAddr], boundary: BoundarySpec
) -> Arena:
    """Finite free region plus its one-vertex frozen shell.

    Free rows are fully linked, so bounded kernels never materialize new
    rows.  Frozen rows only link back to known rows; their outward slots
    are never consulted.
    """
    if boundary.kind == "none":
        raise ValueError("for_region requires plus/minus boundary conditions")
    frozen_status = FROZEN_PLUS if boundary.kind == "plus" else FROZEN_MINUS

    region = list(region_vertices)
    region_set = set(region)
    shell = set()
    for v in region:
        for u in tree.neighbors(params, v):
            if u not in region_set:
                shell.add(u)
    addrs = region + sorted(shell, key=tree.sort_key)
    index = {v: i for i, v in enumerate(addrs)}
    nbr = _link(params, addrs, index, fill_all=False)
    status = np.zeros(len(addrs), dtype=np.int8)
    status[len(region) :] = frozen_status
    return Arena(params, addrs, index, nbr, status)


def lazy_hull(params: TreeParams, seeds) -> Arena:
    """Connected hull of the seed vertices and the origin, all free.

    Used for whole-tree (no boundary) runs; kernels grow rows outward from
    this hull as the process spreads.
    """
    vertices = {tree.ORIGIN}
    for s in seeds:
        vertices.update(tree.path_to_origin(s))
    addrs = sorted(vertices, key=tree.sort_key)
    index = {v: i for i, v in enumerate(addrs)}
    nbr = _link(params, addrs, index, fill_all=False)
    status = np.zeros(len(addrs), dtype=np.int8)
    return Arena(params, addrs, index, nbr, status)


class AddressResolver:
    """Lazy row -> address mapping for a run, including kernel-born rows.

    Kernel-born rows record (parent row, slot).  A row born through slot 0
    is the parent of the row it was born from; by convention the kernel
    links the originating child back through slot 1, so that row's child
    slots enumerate the remaining children in canonical order.
    """

    def __init__(self, arena: Arena, born_from: np.ndarray, born_slot: np.ndarray):
        self.arena = arena
        self.born_from = born_from
        self.born_slot = born_slot
        self._cache: dict[int, VertexAddr] = {}

    def addr(self, row: int) -> VertexAddr:
        n0 = self.arena.n_rows
        if row < n0:
            return self.arena.addrs[row]
        got = self._cache.get(row)
        if got is not None:
            return got
        f = int(self.born_from[row - n0])
        j = int(self.born_slot[row - n0])
        if j == 0:
            out = tree.parent(self.addr(f))
        else:
            out = self._child_addr(f, j)
        self._cache[row] = out
        return out

    def _child_addr(self, f: int, j: int) -> VertexAddr:
        base = self.addr(f)
        kids = tree.children(self.arena.params, base)
        n0 = self.arena.n_rows
        if f >= n0 and int(self.born_slot[f - n0]) == 0:
            # Row f was born as a parent; slot 1 is the child it came from.
            came = self.addr(int(self.born_from[f - n0]))
            if j == 1:
                return came
            rest = [c for c in kids if c != came]
            return rest[j - 2]
        return kids[j - 1]
