"""Deterministic calculators: threshold bounds, weighted-sum drift
functionals with their sign conditions, and closed-form absorption
probabilities for the embedded size walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from . import tree
from .configs import Configuration
from .rng import RandomStream
from .tree import TreeParams, VertexAddr, ORIGIN, distance, height, sort_key


class DegreeTooSmall(ValueError):
    """The bounds are stated for degree d >= 3 only."""


@dataclass(frozen=True)
class Bounds:
    lambda_l_lower: float
    lambda_l_upper: float
    lambda_c_upper: float


def prop_bounds(d: int) -> Bounds:
    """Threshold bounds for the d-regular tree.

    lower = d / (2 sqrt(d-1)); the upper bound for local survival is
    min(2d, 4d / (sqrt(d-1) - 4)) (infinite when sqrt(d-1) <= 4), and the
    global-survival upper bound is max(d-1, that).
    """
    if d < 3:
        raise DegreeTooSmall(f"bounds require degree d >= 3, got {d}")
    lower = d / (2.0 * math.sqrt(d - 1.0))
    denom = max(math.sqrt(d - 1.0) - 4.0, 0.0)
    second = math.inf if denom == 0.0 else 4.0 * d / denom
    lambda_l_upper = min(2.0 * d, second)
    lambda_c_upper = max(float(d - 1), lambda_l_upper)
    return Bounds(lower, lambda_l_upper, lambda_c_upper)


# ---------------------------------------------------------------------------
# Radial weights (distance to origin)


def radial_weight(c: Configuration, alpha: float) -> float:
    """Sum of alpha^(distance to origin) over the configuration."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return sum(alpha ** distance(ORIGIN, x) for x in c)


def radial_drift(c: Configuration, alpha: float, lam: float, params: TreeParams) -> float:
    """Expected instantaneous change of radial_weight (no boundary).

    Each discordant edge (u infected, v healthy) contributes
    lam * alpha^rho(v) - alpha^rho(u); nonnegative whenever
    1/lam <= alpha <= lam.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    total = 0.0
    for u in c:
        for v in tree.neighbors(params, u):
            if v not in c:
                total += lam * alpha ** distance(ORIGIN, v) - alpha ** distance(ORIGIN, u)
    return total


# ---------------------------------------------------------------------------
# Height weights (signed depth through the fixed end)


def height_weight(vertices: Iterable[VertexAddr], alpha: float) -> float:
    """Sum of alpha^height over the set."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return sum(alpha ** height(u) for u in vertices)


def boundary_sum_height(
    vertices: Iterable[VertexAddr], alpha: float, lam: float, params: TreeParams
) -> float:
    """Sum over boundary edges (v inside, u outside) of
    lam * alpha^h(u) - alpha^h(v).

    For connected sets this is <= 0 whenever quad_condition(d, lam, alpha)
    holds, which makes the height weight a supermartingale for the process.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    vset = set(vertices)
    total = 0.0
    for v in vset:
        for u in tree.neighbors(params, v):
            if u not in vset:
                total += lam * alpha ** height(u) - alpha ** height(v)
    return total


def quad_condition(d: int, lam: float, alpha: float) -> bool:
    """lam (d-1) alpha^2 - d alpha + lam <= 0."""
    return lam * (d - 1) * alpha * alpha - d * alpha + lam <= 0.0


def alpha_window(d: int, lam: float) -> Optional[tuple[float, float]]:
    """Closed interval of alphas satisfying quad_condition, None if empty.

    Endpoints (d +- sqrt(d^2 - 4 lam^2 (d-1))) / (2 lam (d-1)); the window
    exists iff lam <= d / (2 sqrt(d-1)).
    """
    disc = d * d - 4.0 * lam * lam * (d - 1.0)
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    denom = 2.0 * lam * (d - 1.0)
    return ((d - root) / denom, (d + root) / denom)


# ---------------------------------------------------------------------------
# Absorption oracle for the embedded size walk


def gambler_ruin_absorb(lam: float, k: int, n) -> float:
    """P(+-1 chain with up-probability lam/(lam+1) started at k hits 0
    before n); n may be math.inf for the one-sided problem."""
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    if k < 1:
        raise ValueError("start must be >= 1")
    if n is not math.inf and n != math.inf:
        n = int(n)
        if n <= k:
            raise ValueError("absorbing level n must exceed the start k")
    if n == math.inf:
        return 1.0 if lam == 1.0 else lam ** (-k)
    if lam == 1.0:
        return (n - k) / n
    return (lam ** (-k) - lam ** (-n)) / (1.0 - lam ** (-n))


# ---------------------------------------------------------------------------
# Random connected sets (for property runs over the drift contracts)


def random_connected_set(
    params: TreeParams,
    stream: RandomStream,
    size: int,
    radius: int,
    center: VertexAddr = ORIGIN,
) -> frozenset[VertexAddr]:
    """Connected set grown by randomized BFS inside Ball(center, radius)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    gen = stream.generator
    ball = tree.ball_vertices(params, center, radius)
    if size > len(ball):
        raise ValueError(f"size {size} exceeds ball size {len(ball)}")
    root = ball[int(gen.integers(len(ball)))]
    chosen = {root}
    frontier = [v for v in tree.neighbors(params, root) if distance(center, v) <= radius]
    while len(chosen) < size:
        i = int(gen.integers(len(frontier)))
        v = frontier.pop(i)
        if v in chosen:
            continue
        chosen.add(v)
        frontier.extend(
            u
            for u in tree.neighbors(params, v)
            if u not in chosen and distance(center, u) <= radius
        )
    return frozenset(chosen)
