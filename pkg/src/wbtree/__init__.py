"""Exact simulation and verification toolkit for the biased voter model
and its branching-coalescing dual on regular trees."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .analysis import Bounds, alpha_window, gambler_ruin_absorb, prop_bounds
from .configs import (
    BoundarySpec,
    Configuration,
    EMPTY,
    NO_BOUNDARY,
    config_of,
    minus_outside,
    plus_outside,
    thin,
)
from .dynamics import StopCondition, Trajectory, bcrw_run, wb_run
from .graphical import Window, check_duality, check_monotone, sample_window
from .rng import RandomStream
from .tree import Ball, ORIGIN, TreeParams, VertexAddr, format_addr, parse_addr

__all__ = [
    "BACKEND",
    "Ball",
    "Bounds",
    "BoundarySpec",
    "Configuration",
    "EMPTY",
    "NO_BOUNDARY",
    "ORIGIN",
    "RandomStream",
    "StopCondition",
    "Trajectory",
    "TreeParams",
    "VertexAddr",
    "Window",
    "__version__",
    "alpha_window",
    "bcrw_run",
    "check_duality",
    "check_monotone",
    "config_of",
    "format_addr",
    "gambler_ruin_absorb",
    "minus_outside",
    "parse_addr",
    "plus_outside",
    "prop_bounds",
    "sample_window",
    "thin",
    "wb_run",
]
