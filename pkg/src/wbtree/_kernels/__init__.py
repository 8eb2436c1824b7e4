"""Kernel backend selection.

The compiled core is used when available; set WBTREE_PURE_PYTHON=1 to
force the pure-Python reference implementation.  Both backends consume
the same uniform stream and produce bit-identical runs.
"""

import os

from . import reference

if os.environ.get("WBTREE_PURE_PYTHON"):
    impl = reference
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        impl = reference

BACKEND = impl.BACKEND_NAME

# Shared constants always come from the reference module.
from .reference import (  # noqa: E402,F401
    ABSORB,
    ABSORBED,
    BRANCH,
    COALESCE,
    DEFAULT_BATCH,
    EXIT,
    EXTINCT,
    HEAL,
    INCLUDE,
    INFECT,
    KIND_NAMES,
    MAXEVENTS,
    MOVE,
    SIZE,
    STOP_NAMES,
    TMAX,
)

wb_simulate = impl.wb_simulate
bcrw_simulate = impl.bcrw_simulate
make_feed = impl.make_feed
