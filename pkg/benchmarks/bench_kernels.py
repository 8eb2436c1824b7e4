#!/usr/bin/env python3
"""Throughput comparison of the compiled and pure-python event kernels.

Runs the same seeded workloads against both backends (selected in
subprocesses via WBTREE_PURE_PYTHON) and reports events per second.
"""

import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
import numpy as np
from wbtree import _kernels
from wbtree import arena as arena_mod, tree
from wbtree.configs import minus_outside
from wbtree.rng import RandomStream
from wbtree.tree import Ball, ORIGIN, TreeParams

params = TreeParams(3)
region = tree.ball_vertices(params, ORIGIN, 8)
arena = arena_mod.for_region(params, region, minus_outside(Ball(ORIGIN, 8)))
ball = len(region)
init_rows = np.flatnonzero(
    RandomStream(1).generator.random(ball) < 0.5
).astype(np.int32)
empty = np.array([], dtype=np.int32)
no_snaps = np.array([], dtype=np.float64)

out = {"backend": _kernels.BACKEND}

events = 0
t0 = time.perf_counter()
for i in range(20):
    feed = _kernels.make_feed(RandomStream(100 + i).generator)
    raw = _kernels.wb_simulate(3, 2.0, arena.nbr, arena.status, init_rows,
                               arena.frozen_plus_rows, 2.0, 10_000_000,
                               False, 0, empty, no_snaps, feed, False)
    events += len(raw["times"])
out["wb_events_per_s"] = events / (time.perf_counter() - t0)
out["wb_events"] = events

origin_rows = arena.rows_of([ORIGIN])
events = 0
t0 = time.perf_counter()
for i in range(50):
    feed = _kernels.make_feed(RandomStream(200 + i).generator)
    raw = _kernels.bcrw_simulate(3, 3.0, arena.nbr, arena.status, origin_rows,
                                 3.0, 200_000, False, 0, empty, no_snaps, feed)
    events += len(raw["times"])
out["bcrw_events_per_s"] = events / (time.perf_counter() - t0)
out["bcrw_events"] = events
print(json.dumps(out))
"""


def run_backend(pure: bool) -> dict:
    env = dict(os.environ)
    if pure:
        env["WBTREE_PURE_PYTHON"] = "1"
    else:
        env.pop("WBTREE_PURE_PYTHON", None)
    proc = subprocess.run([sys.executable, "-c", WORKLOAD], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main() -> None:
    results = [run_backend(pure=False), run_backend(pure=True)]
    print(f"{'backend':<12}{'WB events/s':>16}{'dual events/s':>16}")
    for r in results:
        print(f"{r['backend']:<12}{r['wb_events_per_s']:>16,.0f}"
              f"{r['bcrw_events_per_s']:>16,.0f}")
    if results[0]["backend"] != results[1]["backend"]:
        speedup_wb = results[0]["wb_events_per_s"] / results[1]["wb_events_per_s"]
        speedup_bc = results[0]["bcrw_events_per_s"] / results[1]["bcrw_events_per_s"]
        print(f"\nspeedup: WB x{speedup_wb:.1f}, dual x{speedup_bc:.1f}")


if __name__ == "__main__":
    main()
