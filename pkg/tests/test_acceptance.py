"""Acceptance gate: twelve numbered criteria, one pass/fail line each.

Runs are seeded, so every criterion is reproducible bit for bit; the
statistical gates allow one scripted seed-retry where noted.
"""

import math
import time

import numpy as np

from wbtree import analysis, cli, dynamics, graphical, montecarlo, tree
from wbtree.configs import config_of, minus_outside
from wbtree.dynamics import StopCondition
from wbtree.montecarlo import seed_retry, two_sample_chisquare
from wbtree.rng import RandomStream
from wbtree.tree import Explicit, ORIGIN, TreeParams, VertexAddr

P3 = TreeParams(3)


def report(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    assert ok, line


def test_criterion_01_gamblers_ruin():
    # d=3, lam=2, start {origin}, stop at size 20 or extinction, n=1e5.
    target = 0.4999995231628418
    t0 = time.monotonic()
    res = montecarlo.proxy_probability(
        3, 2.0, montecarlo.ExtinctBeforeSize(20), 100_000, 101,
        skip_radius_check=True,
    )
    elapsed = time.monotonic() - t0
    gap = abs(res.mean - target)
    tol = 3.0 * res.stderr
    ok = gap <= tol and elapsed < 60.0
    report(1, ok,
           f"P(extinct)={res.mean:.6f} vs {target:.6f}, |gap|={gap:.6f} "
           f"<= 3*stderr={tol:.6f}, {elapsed:.1f}s < 60s")


def test_criterion_02_embedded_drift():
    details = []
    ok = True
    for lam, drift in ((1.0, 0.0), (2.0, 1.0 / 3.0), (3.0, 0.5)):
        res = montecarlo.drift_check(3, lam, 100_000, 102 + int(lam))
        gap = abs(res.mean - drift)
        tol = 3.0 * res.stderr
        ok = ok and gap <= tol
        details.append(f"lam={lam:g}: {res.mean:+.5f} vs {drift:+.5f} "
                       f"(|gap|={gap:.5f} <= {tol:.5f})")
    report(2, ok, "; ".join(details))


def _random_window_case(stream):
    gen = stream.generator
    vertices = tree.ball_vertices(P3, ORIGIN, 1 + int(gen.integers(2)))
    lam_max = 1.0 + 3.0 * gen.random()
    window = graphical.Window(P3, frozenset(vertices), 0.5 + gen.random(), lam_max)
    ep = graphical.sample_window(window, stream.child("pp"))
    t = window.horizon * gen.random()
    return gen, vertices, ep, lam_max, t


def test_criterion_03_per_realization_duality():
    n = 10_000
    root = RandomStream(103)
    passed = 0
    for i in range(n):
        gen, vertices, ep, lam_max, t = _random_window_case(root.child(i))
        lam = 1.0 + (lam_max - 1.0) * gen.random()
        mask_a = gen.random(len(vertices)) < 0.5
        mask_b = gen.random(len(vertices)) < 0.5
        a = {v for v, k in zip(vertices, mask_a) if k}
        b = {v for v, k in zip(vertices, mask_b) if k}
        if graphical.check_duality(ep, a, b, lam, t):
            passed += 1
    report(3, passed == n, f"duality held in {passed}/{n} realizations")


def test_criterion_04_monotone_coupling():
    n = 10_000
    root = RandomStream(104)
    passed = 0
    for i in range(n):
        gen, vertices, ep, lam_max, t = _random_window_case(root.child(i))
        lam_big = 1.0 + (lam_max - 1.0) * gen.random()
        lam_small = 1.0 + (lam_big - 1.0) * gen.random()
        mask = gen.random(len(vertices)) < 0.5
        big = {v for v, k in zip(vertices, mask) if k}
        small = {v for v in big if gen.random() < 0.7}
        if graphical.check_monotone(ep, small, big, lam_small, lam_big, t):
            passed += 1
    report(4, passed == n, f"containment held in {passed}/{n} coupled runs")


def test_criterion_05_martingale_sign_contracts():
    n = 10_000
    root = RandomStream(105)
    details = []
    ok = True
    for d, lam in ((3, 1.0), (3, 1.05), (4, 1.3)):
        params = TreeParams(d)
        bad_radial = 0
        for i in range(n):
            stream = root.child("radial", d, repr(lam), i)
            gen = stream.generator
            cfg = config_of(analysis.random_connected_set(
                params, stream.child("set"), 1 + int(gen.integers(8)), 4))
            alpha = 1.0 / lam + (lam - 1.0 / lam) * gen.random()
            n_edges = sum(1 for u in cfg
                          for v in tree.neighbors(params, u) if v not in cfg)
            if analysis.radial_drift(cfg, alpha, lam, params) < -1e-12 * n_edges:
                bad_radial += 1
        window = analysis.alpha_window(d, lam)
        if window is None:
            # Empty alpha window: the boundary-sum contract is vacuous here.
            bad_height = 0
            checked = 0
        else:
            lo, hi = window
            bad_height = 0
            checked = n
            for i in range(n):
                stream = root.child("height", d, repr(lam), i)
                gen = stream.generator
                alpha = lo + (hi - lo) * gen.random()
                conn = analysis.random_connected_set(
                    params, stream.child("set"), 1 + int(gen.integers(10)), 4)
                if analysis.boundary_sum_height(conn, alpha, lam, params) > 1e-9:
                    bad_height += 1
        ok = ok and bad_radial == 0 and bad_height == 0
        details.append(f"(d={d},lam={lam:g}): radial {n - bad_radial}/{n}, "
                       f"height {checked - bad_height}/{checked}")
    report(5, ok, "; ".join(details))


def test_criterion_06_threshold_bounds_calculator():
    b3 = analysis.prop_bounds(3)
    ok = (abs(b3.lambda_l_lower - 1.0606601717798212) <= 1e-12
          and abs(b3.lambda_l_upper - 6.0) <= 1e-12
          and abs(b3.lambda_c_upper - 6.0) <= 1e-12
          and abs(analysis.prop_bounds(18).lambda_l_upper - 36.0) <= 1e-12)
    order_ok = all(
        analysis.prop_bounds(d).lambda_l_lower
        <= analysis.prop_bounds(d).lambda_l_upper + 1e-12
        for d in range(3, 101)
    )
    ok = ok and order_ok
    report(6, ok,
           f"d=3 -> ({b3.lambda_l_lower:.10f}, {b3.lambda_l_upper:g}, "
           f"{b3.lambda_c_upper:g}); d=18 upper 36; ordering holds for 3<=d<=100")


def test_criterion_07_thinning_identity():
    t0 = time.monotonic()

    def run(seed):
        return montecarlo.thinning_two_sample(
            3, 3.0, frozenset({ORIGIN}), 0.5, 8, 50_000, seed,
            check_replicas=800,
        )

    rep, used_seed, retried = seed_retry(run, lambda r: r.p_value > 0.01, 107)
    elapsed = time.monotonic() - t0
    ok = rep.p_value > 0.01 and elapsed < 300.0
    report(7, ok,
           f"chi2 p={rep.p_value:.4f} > 0.01 (dof={rep.dof}, seed={used_seed}, "
           f"retried={retried}), {elapsed:.0f}s < 300s")


def test_criterion_08_density_derivative():
    rep = montecarlo.rho_delta_derivative(3, 2.0, 0.3, 0.05, 8, 100_000, 108)
    gap = abs(rep.lhs - rep.rhs)
    ok = gap <= 0.1
    report(8, ok,
           f"(rho_h-0.3)/0.05={rep.lhs:.4f} vs {rep.rhs:.4f}, "
           f"|gap|={gap:.4f} <= 0.1 (stderr {rep.lhs_stderr:.4f})")


def test_criterion_09_edge_event_bound():
    rep = montecarlo.event_rate_ratio(3, 2.0, 0.5, 2.0, 8, 10_000, 109)
    gap_ok = abs(rep.identity_gap) <= 3.0 * max(rep.identity_gap_stderr, 1e-12)
    ok = gap_ok and rep.bound_check
    report(9, ok,
           f"E+={rep.e_plus_hat:.4f} vs lam*E-={2.0 * rep.e_minus_rev_hat:.4f} "
           f"(gap {rep.identity_gap:+.4f} +- {3.0 * rep.identity_gap_stderr:.4f}); "
           f"(1-1/lam)E+={rep.bound_lhs:.4f} <= 1/3+3se")


def test_criterion_10_cross_implementation_laws():
    # Fixed two-vertex window {origin, parent}; both directions compared
    # at n = 5e4 per side.
    u1 = VertexAddr(1, ())
    w = [ORIGIN, u1]
    bnd = minus_outside(Explicit(frozenset(w)))
    lam, t = 2.0, 0.6
    window = graphical.Window(P3, frozenset(w), t, lam)
    n = 50_000
    root = RandomStream(110)

    def pattern(s):
        return "".join("1" if v in s else "0" for v in w)

    g_wb, g_bc = {}, {}
    for i in range(n):
        ep = graphical.sample_window(window, root.child("g", i))
        k = pattern(graphical.forward_reach(ep, {ORIGIN}, lam, t).plus_set)
        g_wb[k] = g_wb.get(k, 0) + 1
        k = pattern(graphical.backward_reach(ep, {u1}, lam, t).plus_set)
        g_bc[k] = g_bc.get(k, 0) + 1
    d_wb, d_bc = {}, {}
    stop = StopCondition(t_max=t)
    for i in range(n):
        tr = dynamics.wb_run(P3, lam, [ORIGIN], bnd, stop, root.child("dw", i))
        k = pattern(tr.final_config.plus_set)
        d_wb[k] = d_wb.get(k, 0) + 1
        tr = dynamics.bcrw_run(P3, lam, [u1], bnd, stop, root.child("db", i))
        k = pattern(tr.final_config.plus_set)
        d_bc[k] = d_bc.get(k, 0) + 1
    rep_wb = two_sample_chisquare("wb_law", g_wb, d_wb)
    rep_bc = two_sample_chisquare("bcrw_law", g_bc, d_bc)
    ok = rep_wb.p_value > 0.01 and rep_bc.p_value > 0.01
    report(10, ok,
           f"WB law p={rep_wb.p_value:.4f}, dual law p={rep_bc.p_value:.4f}, "
           f"both > 0.01 at n={n} per side")


def test_criterion_11_qualitative_phase_picture():
    # Finite-horizon occupancy proxy on Ball(0,4)^- at T=30; endpoints get
    # the truncation doubling check, the middle grid point is compared on
    # the same fixed ball (a monotone family under the coupling).
    proxy = montecarlo.OriginOccupiedAt(30.0)
    low = montecarlo.proxy_probability(3, 1.02, proxy, 10_000, 111,
                                       radius=4, check_replicas=400)
    mid = montecarlo.proxy_probability(3, 2.0, proxy, 10_000, 111,
                                       radius=4, skip_radius_check=True)
    high = montecarlo.proxy_probability(3, 8.0, proxy, 10_000, 111,
                                        radius=4, check_replicas=400)
    bracket = analysis.prop_bounds(3)
    mono = (low.mean <= mid.mean + 2.0 * (low.stderr + mid.stderr)
            and mid.mean <= high.mean + 2.0 * (mid.stderr + high.stderr))
    ok = (low.mean < 0.01 and high.mean > 0.02 and mono
          and bracket.lambda_l_lower < 8.0)
    report(11, ok,
           f"proxy(1.02)={low.mean:.4f} < 0.01, proxy(2)={mid.mean:.4f}, "
           f"proxy(8)={high.mean:.4f} > 0.02, nondecreasing; consistent with "
           f"bracket [{bracket.lambda_l_lower:.4f}, {bracket.lambda_l_upper:g}]")


def test_criterion_12_verify_exact_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli.main(["verify", "--suite", "exact", "--seed", "12",
                         "--out", str(out)])
        assert code == 0
        outs.append((out / "exact.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    report(12, ok, "two verify(exact) runs with equal seeds are byte-identical")
