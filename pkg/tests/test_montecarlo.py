import math

import numpy as np
import pytest

from wbtree import dynamics, montecarlo, tree
from wbtree.dynamics import StopCondition
from wbtree.montecarlo import (
    AllTruncated,
    ExtinctBeforeSize,
    OriginOccupiedAt,
    RadiusTooSmall,
    doubling_check,
    drift_check,
    estimate,
    mean_result,
    proportion_result,
    seed_retry,
    thinning_two_sample,
    two_sample_chisquare,
    wilson_ci,
    write_results_csv,
)
from wbtree.rng import RandomStream
from wbtree.tree import ORIGIN, TreeParams

P3 = TreeParams(3)


def test_wilson_ci_contains_point_estimate():
    for successes, n in ((0, 10), (5, 10), (10, 10), (37, 200)):
        lo, hi = wilson_ci(successes, n)
        assert 0.0 <= lo <= successes / n <= hi <= 1.0
    assert wilson_ci(0, 0) == (0.0, 1.0)


def test_wilson_coverage():
    # ~95% of intervals over 200 binomial meta-replicas should contain p.
    p = 0.3
    n = 150
    gen = np.random.default_rng(7)
    covered = 0
    for _ in range(200):
        successes = int(gen.binomial(n, p))
        lo, hi = wilson_ci(successes, n)
        if lo <= p <= hi:
            covered += 1
    assert 0.90 <= covered / 200 <= 0.99


def test_proportion_and_mean_result():
    res = proportion_result(30, 100)
    assert res.mean == 0.3
    assert res.ci95[0] < 0.3 < res.ci95[1]
    res = mean_result(np.array([1.0, 2.0, 3.0]))
    assert res.mean == 2.0
    assert abs(res.stderr - 1.0 / math.sqrt(3.0)) < 1e-12


def _ruin_experiment(stream):
    stop = StopCondition(extinction=True, size_reaches=10)
    return dynamics.wb_run(P3, 2.0, [ORIGIN], dynamics.NO_BOUNDARY, stop, stream)


def _ruin_predicate(tr):
    return tr.stop_reason == "extinct"


def test_estimate_worker_invariance():
    # Worker functions must be module-level so the pool can pickle them.
    r1 = estimate(_ruin_experiment, _ruin_predicate, 300, 17, workers=None)
    r3 = estimate(_ruin_experiment, _ruin_predicate, 300, 17, workers=3)
    assert r1 == r3
    assert abs(r1.mean - 0.5) < 0.12


def test_seed_retry():
    calls = []

    def run(seed):
        calls.append(seed)
        return seed

    result, used, retried = seed_retry(run, lambda r: r % 2 == 0, 4)
    assert (result, used, retried) == (4, 4, False)
    result, used, retried = seed_retry(run, lambda r: r % 2 == 0, 5)
    assert (result, used, retried) == (6, 6, True)
    assert calls == [4, 5, 6]


def test_two_sample_chisquare_pools_small_cells():
    a = {"x": 500, "y": 480, "z": 2, "w": 1}
    b = {"x": 510, "y": 470, "z": 1, "w": 3}
    rep = two_sample_chisquare("t", a, b)
    assert rep.verdict == "chi_square"
    assert rep.dof < 3  # the tiny cells were pooled
    assert 0.0 <= rep.p_value <= 1.0


def test_two_sample_chisquare_same_distribution():
    gen = np.random.default_rng(3)
    pvals = []
    for i in range(40):
        a_draw = gen.multinomial(800, [0.5, 0.3, 0.2])
        b_draw = gen.multinomial(800, [0.5, 0.3, 0.2])
        a = {str(j): int(c) for j, c in enumerate(a_draw)}
        b = {str(j): int(c) for j, c in enumerate(b_draw)}
        pvals.append(two_sample_chisquare("t", a, b).p_value)
    # Uniform p-values: very small ones should be rare.
    assert np.mean(np.asarray(pvals) < 0.01) <= 0.15
    assert np.mean(pvals) > 0.3


def test_two_sample_chisquare_detects_difference():
    a = {"x": 900, "y": 100}
    b = {"x": 600, "y": 400}
    rep = two_sample_chisquare("t", a, b)
    assert rep.p_value < 1e-6


def test_two_sample_chisquare_degenerate():
    rep = two_sample_chisquare("t", {"x": 100}, {"x": 90})
    assert rep.verdict == "exact_match"
    assert rep.p_value == 1.0


def test_drift_check_values():
    for lam, drift in ((1.0, 0.0), (3.0, 0.5)):
        res = drift_check(3, lam, 30_000, 70 + int(lam))
        assert abs(res.mean - drift) < 4.0 * max(res.stderr, 1e-9)


def test_doubling_check_passes_when_radius_irrelevant():
    def indicators(r, count, root):
        gen = root.child("fixed").generator  # identical at both radii
        return (gen.random(count) < 0.4).astype(float)

    doubling_check(indicators, 4, 200, RandomStream(5), "test")


def test_doubling_check_detects_radius_dependence():
    def indicators(r, count, root):
        p = 0.2 if r == 4 else 0.6
        gen = root.child("r", r).generator
        return (gen.random(count) < p).astype(float)

    with pytest.raises(RadiusTooSmall):
        doubling_check(indicators, 4, 200, RandomStream(6), "test")


def test_thinning_two_sample_smoke():
    rep = thinning_two_sample(3, 2.0, frozenset({ORIGIN}), 0.4, 4, 1500, 77,
                              check_replicas=300)
    assert rep.verdict == "chi_square"
    assert rep.p_value > 0.001
    assert sum(rep.counts_a.values()) == 1500
    assert sum(rep.counts_b.values()) == 1500


def test_thinning_requires_supercritical():
    with pytest.raises(ValueError):
        thinning_two_sample(3, 1.0, frozenset({ORIGIN}), 0.4, 4, 10, 1)


def test_proxy_probability_extinct_before_size():
    res = montecarlo.proxy_probability(3, 2.0, ExtinctBeforeSize(20), 3000, 80,
                                       skip_radius_check=True)
    assert abs(res.mean - 0.5) < 4.0 * res.stderr


def test_proxy_probability_monotone_in_lambda():
    grid = [1.5, 3.0, 8.0]
    scan = montecarlo.threshold_scan(3, grid, OriginOccupiedAt(1.0), 500, 81,
                                     radius=6, check_replicas=200)
    means = [res.mean for _, res in scan]
    for lo, hi, (_, rlo), (_, rhi) in zip(means, means[1:], scan, scan[1:]):
        assert hi >= lo - 2.0 * (rlo.stderr + rhi.stderr)


def test_threshold_scan_rejects_out_of_range_lambda():
    with pytest.raises(ValueError):
        montecarlo.threshold_scan(3, [0.5], ExtinctBeforeSize(5), 10, 1)
    with pytest.raises(ValueError):
        montecarlo.threshold_scan(3, [100.0], ExtinctBeforeSize(5), 10, 1)


def test_occupancy_curve_smoke():
    curve = montecarlo.occupancy_curve(3, 4.0, [0.5, 1.0], 300, 82,
                                       radius=5, check_replicas=150)
    assert len(curve) == 2
    for res in curve:
        assert 0.0 <= res.mean <= 1.0


def test_event_rate_ratio_smoke():
    rep = montecarlo.event_rate_ratio(3, 2.0, 0.5, 1.0, 4, 800, 83)
    assert abs(rep.identity_gap) <= 4.0 * max(rep.identity_gap_stderr, 1e-9)
    assert rep.bound_check


def test_rho_delta_derivative_smoke():
    rep = montecarlo.rho_delta_derivative(3, 2.0, 0.3, 0.05, 5, 4000, 84)
    assert abs(rep.rho0_hat - 0.3) < 0.03
    assert abs(rep.rhs - 0.63) < 1e-12
    assert abs(rep.lhs - rep.rhs) < 0.15 + 3.0 * rep.lhs_stderr


def test_growth_stats_supercritical_spreads():
    rep = montecarlo.growth_stats(3, 3.0, [0.2, 0.5], 40, 85)
    assert rep.mean_max_dist[1] > rep.mean_max_dist[0]
    assert rep.mean_log_size[1] > rep.mean_log_size[0]


def test_write_results_csv():
    import io

    buf = io.StringIO()
    write_results_csv(
        [{"experiment": "e", "metric": "m", "lambda": 2.0, "d": 3,
          "value": 0.5, "stderr": 0.01, "n": 10, "truncated": 0}],
        buf,
    )
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "experiment,metric,lambda,d,value,stderr,n,truncated"
    assert lines[1] == "e,m,2.0,3,0.5,0.01,10,0"
