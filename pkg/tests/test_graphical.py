import numpy as np
import pytest

from wbtree import graphical, tree
from wbtree.configs import config_of, minus_outside, plus_outside
from wbtree.graphical import (
    EdgeProcesses,
    LambdaExceedsWindow,
    Window,
    backward_reach,
    check_duality,
    check_monotone,
    forward_reach,
    forward_reach_bc,
    sample_window,
)
from wbtree.rng import RandomStream
from wbtree.tree import Ball, ORIGIN, TreeParams, VertexAddr

P3 = TreeParams(3)
A = VertexAddr(0, (0,))
B = VertexAddr(0, (1,))
U1 = VertexAddr(1, ())


def ball1_window(horizon=1.0, lam_max=3.0):
    return Window(P3, frozenset(tree.ball_vertices(P3, ORIGIN, 1)), horizon, lam_max)


def hand_processes(circ=(), bullets=(), horizon=1.0, lam_max=3.0):
    """Build EdgeProcesses from explicit point lists for hand-checked sweeps."""
    w = ball1_window(horizon, lam_max)
    circ_map = {}
    for u, v, t in circ:
        circ_map.setdefault((u, v), []).append(t)
    bullet_map = {}
    for u, v, t, mark in bullets:
        bullet_map.setdefault((u, v), []).append((t, mark))
    return EdgeProcesses(
        w,
        {k: tuple(sorted(ts)) for k, ts in circ_map.items()},
        {k: tuple(sorted(ps)) for k, ps in bullet_map.items()},
    )


def test_window_validation():
    with pytest.raises(ValueError):
        Window(P3, frozenset([ORIGIN]), 0.0, 2.0)
    with pytest.raises(ValueError):
        Window(P3, frozenset([ORIGIN]), 1.0, 0.5)


def test_effective_threshold():
    ep = hand_processes()
    assert ep.effective_threshold(3.0) == 1.0
    assert ep.effective_threshold(2.0) == 0.5
    assert ep.effective_threshold(1.0) == 0.0
    with pytest.raises(LambdaExceedsWindow):
        ep.effective_threshold(3.5)


def test_single_circ_arrow_copies_state():
    # circ at t=0.5 on (origin, A): A copies the origin's state.
    ep = hand_processes(circ=[(ORIGIN, A, 0.5)])
    assert forward_reach(ep, {ORIGIN}, 2.0, 0.4) == config_of([ORIGIN])
    assert forward_reach(ep, {ORIGIN}, 2.0, 0.6) == config_of([ORIGIN, A])
    # A - source heals an infected target.
    assert forward_reach(ep, {A}, 2.0, 0.6) == config_of([])


def test_single_bullet_arrow_infects_only():
    ep = hand_processes(bullets=[(ORIGIN, A, 0.5, 0.4)])
    # mark 0.4 < threshold 0.5 at lam=2: effective.
    assert forward_reach(ep, {ORIGIN}, 2.0, 0.6) == config_of([ORIGIN, A])
    # A bullet from a healthy source does nothing.
    assert forward_reach(ep, {A}, 2.0, 0.6) == config_of([A])
    # At lam=1.7 the threshold is 0.35 and the point is thinned away.
    assert forward_reach(ep, {ORIGIN}, 1.7, 0.6) == config_of([ORIGIN])


def test_backward_sweep_hand_example():
    # Dual of the circ arrow: a dual particle at A at time t jumps to the
    # origin at the arrow time and vanishes there after (u outside W kills).
    ep = hand_processes(circ=[(ORIGIN, A, 0.5)])
    assert backward_reach(ep, {A}, 2.0, 0.6) == config_of([ORIGIN])
    assert backward_reach(ep, {A}, 2.0, 0.4) == config_of([A])
    # Bullet arrows branch backwards: the dual keeps A and adds the origin.
    ep = hand_processes(bullets=[(ORIGIN, A, 0.5, 0.4)])
    assert backward_reach(ep, {A}, 2.0, 0.6) == config_of([ORIGIN, A])


def test_incoming_boundary_circ_heals():
    # Arrows from the frozen - outside heal window vertices.
    outside = tree.children(P3, A)[0]
    ep = hand_processes(circ=[(outside, A, 0.5)])
    assert forward_reach(ep, {ORIGIN, A}, 2.0, 0.6) == config_of([ORIGIN])


def test_forward_reach_bc_boundaries():
    outside = tree.children(P3, A)[0]
    # With a + boundary the same arrow infects instead.
    ep = hand_processes(circ=[(outside, A, 0.5)])
    got = forward_reach_bc(ep, {ORIGIN}, plus_outside(Ball(ORIGIN, 1)), 2.0, 0.6)
    assert A in got.plus_set and ORIGIN in got.plus_set
    got = forward_reach_bc(ep, {ORIGIN, A}, minus_outside(Ball(ORIGIN, 1)), 2.0, 0.6)
    assert got == config_of([ORIGIN])


def test_sample_window_poisson_rates():
    # Mean number of circ points per pair is horizon * 1; bullets
    # horizon * (lam_max - 1).
    window = ball1_window(horizon=2.0, lam_max=3.0)
    circ_counts = []
    bullet_counts = []
    for seed in range(200):
        ep = sample_window(window, seed)
        circ_counts.append(np.mean([len(ts) for ts in ep.circ.values()]))
        bullet_counts.append(np.mean([len(ps) for ps in ep.bullets.values()]))
    assert abs(np.mean(circ_counts) - 2.0) < 0.15
    assert abs(np.mean(bullet_counts) - 4.0) < 0.3


def test_sample_window_marks_uniform():
    window = ball1_window(horizon=5.0, lam_max=4.0)
    marks = []
    for seed in range(50):
        ep = sample_window(window, seed)
        for ps in ep.bullets.values():
            marks.extend(m for _, m in ps)
    marks = np.asarray(marks)
    assert len(marks) > 2000
    assert abs(marks.mean() - 0.5) < 0.02
    assert marks.min() >= 0.0 and marks.max() <= 1.0


def test_extension_contract():
    # Growing the horizon or the window must extend the existing points,
    # not resample them.
    small = Window(P3, frozenset(tree.ball_vertices(P3, ORIGIN, 1)), 1.0, 3.0)
    tall = Window(P3, frozenset(tree.ball_vertices(P3, ORIGIN, 1)), 2.0, 3.0)
    wide = Window(P3, frozenset(tree.ball_vertices(P3, ORIGIN, 2)), 1.0, 3.0)
    ep_s = sample_window(small, 5)
    ep_t = sample_window(tall, 5)
    ep_w = sample_window(wide, 5)
    for pair, ts in ep_s.circ.items():
        assert ep_t.circ[pair][: len(ts)] == ts
        assert all(t > 1.0 for t in ep_t.circ[pair][len(ts):])
        assert ep_w.circ[pair] == ts
    for pair, ps in ep_s.bullets.items():
        assert ep_t.bullets[pair][: len(ps)] == ps
        assert ep_w.bullets[pair] == ps


def test_duality_property():
    root = RandomStream(60)
    n = 1500
    for i in range(n):
        stream = root.child(i)
        gen = stream.generator
        vertices = tree.ball_vertices(P3, ORIGIN, 1 + int(gen.integers(2)))
        lam_max = 1.0 + 3.0 * gen.random()
        window = Window(P3, frozenset(vertices), 0.5 + gen.random(), lam_max)
        ep = sample_window(window, stream.child("pp"))
        lam = 1.0 + (lam_max - 1.0) * gen.random()
        t = window.horizon * gen.random()
        mask_a = gen.random(len(vertices)) < 0.5
        mask_b = gen.random(len(vertices)) < 0.5
        a = {v for v, k in zip(vertices, mask_a) if k}
        b = {v for v, k in zip(vertices, mask_b) if k}
        assert check_duality(ep, a, b, lam, t)


def test_monotone_property():
    root = RandomStream(61)
    n = 1500
    for i in range(n):
        stream = root.child(i)
        gen = stream.generator
        vertices = tree.ball_vertices(P3, ORIGIN, 1 + int(gen.integers(2)))
        lam_max = 1.0 + 3.0 * gen.random()
        window = Window(P3, frozenset(vertices), 0.5 + gen.random(), lam_max)
        ep = sample_window(window, stream.child("pp"))
        lam_big = 1.0 + (lam_max - 1.0) * gen.random()
        lam_small = 1.0 + (lam_big - 1.0) * gen.random()
        t = window.horizon * gen.random()
        mask = gen.random(len(vertices)) < 0.5
        big = {v for v, k in zip(vertices, mask) if k}
        small = {v for v in big if gen.random() < 0.7}
        assert check_monotone(ep, small, big, lam_small, lam_big, t)


def test_check_monotone_rejects_bad_arguments():
    ep = hand_processes()
    with pytest.raises(ValueError):
        check_monotone(ep, {ORIGIN}, set(), 1.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        check_monotone(ep, {ORIGIN}, {ORIGIN}, 2.0, 1.5, 0.5)


def test_dump_window_csv():
    import io

    ep = hand_processes(circ=[(ORIGIN, A, 0.5)], bullets=[(ORIGIN, B, 0.25, 0.7)])
    buf = io.StringIO()
    graphical.dump_window_csv(ep, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "u,v,kind,time,mark"
    assert lines[1].startswith("o,u0/1,bullet,0.25,0.7")
    assert lines[2].startswith("o,u0/0,circ,0.5,")
