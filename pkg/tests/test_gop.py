import json

import numpy as np
import pytest

from gopmm.core import FactorPair, ProblemInstance, SolverConfig, check_feasible, objective
from gopmm.gop import (CONVERGED, ITERATION_LIMIT, TIME_LIMIT, init, initial_point, iterate,
                       path_pairs, profile_one_iteration, run)
from oracles import brute_force_optimum, sandwich_instance

Y51 = np.array([[0.0, -1.0, -0.5]])


@pytest.fixture(scope="module")
def example():
    return ProblemInstance(Y51, K=2, P=1.0, epsilon=0.01)


@pytest.fixture(scope="module")
def example_run(example):
    return run(example, SolverConfig(seed=0, max_iterations=2000))


def test_initial_point_feasible_and_deterministic(example):
    x = initial_point(example, 4)
    assert np.abs(x).sum() == pytest.approx(0.9)
    assert np.all(np.abs(x) <= 1.0)
    assert initial_point(example, 4).tobytes() == x.tobytes()
    assert initial_point(example, 5).tobytes() != x.tobytes()


def test_init_state(example):
    state = init(example, SolverConfig(seed=1))
    assert state.T == 1 and state.current == 0
    assert state.pubd == np.inf and state.rlbd == -np.inf
    assert state.candidates == [] and state.incumbent is None


def test_first_iteration_bounds(example):
    cfg = SolverConfig(seed=0)
    state = iterate(init(example, cfg), example, cfg)
    assert np.isfinite(state.pubd) and np.isfinite(state.rlbd)
    assert state.rlbd <= state.pubd
    assert state.incumbent is not None
    assert 1 <= state.history[0]["regions"] <= 2 ** 6


def test_example_converges(example_run):
    assert example_run.status == CONVERGED
    assert example_run.pubd <= 0.01
    assert example_run.gap <= 0.01


def test_bounds_monotone(example_run):
    pubd = [h["pubd"] for h in example_run.history]
    rlbd = [h["rlbd"] for h in example_run.history]
    assert np.all(np.diff(pubd) <= 0)
    assert np.all(np.diff(rlbd) >= 0)
    assert all(lo <= hi + 1e-12 for lo, hi in zip(rlbd, pubd))


def test_region_budget(example_run):
    assert max(h["regions"] for h in example_run.history) <= 64
    assert example_run.relaxed_duals == sum(h["regions"] for h in example_run.history)


def test_incumbent_is_feasible_and_matches_pubd(example, example_run):
    best = example_run.best
    assert check_feasible(best, example.P)
    assert objective(example, best) == pytest.approx(example_run.pubd, abs=1e-9)


def test_loose_epsilon_stops_after_first_pair(example):
    rep = run(example, SolverConfig(epsilon=1e6))
    assert rep.status == CONVERGED and rep.iterations == 1


def test_limits(example):
    rep = run(example, SolverConfig(max_iterations=0))
    assert rep.status == ITERATION_LIMIT and rep.iterations == 0 and rep.best is None
    assert run(example, SolverConfig(max_iterations=3)).iterations == 3
    rep = run(example, SolverConfig(max_wall_seconds=1e-9))
    assert rep.status == TIME_LIMIT


def test_path_pairs_follow_parents(example):
    cfg = SolverConfig(seed=2)
    state = init(example, cfg)
    for _ in range(5):
        iterate(state, example, cfg)
    node = state.nodes[state.current]
    pairs = path_pairs(state, node.id)
    depth = 0
    while node.parent is not None:
        depth += 1
        node = state.nodes[node.parent]
    assert len(pairs) == depth
    assert all(lab.shape == (6,) for _, lab in pairs)


def test_sandwich_tiny_instance():
    inst = sandwich_instance(3)
    fstar, _ = brute_force_optimum(inst)
    assert fstar > 1.0
    rep = run(inst, SolverConfig(seed=3, max_iterations=150))
    for h in rep.history:
        assert h["rlbd"] - 1e-6 <= fstar <= h["pubd"] + 1e-6


@pytest.mark.parametrize("instance", ["example", "tiny"])
def test_fathoming_does_not_change_the_answer(instance, example):
    inst = example if instance == "example" else sandwich_instance(3)
    on = run(inst, SolverConfig(seed=3, max_iterations=2000))
    off = run(inst, SolverConfig(seed=3, max_iterations=2000, fathom=False))
    assert on.status == off.status == CONVERGED
    assert on.pubd == pytest.approx(off.pubd, abs=1e-12)
    assert abs(on.rlbd - off.rlbd) <= inst.epsilon


def test_workers_deterministic(example):
    one = run(example, SolverConfig(seed=6, max_iterations=60, workers=1))
    four = run(example, SolverConfig(seed=6, max_iterations=60, workers=4))
    a = json.dumps(one.to_json(include_wall_clock=False), sort_keys=True)
    b = json.dumps(four.to_json(include_wall_clock=False), sort_keys=True)
    assert a == b


def test_report_json(example_run):
    doc = example_run.to_json()
    assert {"status", "pubd", "rlbd", "gap", "iterations", "x", "theta", "history",
            "timings"} <= set(doc)
    assert set(doc["timings"]) == {"primal", "pre", "uri", "dual", "total"}
    json.dumps(doc)
    bare = example_run.to_json(include_wall_clock=False)
    assert "timings" not in bare and "ms" not in bare["history"][0]
    pair = FactorPair(np.array(doc["x"]), np.array(doc["theta"]))
    assert check_feasible(pair, 1.0)


def test_profile_one_iteration(example):
    prof = profile_one_iteration(example, SolverConfig())
    assert set(prof) == {"Primal", "Pre", "URI", "Num", "Dual", "Total"}
    assert 1 <= prof["Num"] <= 64
    assert prof["Total"] >= prof["Primal"] + prof["Dual"]
