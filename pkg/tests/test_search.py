"""Guided best-first search, baselines, BFS oracle, and plan validation."""

import dataclasses
import math

import numpy as np
import pytest

from gplan.agent import NetConfig, PlanningTask, build_model
from gplan.graphenc import EncoderConfig, position_coords
from gplan.pddl import GroundAtom
from gplan.search import (VALUE_FLOOR, Budget, OracleBudgetExceeded,
                          baseline_gbfs, g_scores, gbfs_gnn,
                          optimal_plan_length, validate_plan)
from gplan.worlds import InstanceSpec, gen_simple, load_domain

SMALL = NetConfig(latent=4, hidden=8, head_hidden=8)


def simple_task(W, seed=0, density=0.0):
    dom = load_domain("simple")
    problem, _ = gen_simple(InstanceSpec(W=W, seed=seed,
                                         obstacle_density=density))
    return PlanningTask(dom, problem, EncoderConfig())


def small_net(task, seed=0):
    _, net, _ = build_model(task.domain, task.cfg, SMALL, seed)
    return net


# -- priority formula --------------------------------------------------------


def test_priority_reduces_to_probability_times_value():
    g = g_scores(np.array([0.25, 0.75]), value=2.0, entropy=0.0)
    assert np.allclose(g, [0.5, 1.5])


def test_priority_uniform_two_actions():
    g = g_scores(np.array([0.5, 0.5]), value=1.0, entropy=math.log(2.0))
    want = 0.5 / (1.0 + math.log(2.0))
    assert np.allclose(g, [want, want])
    assert abs(want - 0.295310) < 1e-5


def test_priority_floors_negative_value():
    g = g_scores(np.array([0.5, 0.5]), value=-3.0, entropy=0.0)
    assert np.all(g > 0.0)
    assert np.allclose(g, 0.5 * VALUE_FLOOR)


def test_priority_preserves_sibling_order():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.dirichlet(np.ones(5))
        v = float(rng.normal())
        h = float(rng.uniform(0.0, 2.0))
        g = g_scores(p, v, h)
        assert np.array_equal(np.argsort(g), np.argsort(p))


# -- best-first behaviour ----------------------------------------------------


def test_goal_in_init_returns_empty_plan():
    task = simple_task(4, seed=1)
    at = next(a for a in task.problem.init if a.predicate == "at")
    solved = dataclasses.replace(task.problem, goal=frozenset({at}))
    solved_task = PlanningTask(task.domain, solved, task.cfg)
    for run in (baseline_gbfs(solved_task, Budget()),
                gbfs_gnn(solved_task, small_net(task), Budget())):
        assert run.success
        assert run.plan == []
        assert run.plan_length == 0
        assert run.expanded == 0


def test_baseline_solves_and_validates():
    task = simple_task(6, seed=3)
    run = baseline_gbfs(task, Budget())
    assert run.success
    check = validate_plan(task, run.plan)
    assert check.valid and check.fail_index == -1
    assert run.plan_length == len(run.plan) >= 1
    assert run.generated >= run.plan_length


def test_gnn_search_solves_with_untrained_net():
    task = simple_task(5, seed=7)
    run = gbfs_gnn(task, small_net(task, seed=5), Budget())
    assert run.success
    assert validate_plan(task, run.plan).valid
    assert run.elapsed >= 0.0


def test_visited_states_are_not_reexpanded():
    task = simple_task(4, seed=2)
    run = baseline_gbfs(task, Budget())
    reachable = 4 * 4  # drone position is the only changing fact
    assert run.expanded <= reachable
    assert run.generated <= reachable


def test_expansion_budget_is_monotone():
    task = simple_task(8, seed=9)
    net = small_net(task, seed=3)
    full = gbfs_gnn(task, net, Budget())
    assert full.success
    needed = full.expanded
    if needed > 0:
        starved = gbfs_gnn(task, net, Budget(max_expansions=needed - 1))
        assert not starved.success
        assert starved.plan is None
        assert starved.plan_length == -1
        assert starved.expanded == needed - 1
    again = gbfs_gnn(task, net, Budget(max_expansions=needed + 50))
    assert again.success and again.expanded == needed


def test_time_budget_halts_search():
    task = simple_task(9, seed=4)
    run = gbfs_gnn(task, small_net(task), Budget(max_seconds=0.0))
    assert not run.success
    assert run.expanded == 0


def test_gnn_beats_blind_ordering_on_expansions():
    # the policy prior cannot expand more than the whole reachable space
    task = simple_task(7, seed=5)
    run = gbfs_gnn(task, small_net(task, seed=8), Budget())
    assert run.success
    assert run.expanded <= 7 * 7


# -- oracle ------------------------------------------------------------------


def manhattan(task):
    cells = task.unit_cells(task.ground.init)
    (x0, y0) = cells["drone"]
    goal_atom = task.ground.atoms[next(iter(task.ground.goal))]
    gx, gy = position_coords(goal_atom.args[1])
    return abs(gx - x0) + abs(gy - y0)


def test_bfs_oracle_equals_manhattan_without_obstacles():
    for seed in range(6):
        task = simple_task(5, seed=seed)
        assert optimal_plan_length(task) == manhattan(task)


def test_bfs_oracle_zero_when_already_solved():
    task = simple_task(4, seed=1)
    at = next(a for a in task.problem.init if a.predicate == "at")
    solved = dataclasses.replace(task.problem, goal=frozenset({at}))
    assert optimal_plan_length(PlanningTask(task.domain, solved, task.cfg)) == 0


def test_bfs_oracle_unreachable_returns_none():
    task = simple_task(4, seed=1)
    ground = task.ground
    # demand the drone sit on two cells at once
    far = GroundAtom("at", ("drone", "pos-0-0"))
    near = GroundAtom("at", ("drone", "pos-3-3"))
    impossible = dataclasses.replace(task.problem,
                                     goal=frozenset({far, near}))
    assert optimal_plan_length(PlanningTask(task.domain, impossible,
                                            task.cfg)) is None
    run = baseline_gbfs(PlanningTask(task.domain, impossible, task.cfg),
                        Budget())
    assert not run.success


def test_bfs_oracle_budget_guard():
    task = simple_task(6, seed=0)
    with pytest.raises(OracleBudgetExceeded):
        optimal_plan_length(task, max_states=2)


def test_search_plans_are_optimal_length_here():
    # goal-count GBFS on an obstacle-free grid walks straight to the goal
    for seed in range(4):
        task = simple_task(6, seed=seed)
        run = baseline_gbfs(task, Budget())
        assert run.success
        assert run.plan_length == optimal_plan_length(task)


# -- plan validation ---------------------------------------------------------


def test_validate_plan_flags_mutations():
    task = simple_task(5, seed=6)
    run = baseline_gbfs(task, Budget())
    plan = run.plan
    assert validate_plan(task, plan).valid

    truncated = plan[:-1]
    check = validate_plan(task, truncated)
    assert not check.valid
    assert check.fail_index == len(truncated)  # applies fine, misses the goal

    if len(plan) >= 2:
        swapped = [plan[1], plan[0]] + plan[2:]
        check = validate_plan(task, swapped)
        if not check.valid:
            assert 0 <= check.fail_index <= len(swapped)

    off_route = next(a for a in task.ground.actions
                     if a.pre <= task.ground.init
                     and a.uid != plan[0].uid)
    check = validate_plan(task, [plan[0], off_route])
    assert not check.valid
    assert check.fail_index in (1, 2)
    assert check.reason


def test_validate_empty_plan_against_unmet_goal():
    task = simple_task(4, seed=3)
    check = validate_plan(task, [])
    assert not check.valid
    assert check.fail_index == 0
