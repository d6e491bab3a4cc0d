"""Inference-time planning: policy-guided greedy best-first search, a
goal-count baseline, a breadth-first optimality oracle, and plan validation.

The guided search ranks a child by g(s, a) = pi(a|s) * V(s) / (1 + H(s)),
evaluated once at the parent; V is clamped below at 1e-6 so negative value
estimates cannot invert sibling ordering.
"""

from __future__ import annotations

import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .agent import PlanningTask
from .ground import goal_satisfied

VALUE_FLOOR = 1e-6


class OracleBudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class Budget:
    max_expansions: int = 100_000
    max_seconds: float | None = None


@dataclass
class SearchNode:
    state: frozenset
    priority: float
    parent: "SearchNode | None" = None
    action: object = None
    depth: int = 0


@dataclass
class SearchResult:
    plan: list | None
    expanded: int
    generated: int
    elapsed: float
    success: bool

    @property
    def plan_length(self) -> int:
        return len(self.plan) if self.plan is not None else -1


@dataclass
class PlanCheck:
    valid: bool
    fail_index: int = -1  # first failing step; len(plan) when the goal misses
    reason: str = ""


def g_scores(probs: np.ndarray, value: float, entropy: float) -> np.ndarray:
    """Per-action priorities: pi * max(V, floor) / (1 + H).

    All siblings share V and H, so this is a positive rescaling of pi and
    sibling order always follows policy probability.
    """
    return probs * max(value, VALUE_FLOOR) / (1.0 + entropy)


def _run_best_first(task: PlanningTask, budget: Budget, child_priorities) -> SearchResult:
    """Shared best-first loop; child_priorities(state, actions) -> array of
    priorities (higher is better) aligned with the applicable action list."""
    start_time = time.perf_counter()
    counter = itertools.count()
    root = SearchNode(task.ground.init, priority=float("inf"))
    heap = [(-root.priority, next(counter), root)]
    visited = {root.state}
    expanded = 0
    generated = 1
    while heap:
        if budget.max_seconds is not None:
            if time.perf_counter() - start_time > budget.max_seconds:
                break
        _, _, node = heapq.heappop(heap)
        if goal_satisfied(node.state, task.ground.goal):
            return SearchResult(_extract_plan(node), expanded, generated,
                                time.perf_counter() - start_time, True)
        if expanded >= budget.max_expansions:
            break
        expanded += 1
        actions = task.applicable_actions(node.state)
        if not actions:
            continue
        priorities = child_priorities(node.state, actions)
        for action, priority in zip(actions, priorities):
            child_state = (node.state - action.delete) | action.add
            if child_state in visited:
                continue
            visited.add(child_state)
            child = SearchNode(child_state, float(priority), node, action,
                               node.depth + 1)
            heapq.heappush(heap, (-child.priority, next(counter), child))
            generated += 1
    return SearchResult(None, expanded, generated,
                        time.perf_counter() - start_time, False)


def _extract_plan(node: SearchNode) -> list:
    plan = []
    while node.parent is not None:
        plan.append(node.action)
        node = node.parent
    plan.reverse()
    return plan


def gbfs_gnn(task: PlanningTask, net, budget: Budget) -> SearchResult:
    """Greedy best-first search ordered by the learned policy and value."""

    def child_priorities(state, actions):
        po = net.evaluate(task, state, actions)
        return g_scores(po.probs, po.value, po.entropy)

    return _run_best_first(task, budget, child_priorities)


def baseline_gbfs(task: PlanningTask, budget: Budget) -> SearchResult:
    """Classical stand-in: greedy best-first on the goal-count heuristic."""
    goal = task.ground.goal

    def child_priorities(state, actions):
        return [-float(len(goal - ((state - a.delete) | a.add))) for a in actions]

    return _run_best_first(task, budget, child_priorities)


def optimal_plan_length(task: PlanningTask, max_states: int = 1_000_000):
    """Breadth-first shortest plan length from init; None when unreachable."""
    init = task.ground.init
    goal = task.ground.goal
    if goal_satisfied(init, goal):
        return 0
    seen = {init}
    frontier = deque([(init, 0)])
    while frontier:
        state, depth = frontier.popleft()
        for action in task.ground.actions:
            if not action.pre <= state:
                continue
            child = (state - action.delete) | action.add
            if child in seen:
                continue
            if goal_satisfied(child, goal):
                return depth + 1
            seen.add(child)
            if len(seen) > max_states:
                raise OracleBudgetExceeded(f"more than {max_states} states")
            frontier.append((child, depth + 1))
    return None


def validate_plan(task: PlanningTask, plan) -> PlanCheck:
    """Check sequential applicability from init and goal satisfaction at the end."""
    state = task.ground.init
    for i, action in enumerate(plan):
        if not action.pre <= state:
            return PlanCheck(False, i, f"step {i} {action.name} not applicable")
        state = (state - action.delete) | action.add
    if not goal_satisfied(state, task.ground.goal):
        return PlanCheck(False, len(plan), "goal unsatisfied after final step")
    return PlanCheck(True)
