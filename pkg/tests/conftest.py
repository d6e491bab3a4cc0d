"""Shared fixtures and independent reference implementations.

The reference grounder/simulator here is deliberately naive (tuple-based,
cross-product enumeration) so package results can be checked against an
implementation with no shared code paths.
"""

import itertools

import pytest


def objects_of_type(domain, problem, wanted):
    return [name for name, ty in problem.objects
            if domain.is_subtype(ty, wanted)]


def naive_bindings(domain, problem, schema):
    """All type-consistent bindings of one schema, no pruning."""
    pools = [objects_of_type(domain, problem, ty) for _, ty in schema.params]
    return [tuple(combo) for combo in itertools.product(*pools)]


def subst(literal, schema, binding):
    env = {var: val for (var, _), val in zip(schema.params, binding)}
    return (literal.predicate, tuple(env[a] if a.startswith("?") else a
                                     for a in literal.args))


def naive_static(domain):
    dynamic = set()
    for a in domain.actions:
        for lit in a.add_effects + a.del_effects:
            dynamic.add(lit.predicate)
    return frozenset(p.name for p in domain.predicates) - dynamic


def naive_ground(domain, problem):
    """(schema, args, pre, add, del) tuples after static-precondition pruning."""
    init = frozenset((a.predicate, a.args) for a in problem.init)
    static = naive_static(domain)
    out = []
    for schema in domain.actions:
        for binding in naive_bindings(domain, problem, schema):
            pre = frozenset(subst(l, schema, binding)
                            for l in schema.precondition)
            if any(p[0] in static and p not in init for p in pre):
                continue
            add = frozenset(subst(l, schema, binding)
                            for l in schema.add_effects)
            dele = frozenset(subst(l, schema, binding)
                             for l in schema.del_effects)
            out.append((schema.name, binding, pre, add, dele))
    return out

def naive_reachable(domain, problem, limit=1_000_000):
    """Breadth-first enumeration of reachable tuple-states."""
    actions = naive_ground(domain, problem)
    start = frozenset((a.predicate, a.args) for a in problem.init)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for state in frontier:
            for _, _, pre, add, dele in actions:
                if pre <= state:
                    child = (state - dele) | add
                    if child not in seen:
                        seen.add(child)
                        nxt.append(child)
                        if len(seen) > limit:
                            raise RuntimeError("state space too large")
        frontier = nxt
    return seen


@pytest.fixture(scope="session")
def bw_task():
    from gplan.ground import ground_all
    from gplan.pddl import parse_problem
    from gplan.worlds import BLOCKSWORLD_PROBLEM, load_domain
    domain = load_domain("blocksworld")
    problem = parse_problem(BLOCKSWORLD_PROBLEM, domain)
    return ground_all(domain, problem)


@pytest.fixture(scope="session")
def simple3_task():
    from gplan.ground import ground_all
    from gplan.worlds import InstanceSpec, gen_simple, load_domain
    domain = load_domain("simple")
    problem, _ = gen_simple(InstanceSpec(W=3, seed=11))
    return ground_all(domain, problem)
