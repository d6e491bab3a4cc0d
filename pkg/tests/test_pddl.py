"""Parser tests: typed STRIPS subset, validation errors, round-trips."""

import pytest

from gplan.pddl import (ArityMismatch, PddlSyntaxError, TypeMismatch,
                        UndeclaredSymbol, UnknownObject, UnsupportedConstruct,
                        domain_to_pddl, parse_domain, parse_problem,
                        problem_to_pddl)
from gplan.worlds import BLOCKSWORLD_PROBLEM, load_domain

BW_FRAGMENT = """
(define (domain blocksworld-fragment)
  (:requirements :strips :typing)
  (:types block)
  (:predicates
    (on ?x - block ?y - block)
    (clear ?x - block)
    (handempty)
    (holding ?x - block))
  (:action stack
   :parameters (?x - block ?y - block)
   :precondition (and (clear ?x) (clear ?y) (holding ?x))
   :effect (and (not (clear ?y)) (not (holding ?x))
                (on ?x ?y) (clear ?x) (handempty))))
"""


def test_blocksworld_fragment_structure():
    d = parse_domain(BW_FRAGMENT)
    arities = {p.name: p.arity for p in d.predicates}
    assert arities == {"on": 2, "clear": 1, "handempty": 0, "holding": 1}
    (stack,) = d.actions
    assert stack.name == "stack"
    assert [t for _, t in stack.params] == ["block", "block"]
    assert len(stack.precondition) == 3
    assert len(stack.add_effects) == 3
    assert len(stack.del_effects) == 2
    add_preds = sorted(l.predicate for l in stack.add_effects)
    assert add_preds == ["clear", "handempty", "on"]
    del_preds = sorted(l.predicate for l in stack.del_effects)
    assert del_preds == ["clear", "holding"]


def test_simple_domain_actions():
    d = load_domain("simple")
    names = sorted(a.name for a in d.actions)
    assert names == ["move-east", "move-north", "move-south", "move-west"]
    for a in d.actions:
        assert len(a.precondition) == 2
        assert len(a.add_effects) == 1
        assert len(a.del_effects) == 1


def test_empty_predicate_list():
    d = parse_domain("(define (domain empty) (:predicates))")
    assert d.predicates == ()


def test_bw_prob_1():
    domain = load_domain("blocksworld")
    p = parse_problem(BLOCKSWORLD_PROBLEM, domain)
    assert p.name == "bw-prob-1"
    assert sorted(n for n, _ in p.objects) == ["A", "B", "C"]
    assert len(p.init) == 6
    assert any(a.predicate == "handempty" and a.args == () for a in p.init)
    goal = sorted((a.predicate,) + a.args for a in p.goal)
    assert goal == [("on", "A", "B"), ("on", "B", "C")]


def test_arity_mismatch():
    domain = load_domain("blocksworld")
    bad = """(define (problem p) (:domain blocksworld)
             (:objects A - block) (:init (on A)) (:goal (and (clear A))))"""
    with pytest.raises(ArityMismatch):
        parse_problem(bad, domain)


def test_goal_subset_of_init_is_valid():
    domain = load_domain("blocksworld")
    text = """(define (problem solved) (:domain blocksworld)
              (:objects A - block)
              (:init (clear A) (on-table A) (handempty))
              (:goal (and (clear A))))"""
    p = parse_problem(text, domain)
    assert p.goal <= p.init


@pytest.mark.parametrize("name", ["simple", "scan", "blocksworld"])
def test_domain_round_trip(name):
    d = load_domain(name)
    assert parse_domain(domain_to_pddl(d)) == d


def test_problem_round_trip():
    domain = load_domain("blocksworld")
    p = parse_problem(BLOCKSWORLD_PROBLEM, domain)
    assert parse_problem(problem_to_pddl(p, domain), domain) == p


def test_keywords_case_insensitive_identifiers_preserved():
    d = parse_domain("""(DEFINE (DOMAIN Mixed)
                        (:PREDICATES (Flag ?x - object)))""")
    assert d.name == "Mixed"
    assert d.predicates[0].name == "Flag"


def test_comments_stripped():
    d = parse_domain("""(define (domain c) ; trailing comment
                        ; whole-line comment
                        (:predicates (p)))""")
    assert d.predicates[0].name == "p"


def test_unsupported_requirement_rejected():
    with pytest.raises(UnsupportedConstruct):
        parse_domain("""(define (domain f) (:requirements :fluents)
                        (:predicates (p)))""")


def test_disjunctive_precondition_rejected():
    with pytest.raises(UnsupportedConstruct):
        parse_domain("""(define (domain d) (:predicates (p) (q))
                        (:action a :parameters ()
                         :precondition (or (p) (q)) :effect (and (p))))""")


def test_negative_precondition_rejected():
    with pytest.raises(UnsupportedConstruct):
        parse_domain("""(define (domain d) (:predicates (p))
                        (:action a :parameters ()
                         :precondition (and (not (p))) :effect (and (p))))""")


def test_quantified_effect_rejected():
    with pytest.raises(UnsupportedConstruct):
        parse_domain("""(define (domain d) (:predicates (p ?x - object))
                        (:action a :parameters ()
                         :precondition (and)
                         :effect (forall (?x - object) (p ?x))))""")


def test_syntax_error_carries_position():
    with pytest.raises(PddlSyntaxError) as exc:
        parse_domain("(define (domain x)\n  (:predicates (p))")
    assert exc.value.line >= 1
    assert exc.value.col >= 1


def test_undeclared_type_rejected():
    with pytest.raises(UndeclaredSymbol):
        parse_domain("(define (domain d) (:predicates (p ?x - ghost)))")


def test_undeclared_predicate_in_action_rejected():
    with pytest.raises(UndeclaredSymbol):
        parse_domain("""(define (domain d) (:predicates (p))
                        (:action a :parameters ()
                         :precondition (and (q)) :effect (and (p))))""")


def test_unknown_object_rejected():
    domain = load_domain("blocksworld")
    bad = """(define (problem p) (:domain blocksworld)
             (:objects A - block) (:init (clear Z)) (:goal (and (clear A))))"""
    with pytest.raises(UnknownObject):
        parse_problem(bad, domain)


def test_type_mismatch_rejected():
    domain = load_domain("simple")
    bad = """(define (problem p) (:domain droneworld_simple_dir)
             (:objects d1 - unit p1 - position)
             (:init (at p1 d1)) (:goal (and (at d1 p1))))"""
    with pytest.raises(TypeMismatch):
        parse_problem(bad, domain)


def test_domain_name_mismatch_rejected():
    domain = load_domain("blocksworld")
    bad = """(define (problem p) (:domain otherworld)
             (:objects A - block) (:init) (:goal (and (clear A))))"""
    with pytest.raises(Exception):
        parse_problem(bad, domain)


def test_add_del_overlap_rejected():
    with pytest.raises(Exception):
        parse_domain("""(define (domain d) (:predicates (p))
                        (:action a :parameters ()
                         :precondition (and)
                         :effect (and (p) (not (p)))))""")


def test_duplicate_predicate_rejected():
    with pytest.raises(Exception):
        parse_domain("(define (domain d) (:predicates (p) (p)))")
