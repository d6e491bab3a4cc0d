"""Grid-world domain definitions and seeded instance generators.

Two drone domains (plain directional navigation, and a scan variant with
headings and reconnaissance targets) plus a small Blocksworld corpus used
for cross-checking the symbolic layer.  Generators are pure functions of
(spec, seed) and only emit instances a breadth-first check proves solvable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .pddl import DomainDef, GroundAtom, ProblemDef, parse_domain

DOMAIN_SIMPLE = """\
(define (domain droneworld_simple_dir)
  (:requirements :typing)
  (:types
    unit
    position
  )
  (:predicates
    (at ?u - unit ?p - position)
    (north-of ?p1 ?p2 - position)  ; p1 is north of p2
    (south-of ?p1 ?p2 - position)
    (east-of ?p1 ?p2 - position)
    (west-of ?p1 ?p2 - position)
  )

  (:action move-north
    :parameters (?u - unit ?from ?to - position)
    :precondition (and (at ?u ?from) (north-of ?to ?from))
    :effect (and (not (at ?u ?from)) (at ?u ?to))
  )

  (:action move-south
    :parameters (?u - unit ?from ?to - position)
    :precondition (and (at ?u ?from) (south-of ?to ?from))
    :effect (and (not (at ?u ?from)) (at ?u ?to))
  )

  (:action move-east
    :parameters (?u - unit ?from ?to - position)
    :precondition (and (at ?u ?from) (east-of ?to ?from))
    :effect (and (not (at ?u ?from)) (at ?u ?to))
  )

  (:action move-west
    :parameters (?u - unit ?from ?to - position)
    :precondition (and (at ?u ?from) (west-of ?to ?from))
    :effect (and (not (at ?u ?from)) (at ?u ?to))
  )
)
"""

# Heading order used for turns: rotating right (clockwise) goes
# north -> east -> south -> west -> north.  `(clockwise-of ?d1 ?d2)` holds
# when d1 is one clockwise step from d2.  A drone facing h scans the cell
# on its right, i.e. adjacent in direction clockwise(h), or on its left,
# adjacent in direction counterclockwise(h).
DOMAIN_SCAN = """\
(define (domain droneworld_scan)
  (:requirements :typing)
  (:types
    unit
    position
    direction
  )
  (:constants
    drone - unit
    north south east west - direction
  )
  (:predicates
    (at ?u - unit ?p - position)
    (drone-to ?dir - direction)
    (safe-at ?p - position)
    (adjacent-north ?from ?to - position)
    (adjacent-south ?from ?to - position)
    (adjacent-east ?from ?to - position)
    (adjacent-west ?from ?to - position)
    (clockwise-of ?d1 ?d2 - direction)
    (scanned ?u - unit)
  )

  (:action heading-north-forward
    :parameters (?from ?to - position)
    :precondition (and (at drone ?from) (safe-at ?to) (drone-to north)
                       (adjacent-north ?from ?to))
    :effect (and (not (at drone ?from)) (at drone ?to))
  )

  (:action heading-south-forward
    :parameters (?from ?to - position)
    :precondition (and (drone-to south) (at drone ?from) (safe-at ?to)
                       (adjacent-south ?from ?to))
    :effect (and (not (at drone ?from)) (at drone ?to))
  )

  (:action heading-east-forward
    :parameters (?from ?to - position)
    :precondition (and (at drone ?from) (safe-at ?to) (drone-to east)
                       (adjacent-east ?from ?to))
    :effect (and (not (at drone ?from)) (at drone ?to))
  )

  (:action heading-west-forward
    :parameters (?from ?to - position)
    :precondition (and (at drone ?from) (safe-at ?to) (drone-to west)
                       (adjacent-west ?from ?to))
    :effect (and (not (at drone ?from)) (at drone ?to))
  )

  (:action turn-right
    :parameters (?from ?to - direction)
    :precondition (and (drone-to ?from) (clockwise-of ?to ?from))
    :effect (and (not (drone-to ?from)) (drone-to ?to))
  )

  (:action turn-left
    :parameters (?from ?to - direction)
    :precondition (and (drone-to ?from) (clockwise-of ?from ?to))
    :effect (and (not (drone-to ?from)) (drone-to ?to))
  )

  (:action scan-north-right
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to north)
                       (adjacent-east ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-north-left
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to north)
                       (adjacent-west ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-east-right
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to east)
                       (adjacent-south ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-east-left
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to east)
                       (adjacent-north ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-south-right
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to south)
                       (adjacent-west ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-south-left
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to south)
                       (adjacent-east ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-west-right
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to west)
                       (adjacent-north ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )

  (:action scan-west-left
    :parameters (?target - unit ?from ?to - position)
    :precondition (and (at drone ?from) (drone-to west)
                       (adjacent-south ?from ?to) (at ?target ?to))
    :effect (and (scanned ?target))
  )
)
"""

DOMAIN_BLOCKSWORLD = """\
(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates
    (on ?x - block ?y - block)
    (on-table ?x - block)
    (clear ?x - block)
    (handempty)
    (holding ?x - block)
  )

  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (on-table ?x) (handempty))
    :effect (and (not (on-table ?x)) (not (clear ?x)) (not (handempty))
                 (holding ?x))
  )

  (:action put-down
    :parameters (?x - block)
    :precondition (and (holding ?x))
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (on-table ?x))
  )

  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty)
                 (on ?x ?y))
  )

  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty))
                 (not (on ?x ?y)))
  )
)
"""

BLOCKSWORLD_PROBLEM = """\
(define (problem bw-prob-1)
  (:domain blocksworld)
  (:objects A B C - block)
  (:init
    (on-table B)
    (on A C)
    (on-table C)
    (clear A)
    (clear B)
    (handempty))
  (:goal
    (and
      (on A B)
      (on B C)))
)
"""

DIRECTIONS = ("north", "east", "south", "west")

# (dx, dy) per heading; y grows northward, x grows eastward, origin southwest
DIRECTION_DELTAS = {"north": (0, 1), "south": (0, -1),
                    "east": (1, 0), "west": (-1, 0)}


class GenerationFailed(Exception):
    """No solvable instance found within the retry budget."""


@dataclass(frozen=True)
class InstanceSpec:
    W: int
    obstacle_density: float = 0.0
    num_targets: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.obstacle_density <= 0.3:
            raise ValueError("obstacle_density must be in [0, 0.3]")


@dataclass(frozen=True)
class GoalInfo:
    W: int
    start: tuple[int, int]
    goal: tuple[int, int]
    blocked: frozenset[tuple[int, int]]
    targets: tuple[tuple[int, int], ...] = ()
    heading: str | None = None


_RETRY_CAP = 100
_parsed_domains: dict[str, DomainDef] = {}


def load_domain(name: str) -> DomainDef:
    """Parsed domain by short name (simple, scan, blocksworld), cached."""
    if name not in _parsed_domains:
        texts = {"simple": DOMAIN_SIMPLE, "scan": DOMAIN_SCAN,
                 "blocksworld": DOMAIN_BLOCKSWORLD}
        if name not in texts:
            raise KeyError(f"unknown domain '{name}'")
        _parsed_domains[name] = parse_domain(texts[name])
    return _parsed_domains[name]


def position_name(x: int, y: int) -> str:
    return f"pos-{x}-{y}"


def _attempt_rng(seed: int, attempt: int) -> random.Random:
    return random.Random(seed + 1_000_003 * attempt)


def _sample_blocked(rng: random.Random, W: int, density: float) -> set[tuple[int, int]]:
    cells = [(x, y) for y in range(W) for x in range(W)]
    count = round(density * W * W)
    return set(rng.sample(cells, count)) if count else set()


def _reachable(start: tuple[int, int], free: set[tuple[int, int]]) -> set[tuple[int, int]]:
    """Cells connected to start through free cells, 4-adjacency."""
    seen = {start}
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        for dx, dy in DIRECTION_DELTAS.values():
            nxt = (x + dx, y + dy)
            if nxt in free and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def _directional_atoms(W: int, blocked: set[tuple[int, int]]) -> list[GroundAtom]:
    """north-of/south-of/east-of/west-of atoms; atoms into blocked cells omitted."""
    preds = {"north": "north-of", "south": "south-of",
             "east": "east-of", "west": "west-of"}
    atoms = []
    for y in range(W):
        for x in range(W):
            for heading, (dx, dy) in DIRECTION_DELTAS.items():
                tx, ty = x + dx, y + dy
                if 0 <= tx < W and 0 <= ty < W and (tx, ty) not in blocked:
                    atoms.append(GroundAtom(preds[heading],
                                            (position_name(tx, ty), position_name(x, y))))
    return atoms


def _adjacency_atoms(W: int) -> list[GroundAtom]:
    """adjacent-* atoms for every neighboring pair (obstacles do not prune these)."""
    atoms = []
    for y in range(W):
        for x in range(W):
            for heading, (dx, dy) in DIRECTION_DELTAS.items():
                tx, ty = x + dx, y + dy
                if 0 <= tx < W and 0 <= ty < W:
                    atoms.append(GroundAtom(f"adjacent-{heading}",
                                            (position_name(x, y), position_name(tx, ty))))
    return atoms


def _position_objects(W: int) -> list[tuple[str, str]]:
    return [(position_name(x, y), "position") for y in range(W) for x in range(W)]


def gen_simple(spec: InstanceSpec) -> tuple[ProblemDef, GoalInfo]:
    """Random navigation instance: reach a goal cell through unblocked cells."""
    if spec.W < 3:
        raise ValueError("grid width must be at least 3")
    domain = load_domain("simple")
    for attempt in range(_RETRY_CAP):
        rng = _attempt_rng(spec.seed, attempt)
        W = spec.W
        blocked = _sample_blocked(rng, W, spec.obstacle_density)
        free = [(x, y) for y in range(W) for x in range(W) if (x, y) not in blocked]
        if len(free) < 2:
            continue
        start, goal = rng.sample(free, 2)
        if goal not in _reachable(start, set(free)):
            continue
        init = _directional_atoms(W, blocked)
        init.append(GroundAtom("at", ("drone", position_name(*start))))
        objects = [("drone", "unit")] + _position_objects(W)
        problem = ProblemDef(
            name=f"dw-simple-{W}x{W}-{spec.seed}",
            domain_name=domain.name,
            objects=tuple(objects),
            init=frozenset(init),
            goal=frozenset({GroundAtom("at", ("drone", position_name(*goal)))}),
        )
        info = GoalInfo(W=W, start=start, goal=goal, blocked=frozenset(blocked))
        return problem, info
    raise GenerationFailed(f"no solvable instance in {_RETRY_CAP} attempts "
                           f"(W={spec.W}, density={spec.obstacle_density}, seed={spec.seed})")


def gen_scan(spec: InstanceSpec) -> tuple[ProblemDef, GoalInfo]:
    """Random reconnaissance instance: scan every target, then reach the goal cell.

    Obstacles are cells without `safe-at`.  Solvable iff the goal cell and at
    least one safe neighbor of every target are reachable from the start
    (turning is always available, so heading never blocks reachability).
    """
    if spec.W < 3:
        raise ValueError("grid width must be at least 3")
    if spec.num_targets < 1:
        raise ValueError("scan instances need at least one target")
    domain = load_domain("scan")
    for attempt in range(_RETRY_CAP):
        rng = _attempt_rng(spec.seed, attempt)
        W = spec.W
        blocked = _sample_blocked(rng, W, spec.obstacle_density)
        free = [(x, y) for y in range(W) for x in range(W) if (x, y) not in blocked]
        if len(free) < 2 + spec.num_targets:
            continue
        picks = rng.sample(free, 2 + spec.num_targets)
        start, goal, targets = picks[0], picks[1], picks[2:]
        reach = _reachable(start, set(free))
        if goal not in reach:
            continue
        if any(not _has_reachable_neighbor(t, reach) for t in targets):
            continue
        heading = rng.choice(DIRECTIONS)

        init = _adjacency_atoms(W)
        init.extend(GroundAtom("safe-at", (position_name(x, y),)) for x, y in free)
        cw_order = ("north", "east", "south", "west")
        init.extend(GroundAtom("clockwise-of", (cw_order[(i + 1) % 4], cw_order[i]))
                    for i in range(4))
        init.append(GroundAtom("drone-to", (heading,)))
        init.append(GroundAtom("at", ("drone", position_name(*start))))
        init.extend(GroundAtom("at", (f"target-{k}", position_name(*t)))
                    for k, t in enumerate(targets))

        objects = (list(domain.constants) + _position_objects(W)
                   + [(f"target-{k}", "unit") for k in range(spec.num_targets)])
        goal_atoms = [GroundAtom("scanned", (f"target-{k}",))
                      for k in range(spec.num_targets)]
        goal_atoms.append(GroundAtom("at", ("drone", position_name(*goal))))
        problem = ProblemDef(
            name=f"dw-scan-{W}x{W}-{spec.seed}",
            domain_name=domain.name,
            objects=tuple(objects),
            init=frozenset(init),
            goal=frozenset(goal_atoms),
        )
        info = GoalInfo(W=W, start=start, goal=goal, blocked=frozenset(blocked),
                        targets=tuple(targets), heading=heading)
        return problem, info
    raise GenerationFailed(f"no solvable instance in {_RETRY_CAP} attempts "
                           f"(W={spec.W}, density={spec.obstacle_density}, "
                           f"targets={spec.num_targets}, seed={spec.seed})")


def _has_reachable_neighbor(cell: tuple[int, int], reach: set[tuple[int, int]]) -> bool:
    x, y = cell
    return any((x + dx, y + dy) in reach for dx, dy in DIRECTION_DELTAS.values())
