"""Ground planning tasks: schema instantiation, interned states, transitions.

Grounding is full and upfront with one pruning pass: a binding dies when a
precondition atom of a static predicate (one never added or deleted by any
schema) is absent from init.  Atoms are interned to dense ints, so a state
is a frozenset of ids and transition math is small-integer set algebra.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .pddl import ActionSchema, DomainDef, GroundAtom, Literal, PddlError, ProblemDef

State = frozenset  # frozenset[int] of atom ids


class NotApplicable(Exception):
    """apply() called with an action whose precondition does not hold."""


@dataclass(frozen=True)
class GroundAction:
    uid: int
    schema: str
    args: tuple[str, ...]
    pre: frozenset
    add: frozenset
    delete: frozenset

    @property
    def name(self) -> str:
        return "(" + " ".join((self.schema,) + self.args).lower() + ")"


class GroundTask:
    """Immutable ground model of one problem instance.

    Action uids are table indices and stay stable for the task's lifetime;
    everything downstream (embedding caches, plan files) keys on them.
    """

    def __init__(self, domain: DomainDef, problem: ProblemDef,
                 atoms: list[GroundAtom], actions: tuple[GroundAction, ...],
                 static_preds: frozenset):
        self.domain = domain
        self.problem = problem
        self.atoms = atoms
        self.atom_ids = {atom: i for i, atom in enumerate(atoms)}
        self.actions = actions
        self.static_preds = static_preds
        self.init = self.intern_state(problem.init)
        self.goal = self.intern_state(problem.goal)
        self._by_key = {(a.schema.lower(), tuple(s.lower() for s in a.args)): a
                        for a in actions}

    def intern_state(self, atoms) -> State:
        try:
            return frozenset(self.atom_ids[a] for a in atoms)
        except KeyError as exc:
            raise KeyError(f"atom {exc.args[0]} is outside this task's universe") from None

    def state_atoms(self, state: State) -> list[GroundAtom]:
        return sorted((self.atoms[i] for i in state),
                      key=lambda a: (a.predicate, a.args))

    def action_by_name(self, schema: str, args) -> GroundAction:
        key = (schema.lower(), tuple(s.lower() for s in args))
        if key not in self._by_key:
            raise PddlError(f"no ground action ({' '.join((schema,) + tuple(args))})")
        return self._by_key[key]

    def rebind(self, problem: ProblemDef) -> "GroundTask":
        """Same ground structure, new init/goal.

        Valid only when the new problem shares objects and static atoms with
        the one this task was grounded from; raises ValueError otherwise.
        """
        if problem.objects != self.problem.objects:
            raise ValueError("rebind requires an identical object set")
        if _static_atoms(problem, self.static_preds) != _static_atoms(self.problem,
                                                                     self.static_preds):
            raise ValueError("rebind requires identical static atoms")
        clone = object.__new__(GroundTask)
        clone.domain = self.domain
        clone.problem = problem
        clone.atoms = self.atoms
        clone.atom_ids = self.atom_ids
        clone.actions = self.actions
        clone.static_preds = self.static_preds
        clone._by_key = self._by_key
        clone.init = clone.intern_state(problem.init)
        clone.goal = clone.intern_state(problem.goal)
        return clone


def _static_atoms(problem: ProblemDef, static_preds) -> frozenset:
    return frozenset(a for a in problem.init if a.predicate in static_preds)


def static_predicates(domain: DomainDef) -> frozenset:
    """Predicates never occurring in any schema's add or delete list."""
    dynamic = {lit.predicate
               for schema in domain.actions
               for lit in schema.add_effects + schema.del_effects}
    return frozenset(p.name for p in domain.predicates) - frozenset(dynamic)


def ground_all(domain: DomainDef, problem: ProblemDef) -> GroundTask:
    """Instantiate every schema over the problem's objects, statically pruned."""
    static_preds = static_predicates(domain)
    obj_types = dict(problem.objects)

    objs_for: dict[str, list[str]] = {}

    def objects_of(ty: str) -> list[str]:
        if ty not in objs_for:
            objs_for[ty] = [o for o, t in problem.objects if domain.is_subtype(t, ty)]
        return objs_for[ty]

    static_index: dict[str, list[GroundAtom]] = {}
    for atom in sorted(problem.init, key=lambda a: (a.predicate, a.args)):
        if atom.predicate in static_preds:
            static_index.setdefault(atom.predicate, []).append(atom)

    atoms: list[GroundAtom] = []
    atom_ids: dict[GroundAtom, int] = {}

    def intern(atom: GroundAtom) -> int:
        if atom not in atom_ids:
            atom_ids[atom] = len(atoms)
            atoms.append(atom)
        return atom_ids[atom]

    for atom in sorted(problem.init | problem.goal, key=lambda a: (a.predicate, a.args)):
        intern(atom)

    actions: list[GroundAction] = []
    for schema in domain.actions:
        for binding in _schema_bindings(domain, schema, objects_of, static_preds,
                                        static_index, obj_types):
            pre = frozenset(intern(_instantiate(l, binding)) for l in schema.precondition)
            add = frozenset(intern(_instantiate(l, binding)) for l in schema.add_effects)
            dele = frozenset(intern(_instantiate(l, binding)) for l in schema.del_effects)
            args = tuple(binding[v] for v, _ in schema.params)
            actions.append(GroundAction(len(actions), schema.name, args, pre, add, dele))
    return GroundTask(domain, problem, atoms, tuple(actions), static_preds)


def _instantiate(lit: Literal, binding: dict) -> GroundAtom:
    return GroundAtom(lit.predicate,
                      tuple(binding.get(a, a) if a.startswith("?") else a
                            for a in lit.args))


def _schema_bindings(domain: DomainDef, schema: ActionSchema, objects_of,
                     static_preds, static_index, obj_types):
    """Type-consistent bindings surviving static pruning, sorted by args.

    Static precondition literals are matched against init atoms first, which
    both prunes and binds; variables they leave free range over their type.
    """
    var_types = dict(schema.params)
    bindings: list[dict] = [{}]
    for lit in schema.precondition:
        if lit.predicate not in static_preds:
            continue
        candidates = static_index.get(lit.predicate, [])
        bindings = [nb for b in bindings for atom in candidates
                    if (nb := _unify(domain, lit, atom, b, var_types, obj_types))
                    is not None]
        if not bindings:
            return []
    complete: dict[tuple, dict] = {}
    free_vars = [(v, ty) for v, ty in schema.params]
    for b in bindings:
        unbound = [(v, ty) for v, ty in free_vars if v not in b]
        pools = [objects_of(ty) for _, ty in unbound]
        for combo in itertools.product(*pools):
            full = dict(b)
            full.update({v: o for (v, _), o in zip(unbound, combo)})
            complete[tuple(full[v] for v, _ in schema.params)] = full
    return [complete[k] for k in sorted(complete)]


def _unify(domain: DomainDef, lit: Literal, atom: GroundAtom, binding: dict,
           var_types: dict, obj_types: dict):
    out = dict(binding)
    for arg, val in zip(lit.args, atom.args):
        if arg.startswith("?"):
            if arg in out:
                if out[arg] != val:
                    return None
            else:
                if not domain.is_subtype(obj_types.get(val, ""), var_types[arg]):
                    return None
                out[arg] = val
        elif arg != val:
            return None
    return out


# ---------------------------------------------------------------------------
# Transition semantics


def applicable(state: State, action: GroundAction) -> bool:
    return action.pre <= state


def apply_action(state: State, action: GroundAction) -> State:
    if not applicable(state, action):
        raise NotApplicable(action.name)
    return (state - action.delete) | action.add


def successors(state: State, actions) -> list:
    """(action, next state) for each applicable action, in uid order."""
    if isinstance(actions, GroundTask):
        actions = actions.actions
    return [(a, (state - a.delete) | a.add) for a in actions if a.pre <= state]


def goal_satisfied(state: State, goal: State) -> bool:
    return goal <= state


# ---------------------------------------------------------------------------
# Plan files: one ground action per line, lowercase, newline-terminated


def plan_to_text(plan) -> str:
    return "".join(a.name + "\n" for a in plan)


def parse_plan(text: str, task: GroundTask) -> list:
    plan = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";")[0].strip()
        if not line:
            continue
        if not (line.startswith("(") and line.endswith(")")):
            raise PddlError(f"plan line {lineno}: expected (action args...)")
        parts = line[1:-1].split()
        if not parts:
            raise PddlError(f"plan line {lineno}: empty action")
        plan.append(task.action_by_name(parts[0], parts[1:]))
    return plan
