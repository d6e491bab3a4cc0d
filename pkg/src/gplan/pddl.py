"""Typed-STRIPS PDDL front-end: tokenizer, domain/problem parsers, pretty-printers.

Supported subset: :typing, conjunctive positive preconditions, add/delete
effects ((not ...) inside :effect only), domain :constants.  Anything else
(disjunction, quantifiers, numeric fluents, negative preconditions) is
rejected with a positioned error.
"""

from __future__ import annotations

from dataclasses import dataclass

ROOT_TYPE = "object"

_SUPPORTED_REQUIREMENTS = {":strips", ":typing"}


class PddlError(Exception):
    """Base class for all parse/validation errors."""


class PddlSyntaxError(PddlError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class UnsupportedConstruct(PddlError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: unsupported construct '{name}'" if line
                         else f"unsupported construct '{name}'")
        self.name = name


class UndeclaredSymbol(PddlError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: undeclared symbol '{name}'" if line
                         else f"undeclared symbol '{name}'")
        self.name = name


class ArityMismatch(PddlError):
    def __init__(self, atom: str, expected: int, got: int):
        super().__init__(f"atom {atom}: expected {expected} argument(s), got {got}")
        self.atom = atom


class TypeMismatch(PddlError):
    def __init__(self, obj: str, expected: str, got: str):
        super().__init__(f"object '{obj}' has type '{got}', expected '{expected}'")
        self.obj = obj
        self.expected = expected


class UnknownObject(PddlError):
    def __init__(self, name: str):
        super().__init__(f"unknown object '{name}'")
        self.name = name


# ---------------------------------------------------------------------------
# Data model


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable, type)

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class Literal:
    """Lifted atom over schema parameters and domain constants."""

    predicate: str
    args: tuple[str, ...]  # '?var' or constant name


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    precondition: tuple[Literal, ...]
    add_effects: tuple[Literal, ...]
    del_effects: tuple[Literal, ...]


@dataclass(frozen=True)
class GroundAtom:
    predicate: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"


@dataclass(frozen=True)
class DomainDef:
    name: str
    types: tuple[tuple[str, str | None], ...]  # (type, parent or None)
    constants: tuple[tuple[str, str], ...]  # (object, type)
    predicates: tuple[PredicateDef, ...]
    actions: tuple[ActionSchema, ...]

    def predicate(self, name: str) -> PredicateDef | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def type_names(self) -> set[str]:
        return {ROOT_TYPE} | {t for t, _ in self.types}

    def is_subtype(self, t: str, ancestor: str) -> bool:
        """True iff t equals ancestor or derives from it (root type accepts all)."""
        if ancestor == ROOT_TYPE or t == ancestor:
            return True
        parents = dict(self.types)
        seen = set()
        while t in parents and t not in seen:
            seen.add(t)
            parent = parents[t] or ROOT_TYPE
            if parent == ancestor:
                return True
            t = parent
        return False


@dataclass(frozen=True)
class ProblemDef:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]  # (object, type), domain constants included
    init: frozenset[GroundAtom]
    goal: frozenset[GroundAtom]


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();":
                j += 1
            tokens.append(_Token(text[i:j], line, col))
            col += j - i
            i = j
    return tokens


class _Reader:
    """S-expression reader over the token stream."""

    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def _next(self) -> _Token:
        if self.pos >= len(self.tokens):
            raise PddlSyntaxError("unexpected end of input", *self._last_pos())
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def _last_pos(self) -> tuple[int, int]:
        if self.tokens:
            t = self.tokens[-1]
            return t.line, t.col
        return 1, 1

    def read(self):
        """Read one s-expression: a _Token or a list of them."""
        t = self._next()
        if t.text == "(":
            items = []
            while True:
                if self.pos >= len(self.tokens):
                    raise PddlSyntaxError("expected ')'", t.line, t.col)
                if self.tokens[self.pos].text == ")":
                    self.pos += 1
                    return items
                items.append(self.read())
        if t.text == ")":
            raise PddlSyntaxError("unexpected ')'", t.line, t.col)
        return t

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)


def _head(sexpr) -> str:
    """Lowercased head keyword of a list form, or ''. Keywords are case-insensitive."""
    if isinstance(sexpr, list) and sexpr and isinstance(sexpr[0], _Token):
        return sexpr[0].text.lower()
    return ""


def _pos(sexpr) -> tuple[int, int]:
    while isinstance(sexpr, list):
        if not sexpr:
            return 0, 0
        sexpr = sexpr[0]
    return sexpr.line, sexpr.col


def _expect_token(sexpr, what: str) -> _Token:
    if not isinstance(sexpr, _Token):
        raise PddlSyntaxError(f"expected {what}", *_pos(sexpr))
    return sexpr


def _parse_typed_list(items: list, default_type: str) -> list[tuple[str, str]]:
    """Parse `a b - T c d` into [(a,T),(b,T),(c,default),(d,default)]."""
    out: list[tuple[str, str]] = []
    group: list[str] = []
    i = 0
    while i < len(items):
        tok = _expect_token(items[i], "name in typed list")
        if tok.text == "-":
            if i + 1 >= len(items):
                raise PddlSyntaxError("expected type after '-'", tok.line, tok.col)
            ty = _expect_token(items[i + 1], "type name").text
            out.extend((g, ty) for g in group)
            group = []
            i += 2
        else:
            group.append(tok.text)
            i += 1
    out.extend((g, default_type) for g in group)
    return out


def _single_sexpr(text: str):
    reader = _Reader(text)
    sexpr = reader.read()
    if not reader.at_end():
        extra = reader.tokens[reader.pos]
        raise PddlSyntaxError("trailing content after top-level form", extra.line, extra.col)
    return sexpr


# ---------------------------------------------------------------------------
# Domain parsing


def parse_domain(text: str) -> DomainDef:
    """Parse a single `(define (domain ...) ...)` form into a validated DomainDef."""
    sexpr = _single_sexpr(text)
    if _head(sexpr) != "define":
        raise PddlSyntaxError("expected (define (domain ...) ...)", *_pos(sexpr))
    if len(sexpr) < 2 or _head(sexpr[1]) != "domain" or len(sexpr[1]) != 2:
        raise PddlSyntaxError("expected (domain <name>)", *_pos(sexpr))
    name = _expect_token(sexpr[1][1], "domain name").text

    types: list[tuple[str, str | None]] = []
    constants: list[tuple[str, str]] = []
    predicates: list[PredicateDef] = []
    actions: list[ActionSchema] = []

    for section in sexpr[2:]:
        kw = _head(section)
        if kw == ":requirements":
            for req in section[1:]:
                r = _expect_token(req, "requirement").text.lower()
                if r not in _SUPPORTED_REQUIREMENTS:
                    raise UnsupportedConstruct(r, req.line, req.col)
        elif kw == ":types":
            for t, parent in _parse_typed_list(section[1:], ""):
                types.append((t, parent or None))
        elif kw == ":constants":
            constants.extend(_parse_typed_list(section[1:], ROOT_TYPE))
        elif kw == ":predicates":
            for pred in section[1:]:
                predicates.append(_parse_predicate(pred))
        elif kw == ":action":
            actions.append(_parse_action(section))
        else:
            raise UnsupportedConstruct(kw or "<non-list form>", *_pos(section))

    domain = DomainDef(name, tuple(types), tuple(constants),
                       tuple(predicates), tuple(actions))
    _validate_domain(domain)
    return domain


def _parse_predicate(sexpr) -> PredicateDef:
    if not isinstance(sexpr, list) or not sexpr:
        raise PddlSyntaxError("expected (predicate ?params...)", *_pos(sexpr))
    name = _expect_token(sexpr[0], "predicate name").text
    params = _parse_typed_list(sexpr[1:], ROOT_TYPE)
    for var, _ in params:
        if not var.startswith("?"):
            raise PddlSyntaxError(f"predicate parameter '{var}' must be a ?variable",
                                  *_pos(sexpr))
    return PredicateDef(name, tuple(params))


def _parse_action(sexpr) -> ActionSchema:
    name = None
    params: tuple[tuple[str, str], ...] = ()
    precondition: tuple[Literal, ...] = ()
    add_effects: list[Literal] = []
    del_effects: list[Literal] = []
    i = 1
    if i < len(sexpr) and isinstance(sexpr[i], _Token):
        name = sexpr[i].text
        i += 1
    if name is None:
        raise PddlSyntaxError("expected action name", *_pos(sexpr))
    while i < len(sexpr):
        key = _expect_token(sexpr[i], "action keyword").text.lower()
        if i + 1 >= len(sexpr):
            raise PddlSyntaxError(f"missing value for {key}", sexpr[i].line, sexpr[i].col)
        value = sexpr[i + 1]
        if key == ":parameters":
            if not isinstance(value, list):
                raise PddlSyntaxError("expected parameter list", *_pos(value))
            params = tuple(_parse_typed_list(value, ROOT_TYPE))
        elif key == ":precondition":
            precondition = tuple(_parse_conjunction(value, allow_not=False))
        elif key == ":effect":
            for lit, negated in _parse_effect(value):
                (del_effects if negated else add_effects).append(lit)
        else:
            raise UnsupportedConstruct(key, sexpr[i].line, sexpr[i].col)
        i += 2
    return ActionSchema(name, params, precondition,
                        tuple(add_effects), tuple(del_effects))


def _parse_literal(sexpr) -> Literal:
    if not isinstance(sexpr, list) or not sexpr:
        raise PddlSyntaxError("expected atom", *_pos(sexpr))
    pred = _expect_token(sexpr[0], "predicate name")
    if pred.text.startswith(":") or pred.text.lower() in ("and", "or", "not", "forall",
                                                          "exists", "when", "="):
        raise UnsupportedConstruct(pred.text, pred.line, pred.col)
    args = tuple(_expect_token(a, "atom argument").text for a in sexpr[1:])
    return Literal(pred.text, args)


def _parse_conjunction(sexpr, allow_not: bool) -> list[Literal]:
    """Parse an atom or (and atom...); (not ...)/(or ...)/quantifiers rejected."""
    if _head(sexpr) == "and":
        out = []
        for part in sexpr[1:]:
            out.extend(_parse_conjunction(part, allow_not))
        return out
    if _head(sexpr) in ("not", "or", "forall", "exists", "when", "imply"):
        raise UnsupportedConstruct(_head(sexpr), *_pos(sexpr))
    return [_parse_literal(sexpr)]


def _parse_effect(sexpr) -> list[tuple[Literal, bool]]:
    """Parse an effect form into (literal, negated) pairs."""
    if _head(sexpr) == "and":
        out = []
        for part in sexpr[1:]:
            out.extend(_parse_effect(part))
        return out
    if _head(sexpr) == "not":
        if len(sexpr) != 2:
            raise PddlSyntaxError("(not ...) takes one atom", *_pos(sexpr))
        inner = sexpr[1]
        if _head(inner) in ("and", "or", "not", "forall", "exists", "when"):
            raise UnsupportedConstruct(_head(inner), *_pos(inner))
        return [(_parse_literal(inner), True)]
    if _head(sexpr) in ("or", "forall", "exists", "when", "imply"):
        raise UnsupportedConstruct(_head(sexpr), *_pos(sexpr))
    return [(_parse_literal(sexpr), False)]


def _validate_domain(domain: DomainDef) -> None:
    names = [p.name for p in domain.predicates]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise PddlError(f"duplicate predicate name(s): {', '.join(dup)}")
    declared = domain.type_names()
    for t, parent in domain.types:
        if parent and parent not in declared:
            raise UndeclaredSymbol(parent)
    for pred in domain.predicates:
        for _, ty in pred.params:
            if ty not in declared:
                raise UndeclaredSymbol(ty)
    for obj, ty in domain.constants:
        if ty not in declared:
            raise UndeclaredSymbol(ty)
    const_types = dict(domain.constants)
    for schema in domain.actions:
        for _, ty in schema.params:
            if ty not in declared:
                raise UndeclaredSymbol(ty)
        var_types = dict(schema.params)
        if len(var_types) != len(schema.params):
            raise PddlError(f"action {schema.name}: duplicate parameter variable")
        for lit in schema.precondition + schema.add_effects + schema.del_effects:
            pred = domain.predicate(lit.predicate)
            if pred is None:
                raise UndeclaredSymbol(lit.predicate)
            if len(lit.args) != pred.arity:
                raise ArityMismatch(str(lit), pred.arity, len(lit.args))
            for arg, (_, expected) in zip(lit.args, pred.params):
                if arg.startswith("?"):
                    if arg not in var_types:
                        raise UndeclaredSymbol(arg)
                    actual = var_types[arg]
                elif arg in const_types:
                    actual = const_types[arg]
                else:
                    raise UndeclaredSymbol(arg)
                if not domain.is_subtype(actual, expected):
                    raise TypeMismatch(arg, expected, actual)
        overlap = set(schema.add_effects) & set(schema.del_effects)
        if overlap:
            raise PddlError(f"action {schema.name}: atom in both add and delete effects: "
                            f"{sorted(str(lit) for lit in overlap)[0]}")


# ---------------------------------------------------------------------------
# Problem parsing


def parse_problem(text: str, domain: DomainDef) -> ProblemDef:
    """Parse a `(define (problem ...) ...)` form and validate it against the domain."""
    sexpr = _single_sexpr(text)
    if _head(sexpr) != "define":
        raise PddlSyntaxError("expected (define (problem ...) ...)", *_pos(sexpr))
    if len(sexpr) < 2 or _head(sexpr[1]) != "problem" or len(sexpr[1]) != 2:
        raise PddlSyntaxError("expected (problem <name>)", *_pos(sexpr))
    name = _expect_token(sexpr[1][1], "problem name").text

    domain_name = None
    objects: list[tuple[str, str]] = list(domain.constants)
    init: list[GroundAtom] = []
    goal: list[GroundAtom] = []

    for section in sexpr[2:]:
        kw = _head(section)
        if kw == ":domain":
            domain_name = _expect_token(section[1], "domain name").text
        elif kw == ":objects":
            objects.extend(_parse_typed_list(section[1:], ROOT_TYPE))
        elif kw == ":init":
            for atom in section[1:]:
                init.append(_ground_atom(atom))
        elif kw == ":goal":
            if len(section) != 2:
                raise PddlSyntaxError("expected a single goal form", *_pos(section))
            goal.extend(_ground_atom_conjunction(section[1]))
        else:
            raise UnsupportedConstruct(kw or "<non-list form>", *_pos(section))

    if domain_name != domain.name:
        raise PddlError(f"problem references domain '{domain_name}', "
                        f"parsed domain is '{domain.name}'")

    obj_names = [o for o, _ in objects]
    if len(set(obj_names)) != len(obj_names):
        dup = sorted({o for o in obj_names if obj_names.count(o) > 1})
        raise PddlError(f"duplicate object name(s): {', '.join(dup)}")
    declared_types = domain.type_names()
    for obj, ty in objects:
        if obj.startswith("?"):
            raise PddlSyntaxError(f"'{obj}': variables are only valid inside schemas")
        if ty not in declared_types:
            raise UndeclaredSymbol(ty)

    problem = ProblemDef(name, domain_name, tuple(objects),
                         frozenset(init), frozenset(goal))
    _validate_atoms(problem.init | problem.goal, domain, dict(objects))
    return problem


def _ground_atom(sexpr) -> GroundAtom:
    lit = _parse_literal(sexpr)
    for arg in lit.args:
        if arg.startswith("?"):
            raise PddlSyntaxError(f"'{arg}': variables are only valid inside schemas",
                                  *_pos(sexpr))
    return GroundAtom(lit.predicate, lit.args)


def _ground_atom_conjunction(sexpr) -> list[GroundAtom]:
    if _head(sexpr) == "and":
        out = []
        for part in sexpr[1:]:
            out.extend(_ground_atom_conjunction(part))
        return out
    if _head(sexpr) in ("not", "or", "forall", "exists", "when", "imply"):
        raise UnsupportedConstruct(_head(sexpr), *_pos(sexpr))
    return [_ground_atom(sexpr)]


def _validate_atoms(atoms, domain: DomainDef, obj_types: dict[str, str]) -> None:
    for atom in atoms:
        pred = domain.predicate(atom.predicate)
        if pred is None:
            raise UndeclaredSymbol(atom.predicate)
        if len(atom.args) != pred.arity:
            raise ArityMismatch(str(atom), pred.arity, len(atom.args))
        for arg, (_, expected) in zip(atom.args, pred.params):
            if arg not in obj_types:
                raise UnknownObject(arg)
            if not domain.is_subtype(obj_types[arg], expected):
                raise TypeMismatch(arg, expected, obj_types[arg])


# ---------------------------------------------------------------------------
# Pretty-printing (round-trips through the parsers)


def _format_typed(pairs, type_of=lambda p: p[1], name_of=lambda p: p[0]) -> str:
    parts = []
    group: list[str] = []
    current = None
    for p in pairs:
        if current is not None and type_of(p) != current and group:
            parts.append(" ".join(group) + f" - {current}")
            group = []
        current = type_of(p)
        group.append(name_of(p))
    if group:
        parts.append(" ".join(group) + (f" - {current}" if current else ""))
    return " ".join(parts)


def _format_literal(lit) -> str:
    return "(" + " ".join((lit.predicate,) + lit.args) + ")"


def domain_to_pddl(domain: DomainDef) -> str:
    lines = [f"(define (domain {domain.name})", "  (:requirements :strips :typing)"]
    if domain.types:
        typed = _format_typed(domain.types, type_of=lambda t: t[1] or "")
        lines.append(f"  (:types {typed})")
    if domain.constants:
        lines.append(f"  (:constants {_format_typed(domain.constants)})")
    preds = []
    for p in domain.predicates:
        body = " ".join([p.name] + [f"{v} - {t}" for v, t in p.params])
        preds.append(f"    ({body})")
    lines.append("  (:predicates" + ("\n" + "\n".join(preds) if preds else "") + ")")
    for a in domain.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_format_typed(a.params)})")
        pre = " ".join(_format_literal(l) for l in a.precondition)
        lines.append(f"    :precondition (and {pre})")
        effs = [_format_literal(l) for l in a.add_effects]
        effs += [f"(not {_format_literal(l)})" for l in a.del_effects]
        lines.append(f"    :effect (and {' '.join(effs)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def problem_to_pddl(problem: ProblemDef, domain: DomainDef | None = None) -> str:
    """Render a problem; objects matching domain :constants are not re-declared."""
    skip = set(domain.constants) if domain else set()
    own = [o for o in problem.objects if o not in skip]
    lines = [f"(define (problem {problem.name})",
             f"  (:domain {problem.domain_name})"]
    if own:
        lines.append(f"  (:objects {_format_typed(own)})")
    lines.append("  (:init")
    for atom in sorted(problem.init, key=lambda a: (a.predicate, a.args)):
        lines.append(f"    {atom}")
    lines.append("  )")
    goal_atoms = " ".join(str(a) for a in
                          sorted(problem.goal, key=lambda a: (a.predicate, a.args)))
    lines.append(f"  (:goal (and {goal_atoms}))")
    lines.append(")")
    return "\n".join(lines) + "\n"
