"""Reader and writer for the KB text format.

A KB is a sequence of ``.``-terminated clauses: ground facts plus the
recognized families ``init_state/1``, ``goal_state/1``, ``action/5``,
``ll_action/5`` (or ``/6`` with an empty fourth argument), ``mapping/2``,
``resources/1`` and ``duration/3``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import KBError
from .model import (
    WILDCARD,
    Disequality,
    Effect,
    Mapping,
    Problem,
    ResourcePattern,
    SnapAction,
    State,
    Term,
    Var,
    Wildcard,
    is_ground,
    pair_snap_actions,
    variables,
)

MAX_DEPTH = 200

RESERVED = {
    "init_state": (1,),
    "goal_state": (1,),
    "action": (5,),
    "ll_action": (5, 6),
    "mapping": (2,),
    "resources": (1,),
    "duration": (3,),
}


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    line: int
    column: int
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity} {self.code}: {self.message}"


@dataclass
class ParseResult:
    problem: Problem | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.problem is not None

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


# -- tokens -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<diseq>\\=)
  | (?P<int>-?\d+)
  | (?P<var>[A-Z][A-Za-z0-9_]*)
  | (?P<wild>_[A-Za-z0-9_]*)
  | (?P<atom>[a-z][A-Za-z0-9_]*)
  | (?P<punct>[()\[\],.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


class _Syntax(Exception):
    def __init__(self, line: int, col: int, message: str, code: str = "SyntaxError"):
        super().__init__(message)
        self.line, self.col, self.message, self.code = line, col, message, code


def tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise _Syntax(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            toks.append(Tok(kind, value, line, pos - line_start + 1))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    return toks


# -- raw clause trees -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class _List:
    items: tuple


@dataclass(frozen=True, slots=True)
class _Diseq:
    left: object
    right: object


class _Reader:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else Tok("eof", "", 1, 1)
            raise _Syntax(last.line, last.col, "unexpected end of input")
        self.i += 1
        return tok

    def expect(self, text: str) -> Tok:
        tok = self.take()
        if tok.text != text:
            raise _Syntax(tok.line, tok.col, f"expected {text!r}, found {tok.text!r}")
        return tok

    def skip_clause(self) -> None:
        while self.i < len(self.toks):
            tok = self.toks[self.i]
            self.i += 1
            if tok.text == ".":
                return

    def expr(self, depth: int = 0):
        left = self.primary(depth)
        tok = self.peek()
        if tok is not None and tok.kind == "diseq":
            self.take()
            return _Diseq(left, self.primary(depth))
        return left

    def primary(self, depth: int):
        if depth > MAX_DEPTH:
            tok = self.peek() or self.toks[-1]
            raise _Syntax(tok.line, tok.col, "terms nested too deeply")
        tok = self.take()
        if tok.kind == "int":
            return int(tok.text)
        if tok.kind == "var":
            return Var(tok.text)
        if tok.kind == "wild":
            return WILDCARD
        if tok.kind == "atom":
            nxt = self.peek()
            if nxt is not None and nxt.text == "(" and nxt.line == tok.line and nxt.col == tok.col + len(tok.text):
                self.take()
                args = [self.expr(depth + 1)]
                while self.peek() is not None and self.peek().text == ",":
                    self.take()
                    args.append(self.expr(depth + 1))
                self.expect(")")
                return Term(tok.text, tuple(args))
            return Term(tok.text, ())
        if tok.text == "[":
            items = []
            if self.peek() is not None and self.peek().text == "]":
                self.take()
                return _List(())
            items.append(self.expr(depth + 1))
            while self.peek() is not None and self.peek().text == ",":
                self.take()
                items.append(self.expr(depth + 1))
            self.expect("]")
            return _List(tuple(items))
        raise _Syntax(tok.line, tok.col, f"unexpected token {tok.text!r}")


def _has_raw(x, kinds) -> bool:
    if isinstance(x, kinds):
        return True
    if isinstance(x, Term):
        return any(_has_raw(a, kinds) for a in x.args)
    if isinstance(x, (_List,)):
        return any(_has_raw(a, kinds) for a in x.items)
    return False


# -- clause interpretation ----------------------------------------------------


class _Builder:
    def __init__(self) -> None:
        self.diags: list[Diagnostic] = []
        self.kb: list[Term] = []
        self.kb_seen: set[Term] = set()
        self.init: list[Term] | None = None
        self.goal: list[Term] | None = None
        self.hl: list[SnapAction] = []
        self.ll: list[SnapAction] = []
        self.mappings: list[Mapping] = []
        self.resources: list[ResourcePattern] = []
        self.durations: list[tuple[str, int, int | None]] = []

    def error(self, tok: Tok, code: str, message: str) -> None:
        self.diags.append(Diagnostic("error", tok.line, tok.col, code, message))

    def warn(self, tok: Tok, code: str, message: str) -> None:
        self.diags.append(Diagnostic("warning", tok.line, tok.col, code, message))

    # each handler raises _Syntax for structural problems
    def clause(self, node, tok: Tok) -> None:
        if not isinstance(node, Term):
            raise _Syntax(tok.line, tok.col, "a clause must be a fact")
        name, arity = node.functor, node.arity
        if name in RESERVED:
            if arity not in RESERVED[name]:
                raise _Syntax(tok.line, tok.col, f"unknown clause {name}/{arity}", "UnknownClause")
            getattr(self, "on_" + name)(node, tok)
            return
        if _has_raw(node, (_List, _Diseq)):
            raise _Syntax(tok.line, tok.col, "lists and operators are not allowed in facts")
        if not is_ground(node):
            raise _Syntax(tok.line, tok.col, f"fact {node} is not ground", "NonGroundFact")
        if node not in self.kb_seen:
            self.kb_seen.add(node)
            self.kb.append(node)

    def _terms(self, node, tok: Tok, what: str) -> list[Term]:
        if not isinstance(node, _List):
            raise _Syntax(tok.line, tok.col, f"{what} must be a list")
        out = []
        for item in node.items:
            if not isinstance(item, Term) or _has_raw(item, (_List, _Diseq)):
                raise _Syntax(tok.line, tok.col, f"{what} may only contain predicates, found {item}")
            out.append(item)
        return out

    def on_init_state(self, node: Term, tok: Tok) -> None:
        if self.init is not None:
            raise _Syntax(tok.line, tok.col, "init_state declared twice", "DuplicateSection")
        fluents = self._terms(node.args[0], tok, "init_state")
        for f in fluents:
            if not is_ground(f):
                raise _Syntax(tok.line, tok.col, f"initial fluent {f} is not ground", "NonGroundFluent")
        self.init = fluents

    def on_goal_state(self, node: Term, tok: Tok) -> None:
        if self.goal is not None:
            raise _Syntax(tok.line, tok.col, "goal_state declared twice", "DuplicateSection")
        fluents = self._terms(node.args[0], tok, "goal_state")
        for f in fluents:
            if variables(f):
                raise _Syntax(tok.line, tok.col, f"goal fluent {f} has a named variable", "NonGroundFluent")
        self.goal = list(dict.fromkeys(fluents))

    def on_action(self, node: Term, tok: Tok) -> None:
        head, pos, neg, grounding, effects = node.args
        self._add_action(head, pos, neg, grounding, effects, "high", False, tok)

    def on_ll_action(self, node: Term, tok: Tok) -> None:
        if node.arity == 5:
            head, pos, neg, grounding, effects = node.args
            self._add_action(head, pos, neg, grounding, effects, "low", False, tok)
            return
        head, pos, neg, extra, grounding, effects = node.args
        if not isinstance(extra, _List):
            raise _Syntax(tok.line, tok.col, "ll_action end-conditions must be a list")
        if extra.items:
            raise _Syntax(tok.line, tok.col, "ll_action end-conditions are not supported", "UnsupportedEndConditions")
        self._add_action(head, pos, neg, grounding, effects, "low", True, tok)

    def _add_action(self, head, pos, neg, grounding, effects, level, five, tok) -> None:
        if not isinstance(head, Term) or _has_raw(head, (_List, _Diseq, Wildcard)):
            raise _Syntax(tok.line, tok.col, "action head must be a predicate over variables and constants")
        pos_l = self._terms(pos, tok, "positive preconditions")
        neg_l = self._terms(neg, tok, "negative preconditions")
        if not isinstance(grounding, _List):
            raise _Syntax(tok.line, tok.col, "grounding must be a list")
        items: list = []
        bound = set(variables(head))
        pattern_vars: set[str] = set()
        for item in grounding.items:
            if isinstance(item, _Diseq):
                if not (isinstance(item.left, Var) and isinstance(item.right, Var)):
                    raise _Syntax(tok.line, tok.col, "\\= is only supported between two variables")
                for v in (item.left, item.right):
                    if v.name not in pattern_vars and v.name not in bound:
                        raise _Syntax(tok.line, tok.col, f"{v} is used in \\= before it is bound", "DisequalityOrder")
                items.append(Disequality(item.left, item.right))
            elif isinstance(item, Term) and not _has_raw(item, (_List, _Diseq)):
                items.append(item)
                pattern_vars.update(variables(item))
            else:
                raise _Syntax(tok.line, tok.col, f"bad grounding item {item}")
        effs = []
        if not isinstance(effects, _List):
            raise _Syntax(tok.line, tok.col, "effects must be a list")
        for e in effects.items:
            if not (isinstance(e, Term) and e.functor in ("add", "del") and e.arity == 1 and isinstance(e.args[0], Term)):
                raise _Syntax(tok.line, tok.col, f"effect {e} is not add(_) or del(_)", "BadEffect")
            if _has_raw(e, (_List, _Diseq)):
                raise _Syntax(tok.line, tok.col, f"effect {e} is malformed", "BadEffect")
            effs.append(Effect(e.functor, e.args[0]))
        known = bound | pattern_vars
        for e in effs:
            if any(isinstance(a, Wildcard) for a in _leaves(e.literal)):
                raise _Syntax(tok.line, tok.col, f"effect {e} contains a wildcard", "UnboundEffectVariable")
            missing = [v for v in variables(e.literal) if v not in known]
            if missing:
                raise _Syntax(
                    tok.line, tok.col, f"variable {missing[0]} of {e} is not in the head or grounding", "UnboundEffectVariable"
                )
        action = SnapAction(head, tuple(pos_l), tuple(neg_l), tuple(items), tuple(effs), level, five)
        if any(a.name == action.name for a in self.hl + self.ll):
            raise _Syntax(tok.line, tok.col, f"action {action.name} declared twice", "DuplicateAction")
        for lit in pos_l:
            free = [v for v in variables(lit) if v not in known]
            if free:
                self.warn(tok, "FreePreconditionVariable", f"{free[0]} in {lit} is bound by the state, not the grounding list")
        for lit in neg_l:
            free = [v for v in variables(lit) if v not in known]
            if free:
                self.warn(tok, "FreePreconditionVariable", f"{free[0]} in negated {lit} acts as a wildcard")
        (self.hl if level == "high" else self.ll).append(action)

    def on_mapping(self, node: Term, tok: Tok) -> None:
        head, body = node.args
        if not isinstance(head, Term) or _has_raw(head, (_List, _Diseq)):
            raise _Syntax(tok.line, tok.col, "mapping head must be a predicate")
        heads = self._terms(body, tok, "mapping expansion")
        known = set(variables(head))
        for h in heads:
            extra = [v for v in variables(h) if v not in known]
            if extra:
                raise _Syntax(tok.line, tok.col, f"variable {extra[0]} of {h} is not in the mapping head", "UnboundMappingVariable")
        if any(m.hl_start_head.functor == head.functor for m in self.mappings):
            raise _Syntax(tok.line, tok.col, f"mapping for {head.functor} declared twice", "DuplicateMapping")
        self.mappings.append(Mapping(head, tuple(heads)))

    def on_resources(self, node: Term, tok: Tok) -> None:
        pattern = node.args[0]
        if not isinstance(pattern, Term) or _has_raw(pattern, (_List, _Diseq)) or variables(pattern):
            raise _Syntax(tok.line, tok.col, "resources/1 takes a predicate pattern such as agent(_)")
        rp = ResourcePattern(pattern)
        if rp not in self.resources:
            self.resources.append(rp)

    def on_duration(self, node: Term, tok: Tok) -> None:
        name, lo, hi = node.args
        if not (isinstance(name, Term) and name.arity == 0):
            raise _Syntax(tok.line, tok.col, "duration name must be an atom")
        if hi == Term("inf"):
            hi = None
        if not isinstance(lo, int) or not (hi is None or isinstance(hi, int)):
            raise _Syntax(tok.line, tok.col, "duration bounds must be integers (or inf for the upper bound)")
        if lo < 0 or (hi is not None and hi < lo):
            raise _Syntax(tok.line, tok.col, f"bad duration bounds [{lo}, {hi}]", "BadDuration")
        if any(d[0] == name.functor for d in self.durations):
            raise _Syntax(tok.line, tok.col, f"duration of {name} declared twice", "DuplicateDuration")
        self.durations.append((name.functor, lo, hi))

    def problem(self) -> Problem:
        return Problem(
            general_kb=tuple(self.kb),
            init=State(self.init or ()),
            goal=tuple(self.goal or ()),
            hl_actions=tuple(self.hl),
            ll_actions=tuple(self.ll),
            mappings=tuple(self.mappings),
            resources=tuple(self.resources),
            durations=tuple(self.durations),
        )


def _leaves(t):
    if isinstance(t, Term):
        for a in t.args:
            yield from _leaves(a)
    else:
        yield t


def parse_kb(text: str | bytes) -> ParseResult:
    """Parse KB text; the problem is None when any error was reported."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            return ParseResult(None, [Diagnostic("error", 1, exc.start + 1, "EncodingError", "input is not UTF-8")])
    b = _Builder()
    try:
        toks = tokenize(text)
    except _Syntax as exc:
        return ParseResult(None, [Diagnostic("error", exc.line, exc.col, exc.code, exc.message)])
    r = _Reader(toks)
    while r.peek() is not None:
        first = r.peek()
        try:
            node = r.expr()
            r.expect(".")
            b.clause(node, first)
        except _Syntax as exc:
            b.diags.append(Diagnostic("error", exc.line, exc.col, exc.code, exc.message))
            if r.i < len(toks) and toks[r.i - 1].text != ".":
                r.skip_clause()
    if any(d.severity == "error" for d in b.diags):
        return ParseResult(None, b.diags)
    return ParseResult(b.problem(), b.diags)


def load_kb(path) -> Problem:
    """Read a KB file, raising KBError on any error diagnostic."""
    result = parse_kb(Path(path).read_text(encoding="utf-8"))
    if result.problem is None:
        raise KBError(result.diagnostics)
    return result.problem


def parse_term(text: str) -> Term:
    """Parse a single term such as ``at(b1, 1, 1)``."""
    r = _Reader(tokenize(text))
    node = r.expr()
    if r.peek() is not None or not isinstance(node, Term) or _has_raw(node, (_List, _Diseq)):
        raise ValueError(f"not a single term: {text!r}")
    return node


# -- serialization ---------------------------------------------------------------


def _list(items) -> str:
    return "[" + ", ".join(str(i) for i in items) + "]"


def _action_text(a: SnapAction) -> str:
    kw = "action" if a.level == "high" else "ll_action"
    parts = [str(a.head), _list(a.pos_pre), _list(a.neg_pre)]
    if a.five_list:
        parts.append("[]")
    parts += [_list(a.grounding), _list(a.effects)]
    return f"{kw}({parts[0]},\n  " + ",\n  ".join(parts[1:]) + ")."


def serialize_sections(problem: Problem) -> dict[str, str]:
    """KB text split into general facts, states, actions per level and mappings."""
    general = [f"{f}." for f in problem.general_kb]
    general += [f"resources({r.pattern})." for r in problem.resources]
    general += [f"duration({n}, {lo}, {'inf' if hi is None else hi})." for n, lo, hi in problem.durations]
    states = [f"init_state({_list(problem.init.sorted())}).", f"goal_state({_list(problem.goal)})."]
    mappings = [f"mapping({m.hl_start_head},\n  {_list(m.expansion)})." for m in problem.mappings]
    parts = {
        "general": general,
        "states": states,
        "hl_actions": [_action_text(a) for a in problem.hl_actions],
        "ll_actions": [_action_text(a) for a in problem.ll_actions],
        "mappings": mappings,
    }
    return {k: "".join(line + "\n" for line in v) for k, v in parts.items()}


def serialize_kb(problem: Problem) -> str:
    return "".join(serialize_sections(problem).values())


# -- static validation ---------------------------------------------------------------


def validate_kb(problem: Problem) -> list[Diagnostic]:
    """Machine-checkable consistency checks over a parsed problem."""
    diags: list[Diagnostic] = []

    def err(code: str, msg: str) -> None:
        diags.append(Diagnostic("error", 1, 1, code, msg))

    def warn(code: str, msg: str) -> None:
        diags.append(Diagnostic("warning", 1, 1, code, msg))

    hl_names = {a.name for a in problem.hl_actions}
    ll_names = {a.name for a in problem.ll_actions}
    for name in sorted(hl_names & ll_names):
        err("LevelOverlap", f"{name} is declared at both levels")

    ll_by_name = {a.name: a for a in problem.ll_actions}
    hl_by_name = {a.name: a for a in problem.hl_actions}
    for m in problem.mappings:
        src = hl_by_name.get(m.hl_start_head.functor)
        if src is None or src.kind != "start":
            err("UnknownMappingSource", f"mapping head {m.hl_start_head.functor} is not a high-level start action")
        elif src.head.arity != m.hl_start_head.arity:
            err("UnknownMappingSource", f"mapping head {m.hl_start_head} has the wrong arity")
        for h in m.expansion:
            target = ll_by_name.get(h.functor)
            if target is None or target.head.arity != h.arity:
                err("UnknownMappingTarget", f"{h} in the mapping of {m.hl_start_head.functor} is not a low-level action")

    produced: set[tuple[str, int]] = {f.family for f in problem.init}
    touched: set[tuple[str, int]] = set(produced)
    for a in problem.hl_actions + problem.ll_actions:
        for e in a.effects:
            touched.add(e.literal.family)
            if e.op == "add":
                produced.add(e.literal.family)
    for g in problem.goal:
        if g.family not in produced:
            warn("UnreachableGoalFluent", f"no action adds {g.functor}/{g.arity} and it is not initially true")
    for a in problem.hl_actions + problem.ll_actions:
        for lit in a.neg_pre:
            if lit.family not in touched:
                warn("InertNegatedCondition", f"{a.name}: nothing ever produces {lit.functor}/{lit.arity}")
        for lit in a.pos_pre:
            if lit.family not in produced:
                warn("UnsupportedCondition", f"{a.name}: nothing ever produces {lit.functor}/{lit.arity}")
        for item in a.grounding:
            if isinstance(item, Term) and item.family not in problem.kb_families:
                warn("EmptyGrounding", f"{a.name}: no fact matches {item}")

    for r in problem.resources:
        if not any(f.family == r.pattern.family for f in problem.general_kb):
            warn("EmptyResource", f"no fact matches resource pattern {r.pattern}")

    try:
        pair_snap_actions(problem.hl_actions)
        pair_snap_actions(problem.ll_actions)
    except Exception as exc:  # UnpairedSnapAction / SignatureMismatch
        err(type(exc).__name__, str(exc))
    return diags


def check(problem_text: str) -> tuple[Problem, list[Diagnostic]]:
    """Parse and validate; raise KBError if anything is an error."""
    result = parse_kb(problem_text)
    if result.problem is None:
        raise KBError(result.diagnostics)
    diags = result.diagnostics + validate_kb(result.problem)
    if any(d.severity == "error" for d in diags):
        raise KBError(diags)
    return result.problem, diags
