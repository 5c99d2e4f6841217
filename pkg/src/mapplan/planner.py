"""Depth-first total-order planning and mapping expansion."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Iterator, Sequence

from .errors import EffectNotGround, LimitExceeded, MappingInapplicable, Unsolvable
from .model import (
    Arg,
    Disequality,
    Literal,
    Problem,
    SnapAction,
    State,
    Term,
    Var,
    Wildcard,
    is_ground,
    variables,
)
from .unify import any_match, enumerate_groundings, holds, match, substitute

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchLimits:
    max_depth: int = 200
    max_expansions: int = 200_000
    visited_pruning: bool = True

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.max_expansions < 1:
            raise ValueError("max_expansions must be at least 1")


@dataclass(frozen=True)
class PlanStep:
    index: int
    head: Term
    action: SnapAction
    binding: tuple[tuple[str, Arg], ...]
    level: str = "high"
    origin: int | None = None  # index of the high-level start this step expands

    @cached_property
    def bindings(self) -> dict:
        return dict(self.binding)

    @property
    def kind(self) -> str:
        return self.action.kind

    def ground(self, t: Arg) -> Arg:
        return substitute(t, self.bindings)

    @cached_property
    def pos_pre(self) -> list[Term]:
        return [self.ground(t) for t in self.action.pos_pre]

    @cached_property
    def neg_pre(self) -> list[Term]:
        return [self.ground(t) for t in self.action.neg_pre]

    @cached_property
    def adds(self) -> list[Term]:
        return [self.ground(e.literal) for e in self.action.effects if e.op == "add"]

    @cached_property
    def dels(self) -> list[Term]:
        return [self.ground(e.literal) for e in self.action.effects if e.op == "del"]


@dataclass(frozen=True)
class TOPlan:
    steps: tuple[PlanStep, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[PlanStep]:
        return iter(self.steps)

    def __getitem__(self, i: int) -> PlanStep:
        return self.steps[i]

    @property
    def heads(self) -> list[Term]:
        return [s.head for s in self.steps]

    def to_text(self) -> str:
        return "".join(f"[{s.index}] {s.head}\n" for s in self.steps)

    def to_json(self) -> str:
        rows = [
            {"index": s.index, "head": str(s.head), "level": s.level, "origin": "hl" if s.origin is None else s.origin}
            for s in self.steps
        ]
        return json.dumps(rows, indent=2) + "\n"


# -- applicability ------------------------------------------------------------


@lru_cache(maxsize=4096)
def _check_schedule(a: SnapAction, bound0: frozenset[str]):
    """Decide after which grounding item each precondition can be pre-checked."""
    known = set(bound0)
    after: list[set[str]] = []
    gained: list[set[str]] = []
    for item in a.grounding:
        new = set() if isinstance(item, Disequality) else set(variables(item)) - known
        known |= new
        gained.append(new)
        after.append(set(known))
    bindable = known
    n = len(a.grounding)
    pos_at: list[list[Term]] = [[] for _ in range(n)]
    neg_at: list[list[Term]] = [[] for _ in range(n)]
    pos_now: list[Term] = []
    neg_now: list[Term] = []
    for lit in a.pos_pre:
        vs = set(variables(lit))
        levels = [k for k in range(n) if vs & gained[k]]
        if not levels:
            pos_now.append(lit)
        for k in levels:
            pos_at[k].append(lit)
    for lit in a.neg_pre:
        vs = set(variables(lit))
        if not vs <= bindable:
            continue  # may depend on variables bound by positive literals
        if vs <= set(bound0):
            neg_now.append(lit)
            continue
        k = next(k for k in range(n) if vs <= after[k])
        neg_at[k].append(lit)
    return (
        tuple(pos_now),
        tuple(neg_now),
        tuple(tuple(x) for x in pos_at),
        tuple(tuple(x) for x in neg_at),
    )


def check_preconditions(a: SnapAction, s: State, b: dict) -> tuple[bool, dict, Literal | None]:
    """Positive literals in order (possibly binding), then negative ones."""
    for t in a.pos_pre:
        ok, b = holds(Literal(t, True), s, b)
        if not ok:
            return False, b, Literal(substitute(t, b), True)
    for t in a.neg_pre:
        ok, b = holds(Literal(t, False), s, b)
        if not ok:
            return False, b, Literal(substitute(t, b), False)
    return True, b, None


def _complete(a: SnapAction, b: dict) -> bool:
    if not is_ground(substitute(a.head, b)):
        return False
    return all(is_ground(substitute(e.literal, b)) for e in a.effects)


def applicable(a: SnapAction, s: State, kb, b0: dict | None = None) -> Iterator[dict]:
    """Bindings under which ``a`` can be applied in ``s``, in grounding order."""
    b0 = dict(b0 or {})
    pos_now, neg_now, pos_at, neg_at = _check_schedule(a, frozenset(b0))
    for lit in pos_now:
        if not any_match(substitute(lit, b0), s):
            return
    for lit in neg_now:
        if any_match(substitute(lit, b0), s):
            return

    def prune(k: int, b: dict) -> bool:
        for lit in pos_at[k]:
            if not any_match(substitute(lit, b), s):
                return False
        for lit in neg_at[k]:
            if any_match(substitute(lit, b), s):
                return False
        return True

    for b in enumerate_groundings(a.grounding, kb, b0, prune):
        ok, nb, _ = check_preconditions(a, s, b)
        if ok and _complete(a, nb):
            yield nb


def ground_effects(a: SnapAction, b: dict) -> tuple[list[Term], list[Term]]:
    dels, adds = [], []
    for e in a.effects:
        t = substitute(e.literal, b)
        if not is_ground(t):
            raise EffectNotGround(t)
        (adds if e.op == "add" else dels).append(t)
    return dels, adds


def apply_action(a: SnapAction, b: dict, s: State) -> State:
    dels, adds = ground_effects(a, b)
    return s.update(dels, adds)


def goal_satisfied(s: State, goal: Iterable[Term]) -> bool:
    return all(any_match(g, s) for g in goal)


# -- search ------------------------------------------------------------------------

ActionOrder = Callable[[Sequence[SnapAction], State], Iterable[SnapAction]]


def _step(i: int, a: SnapAction, b: dict, level: str = "high", origin: int | None = None) -> PlanStep:
    return PlanStep(i, substitute(a.head, b), a, tuple(sorted(b.items())), level, origin)


def iter_plans(p: Problem, limits: SearchLimits = SearchLimits(), order: ActionOrder | None = None) -> Iterator[TOPlan]:
    """Yield high-level plans in depth-first order.

    Raises Unsolvable or LimitExceeded only if no plan was yielded.
    """
    actions = list(p.hl_actions)

    def successors(state: State):
        for a in (order(actions, state) if order else actions):
            for b in applicable(a, state, p):
                yield a, b, apply_action(a, b, state)

    def as_plan(path: list) -> TOPlan:
        return TOPlan(tuple(_step(i, a, b) for i, (a, b) in enumerate(path)))

    found = 0
    if goal_satisfied(p.init, p.goal):
        found += 1
        yield TOPlan(())
    closed = {p.init}
    path: list[tuple[SnapAction, dict]] = []
    stack = [successors(p.init)]
    expansions = 1
    depth_cut = False
    while stack:
        try:
            a, b, nxt = next(stack[-1])
        except StopIteration:
            stack.pop()
            if path:
                path.pop()
            continue
        if limits.visited_pruning and nxt in closed:
            continue
        if goal_satisfied(nxt, p.goal):
            found += 1
            yield as_plan(path + [(a, b)])
            continue
        if len(path) + 1 >= limits.max_depth:
            depth_cut = True
            continue
        if expansions >= limits.max_expansions:
            if found:
                return
            raise LimitExceeded(limits, f"{expansions} expansions")
        expansions += 1
        if limits.visited_pruning:
            closed.add(nxt)
        path.append((a, b))
        stack.append(successors(nxt))
    log.debug("search finished after %d expansions", expansions)
    if not found:
        if depth_cut:
            raise LimitExceeded(limits, f"depth {limits.max_depth}")
        raise Unsolvable("no plan reaches the goal")


def plan_hl(p: Problem, limits: SearchLimits = SearchLimits(), order: ActionOrder | None = None) -> TOPlan:
    return next(iter_plans(p, limits, order))


# -- mapping expansion ---------------------------------------------------------------


def _head_binding(a: SnapAction, head: Term) -> dict | None:
    if a.head.functor != head.functor or a.head.arity != head.arity:
        return None
    b: dict = {}
    for av, hv in zip(a.head.args, head.args):
        if isinstance(hv, Wildcard):
            continue
        if isinstance(av, Var):
            if av.name in b and b[av.name] != hv:
                return None
            b[av.name] = hv
        elif av != hv:
            return None
    return b


def instantiate(a: SnapAction, head: Term, s: State, kb) -> tuple[dict | None, str]:
    """First applicable binding of ``a`` whose head matches ``head``.

    Returns the binding, or None with a description of what failed.
    """
    b0 = _head_binding(a, head)
    if b0 is None:
        return None, f"{head} does not fit {a.head}"
    for b in applicable(a, s, kb, b0):
        return b, ""
    for b in enumerate_groundings(a.grounding, kb, b0):
        _, _, failed = check_preconditions(a, s, b)
        return None, str(failed) if failed else "head is not ground"
    return None, "no grounding in the general KB"


def expand_mappings(hl: TOPlan, p: Problem) -> TOPlan:
    """Insert the mapped low-level snaps after each mapped start step."""
    state = p.init
    steps: list[PlanStep] = []
    hl_by_name = {a.name: a for a in p.hl_actions}
    ll_by_name = {a.name: a for a in p.ll_actions}

    def run(a: SnapAction | None, head: Term, level: str, origin: int | None) -> PlanStep:
        nonlocal state
        if a is None:
            raise MappingInapplicable(len(steps), head, "action is not declared")
        b, why = instantiate(a, head, state, p)
        if b is None:
            raise MappingInapplicable(len(steps), head, why)
        state = apply_action(a, b, state)
        step = _step(len(steps), a, b, level, origin)
        steps.append(step)
        return step

    for hstep in hl:
        parent = run(hl_by_name.get(hstep.head.functor), hstep.head, "high", None)
        if parent.kind != "start":
            continue
        m = p.mapping_for(parent.action.name)
        if m is None:
            continue
        mb = _match_mapping(m.hl_start_head, parent.head)
        for pattern in m.expansion:
            run(ll_by_name.get(pattern.functor), substitute(pattern, mb), "low", parent.index)
    return TOPlan(tuple(steps))


def _match_mapping(pattern: Term, head: Term) -> dict:
    b = match(pattern, head, {})
    if b is None:
        raise MappingInapplicable(0, head, f"mapping head {pattern} does not match")
    return b


def simulate(plan: TOPlan, p: Problem) -> State:
    """Replay ground steps from the initial state; raise if any is inapplicable."""
    state = p.init
    for s in plan:
        ok, _, failed = check_preconditions(s.action, state, s.bindings)
        if not ok:
            raise MappingInapplicable(s.index, s.head, str(failed))
        state = apply_action(s.action, s.bindings, state)
    return state


def hl_families(p: Problem) -> set[tuple[str, int]]:
    fams = {f.family for f in p.init} | {g.family for g in p.goal}
    for a in p.hl_actions:
        fams |= {e.literal.family for e in a.effects}
    return fams


def abstraction_violations(hl: TOPlan, hl_problem: Problem, full: TOPlan, ll_problem: Problem) -> list[str]:
    """Compare the high-level fluents changed at both levels after each high-level step.

    The low-level side includes the snaps expanded from that step. Changes
    are compared rather than states because the low-level KB may declare
    extra objects, such as additional agents.
    """
    fams = hl_families(hl_problem)
    segments: list[list[PlanStep]] = []
    for s in full:
        if s.level == "high":
            segments.append([s])
        elif segments:
            segments[-1].append(s)
    if [seg[0].head for seg in segments] != hl.heads:
        return ["expanded plan does not follow the high-level plan"]

    def proj(state: State) -> set[Term]:
        return {f for f in state if f.family in fams}

    h0, l0 = proj(hl_problem.init), proj(ll_problem.init)
    out: list[str] = []
    hs, ls = hl_problem.init, ll_problem.init
    for step, seg in zip(hl, segments):
        hs = apply_action(step.action, step.bindings, hs)
        for s in seg:
            ls = apply_action(s.action, s.bindings, ls)
        h, l = proj(hs), proj(ls)
        if (h - h0, h0 - h) != (l - l0, l0 - l):
            out.append(f"after {step.head}: {sorted(map(str, (h - h0) ^ (l - l0)))} {sorted(map(str, (h0 - h) ^ (l0 - l)))}")
    return out
