"""Replay a solved schedule with its resource allocation and re-check it.

The replay order is the topological order of the schedule's ordering
graph (enablers, durations and resource sequencing) that stays closest to
the original plan order. Each snap is re-instantiated from its reassigned head so that hidden
variables, such as an arm's previous position, follow the new allocation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import networkx as nx

from .errors import ScheduleViolation
from .model import Problem, State, Term
from .planner import PlanStep, TOPlan, apply_action, instantiate, _step
from .scheduler import Schedule, reassign
from .unify import match


@dataclass(frozen=True)
class Realization:
    schedule: Schedule
    order: tuple[int, ...]  # event rows in replay order, source and sink excluded
    steps: dict  # event row -> realized PlanStep
    graph: nx.DiGraph
    final: State

    def to_text(self) -> str:
        lines = ["[0] init()"]
        for k, e in enumerate(self.order, start=1):
            lines.append(f"[{k}] {self.steps[e].head}")
        lines.append(f"[{len(self.order) + 1}] end()")
        return "\n".join(lines) + "\n"


def ordering_graph(s: Schedule) -> nx.DiGraph:
    m = s.model
    g = nx.DiGraph()
    g.add_nodes_from(range(len(m.events)))
    g.add_edges_from(m.precedence)
    for a in m.actions:
        if a.start != a.end:
            g.add_edge(a.start, a.end)
    for x, y in s.sequencing():
        g.add_edge(m.actions[x].end, m.actions[y].start)
    return g


def _reassigned_heads(s: Schedule, plan: TOPlan) -> dict[int, Term]:
    owner = s.event_action()
    out = {}
    for step in plan:
        row = step.index + 1
        out[row] = reassign(step.head, s.resources(owner[row])) if row in owner else step.head
    return out


def realize(s: Schedule, plan: TOPlan, p: Problem) -> Realization:
    """Replay the allocated plan; raise ScheduleViolation if a snap cannot run."""
    g = ordering_graph(s)
    if not nx.is_directed_acyclic_graph(g):
        raise ScheduleViolation(["ordering graph has a cycle"])
    m = s.model
    heads = _reassigned_heads(s, plan)
    order = [
        e
        for e in nx.lexicographical_topological_sort(g)
        if e not in (m.source, m.sink)
    ]
    state = p.init
    steps: dict[int, PlanStep] = {}
    for e in order:
        orig = plan[e - 1]
        b, why = instantiate(orig.action, heads[e], state, p)
        if b is None:
            raise ScheduleViolation([f"{heads[e]} at t={s.times[e]} is not applicable: {why}"])
        steps[e] = _step(e - 1, orig.action, b, orig.level, orig.origin)
        state = apply_action(orig.action, b, state)
    return Realization(s, tuple(order), steps, g, state)


def _descendants(s: Schedule) -> dict[int, set[int]]:
    """Event rows belonging to each action and to every action mapped under it."""
    m = s.model
    out = {k: {a.start, a.end} for k, a in enumerate(m.actions)}
    for k in reversed(range(len(m.actions))):
        parent = m.actions[k].parent
        if parent is not None:
            out[parent] |= out[k]
    return out


def _matches(pattern: Term, fluent: Term) -> bool:
    return match(pattern, fluent, {}) is not None


def violations(r: Realization, p: Problem) -> list[str]:
    """Support windows, clobbering inside action intervals, capacity and bounds."""
    s, m, g = r.schedule, r.schedule.model, r.graph
    t = s.times
    out: list[str] = []
    before = {e: nx.ancestors(g, e) for e in g.nodes}

    def precedes(u: int, v: int) -> bool:
        return u in before[v]

    # ordering and duration bounds
    for u, v in g.edges():
        if t[u] > t[v]:
            out.append(f"row {u} at t={t[u]} must not follow row {v} at t={t[v]}")
    for a in m.actions:
        d = t[a.end] - t[a.start]
        if d < a.d_min or (a.d_max is not None and d > a.d_max):
            out.append(f"{a.label} lasts {d}, outside [{a.d_min}, {a.d_max}]")

    adds = {e: r.steps[e].adds for e in r.order}
    dels = {e: r.steps[e].dels for e in r.order}

    # every positive precondition has an ordered achiever with no deleter in between
    for i in r.order:
        for lit in r.steps[i].pos_pre:
            achievers = [j for j in r.order if j != i and lit in adds[j] and precedes(j, i)]
            if lit in p.init:
                achievers.append(m.source)
            deleters = [k for k in r.order if k != i and lit in dels[k]]
            ok = any(
                all(k == j or precedes(k, j) or precedes(i, k) for k in deleters) for j in achievers
            )
            if not ok:
                out.append(f"{lit} needed by {r.steps[i].head} has no protected achiever")

    # an action's start conditions stay true, and its negated ones false, while it runs
    own = _descendants(s)
    for k, a in enumerate(m.actions):
        if a.start == a.end:
            continue
        st = r.steps[a.start]
        inside = [e for e in r.order if t[a.start] < t[e] < t[a.end] and e not in own[k]]
        for e in inside:
            for lit in st.pos_pre:
                if lit in dels[e]:
                    out.append(f"{r.steps[e].head} deletes {lit} while {st.head} runs")
            for pattern in st.neg_pre:
                for f in adds[e]:
                    if _matches(pattern, f):
                        out.append(f"{r.steps[e].head} adds {f} while {st.head} forbids it")

    # capacity: holders of one instance never overlap
    for inst, acts in s.holders().items():
        for x, y in itertools.combinations(acts, 2):
            ax, ay = m.actions[x], m.actions[y]
            if t[ay.start] < t[ax.end] and t[ax.start] < t[ay.end]:
                out.append(f"{inst} is held by {ax.label} and {ay.label} at once")
    return out


def check_schedule(s: Schedule, plan: TOPlan, p: Problem) -> Realization:
    r = realize(s, plan, p)
    found = violations(r, p)
    if found:
        raise ScheduleViolation(found)
    return r
