"""Resource allocation and makespan minimization over a partial order.

Time points are the matrix rows (snap events); ``t(v) - t(u) >= w`` edges
encode precedence and durations. The search is a branch and bound over
resource assignments followed by disjunctive orderings of actions that
hold the same resource instance. Bounds come from longest paths.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field

from .enablers import EnablerMatrix, ResourceCatalog, durative_pairs
from .errors import Infeasible, SolveTimeout, UnsatisfiableSlot
from .model import Problem, Term
from .planner import TOPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelAction:
    label: str
    start: int  # event index
    end: int  # event index, equal to start for instantaneous actions
    d_min: int = 1
    d_max: int | None = 1  # None is unbounded
    envelope: bool = False  # duration is the span of its mapped children
    level: str = "high"
    parent: int | None = None


@dataclass(frozen=True)
class Slot:
    action: int
    position: int  # head argument position
    rtype: str
    group: int
    holds: bool = True  # False when the slot is tied to the parent's slot


@dataclass(frozen=True)
class ScheduleModel:
    events: tuple[str, ...]  # 0 is the source, the last one the sink
    actions: tuple[ModelAction, ...]
    precedence: tuple[tuple[int, int], ...]  # event u before event v
    slots: tuple[Slot, ...] = ()
    candidates: tuple[tuple, ...] = ()  # per group, instance values in declaration order
    heads: tuple = ()  # per action, the durative head (when built from a plan)
    snap_heads: tuple = ()  # per event, the snap head (None for source and sink)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return len(self.events) - 1

    @property
    def n_groups(self) -> int:
        return len(self.candidates)

    def base_edges(self) -> list[tuple[int, int, int]]:
        """Difference edges (u, v, w) meaning t(v) >= t(u) + w."""
        edges = []
        for u in range(1, self.sink):
            edges.append((self.source, u, 0))
            edges.append((u, self.sink, 0))
        if self.sink > 0:
            edges.append((self.source, self.sink, 0))
        edges += [(u, v, 0) for u, v in self.precedence]
        for a in self.actions:
            if a.start == a.end:
                continue
            edges.append((a.start, a.end, a.d_min))
            if not a.envelope:
                edges.append((a.end, a.start, -a.d_min))
            elif a.d_max is not None:
                edges.append((a.end, a.start, -a.d_max))
        return edges


@dataclass(frozen=True)
class Schedule:
    model: ScheduleModel
    assignment: tuple  # instance value per group
    times: tuple[int, ...]  # per event
    optimal: bool = True

    @property
    def makespan(self) -> int:
        return self.times[self.model.sink] if self.times else 0

    def start(self, a: int) -> int:
        return self.times[self.model.actions[a].start]

    def duration(self, a: int) -> int:
        act = self.model.actions[a]
        return self.times[act.end] - self.times[act.start]

    def resources(self, a: int) -> dict[int, object]:
        """Assigned instance per head position of action ``a``."""
        return {s.position: self.assignment[s.group] for s in self.model.slots if s.action == a}

    def event_action(self) -> dict[int, int]:
        out = {}
        for k, a in enumerate(self.model.actions):
            out[a.start] = k
            out[a.end] = k
        return out

    def event_label(self, e: int) -> str:
        """Snap label with resource arguments replaced by the assigned instances."""
        m = self.model
        if e == m.source:
            return "source"
        if e == m.sink:
            return "sink"
        head = m.snap_heads[e] if m.snap_heads else None
        if not isinstance(head, Term):
            return m.events[e]
        return str(reassign(head, self.resources(self.event_action()[e])))

    def holders(self) -> dict[object, list[int]]:
        out: dict[object, list[int]] = {}
        for s in self.model.slots:
            if s.holds:
                holders = out.setdefault(self.assignment[s.group], [])
                if s.action not in holders:
                    holders.append(s.action)
        for inst in out:
            out[inst].sort(key=lambda a: (self.start(a), a))
        return out

    def sequencing(self) -> list[tuple[int, int]]:
        """Consecutive holders of each instance, as (earlier, later) action pairs."""
        out = []
        for acts in self.holders().values():
            out += list(zip(acts, acts[1:]))
        return out

    def to_json(self) -> str:
        rows = []
        for k, a in enumerate(self.model.actions):
            rows.append(
                {
                    "action": relabel(self, k),
                    "level": a.level,
                    "start": self.start(k),
                    "duration": self.duration(k),
                    "resources": [str(v) for _, v in sorted(self.resources(k).items())],
                }
            )
        doc = {"makespan": self.makespan, "optimal": self.optimal, "actions": rows}
        return json.dumps(doc, indent=2) + "\n"


def relabel(s: Schedule, k: int) -> str:
    """Action label with its resource arguments replaced by the assigned instances."""
    head = s.model.heads[k] if s.model.heads else None
    if not isinstance(head, Term):
        return s.model.actions[k].label
    return str(reassign(head, s.resources(k)))


def reassign(head: Term, by_position: dict[int, object]) -> Term:
    args = list(head.args)
    for pos, value in by_position.items():
        args[pos] = value
    return Term(head.functor, tuple(args))


# -- model construction ---------------------------------------------------------------


def build_model(plan: TOPlan, C: EnablerMatrix, cat: ResourceCatalog, p: Problem | None = None) -> ScheduleModel:
    C.check()
    pairs = durative_pairs(plan)
    start_to_action: dict[int, int] = {}
    actions: list[ModelAction] = []
    heads: list[Term] = []
    has_children = {s.origin for s in plan if s.origin is not None}
    for st in sorted(pairs):
        step = plan[st]
        base = step.action.base_name
        explicit = p.duration(base) if p is not None else None
        envelope = st in has_children and pairs[st] != st
        if explicit is not None:
            lo, hi = explicit
        elif pairs[st] == st:
            lo, hi = 0, 0
        elif envelope:
            lo, hi = 0, None
        else:
            lo, hi = 1, 1
        parent = start_to_action.get(step.origin) if step.origin is not None else None
        start_to_action[st] = len(actions)
        head = Term(base, step.head.args)
        heads.append(head)
        actions.append(ModelAction(str(head), st + 1, pairs[st] + 1, lo, hi, envelope, step.level, parent))

    # one slot per resource-typed head argument; children share their parent's group
    slots: list[Slot] = []
    group_type: list[str] = []
    for k, head in enumerate(heads):
        parent = actions[k].parent
        for pos, value in enumerate(head.args):
            rtype = cat.type_of(value)
            if rtype is None:
                continue
            group = None
            if parent is not None:
                for ps in slots:
                    if ps.action == parent and ps.rtype == rtype and heads[parent].args[ps.position] == value:
                        group = ps.group
                        break
            if group is None:
                group = len(group_type)
                group_type.append(rtype)
                slots.append(Slot(k, pos, rtype, group, True))
            else:
                slots.append(Slot(k, pos, rtype, group, False))
    candidates = []
    for g, rtype in enumerate(group_type):
        values = cat.get(rtype).atoms
        if not values:
            owner = next(s.action for s in slots if s.group == g)
            raise UnsatisfiableSlot(actions[owner].label, rtype)
        candidates.append(tuple(values))
    return ScheduleModel(
        events=C.labels,
        actions=tuple(actions),
        precedence=tuple(C.edges()),
        slots=tuple(slots),
        candidates=tuple(candidates),
        heads=tuple(heads),
        snap_heads=(None,) + tuple(step.head for step in plan) + (None,),
    )


# -- longest paths -------------------------------------------------------------------------


def longest_path(n: int, edges: list[tuple[int, int, int]], source: int = 0) -> list[int] | None:
    """Earliest times from ``source``; None if the constraints are contradictory."""
    NEG = float("-inf")
    dist: list = [NEG] * n
    dist[source] = 0
    for _ in range(n):
        changed = False
        for u, v, w in edges:
            du = dist[u]
            if du != NEG and du + w > dist[v]:
                dist[v] = du + w
                changed = True
        if not changed:
            return [0 if d == NEG else int(d) for d in dist]
    return None


# -- branch and bound -------------------------------------------------------------------------


@dataclass
class _Search:
    model: ScheduleModel
    deadline: float | None
    best: Schedule | None = None
    nodes: int = 0
    timed_out: bool = False
    base: list = field(default_factory=list)

    def expired(self) -> bool:
        if self.deadline is not None and time.monotonic() > self.deadline:
            self.timed_out = True
        return self.timed_out

    def branch(self, assignment: tuple, holders: list[list[int]], extra: list[tuple[int, int, int]], bound: int = 0) -> None:
        if self.expired():
            return
        self.nodes += 1
        m = self.model
        if self.best is not None and bound >= self.best.makespan:
            return
        times = longest_path(len(m.events), self.base + extra)
        if times is None:
            return
        if self.best is not None and times[m.sink] >= self.best.makespan:
            return
        for acts in holders:
            for x, y in itertools.combinations(acts, 2):
                ax, ay = m.actions[x], m.actions[y]
                if times[ax.start] < times[ay.end] and times[ay.start] < times[ax.end]:
                    self.branch(assignment, holders, extra + [(ax.end, ay.start, 0)], bound)
                    self.branch(assignment, holders, extra + [(ay.end, ax.start, 0)], bound)
                    return
        self.best = Schedule(m, assignment, tuple(times))


def _assignments(m: ScheduleModel):
    # slots of one action with the same type must use distinct instances
    clashes = set()
    by_action: dict[int, list[Slot]] = {}
    for s in m.slots:
        by_action.setdefault(s.action, []).append(s)
    for slots in by_action.values():
        for a, b in itertools.combinations(slots, 2):
            if a.rtype == b.rtype and a.group != b.group:
                clashes.add((min(a.group, b.group), max(a.group, b.group)))
    earlier: dict[int, list[int]] = {}
    for a, b in clashes:
        earlier.setdefault(b, []).append(a)
    # instances with the same candidate list are interchangeable, so only the
    # lexicographically first member of each relabelling class is generated
    n = len(m.candidates)
    combo: list = [None] * n

    def rec(g: int, used: dict[tuple, int]):
        if g == n:
            yield tuple(combo)
            return
        cands = m.candidates[g]
        top = used.get(cands, 0)
        for i in range(min(len(cands), top + 1)):
            combo[g] = cands[i]
            if any(combo[h] == combo[g] for h in earlier.get(g, ())):
                continue
            yield from rec(g + 1, {**used, cands: max(top, i + 1)})

    yield from rec(0, {})


def _holders(m: ScheduleModel, assignment: tuple) -> list[list[int]]:
    out: dict[object, list[int]] = {}
    for s in m.slots:
        if s.holds:
            acts = out.setdefault(assignment[s.group], [])
            if s.action not in acts:
                acts.append(s.action)
    return [sorted(v) for v in out.values() if len(v) > 1]


def solve(m: ScheduleModel, timeout: float | None = None) -> Schedule:
    """Minimum-makespan schedule; ties keep the first one found."""
    search = _Search(m, None if timeout is None else time.monotonic() + timeout)
    search.base = m.base_edges()
    n = len(m.events)
    free = longest_path(n, search.base)
    if free is None:
        raise Infeasible("precedence and duration constraints are contradictory")
    lower = free[m.sink]
    spans = {}
    for k, a in enumerate(m.actions):
        dist = longest_path(n, search.base, a.start)
        spans[k] = 0 if dist is None else max(0, dist[a.end])
    any_assignment = False
    for assignment in _assignments(m):
        any_assignment = True
        holders = _holders(m, assignment)
        bound = max([lower] + [sum(spans[a] for a in acts) for acts in holders])
        if search.best is not None and bound >= search.best.makespan:
            continue
        search.branch(assignment, holders, [], bound)
        if search.timed_out or (search.best is not None and search.best.makespan == lower):
            break
    if not any_assignment:
        raise Infeasible("no assignment gives distinct instances to every action")
    if search.best is None:
        if search.timed_out:
            raise SolveTimeout("no schedule found before the time limit")
        raise Infeasible("every resource ordering is contradictory")
    log.debug("solved in %d nodes, makespan %d", search.nodes, search.best.makespan)
    if search.timed_out:
        return Schedule(m, search.best.assignment, search.best.times, optimal=False)
    return search.best
