"""Causal enablers over an expanded total-order plan, and resource extraction.

Matrix rows are the plan steps shifted by one: row 0 is the virtual
``init()`` and the last row the virtual ``end()``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import networkx as nx

from .errors import InconsistentMatrix
from .model import Problem, Term, Wildcard
from .planner import PlanStep, TOPlan
from .unify import match


@dataclass(frozen=True)
class ResourceType:
    name: str
    pattern: Term
    instances: tuple[Term, ...]

    @property
    def atoms(self) -> tuple:
        """The values that identify each instance, e.g. ``a1`` for ``agent(a1)``."""
        out = []
        for inst in self.instances:
            vals = [v for p, v in zip(self.pattern.args, inst.args) if isinstance(p, Wildcard)]
            out.append(vals[0] if len(vals) == 1 else Term("", tuple(vals)))
        return tuple(out)


@dataclass(frozen=True)
class ResourceCatalog:
    types: tuple[ResourceType, ...] = ()
    demands: dict = field(default_factory=dict)  # matrix row -> [type name per resource parameter]
    groups: dict = field(default_factory=dict)  # matrix row -> row of the mapping parent (itself if top level)

    def type_of(self, value) -> str | None:
        for t in self.types:
            if value in t.atoms:
                return t.name
        return None

    def is_resource(self, value) -> bool:
        return self.type_of(value) is not None

    def get(self, name: str) -> ResourceType | None:
        return next((t for t in self.types if t.name == name), None)

    def to_text(self) -> str:
        lines = ["Resources:"]
        lines += [f"[{k}] {t.name}-{len(t.instances)}" for k, t in enumerate(self.types)]
        lines.append("Resources list:")
        lines += [f"[{k}] {t.name}-[{','.join(i.compact() for i in t.instances)}]" for k, t in enumerate(self.types)]
        lines.append("Resources required by action:")
        buckets: dict[int, list[str]] = {}
        for row in sorted(self.demands):
            if self.demands[row]:
                buckets.setdefault(self.groups.get(row, row), []).extend(self.demands[row])
        for row, types in buckets.items():
            count = sum(1 for r in self.demands if self.demands[r] and self.groups.get(r, r) == row)
            lines.append(f"[{row}] {count}-[{','.join(sorted(set(types)))}]")
        return "\n".join(lines) + "\n"


def durative_pairs(plan: TOPlan) -> dict[int, int]:
    """Map each start step to its end step (plain steps map to themselves)."""
    out: dict[int, int] = {}
    open_starts: list[PlanStep] = []
    for s in plan:
        if s.kind == "plain":
            out[s.index] = s.index
        elif s.kind == "start":
            open_starts.append(s)
        else:
            base = s.action.base_name
            for k, st in enumerate(open_starts):
                if st.action.base_name == base and st.head.args == s.head.args:
                    out[st.index] = s.index
                    del open_starts[k]
                    break
    return out


def extract_resources(p: Problem, plan: TOPlan) -> ResourceCatalog:
    types = []
    for r in p.resources:
        instances = tuple(f for f in p.general_kb if match(r.pattern, f, {}) is not None)
        types.append(ResourceType(r.type_name, r.pattern, instances))
    cat = ResourceCatalog(tuple(types))
    demands: dict[int, list[str]] = {}
    groups: dict[int, int] = {}
    for s in plan:
        row = s.index + 1
        if s.kind == "end":
            continue  # counted once per durative action, on its start
        names = [cat.type_of(a) for a in s.head.args]
        demands[row] = [n for n in names if n is not None]
        groups[row] = row if s.origin is None else s.origin + 1
    return ResourceCatalog(cat.types, demands, groups)


def causal_link(j: PlanStep, i: PlanStep, cat: ResourceCatalog) -> Term | None:
    """A non-resource fluent through which step ``j`` enables step ``i``."""
    for added in j.adds:
        if any(cat.is_resource(a) for a in added.args):
            continue
        for pre in i.pos_pre:
            if match(pre, added, {}) is not None:
                return added
    for removed in j.dels:
        if any(cat.is_resource(a) for a in removed.args):
            continue
        for pre in i.neg_pre:
            if match(pre, removed, {}) is not None:
                return removed
    return None


def mapping_precedence(plan: TOPlan, p: Problem | None = None) -> set[tuple[int, int]]:
    """Forced (enabler, enabled) plan-index pairs inside each expanded mapping.

    The start precedes every mapped snap, mapped snaps keep their order,
    and the end follows all of them.
    """
    pairs = durative_pairs(plan)
    children: dict[int, list[int]] = {}
    for s in plan:
        if s.origin is not None:
            children.setdefault(s.origin, []).append(s.index)
    out: set[tuple[int, int]] = set()
    for start, kids in children.items():
        members = [start] + kids
        end = pairs.get(start)
        if end is not None and end != start:
            members.append(end)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                out.add((members[a], members[b]))
    return out


def is_enabler(plan: TOPlan, j: int, i: int, cat: ResourceCatalog) -> bool:
    """Whether plan step ``j`` enables plan step ``i`` (plan indices)."""
    if j >= i:
        return False
    if (j, i) in mapping_precedence(plan):
        return True
    return causal_link(plan[j], plan[i], cat) is not None


@dataclass(frozen=True)
class EnablerMatrix:
    labels: tuple[str, ...]
    cells: tuple[tuple[bool, ...], ...]  # cells[j][i]: row j enables row i

    @property
    def n(self) -> int:
        return len(self.labels)

    def enablers(self, i: int) -> list[int]:
        return [j for j in range(self.n) if self.cells[j][i]]

    def edges(self) -> list[tuple[int, int]]:
        return [(j, i) for j in range(self.n) for i in range(self.n) if self.cells[j][i]]

    def to_text(self) -> str:
        lines = []
        for i, label in enumerate(self.labels):
            listed = "[" + ",".join(map(str, self.enablers(i))) + "]"
            lines.append(f"[{i}] {label}{listed}" if i == 0 else f"[{i}] {label}, {listed}")
        return "\n".join(lines) + "\n"

    def to_json(self, cat: ResourceCatalog | None = None) -> str:
        doc: dict = {"labels": list(self.labels), "matrix": [[int(c) for c in row] for row in self.cells]}
        if cat is not None:
            doc["resources"] = [
                {"type": t.name, "instances": [str(x) for x in t.instances]} for t in cat.types
            ]
            doc["demands"] = {str(k): v for k, v in sorted(cat.demands.items())}
        return json.dumps(doc, indent=2) + "\n"

    def check(self) -> None:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        for j, i in self.edges():
            if j >= i:
                raise InconsistentMatrix(f"row {j} enables earlier row {i}")
            g.add_edge(j, i)
        end = self.n - 1
        reach = nx.ancestors(g, end) | {end}
        missing = [k for k in range(self.n) if k not in reach]
        if missing:
            raise InconsistentMatrix(f"no path to end from rows {missing}")


def find_enablers(plan: TOPlan, p: Problem | None, cat: ResourceCatalog) -> EnablerMatrix:
    n = len(plan) + 2
    cells = [[False] * n for _ in range(n)]
    forced = mapping_precedence(plan)
    for i in range(len(plan)):
        for j in range(i):
            if (j, i) in forced or causal_link(plan[j], plan[i], cat) is not None:
                cells[j + 1][i + 1] = True
    for k in range(1, n):
        cells[0][k] = True
        cells[k - 1][n - 1] = True
    labels = ("init()",) + tuple(str(s.head) for s in plan) + ("end()",)
    m = EnablerMatrix(labels, tuple(tuple(r) for r in cells))
    m.check()
    return m
