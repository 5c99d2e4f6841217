"""Simple temporal networks built from a schedule, and their consistency check."""

from __future__ import annotations

import json
from dataclasses import dataclass

import networkx as nx

from .scheduler import Schedule


@dataclass(frozen=True)
class STNEdge:
    u: int
    v: int
    lo: int
    hi: int | None  # None is unbounded

    def __str__(self) -> str:
        return f"{self.u}->{self.v} [{self.lo}, {'inf' if self.hi is None else self.hi}]"


@dataclass(frozen=True)
class STN:
    nodes: tuple[str, ...]
    edges: tuple[STNEdge, ...]

    def distance_edges(self) -> list[tuple[int, int, int]]:
        """Distance-graph encoding: t(v) - t(u) <= hi and t(u) - t(v) <= -lo."""
        out = []
        for e in self.edges:
            if e.hi is not None:
                out.append((e.u, e.v, e.hi))
            out.append((e.v, e.u, -e.lo))
        return out

    def precedence_graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.nodes)))
        g.add_edges_from((e.u, e.v) for e in self.edges if e.lo >= 0)
        return g

    def to_json(self) -> str:
        doc = {
            "nodes": list(self.nodes),
            "edges": [{"from": e.u, "to": e.v, "lb": e.lo, "ub": e.hi} for e in self.edges],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> STN:
        doc = json.loads(text)
        edges = tuple(STNEdge(e["from"], e["to"], e["lb"], e["ub"]) for e in doc["edges"])
        return cls(tuple(doc["nodes"]), edges)


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    cycle: tuple[int, ...] = ()  # nodes of a negative cycle, closing back to the first
    weight: int = 0

    def __bool__(self) -> bool:
        return self.consistent


def to_stn(s: Schedule) -> STN:
    m = s.model
    nodes = tuple(s.event_label(e) for e in range(len(m.events)))
    if not m.actions:
        return STN(nodes, (STNEdge(m.source, m.sink, 0, 0),))
    g = nx.DiGraph()
    g.add_nodes_from(range(len(m.events)))
    g.add_edges_from(m.precedence)
    durations = {}
    for a in m.actions:
        if a.start != a.end:
            hi = a.d_max
            durations[(a.start, a.end)] = (a.d_min, hi)
            g.add_edge(a.start, a.end)
    for x, y in s.sequencing():
        g.add_edge(m.actions[x].end, m.actions[y].start)
    reduced = nx.transitive_reduction(g)
    edges = set(reduced.edges()) | set(durations)
    out = []
    for u, v in sorted(edges):
        lo, hi = durations.get((u, v), (0, None))
        out.append(STNEdge(u, v, lo, hi))
    return STN(nodes, tuple(out))


def check_stn(stn: STN) -> Verdict:
    """Bellman-Ford over the distance graph from a virtual root."""
    n = len(stn.nodes)
    edges = stn.distance_edges()
    dist = [0] * n
    pred = [-1] * n
    last = -1
    for _ in range(n):
        last = -1
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                pred[v] = u
                last = v
        if last == -1:
            return Verdict(True)
    # walk back n steps to land on the cycle, then collect it
    x = last
    for _ in range(n):
        x = pred[x]
    cycle = [x]
    y = pred[x]
    while y != x:
        cycle.append(y)
        y = pred[y]
    cycle.reverse()
    weights = {}
    for u, v, w in edges:
        weights[(u, v)] = min(w, weights.get((u, v), w))
    total = sum(weights[(cycle[k], cycle[(k + 1) % len(cycle)])] for k in range(len(cycle)))
    return Verdict(False, tuple(cycle), total)
