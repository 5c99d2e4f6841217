"""Behaviour trees from a consistent STN, with BehaviorTree.CPP style XML.

Each low-level durative action becomes one leaf. A leaf with several
ordering parents hangs under the parent that finishes last and is
preceded by a ``WaitFor`` node on the others.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import networkx as nx

from .errors import InconsistentInput
from .model import Problem, Term, Var
from .parser import parse_term
from .scheduler import Schedule, reassign
from .stn import STN, check_stn

ACTION, SEQUENCE, PARALLEL, CONDITION = "action", "sequence", "parallel", "condition"


@dataclass(frozen=True)
class BTNode:
    kind: str
    children: tuple[BTNode, ...] = ()
    payload: Term | None = None  # ground low-level head, action leaves only
    name: str = ""  # leaf id; condition nodes list the ids they wait for in ``waits``
    params: tuple[str, ...] = ()  # attribute name per head argument
    waits: tuple[str, ...] = ()

    def leaves(self) -> list[BTNode]:
        if self.kind == ACTION:
            return [self]
        return [x for c in self.children for x in c.leaves()]


def _param_names(head: Term, p: Problem | None) -> tuple[str, ...]:
    schema = None
    if p is not None:
        a = p.action(head.functor + "_start") or p.action(head.functor)
        schema = a.head if a is not None else None
    names: list[str] = []
    for i in range(head.arity):
        arg = schema.args[i] if schema is not None and i < schema.arity else None
        name = arg.name.lower() if isinstance(arg, Var) else f"arg{i}"
        if name in names or name == "name":
            name = f"{name}{i}"
        names.append(name)
    return tuple(names)


def leaf_order(stn: STN, s: Schedule) -> tuple[list[int], nx.DiGraph]:
    """Low-level actions and the reduced 'ends before starts' relation among them."""
    m = s.model
    leaves = [k for k, a in enumerate(m.actions) if a.level == "low"]
    reach = stn.precedence_graph()
    g = nx.DiGraph()
    g.add_nodes_from(leaves)
    for u in leaves:
        after = nx.descendants(reach, m.actions[u].end) | {m.actions[u].end}
        for v in leaves:
            if v != u and m.actions[v].start in after:
                g.add_edge(u, v)
    return leaves, nx.transitive_reduction(g)


def stn_to_bt(stn: STN, s: Schedule, p: Problem | None = None) -> BTNode:
    if not check_stn(stn):
        raise InconsistentInput("the STN has a negative cycle")
    m = s.model
    leaves, g = leaf_order(stn, s)
    if not leaves:
        return BTNode(SEQUENCE)

    def uid(k: int) -> str:
        return f"{m.heads[k].functor}_{k}" if m.heads else f"action_{k}"

    def finish(k: int) -> tuple[int, int]:
        return (s.times[m.actions[k].end], k)

    owner = {v: max(g.predecessors(v), key=finish) for v in leaves if g.in_degree(v)}
    owned: dict[int, list[int]] = {}
    for v in leaves:
        if v in owner:
            owned.setdefault(owner[v], []).append(v)

    def leaf(k: int) -> BTNode:
        head = m.heads[k] if m.heads else Term(m.actions[k].label)
        head = reassign(head, s.resources(k))
        return BTNode(ACTION, payload=head, name=uid(k), params=_param_names(head, p))

    def chain(k: int) -> list[BTNode]:
        out: list[BTNode] = []
        if g.in_degree(k) > 1:
            others = sorted((j for j in g.predecessors(k) if j != owner[k]), key=finish)
            out.append(BTNode(CONDITION, name=f"wait_{k}", waits=tuple(uid(j) for j in others)))
        out.append(leaf(k))
        kids = owned.get(k, [])
        if len(kids) == 1:
            out += chain(kids[0])
        elif kids:
            out.append(BTNode(PARALLEL, tuple(BTNode(SEQUENCE, tuple(chain(c))) for c in kids)))
        return out

    roots = [v for v in leaves if v not in owner]
    if len(roots) == 1:
        return BTNode(SEQUENCE, tuple(chain(roots[0])))
    return BTNode(PARALLEL, tuple(BTNode(SEQUENCE, tuple(chain(r))) for r in roots))


# -- XML --------------------------------------------------------------------------------


def _element(node: BTNode) -> ET.Element:
    if node.kind == SEQUENCE:
        el = ET.Element("Sequence")
    elif node.kind == PARALLEL:
        el = ET.Element("Parallel", {"success_count": "-1", "failure_count": "1"})
    elif node.kind == CONDITION:
        return ET.Element("WaitFor", {"name": node.name, "actions": ";".join(node.waits)})
    else:
        attrs = {"name": node.name}
        attrs.update({k: str(v) for k, v in zip(node.params, node.payload.args)})
        return ET.Element(node.payload.functor, attrs)
    for c in node.children:
        el.append(_element(c))
    return el


def emit_xml(root: BTNode) -> str:
    doc = ET.Element("root", {"BTCPP_format": "4", "main_tree_to_execute": "MainTree"})
    tree = ET.SubElement(doc, "BehaviorTree", {"ID": "MainTree"})
    tree.append(_element(root))
    ET.indent(doc, space="  ")
    return ET.tostring(doc, encoding="unicode") + "\n"


def _value(text: str):
    return int(text) if re.fullmatch(r"-?\d+", text) else parse_term(text)


def _node(el: ET.Element) -> BTNode:
    if el.tag == "Sequence":
        return BTNode(SEQUENCE, tuple(_node(c) for c in el))
    if el.tag == "Parallel":
        return BTNode(PARALLEL, tuple(_node(c) for c in el))
    if el.tag == "WaitFor":
        waits = el.get("actions", "")
        return BTNode(CONDITION, name=el.get("name", ""), waits=tuple(waits.split(";")) if waits else ())
    params = tuple(k for k in el.attrib if k != "name")
    head = Term(el.tag, tuple(_value(el.attrib[k]) for k in params))
    return BTNode(ACTION, payload=head, name=el.get("name", ""), params=params)


def parse_xml(text: str) -> BTNode:
    doc = ET.fromstring(text)
    tree = doc.find("BehaviorTree")
    if tree is None or len(tree) != 1:
        raise ValueError("expected one BehaviorTree with a single root node")
    return _node(tree[0])


# -- tick simulation -----------------------------------------------------------------------


def tick_trace(root: BTNode, max_ticks: int = 10_000) -> list[tuple[str, str]]:
    """Run the tree with one-tick actions; return ('start'|'end', leaf id) events in order."""
    events: list[tuple[str, str]] = []
    done: set[str] = set()
    started: set[str] = set()
    cursor: dict[int, int] = {}
    finished: set[int] = set()

    def tick(n: BTNode) -> bool:
        key = id(n)
        if key in finished:
            return True
        if n.kind == ACTION:
            if n.name in started:
                done.add(n.name)
                events.append(("end", n.name))
                finished.add(key)
                return True
            started.add(n.name)
            events.append(("start", n.name))
            return False
        if n.kind == CONDITION:
            ok = all(w in done for w in n.waits)
            if ok:
                finished.add(key)
            return ok
        if n.kind == SEQUENCE:
            i = cursor.get(key, 0)
            while i < len(n.children) and tick(n.children[i]):
                i += 1
            cursor[key] = i
            ok = i == len(n.children)
        else:
            results = [tick(c) for c in n.children]
            ok = all(results)
        if ok:
            finished.add(key)
        return ok

    for _ in range(max_ticks):
        if tick(root):
            return events
    raise InconsistentInput("the tree does not terminate")
