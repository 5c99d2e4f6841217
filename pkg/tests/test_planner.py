from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALL_FIXTURES, DATA, GOLDEN, cached_run
from mapplan.errors import LimitExceeded, MappingInapplicable, Unsolvable
from mapplan.model import Disequality, State, Term, Var
from mapplan.parser import load_kb, parse_kb
from mapplan.planner import (
    SearchLimits,
    abstraction_violations,
    applicable,
    apply_action,
    expand_mappings,
    goal_satisfied,
    iter_plans,
    TOPlan,
    plan_hl,
    simulate,
)
from mapplan.unify import any_match, match, substitute

ROOMS = """
room(r1). room(r2). room(r3).
door(r1, r2). door(r2, r3).
init_state([in(r1)]).
goal_state([in(r3)]).
action(walk(A, B), [in(A)], [], [door(A, B)], [del(in(A)), add(in(B))]).
"""


def rooms(goal: str = "in(r3)", extra: str = "") -> object:
    return parse_kb(ROOMS.replace("in(r3)])", goal + "])") + extra).problem


def naive_applicable(a, s: State, kb) -> set[Term]:
    """Heads of every ground instance, by brute force over grounding facts."""
    facts = [[f for f in kb if f.family == item.family] if isinstance(item, Term) else [None] for item in a.grounding]
    heads = set()
    for combo in itertools.product(*facts):
        b: dict | None = {}
        for item, f in zip(a.grounding, combo):
            if isinstance(item, Disequality):
                continue
            b = match(item, f, b)
            if b is None:
                break
        if b is None:
            continue
        if any(b[d.left.name] == b[d.right.name] for d in a.grounding if isinstance(d, Disequality)):
            continue
        if not all(any_match(substitute(p, b), s) for p in a.pos_pre):
            continue
        if any(any_match(substitute(n, b), s) for n in a.neg_pre):
            continue
        heads.add(substitute(a.head, b))
    return heads


def _fixed_pos(a) -> bool:
    # the naive oracle treats positive literals independently, which is exact
    # only when every variable they share is bound by the grounding list
    bound = set(a.action_variables)
    seen: set[str] = set()
    for p in a.pos_pre:
        free = {v.name for v in _vars(p)} - bound
        if free & seen:
            return False
        seen |= free
    return True


def _vars(t):
    if isinstance(t, Var):
        yield t
    elif isinstance(t, Term):
        for x in t.args:
            yield from _vars(x)


@pytest.mark.parametrize("names", ALL_FIXTURES[:2] + ALL_FIXTURES[3:])
def test_applicable_matches_naive_oracle(names):
    run = cached_run(*names)
    p = run.hl_problem
    state = p.init
    states = [state]
    for step in run.hl:
        state = apply_action(step.action, step.bindings, state)
        states.append(state)
    checked = [a for a in p.hl_actions if _fixed_pos(a)]
    assert len(checked) >= len(p.hl_actions) // 2
    for s in states:
        for a in checked:
            got = {substitute(a.head, b) for b in applicable(a, s, p)}
            assert got == naive_applicable(a, s, p.general_kb), a.name


def test_blocks_plans_match_golden(blocks):
    assert blocks.hl.to_text() == (GOLDEN / "blocks_hl_plan.txt").read_text()
    assert blocks.full.to_text() == (GOLDEN / "blocks_plan.txt").read_text()


@pytest.mark.parametrize("names", ALL_FIXTURES)
def test_plans_reach_goals(names):
    run = cached_run(*names)
    assert goal_satisfied(simulate(run.hl, run.hl_problem), run.hl_problem.goal)
    assert goal_satisfied(simulate(run.full, run.ll_problem), run.ll_problem.goal)
    assert abstraction_violations(run.hl, run.hl_problem, run.full, run.ll_problem) == []


def test_expansion_layout(blocks):
    full = blocks.full
    assert [s.level for s in full[:10]] == ["high"] + ["low"] * 8 + ["high"]
    assert all(s.origin == 0 for s in full[1:9])
    assert json.loads(full.to_json())[1] == {"index": 1, "head": "move_arm_start(a1, 1, 1)", "level": "low", "origin": 0}


def test_rooms_plan():
    plan = plan_hl(rooms())
    assert plan.to_text() == "[0] walk(r1, r2)\n[1] walk(r2, r3)\n"


def test_goal_already_true_gives_empty_plan():
    assert len(plan_hl(rooms("in(r1)"))) == 0


def test_goal_wildcards():
    assert len(plan_hl(rooms("in(_)"))) == 0


def test_unsolvable():
    with pytest.raises(Unsolvable):
        plan_hl(rooms("in(r4)", "room(r4)."))


def test_depth_limit():
    with pytest.raises(LimitExceeded) as exc:
        plan_hl(rooms(), SearchLimits(max_depth=1))
    assert "depth" in exc.value.reason


def test_expansion_limit():
    p = load_kb(DATA / "blocks_hl.pl")
    with pytest.raises(LimitExceeded) as exc:
        plan_hl(p, SearchLimits(max_expansions=2))
    assert "expansions" in exc.value.reason


def test_bad_limits():
    with pytest.raises(ValueError):
        SearchLimits(max_depth=0)
    with pytest.raises(ValueError):
        SearchLimits(max_expansions=0)


def test_without_visited_pruning():
    plan = plan_hl(rooms(), SearchLimits(max_depth=4, visited_pruning=False))
    assert goal_satisfied(simulate(plan, rooms()), rooms().goal)


def test_iter_plans_yields_distinct_valid_plans():
    p = rooms(extra="door(r1, r3).")
    plans = list(iter_plans(p))
    assert len({tuple(map(str, x.heads)) for x in plans}) == len(plans) >= 2
    for x in plans:
        assert goal_satisfied(simulate(x, p), p.goal)


def test_action_order_hook():
    p = rooms(extra="door(r1, r3).")
    plan = plan_hl(p, order=lambda acts, state: reversed(list(acts)))
    assert goal_satisfied(simulate(plan, p), p.goal)


def test_mapping_inapplicable():
    hl = load_kb(DATA / "blocks_hl.pl")
    text = (DATA / "blocks_ll.pl").read_text().replace("    grip_start(Agent),\n", "    release_start(Agent),\n", 1)
    ll = parse_kb(text).problem
    with pytest.raises(MappingInapplicable) as exc:
        expand_mappings(plan_hl(hl), ll)
    assert exc.value.head.functor == "release_start"


def test_simulate_rejects_broken_plan(blocks):
    broken = TOPlan(blocks.full.steps[1:])
    with pytest.raises(MappingInapplicable):
        simulate(broken, blocks.ll_problem)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.data())
def test_chain_plans_are_shortest_under_dfs(n, data):
    # a line of rooms has exactly one simple route
    text = "".join(f"room(r{i}).\n" for i in range(n))
    text += "".join(f"door(r{i}, r{i + 1}).\n" for i in range(n - 1))
    target = data.draw(st.integers(0, n - 1))
    text += f"init_state([in(r0)]).\ngoal_state([in(r{target})]).\n"
    text += "action(walk(A, B), [in(A)], [], [door(A, B)], [del(in(A)), add(in(B))]).\n"
    plan = plan_hl(parse_kb(text).problem)
    assert len(plan) == target
