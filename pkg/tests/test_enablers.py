from __future__ import annotations

import json

import pytest

from conftest import ALL_FIXTURES, GOLDEN, cached_run
from mapplan.enablers import EnablerMatrix, causal_link, durative_pairs, is_enabler, mapping_precedence
from mapplan.errors import InconsistentMatrix
from mapplan.unify import match


def oracle_edges(run) -> set[tuple[int, int]]:
    """Enabler pairs (matrix rows) recomputed from the definitions."""
    plan, cat = run.full, run.catalog
    resource_atoms = {x for t in cat.types for x in t.atoms}
    n = len(plan)
    edges = {(0, k) for k in range(1, n + 2)} | {(k, n + 1) for k in range(n + 1)}

    def plain(f) -> bool:
        return not any(a in resource_atoms for a in f.args)

    for i, si in enumerate(plan):
        for j in range(i):
            sj = plan[j]
            adds = any(plain(f) and match(p, f, {}) is not None for f in sj.adds for p in si.pos_pre)
            dels = any(plain(f) and match(p, f, {}) is not None for f in sj.dels for p in si.neg_pre)
            if adds or dels:
                edges.add((j + 1, i + 1))
    # members of one expansion keep their order: start, children, end
    for s in plan:
        if s.origin is None:
            continue
        start = plan[s.origin]
        end = next(
            e for e in plan
            if e.index > start.index and e.kind == "end" and e.action.base_name == start.action.base_name and e.head.args == start.head.args
        )
        edges |= {(start.index + 1, s.index + 1), (s.index + 1, end.index + 1), (start.index + 1, end.index + 1)}
        for t in plan:
            if t.origin == s.origin and t.index > s.index:
                edges.add((s.index + 1, t.index + 1))
    return edges


@pytest.mark.parametrize("names", ALL_FIXTURES)
def test_matrix_matches_oracle(names):
    run = cached_run(*names)
    assert set(run.matrix.edges()) == oracle_edges(run)


def test_blocks_listing(blocks):
    assert blocks.matrix.to_text() == (GOLDEN / "blocks_enablers.txt").read_text()


def test_two_moves_resources(two_agents):
    text = two_agents.catalog.to_text()
    assert text.startswith((GOLDEN / "two_moves_resources_head.txt").read_text())
    assert text.endswith("Resources required by action:\n[1] 5-[agent]\n[11] 5-[agent]\n")


def test_two_moves_differs_from_listing_only_on_resource_links(two_agents):
    ours = two_agents.matrix.to_text().splitlines()
    theirs = (GOLDEN / "two_moves_enablers_listing.txt").read_text().splitlines()
    assert len(ours) == len(theirs) == 22
    differing = [k for k, (a, b) in enumerate(zip(ours, theirs)) if a != b]
    assert differing == [11, 20]
    # the listing links rows 10 and 11 through available(a1), a resource fluent
    assert theirs[11].endswith("[0,10]") and ours[11].endswith("[0]")
    assert theirs[20].replace("10,", "") == ours[20]
    step10, step11 = two_agents.full[9], two_agents.full[10]
    linked = [f for f in step10.adds if f in step11.pos_pre]
    assert [str(f) for f in linked] == ["available(a1)"]
    assert causal_link(step10, step11, two_agents.catalog) is None


def test_virtual_rows(blocks):
    C = blocks.matrix
    n = C.n
    assert C.labels[0] == "init()" and C.labels[-1] == "end()"
    assert C.enablers(0) == []
    assert all(0 in C.enablers(k) for k in range(1, n))
    assert C.enablers(n - 1) == list(range(n - 1))


def test_is_enabler_agrees_with_matrix(two_agents):
    plan, cat, C = two_agents.full, two_agents.catalog, two_agents.matrix
    for i in range(len(plan)):
        for j in range(len(plan)):
            assert is_enabler(plan, j, i, cat) == C.cells[j + 1][i + 1]


def test_durative_pairs(blocks):
    pairs = durative_pairs(blocks.full)
    assert pairs[0] == 9 and pairs[1] == 2 and pairs[10] == 19
    assert len(pairs) == len(blocks.full) // 2


def test_mapping_precedence_is_a_chain(blocks):
    forced = mapping_precedence(blocks.full)
    members = [0] + list(range(1, 9)) + [9]
    assert {(a, b) for a in members for b in members if a < b} <= forced


def test_json_export(two_agents):
    doc = json.loads(two_agents.matrix.to_json(two_agents.catalog))
    assert doc["labels"][0] == "init()" and len(doc["matrix"]) == 22
    assert doc["resources"] == [{"type": "agent", "instances": ["agent(a1)", "agent(a2)"]}]
    assert doc["demands"]["1"] == ["agent"]


def test_check_rejects_backward_edge():
    cells = ((False, True, True), (False, False, True), (False, True, False))
    with pytest.raises(InconsistentMatrix):
        EnablerMatrix(("init()", "a", "end()"), cells).check()


def test_check_rejects_dangling_row():
    cells = ((False, True, False, True), (False, False, False, False), (False, False, False, True), (False,) * 4)
    with pytest.raises(InconsistentMatrix):
        EnablerMatrix(("init()", "a", "b", "end()"), cells).check()


def test_second_move_is_enabled_through_clear_block(blocks):
    end_first, start_second = blocks.full[9], blocks.full[10]
    shared = {str(f) for f in end_first.adds} & {str(f) for f in start_second.pos_pre}
    assert "clear(b1)" in shared
    assert causal_link(end_first, start_second, blocks.catalog) is not None
    assert blocks.matrix.cells[10][11]


@pytest.mark.parametrize("names", ALL_FIXTURES)
def test_non_resource_preconditions_are_supported(names):
    run = cached_run(*names)
    plan, C, p = run.full, run.matrix, run.ll_problem
    atoms = {x for t in run.catalog.types for x in t.atoms}
    for s in plan:
        for lit in s.pos_pre:
            if any(a in atoms for a in lit.args):
                continue
            supported = lit in p.init or any(C.cells[j + 1][s.index + 1] and lit in plan[j].adds for j in range(s.index))
            assert supported, (s.index, str(lit))
