from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

from mapplan.enablers import EnablerMatrix, ResourceCatalog, extract_resources, find_enablers
from mapplan.model import Problem
from mapplan.parser import load_kb
from mapplan.planner import TOPlan, expand_mappings, plan_hl
from mapplan.scheduler import Schedule, ScheduleModel, build_model, solve

DATA = Path(__file__).resolve().parents[1] / "src" / "mapplan" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@dataclass
class Run:
    hl_problem: Problem
    ll_problem: Problem
    hl: TOPlan
    full: TOPlan
    catalog: ResourceCatalog
    matrix: EnablerMatrix
    model: ScheduleModel
    schedule: Schedule


def run_fixture(hl_name: str, ll_name: str) -> Run:
    hl_p, ll_p = load_kb(DATA / hl_name), load_kb(DATA / ll_name)
    hl = plan_hl(hl_p)
    full = expand_mappings(hl, ll_p)
    cat = extract_resources(ll_p, full)
    C = find_enablers(full, ll_p, cat)
    m = build_model(full, C, cat, ll_p)
    return Run(hl_p, ll_p, hl, full, cat, C, m, solve(m))


_cache: dict[tuple[str, str], Run] = {}


def cached_run(hl_name: str, ll_name: str) -> Run:
    key = (hl_name, ll_name)
    if key not in _cache:
        _cache[key] = run_fixture(hl_name, ll_name)
    return _cache[key]


@pytest.fixture
def blocks() -> Run:
    return cached_run("blocks_hl.pl", "blocks_ll.pl")


@pytest.fixture
def two_agents() -> Run:
    return cached_run("two_moves_hl.pl", "two_moves_ll.pl")


@pytest.fixture
def one_agent() -> Run:
    return cached_run("two_moves_hl.pl", "two_moves_ll_1agent.pl")


@pytest.fixture
def three_moves() -> Run:
    return cached_run("three_moves_hl.pl", "three_moves_ll.pl")


ALL_FIXTURES = [
    ("blocks_hl.pl", "blocks_ll.pl"),
    ("two_moves_hl.pl", "two_moves_ll.pl"),
    ("two_moves_hl.pl", "two_moves_ll_1agent.pl"),
    ("three_moves_hl.pl", "three_moves_ll.pl"),
]


@pytest.fixture
def record():
    """Record an acceptance criterion result for the terminal summary."""

    def rec(number: int, ok: bool, text: str) -> None:
        ACCEPTANCE[number] = (ok, text)

    return rec


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")
