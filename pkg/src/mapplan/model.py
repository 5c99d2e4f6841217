"""In-memory representation of a two-level temporal planning problem.

Terms are immutable: ``Term`` for atoms and compounds, ``Var`` for
variables, ``WILDCARD`` for ``_`` and plain ``int`` for numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Union

from .errors import NonGroundFluent, SignatureMismatch, UnpairedSnapAction


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Wildcard:
    def __str__(self) -> str:
        return "_"


WILDCARD = Wildcard()


@dataclass(frozen=True, slots=True)
class Term:
    functor: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def family(self) -> tuple[str, int]:
        return (self.functor, len(self.args))

    def __str__(self) -> str:
        if not self.args:
            return self.functor
        return f"{self.functor}({', '.join(str(a) for a in self.args)})"

    def compact(self) -> str:
        """Render without spaces after commas."""
        if not self.args:
            return self.functor
        inner = ",".join(a.compact() if isinstance(a, Term) else str(a) for a in self.args)
        return f"{self.functor}({inner})"


Arg = Union[Term, Var, Wildcard, int]


def atom(name: str) -> Term:
    return Term(name, ())


def is_ground(x: Arg) -> bool:
    if isinstance(x, Term):
        return all(is_ground(a) for a in x.args)
    return isinstance(x, int)


def variables(x: Arg) -> list[str]:
    """Variable names in order of first occurrence."""
    out: list[str] = []

    def walk(t: Arg) -> None:
        if isinstance(t, Var):
            if t.name not in out:
                out.append(t.name)
        elif isinstance(t, Term):
            for a in t.args:
                walk(a)

    walk(x)
    return out


def sort_key(x: Arg) -> tuple:
    # integers first, then terms by (functor, arity, args)
    if isinstance(x, bool):
        raise TypeError("bool is not a term")
    if isinstance(x, int):
        return (0, x)
    if isinstance(x, Term):
        return (1, x.functor, len(x.args), tuple(sort_key(a) for a in x.args))
    if isinstance(x, Var):
        return (2, x.name)
    return (3,)


@dataclass(frozen=True, slots=True)
class Literal:
    term: Term
    positive: bool = True

    def __str__(self) -> str:
        return str(self.term) if self.positive else f"not {self.term}"


class State:
    """A set of ground fluents with a canonical order."""

    __slots__ = ("fluents", "_sorted", "_families", "_hash")

    def __init__(self, fluents: Iterable[Term] = ()):
        fs = frozenset(fluents)
        for f in fs:
            if not isinstance(f, Term) or not is_ground(f):
                raise NonGroundFluent(f)
        self.fluents = fs
        self._sorted: tuple[Term, ...] | None = None
        self._families: dict | None = None
        self._hash: int | None = None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, State) and self.fluents == other.fluents

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.fluents)
        return self._hash

    def __len__(self) -> int:
        return len(self.fluents)

    def __contains__(self, f: object) -> bool:
        return f in self.fluents

    def __iter__(self) -> Iterator[Term]:
        return iter(self.sorted())

    def __repr__(self) -> str:
        return "State({" + ", ".join(str(f) for f in self.sorted()) + "})"

    def sorted(self) -> tuple[Term, ...]:
        if self._sorted is None:
            self._sorted = tuple(sorted(self.fluents, key=sort_key))
        return self._sorted

    def family(self, key: tuple[str, int]) -> tuple[Term, ...]:
        if self._families is None:
            fam: dict[tuple[str, int], list[Term]] = {}
            for f in self.sorted():
                fam.setdefault(f.family, []).append(f)
            self._families = {k: tuple(v) for k, v in fam.items()}
        return self._families.get(key, ())

    def update(self, dels: Iterable[Term], adds: Iterable[Term]) -> State:
        return State((self.fluents - frozenset(dels)) | frozenset(adds))


def canonical_state(fluents: Iterable[Term]) -> State:
    return State(fluents)


@dataclass(frozen=True, slots=True)
class Disequality:
    left: Var
    right: Var

    def __str__(self) -> str:
        return f"{self.left}\\={self.right}"


GroundingItem = Union[Term, Disequality]


@dataclass(frozen=True, slots=True)
class Effect:
    op: str  # "add" or "del"
    literal: Term

    def __str__(self) -> str:
        return f"{self.op}({self.literal})"


@dataclass(frozen=True)
class SnapAction:
    head: Term
    pos_pre: tuple[Term, ...] = ()
    neg_pre: tuple[Term, ...] = ()
    grounding: tuple[GroundingItem, ...] = ()
    effects: tuple[Effect, ...] = ()
    level: str = "high"
    five_list: bool = False  # written with the empty end-conditions list

    @property
    def name(self) -> str:
        return self.head.functor

    @property
    def kind(self) -> str:
        if self.name.endswith("_start"):
            return "start"
        if self.name.endswith("_end"):
            return "end"
        return "plain"

    @property
    def base_name(self) -> str:
        return base_name(self.name)

    @cached_property
    def action_variables(self) -> list[str]:
        """Variables of the head and the grounding list."""
        out = variables(self.head)
        for item in self.grounding:
            if isinstance(item, Term):
                out += [v for v in variables(item) if v not in out]
        return out


def base_name(name: str) -> str:
    for suffix in ("_start", "_end"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


@dataclass(frozen=True)
class DurativeAction:
    name: str
    start: SnapAction
    end: SnapAction
    d_min: int = 1
    d_max: int | None = 1  # None means unbounded

    @property
    def instantaneous(self) -> bool:
        return self.start is self.end


@dataclass(frozen=True, slots=True)
class Mapping:
    hl_start_head: Term
    expansion: tuple[Term, ...]


@dataclass(frozen=True, slots=True)
class ResourcePattern:
    pattern: Term

    @property
    def type_name(self) -> str:
        return self.pattern.functor


@dataclass(frozen=True)
class Problem:
    general_kb: tuple[Term, ...] = ()
    init: State = field(default_factory=State)
    goal: tuple[Term, ...] = ()
    hl_actions: tuple[SnapAction, ...] = ()
    ll_actions: tuple[SnapAction, ...] = ()
    mappings: tuple[Mapping, ...] = ()
    resources: tuple[ResourcePattern, ...] = ()
    durations: tuple[tuple[str, int, int | None], ...] = ()

    @cached_property
    def kb_families(self) -> dict[tuple[str, int], tuple[Term, ...]]:
        fam: dict[tuple[str, int], list[Term]] = {}
        for f in self.general_kb:
            fam.setdefault(f.family, []).append(f)
        return {k: tuple(v) for k, v in fam.items()}

    @cached_property
    def kb_set(self) -> frozenset[Term]:
        return frozenset(self.general_kb)

    def action(self, name: str) -> SnapAction | None:
        for a in self.hl_actions + self.ll_actions:
            if a.name == name:
                return a
        return None

    def mapping_for(self, name: str) -> Mapping | None:
        for m in self.mappings:
            if m.hl_start_head.functor == name:
                return m
        return None

    def duration(self, name: str) -> tuple[int, int | None] | None:
        """Explicitly declared bounds for a durative action, if any."""
        for n, lo, hi in self.durations:
            if n == name:
                return (lo, hi)
        return None

    def durative_actions(self) -> list[DurativeAction]:
        return pair_snap_actions(self.hl_actions + self.ll_actions, self)


def pair_snap_actions(actions: Iterable[SnapAction], problem: Problem | None = None) -> list[DurativeAction]:
    """Pair ``_start``/``_end`` snaps; plain actions become instantaneous."""
    actions = list(actions)
    ends = {a.name: a for a in actions if a.kind == "end"}
    starts = {a.name for a in actions if a.kind == "start"}
    out: list[DurativeAction] = []
    for a in actions:
        if a.kind == "end":
            if a.base_name + "_start" not in starts:
                raise UnpairedSnapAction(a.name)
            continue
        if a.kind == "plain":
            lo, hi = _bounds(problem, a.name, default=(0, 0))
            out.append(DurativeAction(a.name, a, a, lo, hi))
            continue
        end = ends.get(a.base_name + "_end")
        if end is None:
            raise UnpairedSnapAction(a.name)
        if a.head.args != end.head.args:
            raise SignatureMismatch(a.name, end.name)
        lo, hi = _bounds(problem, a.base_name, default=(1, 1))
        out.append(DurativeAction(a.base_name, a, end, lo, hi))
    return out


def _bounds(problem: Problem | None, name: str, default: tuple[int, int]) -> tuple[int, int | None]:
    if problem is not None:
        found = problem.duration(name)
        if found is not None:
            return found
    return default
