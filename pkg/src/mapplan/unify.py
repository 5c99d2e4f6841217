"""One-way matching of patterns against ground terms.

Bindings are plain dicts from variable name to ground value. Functions
never mutate the bindings they receive.
"""

from __future__ import annotations

from typing import Callable, Iterable, Iterator, Mapping

from .model import Arg, Disequality, GroundingItem, Literal, State, Term, Var, Wildcard

Bindings = dict


def match(pattern: Arg, ground: Arg, b: Mapping[str, Arg]) -> dict | None:
    """Extend ``b`` so that ``pattern`` equals ``ground``, or return None."""
    out = dict(b)
    return out if _match(pattern, ground, out) else None


def _match(p: Arg, g: Arg, out: dict) -> bool:
    if isinstance(p, Wildcard):
        return True
    if isinstance(p, Var):
        cur = out.get(p.name)
        if cur is None:
            out[p.name] = g
            return True
        return cur == g
    if isinstance(p, Term):
        if not isinstance(g, Term) or p.functor != g.functor or len(p.args) != len(g.args):
            return False
        return all(_match(pa, ga, out) for pa, ga in zip(p.args, g.args))
    return type(g) is int and p == g


def substitute(t: Arg, b: Mapping[str, Arg]) -> Arg:
    if isinstance(t, Var):
        return b.get(t.name, t)
    if isinstance(t, Term) and t.args:
        return Term(t.functor, tuple(substitute(a, b) for a in t.args))
    return t


def _index(kb) -> Mapping[tuple[str, int], tuple[Term, ...]]:
    fam = getattr(kb, "kb_families", None)
    if fam is not None:
        return fam
    if isinstance(kb, Mapping):
        return kb
    out: dict[tuple[str, int], list[Term]] = {}
    seen = set()
    for f in kb:
        if f not in seen:
            seen.add(f)
            out.setdefault(f.family, []).append(f)
    return out


def enumerate_groundings(
    items: Iterable[GroundingItem],
    kb,
    b0: Mapping[str, Arg] | None = None,
    prune: Callable[[int, dict], bool] | None = None,
) -> Iterator[dict]:
    """Depth-first product of the items over the KB, in declaration order.

    ``kb`` is a Problem, a family index or an iterable of facts. ``prune``
    may reject a partial binding after item ``k`` has been matched; it must
    only reject bindings that no completion could satisfy.
    """
    index = _index(kb)
    items = list(items)

    def rec(k: int, b: dict) -> Iterator[dict]:
        if k == len(items):
            yield b
            return
        item = items[k]
        if isinstance(item, Disequality):
            left, right = b.get(item.left.name), b.get(item.right.name)
            if left is not None and right is not None and left != right:
                if prune is None or prune(k, b):
                    yield from rec(k + 1, b)
            return
        pattern = substitute(item, b)
        for fact in index.get(pattern.family, ()):
            nb = match(pattern, fact, b)
            if nb is None:
                continue
            if prune is not None and not prune(k, nb):
                continue
            yield from rec(k + 1, nb)

    yield from rec(0, dict(b0 or {}))


def holds(lit: Literal, s: State, b: Mapping[str, Arg]) -> tuple[bool, dict]:
    """Evaluate a literal; positive literals may extend the bindings."""
    pattern = substitute(lit.term, b)
    if lit.positive:
        for f in s.family(pattern.family):
            nb = match(pattern, f, b)
            if nb is not None:
                return True, nb
        return False, dict(b)
    # unbound variables in a negated literal range over every value
    for f in s.family(pattern.family):
        if match(pattern, f, {}) is not None:
            return False, dict(b)
    return True, dict(b)


def any_match(pattern: Term, s: State) -> bool:
    return any(match(pattern, f, {}) is not None for f in s.family(pattern.family))
