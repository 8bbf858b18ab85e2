"""LTL to Büchi translation via the classic expand-node tableau, followed by
the counter-based degeneralization of the resulting generalized automaton.

The automaton reads the sequence of state valuations. A transition into a
node requires the letter to satisfy every literal the node collected, so
guards are conjunctions of (atom, polarity) pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

from .ltl import (
    And,
    Atom,
    Const,
    Finally,
    Formula,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Until,
)


@dataclass(frozen=True)
class Release(Formula):
    """NNF-internal dual of Until; never produced by the parser."""

    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} R {self.right})"


TRUE = Const(True)
FALSE = Const(False)


def to_nnf(f: Formula) -> Formula:
    """Negation normal form over {literals, And, Or, Next, Until, Release}."""
    if isinstance(f, Const) or isinstance(f, Atom):
        return f
    if isinstance(f, Implies):
        return to_nnf(Or(Not(f.left), f.right))
    if isinstance(f, And):
        return And(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Or):
        return Or(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Next):
        return Next(to_nnf(f.operand))
    if isinstance(f, Finally):
        return Until(TRUE, to_nnf(f.operand))
    if isinstance(f, Globally):
        return Release(FALSE, to_nnf(f.operand))
    if isinstance(f, Until):
        return Until(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Release):
        return Release(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Not):
        g = f.operand
        if isinstance(g, Const):
            return Const(not g.value)
        if isinstance(g, Atom):
            return f
        if isinstance(g, Not):
            return to_nnf(g.operand)
        if isinstance(g, Implies):
            return to_nnf(And(g.left, Not(g.right)))
        if isinstance(g, And):
            return Or(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
        if isinstance(g, Or):
            return And(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
        if isinstance(g, Next):
            return Next(to_nnf(Not(g.operand)))
        if isinstance(g, Finally):
            return Release(FALSE, to_nnf(Not(g.operand)))
        if isinstance(g, Globally):
            return Until(TRUE, to_nnf(Not(g.operand)))
        if isinstance(g, Until):
            return Release(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
        if isinstance(g, Release):
            return Until(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
    raise TypeError(f"unsupported formula {f!r}")


def _is_literal(f: Formula) -> bool:
    return isinstance(f, (Const, Atom)) or (
        isinstance(f, Not) and isinstance(f.operand, Atom)
    )


def _negation_of(f: Formula) -> Formula:
    if isinstance(f, Not):
        return f.operand
    return Not(f)


class _Node:
    __slots__ = ("name", "incoming", "new", "old", "next")

    def __init__(self, name, incoming, new, old, nxt):
        self.name = name
        self.incoming: set = incoming
        self.new: set = new
        self.old: set = old
        self.next: set = nxt


Guard = frozenset  # of (atom_key, polarity) pairs


@dataclass(frozen=True)
class BuchiAutomaton:
    """Degeneralized Büchi automaton. States are opaque indices; entering
    state q requires the current letter to satisfy guards[q]."""

    n_states: int
    guards: tuple[Guard, ...]
    edges: tuple[tuple[int, ...], ...]  # successor indices per state
    initial: tuple[int, ...]
    accepting: frozenset[int]

    def guard_satisfied(self, q: int, valuation: Callable[[tuple], bool]) -> bool:
        return all(valuation(a) == pol for a, pol in self.guards[q])


def _pop_deterministic(new: set) -> Formula:
    return min(new, key=str)


def _expand_all(root: _Node, counter) -> list[_Node]:
    """Worklist version of the recursive expand-node procedure; iteration
    order is fixed by formula text so runs are hash-seed independent."""
    nodes: list[_Node] = []
    pending: list[_Node] = [root]
    while pending:
        node = pending.pop()
        if not node.new:
            merged = False
            for r in nodes:
                if r.old == node.old and r.next == node.next:
                    r.incoming |= node.incoming
                    merged = True
                    break
            if merged:
                continue
            nodes.append(node)
            pending.append(
                _Node(next(counter), {node.name}, set(node.next), set(), set())
            )
            continue
        f = _pop_deterministic(node.new)
        node.new.discard(f)
        if isinstance(f, Const):
            if not f.value:
                continue  # contradiction: drop node
            node.old.add(f)
            pending.append(node)
            continue
        if _is_literal(f):
            if _negation_of(f) in node.old:
                continue
            node.old.add(f)
            pending.append(node)
            continue
        if isinstance(f, And):
            for g in (f.left, f.right):
                if g not in node.old:
                    node.new.add(g)
            node.old.add(f)
            pending.append(node)
            continue
        if isinstance(f, Next):
            node.old.add(f)
            node.next.add(f.operand)
            pending.append(node)
            continue
        if isinstance(f, (Or, Until, Release)):
            if isinstance(f, Or):
                new1, next1, new2 = {f.left}, set(), {f.right}
            elif isinstance(f, Until):
                new1, next1, new2 = {f.left}, {f}, {f.right}
            else:  # Release
                new1, next1, new2 = {f.right}, {f}, {f.left, f.right}
            n1 = _Node(
                next(counter),
                set(node.incoming),
                node.new | (new1 - node.old),
                node.old | {f},
                node.next | next1,
            )
            n2 = _Node(
                next(counter),
                set(node.incoming),
                node.new | (new2 - node.old),
                node.old | {f},
                set(node.next),
            )
            pending.append(n2)
            pending.append(n1)
            continue
        raise TypeError(f"non-NNF formula {f!r}")
    return nodes


def _until_subformulas(f: Formula) -> list[Until]:
    out: list[Until] = []

    def walk(g: Formula) -> None:
        if isinstance(g, Until):
            out.append(g)
        if isinstance(g, (Not, Next, Globally, Finally)):
            walk(g.operand)
        elif isinstance(g, (And, Or, Implies, Until, Release)):
            walk(g.left)
            walk(g.right)

    walk(f)
    return out


def to_buchi(f: Formula) -> BuchiAutomaton:
    """Automaton accepting exactly the infinite valuation sequences that
    satisfy f."""
    nnf = to_nnf(f)
    counter = itertools.count()
    init_name = "init"
    root = _Node(next(counter), {init_name}, {nnf}, set(), set())
    nodes = _expand_all(root, counter)

    untils = _until_subformulas(nnf)
    # Generalized acceptance: one set per Until; empty list means all accept.
    accept_sets: list[set[int]] = []
    for u in untils:
        acc = {
            i
            for i, nd in enumerate(nodes)
            if u not in nd.old or u.right in nd.old
        }
        accept_sets.append(acc)
    if not accept_sets:
        accept_sets.append(set(range(len(nodes))))
    k = len(accept_sets)

    name_to_idx = {nd.name: i for i, nd in enumerate(nodes)}
    guards: list[Guard] = []
    for nd in nodes:
        lits = set()
        contradictory = False
        for g in nd.old:
            if isinstance(g, Atom):
                lits.add((g.key, True))
            elif isinstance(g, Not) and isinstance(g.operand, Atom):
                lits.add((g.operand.key, False))
        seen = {}
        for key, pol in lits:
            if key in seen and seen[key] != pol:
                contradictory = True
            seen[key] = pol
        guards.append(frozenset(lits) if not contradictory else None)

    raw_edges: list[list[int]] = [[] for _ in nodes]
    raw_initial: list[int] = []
    for j, nd in enumerate(nodes):
        if guards[j] is None:
            continue
        for src_name in sorted(nd.incoming, key=repr):
            if src_name == init_name:
                raw_initial.append(j)
            elif src_name in name_to_idx:
                raw_edges[name_to_idx[src_name]].append(j)

    # Degeneralize: product with a counter over the k acceptance sets.
    # State (q, i); leaving a state with q in set i advances the counter.
    def deg_index(q: int, i: int) -> int:
        return q * k + i

    n = len(nodes) * k
    deg_guards: list[Guard] = [frozenset()] * n
    deg_edges: list[list[int]] = [[] for _ in range(n)]
    deg_initial: list[int] = []
    deg_accepting: set[int] = set()
    for q in range(len(nodes)):
        for i in range(k):
            di = deg_index(q, i)
            deg_guards[di] = guards[q] if guards[q] is not None else frozenset()
            if guards[q] is None:
                continue
            j = (i + 1) % k if q in accept_sets[i] else i
            for q2 in raw_edges[q]:
                deg_edges[di].append(deg_index(q2, j))
            if i == 0 and q in accept_sets[0]:
                deg_accepting.add(di)
    for q in raw_initial:
        deg_initial.append(deg_index(q, 0))

    return BuchiAutomaton(
        n_states=n,
        guards=tuple(deg_guards),
        edges=tuple(tuple(e) for e in deg_edges),
        initial=tuple(deg_initial),
        accepting=frozenset(deg_accepting),
    )
