"""Explicit-state LTL checking: build the Büchi automaton for the negated
property, product it with the reachable system graph, and decide emptiness
with the two-pass nested depth-first search, returning a lasso witness.

Deadlocked system states have no infinite continuations, so by default they
cannot carry a lasso; ``stutter_deadlocks`` adds a self-loop at such states,
making LTL total over finite maximal paths by repetition of the final state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .buchi import BuchiAutomaton, to_buchi
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
from .system import (
    BoundExceeded,
    ScenarioConfig,
    SystemState,
    TransitionLabel,
    Valuation,
    atomic_valuation,
    initial_state,
    successors,
)

STUTTER_LABEL = TransitionLabel("Channel", "stutter", detail="deadlock")


@dataclass(frozen=True)
class Lasso:
    """A counterexample execution: states[0] is initial; step i is reached by
    labels[i-1]; the suffix from cycle_start repeats forever."""

    states: tuple[SystemState, ...]
    labels: tuple[TransitionLabel, ...]
    cycle_start: int

    def __post_init__(self):
        assert len(self.states) == len(self.labels) + 1
        assert 0 <= self.cycle_start < len(self.states)


@dataclass(frozen=True)
class Verdict:
    holds: bool
    counterexample: Optional[Lasso] = None
    states_explored: int = 0

    def __bool__(self) -> bool:
        return self.holds


class SuccessorCache:
    """Memoized global successor relation for one scenario."""

    def __init__(self, config: ScenarioConfig, stutter_deadlocks: bool = False):
        self.config = config
        self.stutter_deadlocks = stutter_deadlocks
        self._cache: dict[SystemState, list[tuple[TransitionLabel, SystemState]]] = {}

    def __call__(self, s: SystemState) -> list[tuple[TransitionLabel, SystemState]]:
        hit = self._cache.get(s)
        if hit is None:
            hit = successors(self.config, s)
            if not hit and self.stutter_deadlocks:
                hit = [(STUTTER_LABEL, s)]
            self._cache[s] = hit
        return hit

    def __len__(self) -> int:
        return len(self._cache)


class _GuardMaskCache:
    """Per system state, the bitmask of automaton states whose entry guard
    the state's valuation satisfies; computed once per state."""

    __slots__ = ("aut", "cache", "valuation")

    def __init__(self, aut: BuchiAutomaton, valuation=atomic_valuation):
        self.aut = aut
        self.cache: dict = {}
        self.valuation = valuation

    def __call__(self, s) -> int:
        m = self.cache.get(s)
        if m is None:
            val = self.valuation(s)
            m = 0
            for q in range(self.aut.n_states):
                if self.aut.guard_satisfied(q, val):
                    m |= 1 << q
            self.cache[s] = m
        return m


def _product_successors(
    succ: SuccessorCache,
    aut: BuchiAutomaton,
    masks: _GuardMaskCache,
    node: tuple[SystemState, int],
) -> list[tuple[TransitionLabel, tuple[SystemState, int]]]:
    s, q = node
    out = []
    edges = aut.edges
    for label, s2 in succ(s):
        m = masks(s2)
        for q2 in edges[q]:
            if (m >> q2) & 1:
                out.append((label, (s2, q2)))
    return out


def _initial_product_nodes(
    aut: BuchiAutomaton, masks: _GuardMaskCache, s0: SystemState
) -> list[tuple[SystemState, int]]:
    m = masks(s0)
    return [(s0, q) for q in aut.initial if (m >> q) & 1]


def _trace_from_stack(
    stack_nodes: list,
    seed_index: int,
    red_path: list,
) -> Lasso:
    """Assemble the lasso: blue stack gives the prefix up to the state the
    red search re-entered, the rest of the stack plus the red path closes
    the cycle."""
    # stack entries: (node, label_from_parent)
    hit_node = red_path[-1][1]
    hit_index = None
    for i in range(len(stack_nodes) - 1, -1, -1):
        if stack_nodes[i][0] == hit_node:
            hit_index = i
            break
    assert hit_index is not None
    states = [n[0] for n, _ in stack_nodes]
    labels = [lbl for _, lbl in stack_nodes[1:]]
    # red_path: list of (label, node) from the seed onward (seed excluded).
    for lbl, node in red_path:
        states.append(node[0])
        labels.append(lbl)
    # The final appended state closes the cycle back at hit_index; drop the
    # duplicate tail state and mark the cycle start instead.
    states.pop()
    labels_tail = labels.pop()
    cycle_start = hit_index
    # Re-add the closing step implicitly: the lasso loops states[cycle_start:]
    # via labels[cycle_start:] + [labels_tail]; to keep the parallel-array
    # shape we append the closing label as part of the cycle by storing the
    # closing transition target equal to states[cycle_start].
    return Lasso(
        states=tuple(states) + (states[cycle_start],),
        labels=tuple(labels) + (labels_tail,),
        cycle_start=cycle_start,
    )


def check_graph(
    succ,
    s0,
    negated_property_automaton: BuchiAutomaton,
    max_depth: int = 600_000,
    valuation=atomic_valuation,
) -> Verdict:
    """Nested DFS for an accepting cycle in the product. Violated verdicts
    carry the projected system lasso. `succ` is any callable state ->
    [(label, state)] supporting len(); `valuation` maps a state to an
    atom-truth callable."""
    aut = negated_property_automaton
    masks = _GuardMaskCache(aut, valuation)

    def product_list(node):
        return _product_successors(succ, aut, masks, node)

    blue: set = set()
    red: set = set()
    on_stack: set = set()

    for start in _initial_product_nodes(aut, masks, s0):
        if start in blue:
            continue
        # Frames keep their successor list, so memory tracks stack depth
        # rather than the visited product graph.
        stack = [(start, None)]
        frames = [(start, product_list(start), 0)]
        blue.add(start)
        on_stack.add(start)
        while frames:
            if len(frames) > max_depth:
                raise BoundExceeded(f"nested-DFS depth over {max_depth}")
            node, succ_list, idx = frames[-1]
            if idx < len(succ_list):
                frames[-1] = (node, succ_list, idx + 1)
                label, child = succ_list[idx]
                if child not in blue:
                    blue.add(child)
                    on_stack.add(child)
                    stack.append((child, label))
                    frames.append((child, product_list(child), 0))
                continue
            # Post-order: red search from accepting nodes.
            if node[1] in aut.accepting and node not in red:
                red_path = _red_search(product_list, node, red, on_stack)
                if red_path is not None:
                    return Verdict(
                        holds=False,
                        counterexample=_trace_from_stack(stack, len(stack) - 1, red_path),
                        states_explored=len(succ),
                    )
            frames.pop()
            popped, _ = stack.pop()
            on_stack.discard(popped)
    return Verdict(holds=True, states_explored=len(succ))


def _red_search(
    product_list,
    seed,
    red: set,
    on_stack: set,
) -> Optional[list]:
    """Second DFS: from an accepting seed, look for any state on the blue
    stack (which closes an accepting cycle). Returns the path of (label,
    node) steps from the seed to the re-entry node."""
    parents: dict = {}
    stack = [seed]
    local_seen = {seed}
    while stack:
        node = stack.pop()
        for label, child in product_list(node):
            if child in on_stack:
                # Found the cycle: reconstruct seed -> ... -> child.
                path = [(label, child)]
                cur = node
                while cur != seed:
                    lbl, par = parents[cur]
                    path.append((lbl, cur))
                    cur = par
                path.reverse()
                return path
            if child not in red and child not in local_seen:
                local_seen.add(child)
                parents[child] = (label, node)
                stack.append(child)
    red.update(local_seen)
    return None


def check(
    config: ScenarioConfig,
    f: Formula,
    max_depth: int = 600_000,
    stutter_deadlocks: bool = False,
    succ: Optional[SuccessorCache] = None,
) -> Verdict:
    """Decide whether every execution of the configured system satisfies f."""
    if succ is None:
        succ = SuccessorCache(config, stutter_deadlocks=stutter_deadlocks)
    aut = to_buchi(Not(f))
    s0 = initial_state(config)
    return check_graph(succ, s0, aut, max_depth=max_depth)


def eval_on_lasso(
    f: Formula, valuations: list[Callable[[tuple], bool]], cycle_start: int
) -> bool:
    """Direct LTL evaluation on an ultimately periodic trace, by fixpoint
    iteration over (subformula, position) truth tables."""
    n = len(valuations)
    assert 0 <= cycle_start < n

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < n else cycle_start

    memo: dict[tuple, list] = {}

    def table(g: Formula) -> list:
        key = (id(g), str(g))
        if key in memo:
            return memo[key]
        if isinstance(g, Const):
            t = [g.value] * n
        elif isinstance(g, Atom):
            t = [valuations[i](g.key) for i in range(n)]
        elif isinstance(g, Not):
            t = [not v for v in table(g.operand)]
        elif isinstance(g, And):
            lt, rt = table(g.left), table(g.right)
            t = [a and b for a, b in zip(lt, rt)]
        elif isinstance(g, Or):
            lt, rt = table(g.left), table(g.right)
            t = [a or b for a, b in zip(lt, rt)]
        elif isinstance(g, Implies):
            lt, rt = table(g.left), table(g.right)
            t = [(not a) or b for a, b in zip(lt, rt)]
        elif isinstance(g, Next):
            ot = table(g.operand)
            t = [ot[nxt(i)] for i in range(n)]
        elif isinstance(g, Finally):
            ot = table(g.operand)
            t = [False] * n  # least fixpoint of F
            changed = True
            while changed:
                changed = False
                for i in range(n - 1, -1, -1):
                    v = ot[i] or t[nxt(i)]
                    if v != t[i]:
                        t[i] = v
                        changed = True
        elif isinstance(g, Globally):
            ot = table(g.operand)
            t = [True] * n  # greatest fixpoint of G
            changed = True
            while changed:
                changed = False
                for i in range(n - 1, -1, -1):
                    v = ot[i] and t[nxt(i)]
                    if v != t[i]:
                        t[i] = v
                        changed = True
        elif isinstance(g, Until):
            lt, rt = table(g.left), table(g.right)
            t = [False] * n
            changed = True
            while changed:
                changed = False
                for i in range(n - 1, -1, -1):
                    v = rt[i] or (lt[i] and t[nxt(i)])
                    if v != t[i]:
                        t[i] = v
                        changed = True
        else:
            raise TypeError(f"unsupported formula {g!r}")
        memo[key] = t
        return t

    return table(f)[0]


def lasso_valuations(lasso: Lasso) -> list[Valuation]:
    # The final state duplicates states[cycle_start]; evaluation uses the
    # non-duplicated list with the wrap-around index.
    return [atomic_valuation(s) for s in lasso.states[:-1]]


def lasso_violates(f: Formula, lasso: Lasso) -> bool:
    return not eval_on_lasso(f, lasso_valuations(lasso), lasso.cycle_start)


def replay_lasso(config: ScenarioConfig, lasso: Lasso) -> bool:
    """Confirm the lasso is a genuine execution of the system: every step is
    one of the state's successors, and the cycle closes."""
    succ = SuccessorCache(config)
    states, labels = lasso.states, lasso.labels
    if states[0] != initial_state(config):
        return False
    for i, label in enumerate(labels):
        step = (label, states[i + 1])
        if step not in succ(states[i]):
            if label == STUTTER_LABEL and states[i + 1] == states[i] and not successors(config, states[i]):
                continue
            return False
    return states[-1] == states[lasso.cycle_start]
