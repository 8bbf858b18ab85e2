"""End-to-end checking over the real composition: baseline verdicts,
counterexample validity, stutter extension, and determinism."""

import pytest

from sctpcheck.check import (
    SuccessorCache,
    check,
    eval_on_lasso,
    lasso_valuations,
    lasso_violates,
    replay_lasso,
)
from sctpcheck.ltl import builtin_properties, parse_formula, phi4_strict
from sctpcheck.system import ScenarioConfig, explore, initial_state, successors


def test_baseline_satisfies_all_ten_both_patches():
    for patch in (False, True):
        cfg = ScenarioConfig(patch_enabled=patch)
        succ = SuccessorCache(cfg)
        for name, f in builtin_properties().items():
            verdict = check(cfg, f, succ=succ)
            assert verdict.holds, (patch, name)
        assert check(cfg, phi4_strict(), succ=succ).holds


def test_liveness_of_establishment_is_not_guaranteed():
    # users may never associate, so "eventually established" fails and the
    # counterexample must be a genuine, falsifying execution
    cfg = ScenarioConfig()
    f = parse_formula("F(st[0] == Established)")
    verdict = check(cfg, f)
    assert not verdict.holds
    cx = verdict.counterexample
    assert replay_lasso(cfg, cx)
    assert lasso_violates(f, cx)


def test_negation_duality_spot_checks():
    cfg = ScenarioConfig()
    succ = SuccessorCache(cfg)
    for text in (
        "G(st[0] != ShutdownReceived || st[1] != ShutdownReceived)",
        "F(st[0] == Established)",
        "G(F(term))",
    ):
        f = parse_formula(text)
        v = check(cfg, f, succ=succ)
        from sctpcheck.ltl import Not

        v_neg = check(cfg, Not(f), succ=succ)
        # on a system with infinite behaviors, at most one of f, !f holds
        assert not (v.holds and v_neg.holds)


def test_verdicts_are_deterministic():
    cfg = ScenarioConfig()
    f = parse_formula("F(st[1] == CookieEchoed)")
    first = check(cfg, f)
    second = check(cfg, f)
    assert first.holds == second.holds
    assert first.counterexample == second.counterexample


def test_stutter_extension_on_dead_states():
    # finite maximal paths are invisible to pure lasso semantics; the stutter
    # option extends them by repeating the final state
    from sctpcheck.buchi import to_buchi
    from sctpcheck.check import check_graph
    from sctpcheck.ltl import Atom, Not

    p = Atom(("p",), "p")
    edges = {0: [("a", 1)], 1: []}  # state 1 is dead
    labels = {0: {("p",)}, 1: frozenset()}

    def valuation(s):
        return lambda key: key in labels[s]

    class Succ:
        def __init__(self, stutter):
            self.stutter = stutter
            self.seen = set()

        def __call__(self, s):
            self.seen.add(s)
            out = edges[s]
            if not out and self.stutter:
                return [("stutter", s)]
            return out

        def __len__(self):
            return len(self.seen)

    from sctpcheck.ltl import Globally, Finally

    f = Globally(Finally(p))
    aut = to_buchi(Not(f))
    assert check_graph(Succ(stutter=False), 0, aut, valuation=valuation).holds
    verdict = check_graph(Succ(stutter=True), 0, aut, valuation=valuation)
    assert not verdict.holds


def test_eval_on_lasso_basics():
    from sctpcheck.ltl import Atom, Finally, Globally, Next, Until

    p = Atom(("p",), "p")
    q = Atom(("q",), "q")

    def vals(*rows):
        return [lambda key, row=row: key in row for row in rows]

    # p holds only at position 1; cycle is position 1 alone
    v = vals(set(), {("p",)})
    assert eval_on_lasso(Finally(p), v, 1)
    assert not eval_on_lasso(Globally(p), v, 1)
    assert eval_on_lasso(Next(p), v, 1)
    # until: q fires at 2; p holds before
    v = vals({("p",)}, {("p",)}, {("q",)})
    assert eval_on_lasso(Until(p, q), v, 2)
