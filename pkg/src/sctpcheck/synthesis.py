"""Attack synthesis: search the composed system (invariant part plus a
nondeterministic daisy) for executions where the daisy terminates and the
property then fails; recover, validate, deduplicate and shrink the concrete
attacker action sequences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

from .attackers import TERMINATE, AttackerModelKind, Daisy, Phase, build_daisy, vocab_for
from .check import Lasso, SuccessorCache, Verdict, check
from .ltl import Atom, Finally, Formula, Implies
from .system import BoundExceeded, ScenarioConfig

TERM_ATOM = Atom(("term",), "term")


def precondition_property(f: Formula) -> Formula:
    """Attacks must come from terminating daisies: F(term) -> f."""
    return Implies(Finally(TERM_ATOM), f)


@dataclass(frozen=True)
class SynthesisConfig:
    property: Formula
    property_name: str
    model: AttackerModelKind
    phase: Phase = Phase.FULL
    max_attacks: int = 10
    search_depth: int = 600_000
    max_depth: int = 2_400_000
    patch_enabled: bool = False
    misinterpret_521: bool = False
    tsn_enabled: bool = False
    budget: int = 12
    replay_capacity: int = 2
    replay_tap: str = "b_to_a"
    replay_reemit: bool = True
    check_baseline_first: bool = True


@dataclass(frozen=True)
class Attack:
    actions: tuple  # attacker action tuples, terminate implicit
    witness: Lasso

    def pretty(self) -> str:
        return "; ".join(_action_str(a) for a in self.actions) or "<empty>"


def _action_str(action: tuple) -> str:
    verb = action[0]
    rest = ", ".join(str(p) for p in action[1:])
    return f"{verb}({rest})" if rest else verb


@dataclass
class SynthesisStats:
    checks: int = 0
    states_explored: int = 0
    elapsed_seconds: float = 0.0
    depth_used: int = 0
    bound_exceeded: bool = False


@dataclass
class SynthesisResult:
    attacks: list[Attack]
    exhausted: bool
    stats: SynthesisStats = field(default_factory=SynthesisStats)


class BaselineViolated(Exception):
    """The property fails with the daisy terminated immediately; synthesis
    against it would report vacuous attacks."""


def _scenario(cfg: SynthesisConfig, daisy: Optional[Daisy]) -> ScenarioConfig:
    return ScenarioConfig(
        patch_enabled=cfg.patch_enabled,
        misinterpret_521=cfg.misinterpret_521,
        tsn_enabled=cfg.tsn_enabled,
        daisy=daisy,
    )


def _daisy(cfg: SynthesisConfig, forbidden: tuple = (), script=None) -> Daisy:
    d = build_daisy(
        cfg.model,
        vocab=vocab_for(cfg.model, cfg.phase),
        budget=cfg.budget,
        replay_capacity=cfg.replay_capacity,
        replay_tap=cfg.replay_tap,
        replay_reemit=cfg.replay_reemit,
        forbidden_sequences=forbidden,
    )
    if script is not None:
        d = replace(d, script=tuple(script))
    return d


# Warm successor relations are shared across repeated checks of the same
# scenario (different properties over one composition re-use the graph).
_SUCC_CACHES: dict[ScenarioConfig, SuccessorCache] = {}
_SUCC_CACHE_LIMIT = 2


def _shared_cache(scenario: ScenarioConfig) -> SuccessorCache:
    cache = _SUCC_CACHES.get(scenario)
    if cache is None:
        if len(_SUCC_CACHES) >= _SUCC_CACHE_LIMIT:
            _SUCC_CACHES.pop(next(iter(_SUCC_CACHES)))
        cache = SuccessorCache(scenario)
        _SUCC_CACHES[scenario] = cache
    return cache


def _checked(cfg: SynthesisConfig, scenario: ScenarioConfig, f: Formula,
             stats: SynthesisStats) -> Verdict:
    depth = cfg.search_depth
    while True:
        try:
            verdict = check(scenario, f, max_depth=depth, succ=_shared_cache(scenario))
            stats.checks += 1
            stats.states_explored += verdict.states_explored
            stats.depth_used = max(stats.depth_used, depth)
            return verdict
        except BoundExceeded:
            depth *= 2
            if depth > cfg.max_depth:
                raise


def extract_attack(lasso: Lasso) -> tuple:
    """Project the attacker's concrete actions out of a counterexample; the
    closing terminate is left implicit."""
    actions = []
    for label in lasso.labels:
        if label.actor == "Attacker" and label.action is not None:
            if label.action != (TERMINATE,):
                actions.append(label.action)
    return tuple(actions)


def validate_attack(actions: tuple, cfg: SynthesisConfig) -> bool:
    """Replay the actions as a deterministic attacker and model-check the
    plain property: the attack is real iff some execution still violates it."""
    daisy = _daisy(cfg, script=actions)
    scenario = _scenario(cfg, daisy)
    stats = SynthesisStats()
    verdict = _checked(cfg, scenario, cfg.property, stats)
    return not verdict.holds


def validate_attack_obj(attack: Attack, cfg: SynthesisConfig) -> bool:
    return validate_attack(attack.actions, cfg)


def shrink_attack(attack: Attack, cfg: SynthesisConfig) -> Attack:
    """Greedy 1-minimal reduction: drop actions one at a time while the
    remainder still validates."""
    actions = list(attack.actions)
    changed = True
    while changed:
        changed = False
        for i in range(len(actions)):
            candidate = tuple(actions[:i] + actions[i + 1:])
            if validate_attack(candidate, cfg):
                actions = list(candidate)
                changed = True
                break
    return Attack(actions=tuple(actions), witness=attack.witness)


def synthesize(cfg: SynthesisConfig) -> SynthesisResult:
    """Iterated counterexample search: each found attack is excluded from the
    daisy and the search repeats, up to max_attacks or exhaustion."""
    t0 = time.monotonic()
    stats = SynthesisStats()
    target = precondition_property(cfg.property)

    if cfg.check_baseline_first:
        baseline = _scenario(cfg, _daisy(cfg, script=()))
        verdict = _checked(cfg, baseline, cfg.property, stats)
        if not verdict.holds:
            raise BaselineViolated(cfg.property_name)

    attacks: list[Attack] = []
    seen: set[tuple] = set()
    exhausted = False
    while len(attacks) < cfg.max_attacks:
        forbidden = tuple(a.actions for a in attacks)
        scenario = _scenario(cfg, _daisy(cfg, forbidden=forbidden))
        try:
            verdict = _checked(cfg, scenario, target, stats)
        except BoundExceeded:
            stats.bound_exceeded = True
            break
        if verdict.holds:
            exhausted = True
            break
        assert verdict.counterexample is not None
        actions = extract_attack(verdict.counterexample)
        if actions in seen:
            # The exclusion trie should prevent this; bail rather than loop.
            break
        seen.add(actions)
        attacks.append(Attack(actions=actions, witness=verdict.counterexample))
    stats.elapsed_seconds = time.monotonic() - t0
    return SynthesisResult(attacks=attacks, exhausted=exhausted, stats=stats)
