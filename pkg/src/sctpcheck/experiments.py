"""Batch experiment driver: baseline verification, the attacker-model by
property matrix with patch on/off, the CVE reproduction, the ambiguity
walkthrough, and trace (de)serialization.
"""

from __future__ import annotations

import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .attackers import SEND, AttackerModelKind, Phase, build_daisy, vocab_for
from .check import Lasso, SuccessorCache, check
from .ltl import Formula, builtin_properties
from .messages import ChunkType, Message, TagClass
from .synthesis import Attack, SynthesisConfig, shrink_attack, synthesize
from .system import ScenarioConfig, TransitionLabel, explore, initial_state, successors

TRACE_SCHEMA_VERSION = 1

# Attacker models whose searches are run per connection phase and merged.
PHASE_SPLIT_MODELS = (AttackerModelKind.OFF_PATH, AttackerModelKind.ON_PATH)

# The published attack pattern: which (model, property) cells contain attacks
# with the patch disabled.
PAPER_ATTACK_CELLS = frozenset(
    {
        (AttackerModelKind.OFF_PATH, "phi9"),
        (AttackerModelKind.EVIL_SERVER, "phi1"),
        (AttackerModelKind.EVIL_SERVER, "phi6"),
        (AttackerModelKind.EVIL_SERVER, "phi8"),
        (AttackerModelKind.EVIL_SERVER, "phi9"),
        (AttackerModelKind.REPLAY, "phi2"),
        (AttackerModelKind.ON_PATH, "phi5"),
        (AttackerModelKind.ON_PATH, "phi8"),
        (AttackerModelKind.ON_PATH, "phi9"),
    }
)


@dataclass
class CellOutcome:
    model: AttackerModelKind
    property_name: str
    patch_enabled: bool
    status: str  # AttackFound | NoneExhausted | NoneBounded
    attacks: list[Attack] = field(default_factory=list)
    shrunk: list[Attack] = field(default_factory=list)
    elapsed_seconds: float = 0.0
    states_explored: int = 0

    @property
    def found(self) -> bool:
        return self.status == "AttackFound"


@dataclass
class ExperimentReport:
    cells: list[CellOutcome]
    config: dict
    environment: dict = field(default_factory=dict)

    def cell(self, model: AttackerModelKind, prop: str, patch: bool) -> CellOutcome:
        for c in self.cells:
            if c.model is model and c.property_name == prop and c.patch_enabled == patch:
                return c
        raise KeyError((model, prop, patch))


def _environment_stamp() -> dict:
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


# Bounds sized for a sequential desk run: large enough for every published
# attack shape (the longest needs four attacker actions), small enough that
# each composition stays in the low hundreds of thousands of states.
DESK_BUDGETS = {
    AttackerModelKind.OFF_PATH: 4,
    AttackerModelKind.EVIL_SERVER: 5,
    AttackerModelKind.REPLAY: 4,
    AttackerModelKind.ON_PATH: 4,
}


def _synth_config(
    model: AttackerModelKind,
    prop_name: str,
    formula: Formula,
    patch: bool,
    phase: Phase,
    *,
    budget: Optional[int] = None,
    max_attacks: int = 10,
    search_depth: int = 600_000,
    max_depth: int = 2_400_000,
    replay_capacity: int = 1,
    replay_tap: str = "a_to_b",
    tsn: bool = False,
) -> SynthesisConfig:
    if budget is None:
        budget = DESK_BUDGETS[model]
    return SynthesisConfig(
        property=formula,
        property_name=prop_name,
        model=model,
        phase=phase,
        max_attacks=max_attacks,
        search_depth=search_depth,
        max_depth=max_depth,
        patch_enabled=patch,
        tsn_enabled=tsn,
        budget=budget,
        replay_capacity=replay_capacity,
        replay_tap=replay_tap,
    )


def run_cell(
    model: AttackerModelKind,
    prop_name: str,
    formula: Formula,
    patch: bool,
    *,
    budget: Optional[int] = None,
    max_attacks: int = 10,
    search_depth: int = 600_000,
    max_depth: int = 2_400_000,
    shrink: bool = True,
    replay_capacity: int = 1,
    replay_tap: str = "a_to_b",
    tsn: bool = False,
) -> CellOutcome:
    """One matrix cell. Off-Path and On-Path are searched per phase
    (establishment then teardown, results merged); the completeness of the
    split rests on the one-step-history shape of the properties."""
    t0 = time.monotonic()
    phases = (
        (Phase.ESTABLISHMENT, Phase.TEARDOWN)
        if model in PHASE_SPLIT_MODELS
        else (Phase.FULL,)
    )
    opts = dict(
        budget=budget, search_depth=search_depth, max_depth=max_depth,
        replay_capacity=replay_capacity, replay_tap=replay_tap, tsn=tsn,
    )
    attacks: list[Attack] = []
    exhausted = True
    states = 0
    for phase in phases:
        cfg = _synth_config(
            model, prop_name, formula, patch, phase,
            max_attacks=max_attacks, **opts,
        )
        result = synthesize(cfg)
        attacks.extend(result.attacks)
        exhausted = exhausted and result.exhausted
        states += result.stats.states_explored
    if attacks:
        status = "AttackFound"
    elif exhausted:
        status = "NoneExhausted"
    else:
        status = "NoneBounded"
    out = CellOutcome(
        model=model,
        property_name=prop_name,
        patch_enabled=patch,
        status=status,
        attacks=attacks,
        elapsed_seconds=time.monotonic() - t0,
        states_explored=states,
    )
    if shrink and attacks:
        shrunk: list[Attack] = []
        seen = set()
        for a in attacks:
            phase = _attack_phase(model, a)
            cfg = _synth_config(model, prop_name, formula, patch, phase, **opts)
            small = shrink_attack(a, cfg)
            if small.actions not in seen:
                seen.add(small.actions)
                shrunk.append(small)
        out.shrunk = shrunk
    return out


def _attack_phase(model: AttackerModelKind, attack: Attack) -> Phase:
    if model not in PHASE_SPLIT_MODELS:
        return Phase.FULL
    est = {m for m in vocab_for(model, Phase.ESTABLISHMENT).sendable}
    for action in attack.actions:
        for part in action:
            if isinstance(part, Message) and part not in est:
                return Phase.TEARDOWN
    return Phase.ESTABLISHMENT


def _run_cell_job(args):
    model, prop_name, text_patch, opts = args
    props = builtin_properties()
    return run_cell(model, prop_name, props[prop_name], text_patch, **opts)


def run_matrix(
    models: list[AttackerModelKind],
    properties: list[str],
    patch: str = "off",
    jobs: int = 1,
    **opts,
) -> ExperimentReport:
    """The full synthesis matrix. ``patch`` is one of on/off/both. Bound
    overruns are recorded per cell (NoneBounded), never fatal."""
    patches = {"on": [True], "off": [False], "both": [False, True]}[patch]
    tasks = [
        (model, prop, p, opts)
        for p in patches
        for model in models
        for prop in properties
    ]
    cells: list[CellOutcome] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_job, tasks))
    else:
        cells = [_run_cell_job(t) for t in tasks]
    return ExperimentReport(
        cells=cells,
        config={
            "models": [m.value for m in models],
            "properties": properties,
            "patch": patch,
            **{k: v for k, v in opts.items()},
        },
        environment=_environment_stamp(),
    )


@dataclass
class BaselineReport:
    verdicts: dict  # (config_name, prop_name) -> bool
    state_count: dict
    deadlocks: dict
    unreachable: dict

    @property
    def all_hold(self) -> bool:
        return all(self.verdicts.values())


def verify_baseline(include_misinterpret: bool = True) -> BaselineReport:
    """No-attacker verification: the ten properties, deadlock freedom, and
    peer-state reachability, for the patched and unpatched models."""
    props = builtin_properties()
    configs = {
        "patch-off": ScenarioConfig(patch_enabled=False),
        "patch-on": ScenarioConfig(patch_enabled=True),
    }
    if include_misinterpret:
        configs["misinterpret"] = ScenarioConfig(patch_enabled=True, misinterpret_521=True)
    verdicts = {}
    state_count = {}
    deadlocks = {}
    unreachable = {}
    for name, config in configs.items():
        succ = SuccessorCache(config)
        for pname, formula in props.items():
            verdicts[(name, pname)] = check(config, formula, succ=succ).holds
        summary = explore(config)
        state_count[name] = summary.state_count
        deadlocks[name] = len(summary.deadlocks)
        unreachable[name] = sorted(s.value for s in summary.unreachable_peer_states)
    return BaselineReport(verdicts, state_count, deadlocks, unreachable)


# --- trace serialization -------------------------------------------------

def _message_to_json(m: Optional[Message]) -> Optional[dict]:
    if m is None:
        return None
    out = {"chunk": m.chunk.value, "vtag": m.vtag.value, "itag": m.itag.value}
    if m.tsn is not None:
        out["tsn"] = m.tsn
    return out


def _message_from_json(d: Optional[dict]) -> Optional[Message]:
    if d is None:
        return None
    return Message(
        chunk=ChunkType(d["chunk"]),
        vtag=TagClass(d["vtag"]),
        itag=TagClass(d["itag"]),
        tsn=d.get("tsn"),
    )


def _action_to_json(action: Optional[tuple]) -> Optional[list]:
    if action is None:
        return None
    out = []
    for part in action:
        if isinstance(part, Message):
            out.append({"message": _message_to_json(part)})
        else:
            out.append(part)
    return out


def _action_from_json(parts: Optional[list]) -> Optional[tuple]:
    if parts is None:
        return None
    out = []
    for part in parts:
        if isinstance(part, dict) and "message" in part:
            out.append(_message_from_json(part["message"]))
        else:
            out.append(part)
    return tuple(out)


def label_to_json(label: TransitionLabel) -> dict:
    return {
        "actor": label.actor,
        "kind": label.kind,
        "msg": _message_to_json(label.msg),
        "detail": label.detail,
        "action": _action_to_json(label.action),
    }


def label_from_json(d: dict) -> TransitionLabel:
    return TransitionLabel(
        actor=d["actor"],
        kind=d["kind"],
        msg=_message_from_json(d.get("msg")),
        detail=d.get("detail", ""),
        action=_action_from_json(d.get("action")),
    )


def trace_to_json(lasso: Lasso, config: dict) -> dict:
    return {
        "version": TRACE_SCHEMA_VERSION,
        "config": config,
        "actions": [label_to_json(lbl) for lbl in lasso.labels],
        "lasso_split_index": lasso.cycle_start,
    }


class SchemaError(ValueError):
    pass


def trace_labels_from_json(doc: dict) -> tuple[list[TransitionLabel], int]:
    if not isinstance(doc, dict) or doc.get("version") != TRACE_SCHEMA_VERSION:
        raise SchemaError("unsupported trace version")
    try:
        labels = [label_from_json(d) for d in doc["actions"]]
        split = doc.get("lasso_split_index", 0)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(str(e)) from e
    return labels, split


def replay_labels(config: ScenarioConfig, labels: list[TransitionLabel]) -> list:
    """Walk the label sequence from the initial state; raises SchemaError if
    any label is not an enabled transition where it appears."""
    s = initial_state(config)
    states = [s]
    for i, label in enumerate(labels):
        nxt = None
        for lbl, s2 in successors(config, s):
            if lbl == label:
                nxt = s2
                break
        if nxt is None:
            raise SchemaError(f"step {i}: {label} is not enabled")
        s = nxt
        states.append(s)
    return states


# --- message sequence chart ----------------------------------------------

def render_trace(labels: list[TransitionLabel], states: Optional[list] = None) -> str:
    """Deterministic ASCII message-sequence rendering of a trace."""
    lines = ["step  actor     event"]
    for i, label in enumerate(labels):
        msg = f" {label.msg}" if label.msg is not None else ""
        detail = f" [{label.detail}]" if label.detail else ""
        lines.append(f"{i + 1:>4}  {label.actor:<9} {label.kind}{msg}{detail}")
        if states is not None and i + 1 < len(states) + 1:
            s = states[i + 1] if i + 1 < len(states) else None
            if s is not None:
                a, b = s.peers[0].state.value, s.peers[1].state.value
                lines[-1] += f"  => A={a} B={b}"
    return "\n".join(lines)


# --- CVE reproduction -----------------------------------------------------

CVE_ACTION = (SEND, "b_to_a", Message(ChunkType.INIT, TagClass.N, TagClass.U))


@dataclass
class CveReport:
    found: bool
    shrunk_actions: Optional[tuple]
    trace_text: str
    exhausted_when_patched: Optional[bool] = None


def reproduce_cve(
    patch: bool = False,
    budget: int = 12,
    search_depth: int = 600_000,
    max_depth: int = 2_400_000,
) -> CveReport:
    """Off-Path against the reversed-roles half-open property: unpatched, the
    single-packet INIT reflection attack; patched, a no-attack certificate."""
    props = builtin_properties()
    outcome = run_cell(
        AttackerModelKind.OFF_PATH,
        "phi9",
        props["phi9"],
        patch,
        budget=budget,
        max_attacks=1,
        search_depth=search_depth,
        max_depth=max_depth,
        shrink=True,
    )
    if not outcome.found:
        return CveReport(
            found=False,
            shrunk_actions=None,
            trace_text="no attack exists (search exhausted)"
            if outcome.status == "NoneExhausted"
            else "no attack found within bounds",
            exhausted_when_patched=outcome.status == "NoneExhausted",
        )
    small = outcome.shrunk[0]
    cfg = _synth_config(
        AttackerModelKind.OFF_PATH, "phi9", props["phi9"], patch,
        _attack_phase(AttackerModelKind.OFF_PATH, small), budget=budget,
    )
    from .synthesis import _daisy, _scenario  # deterministic replay scenario

    scenario = _scenario(cfg, _daisy(cfg, script=small.actions))
    verdict = check(scenario, props["phi9"], max_depth=max_depth)
    assert verdict.counterexample is not None
    lasso = verdict.counterexample
    states = list(lasso.states)
    text = render_trace(list(lasso.labels), states)
    return CveReport(found=True, shrunk_actions=small.actions, trace_text=text)


# --- ambiguity walkthrough -------------------------------------------------

class ScheduleInfeasible(Exception):
    """A guided step is not enabled: the model no longer matches the script."""


AMBIGUITY_SCHEDULE: list[tuple[str, str, Optional[str]]] = [
    ("UserA", "command", "Associate"),
    ("PeerB", "deliver", "passive-init"),
    ("PeerA", "deliver", "got-init-ack"),
    ("Attacker", "send", None),
    ("Attacker", "terminate", None),
    ("PeerA", "deliver", "unexpected-init-reply"),
    ("PeerB", "deliver", "ootb-abort-reflect-vtag"),
    ("PeerA", "emit", "cookie-echo"),
    ("PeerA", "deliver", "aborted-by-peer"),
    ("PeerB", "deliver", "passive-establish"),
    ("PeerA", "deliver", "discard-unexpected"),
]


def ambiguity_demo(misinterpret: bool) -> tuple[list[TransitionLabel], list]:
    """Drive the scripted wrong-vtag scenario. With the misreading enabled the
    run ends half-open (A closed, B established); with it disabled the reply
    carries an unknown vtag and the reflex abort step cannot fire."""
    daisy = build_daisy(
        AttackerModelKind.OFF_PATH,
        vocab=vocab_for(AttackerModelKind.OFF_PATH, Phase.ESTABLISHMENT),
        budget=1,
    )
    config = ScenarioConfig(
        patch_enabled=True, misinterpret_521=misinterpret, daisy=daisy
    )
    s = initial_state(config)
    states = [s]
    labels: list[TransitionLabel] = []
    for step_no, (actor, kind, detail) in enumerate(AMBIGUITY_SCHEDULE):
        chosen = None
        for lbl, s2 in successors(config, s):
            if lbl.actor != actor or lbl.kind != kind:
                continue
            if detail is not None and lbl.detail != detail:
                continue
            if actor == "Attacker" and kind == "send":
                if lbl.msg != Message(ChunkType.INIT, TagClass.N, TagClass.U):
                    continue
            chosen = (lbl, s2)
            break
        if chosen is None:
            raise ScheduleInfeasible(
                f"step {step_no + 1} ({actor} {kind} {detail}) is not enabled"
            )
        labels.append(chosen[0])
        s = chosen[1]
        states.append(s)
        if detail == "unexpected-init-reply":
            reply = s.a_to_b[0]
            if reply.vtag is not TagClass.E:
                raise ScheduleInfeasible(
                    f"step {step_no + 1}: reply carries vtag class "
                    f"{reply.vtag.value}, not the association vtag"
                )
    return labels, states
