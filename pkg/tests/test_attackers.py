"""Attacker gadget invariants: vocabulary soundness, replay gadget branches,
termination absorption, and the exclusion trie."""

import random

import pytest

from sctpcheck.attackers import (
    CAPTURE,
    DROP,
    REEMIT,
    SEND,
    TERMINATE,
    AttackerModelKind as M,
    AttackerRuntime,
    InvalidVocabulary,
    Phase,
    Vocabulary,
    build_daisy,
    replay_step,
    vocab_for,
)
from sctpcheck.messages import ChunkType, Message, TagClass, all_valid_messages
from sctpcheck.system import ScenarioConfig, initial_state, successors

E, U, N = TagClass.E, TagClass.U, TagClass.N


def test_offpath_vocab_never_expected():
    for phase in Phase:
        v = vocab_for(M.OFF_PATH, phase)
        assert v.sendable
        for m in v.sendable:
            assert E not in (m.vtag, m.itag), m
            assert m.chunk not in (ChunkType.DATA, ChunkType.COOKIE_ERROR)
        assert not v.receivable


def test_valid_message_models_never_forged():
    for kind in (M.EVIL_SERVER, M.ON_PATH):
        for phase in Phase:
            v = vocab_for(kind, phase)
            for m in v.sendable:
                assert U not in (m.vtag, m.itag), m
                assert m.chunk is not ChunkType.DATA


def test_phase_restriction():
    est = vocab_for(M.OFF_PATH, Phase.ESTABLISHMENT)
    assert all(m.chunk is not ChunkType.SHUTDOWN for m in est.sendable)
    td = vocab_for(M.OFF_PATH, Phase.TEARDOWN)
    assert all(
        m.chunk in (ChunkType.SHUTDOWN, ChunkType.SHUTDOWN_ACK,
                    ChunkType.SHUTDOWN_COMPLETE, ChunkType.ABORT)
        for m in td.sendable
    )
    full = vocab_for(M.EVIL_SERVER, Phase.FULL)
    assert Message(ChunkType.SHUTDOWN, E, N) in full.sendable


def test_replay_sends_nothing_fresh():
    v = vocab_for(M.REPLAY, Phase.FULL)
    assert v.sendable == ()
    with pytest.raises(InvalidVocabulary):
        build_daisy(M.REPLAY, vocab=Vocabulary((Message(ChunkType.ABORT, E, N),),
                                               True, Phase.FULL))


def test_bad_vocab_rejected():
    forged = Vocabulary((Message(ChunkType.ABORT, E, N),), False, Phase.FULL)
    with pytest.raises(InvalidVocabulary):
        build_daisy(M.OFF_PATH, vocab=forged)
    honest = Vocabulary((Message(ChunkType.ABORT, U, N),), True, Phase.FULL)
    with pytest.raises(InvalidVocabulary):
        build_daisy(M.ON_PATH, vocab=honest)


def test_replay_step_branches():
    rt = AttackerRuntime(kind=M.REPLAY, budget_left=5)
    abort = Message(ChunkType.ABORT, E, N)
    # empty memory, nothing observed: nothing to do
    assert replay_step(rt, None) == []
    # capture an observation
    steps = replay_step(rt, abort)
    assert [a[0] for a, _ in steps] == [CAPTURE]
    captured = steps[0][1]
    assert captured.memory == (abort,)
    # with memory: re-emit and drop become available
    steps = replay_step(captured, None)
    verbs = [a[0] for a, _ in steps]
    assert REEMIT in verbs and DROP in verbs
    # re-emit consumes the memorized copy
    reemit_rt = [rt2 for a, rt2 in steps if a[0] == REEMIT][0]
    assert reemit_rt.memory == ()


def test_replay_init_flush():
    abort = Message(ChunkType.ABORT, E, N)
    init = Message(ChunkType.INIT, N, E)
    rt = AttackerRuntime(kind=M.REPLAY, budget_left=5, memory=(abort,))
    steps = replay_step(rt, init)
    flushes = [rt2 for a, rt2 in steps if a[0] == CAPTURE]
    assert flushes and flushes[0].memory == ()
    # an INIT is never stored
    for _, rt2 in steps:
        assert init not in rt2.memory


def test_replay_capacity():
    abort = Message(ChunkType.ABORT, E, N)
    sc = Message(ChunkType.SHUTDOWN_COMPLETE, E, N)
    rt = AttackerRuntime(kind=M.REPLAY, budget_left=9, memory=(abort, sc))
    steps = replay_step(rt, Message(ChunkType.COOKIE_ACK, E, N), capacity=2)
    assert all(a[0] != CAPTURE for a, _ in steps)


def test_termination_absorption_fuzz():
    """Once terminated, the attacker contributes no further actions, for
    every model and random reachable states."""
    rng = random.Random(5)
    for kind in M:
        daisy = build_daisy(kind, vocab=vocab_for(kind, Phase.FULL), budget=4)
        cfg = ScenarioConfig(daisy=daisy)
        for _ in range(2500):
            s = initial_state(cfg)
            terminated_seen = False
            for _ in range(12):
                succ = successors(cfg, s)
                if not succ:
                    break
                if s.attacker is not None and s.attacker.terminated:
                    terminated_seen = True
                    assert all(lbl.actor != "Attacker" for lbl, _ in succ)
                label, s = rng.choice(succ)
            if terminated_seen:
                assert s.attacker.terminated  # absorbing


def test_budget_exhaustion_only_terminate():
    daisy = build_daisy(M.OFF_PATH, budget=0)
    cfg = ScenarioConfig(daisy=daisy)
    s = initial_state(cfg)
    attacker_steps = [x for x in successors(cfg, s) if x[0].actor == "Attacker"]
    assert len(attacker_steps) == 1
    assert attacker_steps[0][0].action == (TERMINATE,)


def test_forbidden_sequence_blocks_exact_termination():
    bad = ((SEND, "b_to_a", Message(ChunkType.ABORT, U, N)),)
    daisy = build_daisy(M.OFF_PATH, budget=2, forbidden_sequences=(bad,))
    cfg = ScenarioConfig(daisy=daisy)
    s = initial_state(cfg)
    # execute the forbidden prefix
    step = [x for x in successors(cfg, s)
            if x[0].actor == "Attacker" and x[0].action == bad[0]]
    assert step
    s = step[0][1]
    actions = [x[0].action for x in successors(cfg, s) if x[0].actor == "Attacker"]
    assert (TERMINATE,) not in actions
    # drain the buffer so a second (diverging) send becomes possible
    (deliver,) = [x for x in successors(cfg, s) if x[0].kind == "deliver"]
    s = deliver[1]
    s = [x for x in successors(cfg, s) if x[0].actor == "Attacker"
         and x[0].action != (TERMINATE,)][0][1]
    actions = [x[0].action for x in successors(cfg, s) if x[0].actor == "Attacker"]
    assert (TERMINATE,) in actions


def test_replay_memory_only_holds_observed_traffic():
    """Replay memory contents always came off the tapped channel since the
    last INIT flush (randomized trace check)."""
    rng = random.Random(23)
    daisy = build_daisy(M.REPLAY, budget=6, replay_tap="a_to_b")
    cfg = ScenarioConfig(daisy=daisy)
    for _ in range(400):
        s = initial_state(cfg)
        observed = []
        for _ in range(25):
            succ = successors(cfg, s)
            if not succ:
                break
            label, s2 = rng.choice(succ)
            if label.actor == "Attacker" and label.kind == "capture":
                observed.append(label.msg)
            if s2.attacker is not None:
                for m in s2.attacker.memory:
                    assert m in observed
            s = s2
