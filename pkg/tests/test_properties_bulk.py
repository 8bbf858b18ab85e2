"""Randomized property suites at the ten-thousand-case scale, one per module
invariant family (criterion: >= 10^4 cases each). The per-case work is kept
tiny so the whole file stays in tens of seconds."""

import random

from sctpcheck.attackers import AttackerModelKind as M, Phase, build_daisy, vocab_for
from sctpcheck.messages import (
    ChunkType,
    Message,
    TagClass,
    all_valid_messages,
    validate_message,
)
from sctpcheck.peer import (
    Deliver,
    IllegalEvent,
    PeerConfig,
    PeerStateName as S,
    TimerStatus,
    successors_of_peer,
    pending_emission,
)
from sctpcheck.system import ScenarioConfig, initial_state, successors

N_CASES = 10_000


def _random_peer(rng, config):
    from tests.test_peer import make_peer

    return make_peer(rng.choice(list(S)), config)


def test_grammar_closure_randomized_10k():
    rng = random.Random(101)
    msgs = all_valid_messages()
    configs = [PeerConfig(patch_enabled=p, misinterpret_521=m)
               for p in (False, True) for m in (False, True)]
    for _ in range(N_CASES):
        peer = _random_peer(rng, rng.choice(configs))
        out_sets = successors_of_peer(peer, Deliver(rng.choice(msgs)))
        for out in out_sets:
            for emitted in out.emissions:
                assert validate_message(emitted)
        pend = pending_emission(peer)
        if pend:
            assert all(validate_message(e) for e in pend.emissions)


def test_tag_discipline_randomized_10k():
    rng = random.Random(202)
    forged = [m for m in all_valid_messages()
              if m.vtag is TagClass.U and m.chunk is not ChunkType.INIT]
    configs = [PeerConfig(patch_enabled=p) for p in (False, True)]
    for _ in range(N_CASES):
        peer = _random_peer(rng, rng.choice(configs))
        msg = rng.choice(forged)
        for out in successors_of_peer(peer, Deliver(msg)):
            assert out.peer.state is peer.state


def test_fifo_lossless_random_walks_10k_steps():
    rng = random.Random(303)
    cfg = ScenarioConfig(patch_enabled=False)
    steps_done = 0
    while steps_done < N_CASES:
        s = initial_state(cfg)
        sent = {"a_to_b": [], "b_to_a": []}
        for _ in range(50):
            succ = successors(cfg, s)
            if not succ:
                break
            _, s2 = rng.choice(succ)
            for direction in ("a_to_b", "b_to_a"):
                before, after = getattr(s, direction), getattr(s2, direction)
                if len(after) > len(before):
                    sent[direction].append(after[-1])
                elif len(after) < len(before):
                    assert before[0] == sent[direction].pop(0)
            s = s2
            steps_done += 1


def test_ost_correctness_random_walks_10k_steps():
    rng = random.Random(404)
    daisy = build_daisy(M.OFF_PATH, budget=3)
    cfg = ScenarioConfig(patch_enabled=False, daisy=daisy)
    steps_done = 0
    while steps_done < N_CASES:
        s = initial_state(cfg)
        for _ in range(50):
            succ = successors(cfg, s)
            if not succ:
                break
            _, s2 = rng.choice(succ)
            assert s2.ost == (s.peers[0].state, s.peers[1].state)
            s = s2
            steps_done += 1


def test_vocabulary_soundness_fuzz_10k():
    rng = random.Random(505)
    daisies = {
        kind: build_daisy(kind, vocab=vocab_for(kind, Phase.FULL), budget=6,
                          replay_capacity=1)
        for kind in M
    }
    emitted = 0
    while emitted < N_CASES:
        kind = rng.choice(list(M))
        cfg = ScenarioConfig(daisy=daisies[kind])
        s = initial_state(cfg)
        for _ in range(20):
            succ = successors(cfg, s)
            if not succ:
                break
            label, s2 = rng.choice(succ)
            if label.actor == "Attacker" and label.kind in ("send", "inject", "reemit"):
                m = label.msg
                emitted += 1
                assert validate_message(m)
                if kind is M.OFF_PATH:
                    assert TagClass.E not in (m.vtag, m.itag)
                elif kind in (M.EVIL_SERVER, M.ON_PATH):
                    assert TagClass.U not in (m.vtag, m.itag)
            s = s2


def test_termination_absorption_fuzz_10k():
    rng = random.Random(606)
    post_termination_steps = 0
    daisies = {kind: build_daisy(kind, budget=2, replay_capacity=1) for kind in M}
    while post_termination_steps < N_CASES:
        kind = rng.choice(list(M))
        cfg = ScenarioConfig(daisy=daisies[kind])
        s = initial_state(cfg)
        for _ in range(25):
            succ = successors(cfg, s)
            if not succ:
                break
            if s.attacker is not None and s.attacker.terminated:
                assert all(lbl.actor != "Attacker" for lbl, _ in succ)
                post_termination_steps += 1
            _, s = rng.choice(succ)


def test_timer_coupling_random_walks_10k_steps():
    rng = random.Random(707)
    cfg = ScenarioConfig(patch_enabled=True)
    steps_done = 0
    while steps_done < N_CASES:
        s = initial_state(cfg)
        for _ in range(60):
            succ = successors(cfg, s)
            if not succ:
                break
            _, s = rng.choice(succ)
            steps_done += 1
            for p in s.peers:
                t = p.timers
                assert (t.cookie_timer is TimerStatus.ACTIVE) == (
                    p.state is S.COOKIE_ECHOED
                )
                if t.init_timer is TimerStatus.ACTIVE:
                    assert p.state is S.COOKIE_WAIT
                if t.shutdown_timer is TimerStatus.ACTIVE:
                    assert p.state in (S.SHUTDOWN_PENDING, S.SHUTDOWN_SENT)
