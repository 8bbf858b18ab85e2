"""Endpoint transition relation: the documented examples plus the module
invariants (grammar closure, tag discipline, timer coupling, patch
monotonicity, ordering determinism)."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sctpcheck.messages import ChunkType, Message, TagClass, all_valid_messages
from sctpcheck.peer import (
    ABORTABLE_STATES,
    Deliver,
    IllegalEvent,
    OotbVerdict,
    PeerConfig,
    PeerProcess,
    PeerStateName as S,
    TimerId,
    TimerStatus,
    Timeout,
    UserCmd,
    UserCommand,
    classify_ootb,
    handle_unexpected,
    peer_step,
    pending_emission,
    successors_of_peer,
)

E, U, N = TagClass.E, TagClass.U, TagClass.N


def make_peer(state, config=None, **timer_kwargs):
    cfg = config or PeerConfig()
    p = PeerProcess.initial("A", cfg)
    timers = p.timers
    if state is S.COOKIE_WAIT:
        timers = timers.__class__(
            init_timer=TimerStatus.ACTIVE, init_retransmits_left=1, **timer_kwargs
        )
    elif state is S.COOKIE_ECHOED:
        timers = timers.__class__(
            cookie_timer=TimerStatus.ACTIVE,
            cookie_retries_left=cfg.cookie_max_retries,
            **timer_kwargs,
        )
    elif state in (S.SHUTDOWN_PENDING, S.SHUTDOWN_SENT):
        timers = timers.__class__(
            shutdown_timer=TimerStatus.ACTIVE, shutdown_retransmits_left=1,
            **timer_kwargs,
        )
    import dataclasses

    return dataclasses.replace(p, state=state, timers=timers)


def all_events(config=None):
    events = [Deliver(m) for m in all_valid_messages()]
    events += [UserCmd(c) for c in UserCommand]
    events += [Timeout(t) for t in TimerId]
    return events


def admissible(peer, event):
    if isinstance(event, UserCmd):
        if event.cmd is UserCommand.ASSOCIATE:
            return peer.state is S.CLOSED
        if event.cmd is UserCommand.SHUTDOWN:
            return peer.state is S.ESTABLISHED
        return peer.state in ABORTABLE_STATES
    if isinstance(event, Timeout):
        t = peer.timers
        return {
            TimerId.INIT: t.init_timer,
            TimerId.COOKIE: t.cookie_timer,
            TimerId.SHUTDOWN: t.shutdown_timer,
        }[event.timer] is TimerStatus.ACTIVE
    return True


# --- classify_ootb -------------------------------------------------------

def test_ootb_init_patch_toggle():
    est_off = make_peer(S.ESTABLISHED, PeerConfig(patch_enabled=False))
    est_on = make_peer(S.ESTABLISHED, PeerConfig(patch_enabled=True))
    bad_init = Message(ChunkType.INIT, N, U)
    assert classify_ootb(est_on, bad_init) is OotbVerdict.DISCARD
    assert (
        classify_ootb(est_off, bad_init)
        is OotbVerdict.RESPOND_ABORT_WITH_ASSOC_VTAG
    )


def test_ootb_examples():
    est = make_peer(S.ESTABLISHED)
    assert classify_ootb(est, Message(ChunkType.DATA, E, N)) is OotbVerdict.NOT_OOTB
    assert classify_ootb(est, Message(ChunkType.ABORT, U, N)) is OotbVerdict.DISCARD
    assert classify_ootb(est, Message(ChunkType.COOKIE_ECHO, U, N)) is OotbVerdict.DISCARD
    assert classify_ootb(est, Message(ChunkType.SHUTDOWN_COMPLETE, U, N)) is OotbVerdict.DISCARD


def test_patch_monotonicity_exhaustive():
    # With the patch on, no state/message pair answers OOTB with an Abort.
    cfg = PeerConfig(patch_enabled=True)
    for state in S:
        peer = make_peer(state, cfg)
        for m in all_valid_messages():
            assert classify_ootb(peer, m) is not OotbVerdict.RESPOND_ABORT_WITH_ASSOC_VTAG


# --- handle_unexpected ----------------------------------------------------

def test_unexpected_init_reply_tags():
    ce = make_peer(S.COOKIE_ECHOED, PeerConfig(misinterpret_521=False))
    outs = handle_unexpected(ce, Message(ChunkType.INIT, N, U))
    assert len(outs) == 1
    assert outs[0].emissions == (Message(ChunkType.INIT_ACK, U, E),)
    assert outs[0].peer.state is S.COOKIE_ECHOED

    ce_mis = make_peer(S.COOKIE_ECHOED, PeerConfig(misinterpret_521=True))
    outs = handle_unexpected(ce_mis, Message(ChunkType.INIT, N, U))
    assert outs[0].emissions == (Message(ChunkType.INIT_ACK, E, E),)


def test_unexpected_cookie_ack_discard():
    est = make_peer(S.ESTABLISHED)
    outs = handle_unexpected(est, Message(ChunkType.COOKIE_ACK, E, N))
    assert len(outs) == 1
    assert outs[0].emissions == ()
    assert outs[0].peer.state is S.ESTABLISHED


def test_stray_shutdown_ack_gets_complete():
    closed = make_peer(S.CLOSED)
    outs = handle_unexpected(closed, Message(ChunkType.SHUTDOWN_ACK, E, N))
    assert outs[0].emissions == (Message(ChunkType.SHUTDOWN_COMPLETE, E, N),)
    assert outs[0].peer.state is S.CLOSED


# --- peer_step examples ---------------------------------------------------

def test_closed_init_self_loop():
    closed = make_peer(S.CLOSED)
    out = peer_step(closed, Deliver(Message(ChunkType.INIT, N, E)))
    assert out.peer.state is S.CLOSED
    assert out.emissions == (Message(ChunkType.INIT_ACK, E, E),)


def test_user_shutdown_enters_pending():
    est = make_peer(S.ESTABLISHED)
    out = peer_step(est, UserCmd(UserCommand.SHUTDOWN))
    assert out.peer.state is S.SHUTDOWN_PENDING
    assert out.emissions == ()
    assert pending_emission(out.peer).emissions[0].chunk is ChunkType.SHUTDOWN


def test_shutdown_ack_sent_completes():
    sas = make_peer(S.SHUTDOWN_ACK_SENT)
    out = peer_step(sas, Deliver(Message(ChunkType.SHUTDOWN_COMPLETE, E, N)))
    assert out.peer.state is S.CLOSED


def test_cookie_error_three_outcomes():
    ce = make_peer(S.COOKIE_ECHOED)
    outs = successors_of_peer(ce, Deliver(Message(ChunkType.COOKIE_ERROR, E, N)))
    assert len(outs) == 3
    stay, stay_reinit, back = outs
    assert stay.peer.state is S.COOKIE_ECHOED and stay.emissions == ()
    assert stay_reinit.peer.state is S.COOKIE_ECHOED
    assert stay_reinit.emissions == (Message(ChunkType.INIT, N, E),)
    assert back.peer.state is S.COOKIE_WAIT
    assert back.emissions == (Message(ChunkType.INIT, N, E),)


def test_abort_applies_everywhere_but_closed():
    for state in S:
        peer = make_peer(state)
        outs = successors_of_peer(peer, Deliver(Message(ChunkType.ABORT, E, N)))
        assert len(outs) == 1
        if state is S.CLOSED:
            assert outs[0].peer.state is S.CLOSED
        else:
            assert outs[0].peer.state is S.CLOSED
            assert not outs[0].aborted  # only user aborts set the flag


def test_ootb_discard_is_singleton():
    closed = make_peer(S.CLOSED)
    outs = successors_of_peer(closed, Deliver(Message(ChunkType.DATA, U, N)))
    assert len(outs) == 1
    assert outs[0].peer == closed and outs[0].emissions == ()


def test_illegal_events_raise():
    est = make_peer(S.ESTABLISHED)
    with pytest.raises(IllegalEvent):
        successors_of_peer(est, UserCmd(UserCommand.ASSOCIATE))
    with pytest.raises(IllegalEvent):
        successors_of_peer(est, Timeout(TimerId.INIT))
    closed = make_peer(S.CLOSED)
    with pytest.raises(IllegalEvent):
        successors_of_peer(closed, UserCmd(UserCommand.SHUTDOWN))


# --- invariants over the whole table ---------------------------------------

def iter_peers():
    for patch in (False, True):
        for mis in (False, True):
            cfg = PeerConfig(patch_enabled=patch, misinterpret_521=mis)
            for state in S:
                yield make_peer(state, cfg)


def test_grammar_closure_exhaustive():
    from sctpcheck.messages import validate_message

    for peer in iter_peers():
        for event in all_events():
            if not admissible(peer, event):
                continue
            for out in successors_of_peer(peer, event):
                for m in out.emissions:
                    assert validate_message(m), (peer.state, event, m)
            pend = pending_emission(peer)
            if pend:
                for m in pend.emissions:
                    assert validate_message(m)


def test_tag_discipline_exhaustive():
    # No state-changing acceptance of a U-vtag non-INIT message.
    for peer in iter_peers():
        for m in all_valid_messages():
            if m.chunk is ChunkType.INIT or m.vtag is not U:
                continue
            for out in successors_of_peer(peer, Deliver(m)):
                assert out.peer.state is peer.state, (peer.state, m, out)


def test_timer_coupling_exhaustive():
    # After any step, cookie timer active iff in CookieEchoed; init timer
    # only in CookieWait; shutdown timer only in ShutdownPending/Sent.
    def check_bank(p):
        t = p.timers
        assert (t.cookie_timer is TimerStatus.ACTIVE) == (p.state is S.COOKIE_ECHOED)
        if t.init_timer is TimerStatus.ACTIVE:
            assert p.state is S.COOKIE_WAIT
        if t.shutdown_timer is TimerStatus.ACTIVE:
            assert p.state in (S.SHUTDOWN_PENDING, S.SHUTDOWN_SENT)

    for peer in iter_peers():
        for event in all_events():
            if not admissible(peer, event):
                continue
            for out in successors_of_peer(peer, event):
                check_bank(out.peer)
            pend = pending_emission(peer)
            if pend:
                check_bank(pend.peer)


def test_successor_order_deterministic():
    for peer in iter_peers():
        for event in all_events():
            if not admissible(peer, event):
                continue
            first = successors_of_peer(peer, event)
            again = successors_of_peer(peer, event)
            assert first == again


@settings(max_examples=300)
@given(
    state=st.sampled_from(list(S)),
    chunk=st.sampled_from(list(ChunkType)),
    vtag=st.sampled_from(list(TagClass)),
    itag=st.sampled_from(list(TagClass)),
    patch=st.booleans(),
)
def test_delivery_total_over_valid_messages(state, chunk, vtag, itag, patch):
    from sctpcheck.messages import validate_message

    m = Message(chunk, vtag, itag)
    peer = make_peer(state, PeerConfig(patch_enabled=patch))
    if not validate_message(m):
        with pytest.raises(IllegalEvent):
            successors_of_peer(peer, Deliver(m))
        return
    outs = successors_of_peer(peer, Deliver(m))
    assert isinstance(outs, tuple)
    for out in outs:
        assert len(out.emissions) <= 2
