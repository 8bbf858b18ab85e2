"""Single-endpoint state machine: states, timers, OOTB classification,
unexpected-packet handling, and the per-peer transition relation.

Conventions baked into the transition relation:

* ``COOKIE_WAIT_INTERMEDIARY``, ``SHUTDOWN_PENDING`` and ``SHUTDOWN_RECEIVED``
  are *pending-emission* states: the peer owes the network exactly one message
  (CookieEcho / Shutdown / ShutdownAck) and, until it gets out, only processes
  deliveries that do not require a reply of their own.
* A graceless ABORT chunk with an expected vtag closes any non-CLOSED peer; it
  never sets the ``aborted`` flag, which tracks user-issued aborts only.
* The RFC 9260 patch toggles what happens to an out-of-the-blue INIT carrying
  a zero/unknown itag: silent discard when patched, an Abort reflection that
  carries the association vtag when not (the CVE-2021-3772 behavior). The
  reflecting peer keeps its own association.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Union

from .messages import TSN_MAX, ChunkType, Message, TagClass, validate_message


class PeerStateName(enum.Enum):
    CLOSED = "Closed"
    COOKIE_WAIT = "CookieWait"
    COOKIE_WAIT_INTERMEDIARY = "IntermediaryCookieWait"
    COOKIE_ECHOED = "CookieEchoed"
    ESTABLISHED = "Established"
    SHUTDOWN_PENDING = "ShutdownPending"
    SHUTDOWN_SENT = "ShutdownSent"
    SHUTDOWN_RECEIVED = "ShutdownReceived"
    SHUTDOWN_ACK_SENT = "ShutdownAckSent"


S = PeerStateName

# States in which the peer owes a single queued emission before it may rest.
PENDING_EMISSION_STATES = frozenset(
    {S.COOKIE_WAIT_INTERMEDIARY, S.SHUTDOWN_PENDING, S.SHUTDOWN_RECEIVED}
)

# Mid-teardown pending states defer any delivery that would require a reply
# of its own; the queued Shutdown/ShutdownAck goes out first. The implicit
# establishment state behaves like CookieWait and may answer interleaving
# INITs before its CookieEcho leaves.
DEFERRING_STATES = frozenset({S.SHUTDOWN_PENDING, S.SHUTDOWN_RECEIVED})

# States in which the user may issue a graceless abort. Pending-emission
# states are excluded: the peer is mid-transition and cannot take commands.
ABORTABLE_STATES = frozenset(
    {S.COOKIE_WAIT, S.COOKIE_ECHOED, S.ESTABLISHED, S.SHUTDOWN_SENT, S.SHUTDOWN_ACK_SENT}
)


class TimerStatus(enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass(frozen=True)
class TimerBank:
    init_timer: TimerStatus = TimerStatus.INACTIVE
    cookie_timer: TimerStatus = TimerStatus.INACTIVE
    shutdown_timer: TimerStatus = TimerStatus.INACTIVE
    cookie_retries_left: int = 0
    # Single-shot retransmission credit for the init/shutdown timers.
    init_retransmits_left: int = 0
    shutdown_retransmits_left: int = 0

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(
            (self.init_timer, self.cookie_timer, self.shutdown_timer,
             self.cookie_retries_left, self.init_retransmits_left,
             self.shutdown_retransmits_left)))

    def __hash__(self) -> int:
        return self._hash


@dataclass(frozen=True)
class PeerConfig:
    patch_enabled: bool = False
    misinterpret_521: bool = False
    tsn_enabled: bool = False
    cookie_max_retries: int = 2
    disable_timers: bool = False

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(
            (self.patch_enabled, self.misinterpret_521, self.tsn_enabled,
             self.cookie_max_retries, self.disable_timers)))

    def __hash__(self) -> int:
        return self._hash


@dataclass(frozen=True)
class PeerProcess:
    id: str  # "A" or "B"
    state: PeerStateName
    timers: TimerBank
    config: PeerConfig
    local_tsn: Optional[int] = None
    expected_peer_tsn: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(
            (self.id, self.state, self.timers, self.config,
             self.local_tsn, self.expected_peer_tsn)))

    def __hash__(self) -> int:
        return self._hash

    @classmethod
    def initial(cls, peer_id: str, config: PeerConfig) -> "PeerProcess":
        return cls(
            id=peer_id,
            state=S.CLOSED,
            timers=TimerBank(),
            config=config,
            local_tsn=0 if config.tsn_enabled else None,
            expected_peer_tsn=None,
        )


class UserCommand(enum.Enum):
    ASSOCIATE = "Associate"
    ABORT = "Abort"
    SHUTDOWN = "Shutdown"


class TimerId(enum.Enum):
    INIT = "init"
    COOKIE = "cookie"
    SHUTDOWN = "shutdown"


@dataclass(frozen=True)
class Deliver:
    msg: Message


@dataclass(frozen=True)
class UserCmd:
    cmd: UserCommand


@dataclass(frozen=True)
class Timeout:
    timer: TimerId


PeerEvent = Union[Deliver, UserCmd, Timeout]


@dataclass(frozen=True)
class PeerOutput:
    peer: PeerProcess
    emissions: tuple[Message, ...] = ()
    aborted: bool = False
    timed_out: bool = False
    note: str = ""

    @property
    def new_state(self) -> PeerStateName:
        return self.peer.state


class IllegalEvent(Exception):
    """The event is not admissible for this peer (harness misuse)."""


class OotbVerdict(enum.Enum):
    NOT_OOTB = "not-ootb"
    DISCARD = "discard"
    RESPOND_ABORT_WITH_ASSOC_VTAG = "respond-abort-assoc-vtag"
    # RFC 8.4(8)-style reflection used only for an INIT_ACK arriving at a
    # CLOSED peer: the Abort reuses the received packet's vtag class.
    RESPOND_ABORT_REFLECT_VTAG = "respond-abort-reflect-vtag"


# States whose peer knows the partner's live vtag, so a reflected Abort can
# carry the expected class.
_KNOWS_ASSOC_VTAG = frozenset(
    {S.COOKIE_ECHOED, S.ESTABLISHED, S.SHUTDOWN_PENDING, S.SHUTDOWN_SENT,
     S.SHUTDOWN_RECEIVED, S.SHUTDOWN_ACK_SENT}
)


def classify_ootb(peer: PeerProcess, msg: Message) -> OotbVerdict:
    """Out-of-the-blue classification, rules 2-5 of the modeled handling.

    Unicast filtering (rule 1) is out of scope: all peers are unicast.
    """
    if not validate_message(msg):
        raise IllegalEvent(f"grammar-invalid message {msg}")
    if msg.chunk is ChunkType.INIT:
        if msg.itag is TagClass.U:
            # A zero/unknown-itag INIT is attributable to a forming
            # association mid-handshake, where duplicate-INIT handling
            # applies instead of the OOTB rules.
            if peer.state in (S.COOKIE_WAIT, S.COOKIE_WAIT_INTERMEDIARY, S.COOKIE_ECHOED):
                return OotbVerdict.NOT_OOTB
            if peer.config.patch_enabled:
                return OotbVerdict.DISCARD
            return OotbVerdict.RESPOND_ABORT_WITH_ASSOC_VTAG
        return OotbVerdict.NOT_OOTB
    if msg.chunk is ChunkType.INIT_ACK:
        if peer.state is S.CLOSED:
            return OotbVerdict.RESPOND_ABORT_REFLECT_VTAG
        if msg.vtag is TagClass.U or msg.itag is TagClass.U:
            return OotbVerdict.DISCARD
        return OotbVerdict.NOT_OOTB
    if msg.vtag is TagClass.U:
        return OotbVerdict.DISCARD
    return OotbVerdict.NOT_OOTB


def _stamp(peer: PeerProcess, chunk: ChunkType, vtag: TagClass, itag: TagClass) -> Message:
    tsn = peer.local_tsn if peer.config.tsn_enabled else None
    return Message(chunk, vtag, itag, tsn)


def _to_closed(peer: PeerProcess) -> PeerProcess:
    """Tear down to CLOSED: timers stop, peer-tsn forgotten, own tsn advances."""
    local = peer.local_tsn
    if peer.config.tsn_enabled and local is not None:
        local = min(local + 1, TSN_MAX)
    return replace(
        peer,
        state=S.CLOSED,
        timers=TimerBank(),
        local_tsn=local,
        expected_peer_tsn=None,
    )


def _learn_peer_tsn(peer: PeerProcess, msg: Message) -> PeerProcess:
    if peer.config.tsn_enabled and msg.tsn is not None:
        return replace(peer, expected_peer_tsn=msg.tsn)
    return peer


def _abort_tsn_ok(peer: PeerProcess, msg: Message) -> bool:
    """A graceless Abort is honored unless a TSN is established and mismatched."""
    if not peer.config.tsn_enabled:
        return True
    if peer.expected_peer_tsn is None or msg.tsn is None:
        return True
    return msg.tsn == peer.expected_peer_tsn


@lru_cache(maxsize=None)
def pending_emission(peer: PeerProcess) -> Optional[PeerOutput]:
    """The queued send owed by a pending-emission state, with the peer as it
    will be once the message is on the wire. None for resting states."""
    if peer.state is S.COOKIE_WAIT_INTERMEDIARY:
        cookie_started = replace(
            peer,
            state=S.COOKIE_ECHOED,
            timers=TimerBank(
                cookie_timer=TimerStatus.ACTIVE,
                cookie_retries_left=peer.config.cookie_max_retries,
            ),
        )
        return PeerOutput(
            cookie_started,
            (_stamp(peer, ChunkType.COOKIE_ECHO, TagClass.E, TagClass.N),),
            note="cookie-echo",
        )
    if peer.state is S.SHUTDOWN_PENDING:
        sent = replace(peer, state=S.SHUTDOWN_SENT)
        return PeerOutput(
            sent, (_stamp(peer, ChunkType.SHUTDOWN, TagClass.E, TagClass.N),),
            note="shutdown",
        )
    if peer.state is S.SHUTDOWN_RECEIVED:
        sent = replace(peer, state=S.SHUTDOWN_ACK_SENT, timers=TimerBank())
        return PeerOutput(
            sent, (_stamp(peer, ChunkType.SHUTDOWN_ACK, TagClass.E, TagClass.N),),
            note="shutdown-ack",
        )
    return None


def _unexpected_init_outputs(peer: PeerProcess, msg: Message) -> list[PeerOutput]:
    """Duplicate/unexpected INIT: answer with an InitAck whose vtag copies the
    received itag. Under the misread of the duplicate-INIT text the peer uses
    its own original itag instead, i.e. the association's expected class."""
    if peer.config.misinterpret_521:
        reply_vtag = TagClass.E
    else:
        reply_vtag = msg.itag
    reply = _stamp(peer, ChunkType.INIT_ACK, reply_vtag, TagClass.E)
    return [PeerOutput(peer, (reply,), note="unexpected-init-reply")]


def handle_unexpected(peer: PeerProcess, msg: Message) -> list[PeerOutput]:
    """Unexpected-packet handling for attributable (not OOTB) messages with no
    matching expected edge. Deterministic cases yield one output; the
    duplicate-cookie cases are nondeterministic."""
    chunk = msg.chunk
    if chunk is ChunkType.INIT:
        if peer.state is S.SHUTDOWN_ACK_SENT:
            # Lost-ShutdownComplete recovery: re-offer the ShutdownAck so the
            # restarting peer answers with ShutdownComplete and frees us.
            reply = _stamp(peer, ChunkType.SHUTDOWN_ACK, TagClass.E, TagClass.N)
            return [PeerOutput(peer, (reply,), note="sas-init-shutdown-ack")]
        return _unexpected_init_outputs(peer, msg)
    if chunk is ChunkType.COOKIE_ECHO:
        outs: list[PeerOutput] = [
            PeerOutput(
                peer,
                (_stamp(peer, ChunkType.COOKIE_ERROR, TagClass.E, TagClass.N),),
                note="cookie-expired",
            )
        ]
        if peer.state is S.COOKIE_ECHOED:
            # Initialization collision: adopt the peer's tag, go established.
            outs.append(
                PeerOutput(replace(peer, state=S.ESTABLISHED, timers=TimerBank()),
                           note="cookie-collision")
            )
        if peer.state is S.SHUTDOWN_RECEIVED:
            # Fresh parameters mid-teardown: a new association forms.
            outs.append(
                PeerOutput(replace(peer, state=S.ESTABLISHED, timers=TimerBank()),
                           note="cookie-fresh")
            )
        return outs
    if chunk is ChunkType.SHUTDOWN_ACK:
        reply = _stamp(peer, ChunkType.SHUTDOWN_COMPLETE, msg.vtag, TagClass.N)
        return [PeerOutput(peer, (reply,), note="stray-shutdown-ack")]
    return [PeerOutput(peer, note="discard-unexpected")]


def _expected_edge(peer: PeerProcess, msg: Message) -> Optional[list[PeerOutput]]:
    """The ordinary receive edges of the state machine. None when the message
    is not the one this state is waiting for."""
    st, chunk = peer.state, msg.chunk
    if st is S.CLOSED:
        if chunk is ChunkType.INIT and msg.vtag is TagClass.N and msg.itag is TagClass.E:
            learned = _learn_peer_tsn(peer, msg)
            reply = _stamp(learned, ChunkType.INIT_ACK, TagClass.E, TagClass.E)
            return [PeerOutput(learned, (reply,), note="passive-init")]
        if chunk is ChunkType.COOKIE_ECHO and msg.vtag is TagClass.E:
            est = replace(_learn_peer_tsn(peer, msg), state=S.ESTABLISHED, timers=TimerBank())
            reply = _stamp(est, ChunkType.COOKIE_ACK, TagClass.E, TagClass.N)
            return [PeerOutput(est, (reply,), note="passive-establish")]
        return None
    if st is S.COOKIE_WAIT:
        if chunk is ChunkType.INIT_ACK and msg.vtag is TagClass.E and msg.itag is TagClass.E:
            inter = replace(
                _learn_peer_tsn(peer, msg),
                state=S.COOKIE_WAIT_INTERMEDIARY,
                timers=TimerBank(),
            )
            return [PeerOutput(inter, note="got-init-ack")]
        return None
    if st is S.COOKIE_ECHOED:
        if chunk is ChunkType.COOKIE_ACK and msg.vtag is TagClass.E:
            return [PeerOutput(replace(peer, state=S.ESTABLISHED, timers=TimerBank()),
                               note="establish")]
        if chunk is ChunkType.COOKIE_ERROR and msg.vtag is TagClass.E:
            stay = PeerOutput(peer, note="cookie-error-wait")
            stay_reinit = PeerOutput(
                peer, (_stamp(peer, ChunkType.INIT, TagClass.N, TagClass.E),),
                note="cookie-error-reinit",
            )
            back = replace(
                peer,
                state=S.COOKIE_WAIT,
                timers=TimerBank(init_timer=TimerStatus.ACTIVE, init_retransmits_left=1),
            )
            back_out = PeerOutput(
                back, (_stamp(peer, ChunkType.INIT, TagClass.N, TagClass.E),),
                note="cookie-error-restart",
            )
            return [stay, stay_reinit, back_out]
        return None
    if st is S.ESTABLISHED:
        if chunk is ChunkType.SHUTDOWN and msg.vtag is TagClass.E:
            pending = replace(
                peer,
                state=S.SHUTDOWN_RECEIVED,
                timers=TimerBank(),
            )
            return [PeerOutput(pending, note="got-shutdown")]
        return None
    if st is S.SHUTDOWN_SENT:
        if chunk is ChunkType.SHUTDOWN_ACK and msg.vtag is TagClass.E:
            closed = _to_closed(peer)
            reply = _stamp(peer, ChunkType.SHUTDOWN_COMPLETE, TagClass.E, TagClass.N)
            return [PeerOutput(closed, (reply,), note="teardown-complete")]
        if chunk is ChunkType.SHUTDOWN and msg.vtag is TagClass.E:
            sas = replace(peer, state=S.SHUTDOWN_ACK_SENT, timers=TimerBank())
            reply = _stamp(peer, ChunkType.SHUTDOWN_ACK, TagClass.E, TagClass.N)
            return [PeerOutput(sas, (reply,), note="simultaneous-shutdown")]
        return None
    if st is S.SHUTDOWN_ACK_SENT:
        if chunk is ChunkType.SHUTDOWN_COMPLETE and msg.vtag is TagClass.E:
            return [PeerOutput(_to_closed(peer), note="closed")]
        if chunk is ChunkType.SHUTDOWN_ACK and msg.vtag is TagClass.E:
            closed = _to_closed(peer)
            reply = _stamp(peer, ChunkType.SHUTDOWN_COMPLETE, TagClass.E, TagClass.N)
            return [PeerOutput(closed, (reply,), note="closed-replying")]
        return None
    return None


def _deliver_outputs(peer: PeerProcess, msg: Message) -> list[PeerOutput]:
    # Graceless abort cuts through every non-CLOSED state.
    if msg.chunk is ChunkType.ABORT:
        if msg.vtag is TagClass.U or peer.state is S.CLOSED:
            return [PeerOutput(peer, note="discard-abort")]
        if not _abort_tsn_ok(peer, msg):
            return [PeerOutput(peer, note="discard-stale-abort")]
        return [PeerOutput(_to_closed(peer), note="aborted-by-peer")]

    expected = _expected_edge(peer, msg)
    if expected is not None:
        return expected

    verdict = classify_ootb(peer, msg)
    if verdict is OotbVerdict.DISCARD:
        return [PeerOutput(peer, note="ootb-discard")]
    if verdict is OotbVerdict.RESPOND_ABORT_WITH_ASSOC_VTAG:
        vtag = TagClass.E if peer.state in _KNOWS_ASSOC_VTAG else TagClass.U
        reply = _stamp(peer, ChunkType.ABORT, vtag, TagClass.N)
        return [PeerOutput(peer, (reply,), note="ootb-abort-reflection")]
    if verdict is OotbVerdict.RESPOND_ABORT_REFLECT_VTAG:
        reply = _stamp(peer, ChunkType.ABORT, msg.vtag, TagClass.N)
        return [PeerOutput(peer, (reply,), note="ootb-abort-reflect-vtag")]
    return handle_unexpected(peer, msg)


def _timeout_outputs(peer: PeerProcess, timer: TimerId) -> list[PeerOutput]:
    t = peer.timers
    if timer is TimerId.INIT:
        if t.init_timer is not TimerStatus.ACTIVE or peer.state is not S.COOKIE_WAIT:
            raise IllegalEvent("init timeout while timer inactive")
        outs: list[PeerOutput] = []
        if t.init_retransmits_left > 0:
            spent = replace(
                peer,
                timers=replace(t, init_retransmits_left=t.init_retransmits_left - 1),
            )
            outs.append(
                PeerOutput(
                    spent, (_stamp(peer, ChunkType.INIT, TagClass.N, TagClass.E),),
                    timed_out=True, note="init-retransmit",
                )
            )
        outs.append(PeerOutput(_to_closed(peer), timed_out=True, note="init-give-up"))
        return outs
    if timer is TimerId.COOKIE:
        if t.cookie_timer is not TimerStatus.ACTIVE or peer.state is not S.COOKIE_ECHOED:
            raise IllegalEvent("cookie timeout while timer inactive")
        outs = []
        if t.cookie_retries_left > 0:
            retried = replace(
                peer, timers=replace(t, cookie_retries_left=t.cookie_retries_left - 1)
            )
            outs.append(
                PeerOutput(
                    retried,
                    (_stamp(peer, ChunkType.COOKIE_ECHO, TagClass.E, TagClass.N),),
                    timed_out=True, note="cookie-retry",
                )
            )
        outs.append(PeerOutput(_to_closed(peer), timed_out=True, note="cookie-give-up"))
        return outs
    if timer is TimerId.SHUTDOWN:
        if t.shutdown_timer is not TimerStatus.ACTIVE or peer.state not in (
            S.SHUTDOWN_PENDING,
            S.SHUTDOWN_SENT,
        ):
            raise IllegalEvent("shutdown timeout while timer inactive")
        outs = []
        if peer.state is S.SHUTDOWN_SENT and t.shutdown_retransmits_left > 0:
            spent = replace(
                peer,
                timers=replace(
                    t, shutdown_retransmits_left=t.shutdown_retransmits_left - 1
                ),
            )
            outs.append(
                PeerOutput(
                    spent, (_stamp(peer, ChunkType.SHUTDOWN, TagClass.E, TagClass.N),),
                    timed_out=True, note="shutdown-retransmit",
                )
            )
        outs.append(PeerOutput(_to_closed(peer), timed_out=True, note="shutdown-give-up"))
        return outs
    raise IllegalEvent(f"unknown timer {timer}")


def _usercmd_outputs(peer: PeerProcess, cmd: UserCommand) -> list[PeerOutput]:
    if cmd is UserCommand.ASSOCIATE:
        if peer.state is not S.CLOSED:
            raise IllegalEvent("Associate outside Closed")
        started = replace(
            peer,
            state=S.COOKIE_WAIT,
            timers=TimerBank(init_timer=TimerStatus.ACTIVE, init_retransmits_left=1),
        )
        return [PeerOutput(
            started, (_stamp(peer, ChunkType.INIT, TagClass.N, TagClass.E),),
            note="associate",
        )]
    if cmd is UserCommand.SHUTDOWN:
        if peer.state is not S.ESTABLISHED:
            raise IllegalEvent("Shutdown outside Established")
        pending = replace(
            peer,
            state=S.SHUTDOWN_PENDING,
            timers=TimerBank(shutdown_timer=TimerStatus.ACTIVE, shutdown_retransmits_left=1),
        )
        return [PeerOutput(pending, note="user-shutdown")]
    if cmd is UserCommand.ABORT:
        if peer.state not in ABORTABLE_STATES:
            raise IllegalEvent("Abort outside an active association")
        reply = _stamp(peer, ChunkType.ABORT, TagClass.E, TagClass.N)
        return [PeerOutput(_to_closed(peer), (reply,), aborted=True, note="user-abort")]
    raise IllegalEvent(f"unknown command {cmd}")


@lru_cache(maxsize=None)
def successors_of_peer(peer: PeerProcess, event: PeerEvent) -> tuple[PeerOutput, ...]:
    """Every admissible outcome of handing `event` to `peer`, in a fixed
    order. Empty when a pending-emission state must defer the delivery."""
    if isinstance(event, Deliver):
        if not validate_message(event.msg):
            raise IllegalEvent(f"grammar-invalid message {event.msg}")
        outs = _deliver_outputs(peer, event.msg)
        if peer.state in DEFERRING_STATES:
            outs = [o for o in outs if not o.emissions]
        return tuple(outs)
    if isinstance(event, UserCmd):
        return tuple(_usercmd_outputs(peer, event.cmd))
    if isinstance(event, Timeout):
        if peer.config.disable_timers:
            raise IllegalEvent("timers disabled")
        return tuple(_timeout_outputs(peer, event.timer))
    raise IllegalEvent(f"unknown event {event!r}")


def peer_step(peer: PeerProcess, event: PeerEvent):
    """The transition function. Returns the unique PeerOutput when the edge
    is deterministic, otherwise the ordered tuple of admissible outcomes."""
    outs = successors_of_peer(peer, event)
    if len(outs) == 1:
        return outs[0]
    return outs
