"""Global transition system: UserA || PeerA || Channel || PeerB || UserB,
optionally composed with an attacker daisy.

One actor moves per global step. A transition that must emit is disabled
while its target buffer is full (the channel is a lossless size-1 FIFO per
direction), and a user command is offered only while the peer's incoming
buffer is empty, mirroring a peer that services the network before taking
the next command.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional

from .attackers import (
    CAPTURE,
    DROP,
    INJECT,
    RECV,
    REEMIT,
    SEND,
    STEAL,
    TERMINATE,
    AttackerModelKind,
    AttackerRuntime,
    Daisy,
    replay_step,
)
from .messages import ChunkType, Message
from .peer import (
    ABORTABLE_STATES,
    Deliver,
    PeerConfig,
    PeerOutput,
    PeerProcess,
    PeerStateName,
    TimerId,
    TimerStatus,
    Timeout,
    UserCmd,
    UserCommand,
    pending_emission,
    successors_of_peer,
)

Buffer = tuple[Message, ...]
CAPACITY = 1


class InvalidConfig(Exception):
    pass


class BoundExceeded(Exception):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    patch_enabled: bool = False
    misinterpret_521: bool = False
    tsn_enabled: bool = False
    cookie_max_retries: int = 2
    disable_timers: bool = False
    daisy: Optional[Daisy] = None

    def peer_config(self) -> PeerConfig:
        return PeerConfig(
            patch_enabled=self.patch_enabled,
            misinterpret_521=self.misinterpret_521,
            tsn_enabled=self.tsn_enabled,
            cookie_max_retries=self.cookie_max_retries,
            disable_timers=self.disable_timers,
        )

    def validate(self) -> None:
        if self.cookie_max_retries < 0:
            raise InvalidConfig("cookie_max_retries must be >= 0")
        if self.daisy is not None and self.daisy.budget < 0:
            raise InvalidConfig("daisy budget must be >= 0")


@dataclass(frozen=True)
class SystemState:
    peers: tuple[PeerProcess, PeerProcess]
    ost: tuple[PeerStateName, PeerStateName]
    a_to_b: Buffer
    b_to_a: Buffer
    attacker: Optional[AttackerRuntime]
    ever_aborted: bool = False
    ever_timed_out: bool = False

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(
            (self.peers, self.ost, self.a_to_b, self.b_to_a, self.attacker,
             self.ever_aborted, self.ever_timed_out)))

    def __hash__(self) -> int:
        return self._hash


@dataclass(frozen=True)
class TransitionLabel:
    actor: str  # UserA | PeerA | Channel | PeerB | UserB | Attacker
    kind: str
    msg: Optional[Message] = None
    detail: str = ""
    action: Optional[tuple] = None  # canonical attacker action, when actor=Attacker

    def __str__(self) -> str:
        parts = [self.actor, self.kind]
        if self.msg is not None:
            parts.append(str(self.msg))
        if self.detail:
            parts.append(f"({self.detail})")
        return " ".join(parts)


def initial_state(config: ScenarioConfig) -> SystemState:
    config.validate()
    pc = config.peer_config()
    peers = (PeerProcess.initial("A", pc), PeerProcess.initial("B", pc))
    attacker = config.daisy.initial_runtime() if config.daisy is not None else None
    return SystemState(
        peers=peers,
        ost=(PeerStateName.CLOSED, PeerStateName.CLOSED),
        a_to_b=(),
        b_to_a=(),
        attacker=attacker,
    )


def _evil_server_active(config: ScenarioConfig, s: SystemState) -> bool:
    return (
        config.daisy is not None
        and config.daisy.kind is AttackerModelKind.EVIL_SERVER
        and s.attacker is not None
        and not s.attacker.terminated
    )


def _outbox(s: SystemState, idx: int) -> Buffer:
    return s.a_to_b if idx == 0 else s.b_to_a

def _inbox(s: SystemState, idx: int) -> Buffer:
    return s.b_to_a if idx == 0 else s.a_to_b


def _apply_peer_output(
    s: SystemState, idx: int, out: PeerOutput, consumed_inbox: bool
) -> Optional[SystemState]:
    """Install one peer outcome as a global successor; None when the required
    emission does not fit its buffer."""
    outbox = _outbox(s, idx)
    if len(outbox) + len(out.emissions) > CAPACITY:
        return None
    new_outbox = outbox + out.emissions
    inbox = _inbox(s, idx)
    if consumed_inbox:
        inbox = inbox[1:]
    if idx == 0:
        peers = (out.peer, s.peers[1])
        a_to_b, b_to_a = new_outbox, inbox
    else:
        peers = (s.peers[0], out.peer)
        a_to_b, b_to_a = inbox, new_outbox
    return SystemState(
        peers=peers,
        ost=(s.peers[0].state, s.peers[1].state),
        a_to_b=a_to_b,
        b_to_a=b_to_a,
        attacker=s.attacker,
        ever_aborted=s.ever_aborted or out.aborted,
        ever_timed_out=s.ever_timed_out or out.timed_out,
    )


def _advance_attacker(daisy: Daisy, s: SystemState, rt: AttackerRuntime, action) -> AttackerRuntime:
    return replace(rt, trie_node=daisy.advance_trie(rt.trie_node, action))


def _bump_ost(s: SystemState) -> SystemState:
    return replace(s, ost=(s.peers[0].state, s.peers[1].state))


_COMMANDS_BY_STATE = {}
for _st in PeerStateName:
    _cmds = []
    if _st is PeerStateName.CLOSED:
        _cmds.append(UserCommand.ASSOCIATE)
    if _st is PeerStateName.ESTABLISHED:
        _cmds.append(UserCommand.SHUTDOWN)
    if _st in ABORTABLE_STATES:
        _cmds.append(UserCommand.ABORT)
    _COMMANDS_BY_STATE[_st] = tuple(_cmds)


def _admissible_commands(state: PeerStateName) -> tuple:
    return _COMMANDS_BY_STATE[state]


def _user_steps(
    config: ScenarioConfig, s: SystemState, idx: int
) -> Iterator[tuple[TransitionLabel, SystemState]]:
    actor = "UserA" if idx == 0 else "UserB"
    if idx == 1 and _evil_server_active(config, s):
        return
    if _inbox(s, idx):  # service the network before the next command
        return
    peer = s.peers[idx]
    for cmd in _admissible_commands(peer.state):
        outs = successors_of_peer(peer, UserCmd(cmd))
        for out in outs:
            nxt = _apply_peer_output(s, idx, out, consumed_inbox=False)
            if nxt is not None:
                yield (
                    TransitionLabel(actor, "command", detail=cmd.value),
                    nxt,
                )


def _peer_spontaneous_steps(
    config: ScenarioConfig, s: SystemState, idx: int
) -> Iterator[tuple[TransitionLabel, SystemState]]:
    actor = "PeerA" if idx == 0 else "PeerB"
    if idx == 1 and _evil_server_active(config, s):
        return
    peer = s.peers[idx]
    pend = pending_emission(peer)
    if pend is not None:
        nxt = _apply_peer_output(s, idx, pend, consumed_inbox=False)
        if nxt is not None:
            yield (
                TransitionLabel(actor, "emit", msg=pend.emissions[0], detail=pend.note),
                nxt,
            )
    if config.disable_timers:
        return
    t = peer.timers
    for timer, status in (
        (TimerId.INIT, t.init_timer),
        (TimerId.COOKIE, t.cookie_timer),
        (TimerId.SHUTDOWN, t.shutdown_timer),
    ):
        if status is not TimerStatus.ACTIVE:
            continue
        for out in successors_of_peer(peer, Timeout(timer)):
            nxt = _apply_peer_output(s, idx, out, consumed_inbox=False)
            if nxt is not None:
                yield (
                    TransitionLabel(actor, "timeout", detail=f"{timer.value}:{out.note}"),
                    nxt,
                )


def _delivery_steps(
    config: ScenarioConfig, s: SystemState, idx: int
) -> Iterator[tuple[TransitionLabel, SystemState]]:
    """Deliver the head of peer idx's inbox to it (all admissible outcomes).

    A CLOSED peer never wedges on backpressure: when every outcome needs an
    emission that does not fit, it consumes the message without replying (its
    replies are best-effort courtesies, there is no association to protect).
    """
    if idx == 1 and _evil_server_active(config, s):
        return
    inbox = _inbox(s, idx)
    if not inbox:
        return
    peer = s.peers[idx]
    msg = inbox[0]
    actor = "PeerA" if idx == 0 else "PeerB"
    produced = False
    for out in successors_of_peer(peer, Deliver(msg)):
        nxt = _apply_peer_output(s, idx, out, consumed_inbox=True)
        if nxt is not None:
            produced = True
            yield (
                TransitionLabel(actor, "deliver", msg=msg, detail=out.note),
                nxt,
            )
    if not produced and peer.state is PeerStateName.CLOSED:
        quiet = PeerOutput(peer, note="backpressure-discard")
        nxt = _apply_peer_output(s, idx, quiet, consumed_inbox=True)
        if nxt is not None:
            yield (
                TransitionLabel(actor, "deliver", msg=msg, detail=quiet.note),
                nxt,
            )


def _with_attacker(s: SystemState, rt: AttackerRuntime) -> SystemState:
    return SystemState(
        peers=s.peers,
        ost=(s.peers[0].state, s.peers[1].state),
        a_to_b=s.a_to_b,
        b_to_a=s.b_to_a,
        attacker=rt,
        ever_aborted=s.ever_aborted,
        ever_timed_out=s.ever_timed_out,
    )


def _attacker_steps(
    config: ScenarioConfig, s: SystemState
) -> Iterator[tuple[TransitionLabel, SystemState]]:
    daisy = config.daisy
    rt = s.attacker
    if daisy is None or rt is None or rt.terminated:
        return
    if daisy.script is not None:
        pos = daisy.script_position(rt)
        done = pos >= len(daisy.script)
        for label, nxt in _raw_attacker_steps(config, s, daisy, rt):
            if label.action == (TERMINATE,):
                if done:
                    yield label, nxt
            elif not done and label.action == daisy.script[pos]:
                yield label, nxt
        return
    yield from _raw_attacker_steps(config, s, daisy, rt)


def _raw_attacker_steps(
    config: ScenarioConfig, s: SystemState, daisy: Daisy, rt: AttackerRuntime
) -> Iterator[tuple[TransitionLabel, SystemState]]:
    kind = daisy.kind

    def emit(action, label_kind, new_rt, **state_changes):
        new_rt = _advance_attacker(daisy, s, new_rt, action)
        nxt = replace(_with_attacker(s, new_rt), **state_changes)
        msg = None
        for part in action[1:]:
            if isinstance(part, Message):
                msg = part
        detail = action[1] if len(action) > 1 and isinstance(action[1], str) else ""
        return (
            TransitionLabel("Attacker", label_kind, msg=msg, detail=detail, action=action),
            nxt,
        )

    if kind is AttackerModelKind.OFF_PATH:
        if rt.budget_left > 0 and len(s.b_to_a) < CAPACITY:
            for m in daisy.vocab.sendable:
                action = (SEND, "b_to_a", m)
                new_rt = replace(rt, budget_left=rt.budget_left - 1)
                yield emit(action, "send", new_rt, b_to_a=s.b_to_a + (m,))
    elif kind is AttackerModelKind.EVIL_SERVER:
        if rt.budget_left > 0:
            if len(s.b_to_a) < CAPACITY:
                for m in daisy.vocab.sendable:
                    action = (SEND, "b_to_a", m)
                    new_rt = replace(rt, budget_left=rt.budget_left - 1)
                    yield emit(action, "send", new_rt, b_to_a=s.b_to_a + (m,))
            if s.a_to_b:
                m = s.a_to_b[0]
                action = (RECV, "a_to_b", m)
                new_rt = replace(rt, budget_left=rt.budget_left - 1)
                yield emit(action, "recv", new_rt, a_to_b=s.a_to_b[1:])
    elif kind is AttackerModelKind.REPLAY:
        tap = daisy.replay_tap
        tapped = s.a_to_b if tap == "a_to_b" else s.b_to_a
        observation = tapped[0] if tapped else None
        targets = [tap] if not daisy.replay_cross else ["a_to_b", "b_to_a"]
        for raw_action, new_rt in replay_step(rt, observation, daisy.replay_capacity):
            verb = raw_action[0]
            if verb == CAPTURE:
                action = (CAPTURE, tap, raw_action[2])
                yield emit(action, "capture", new_rt)
            elif verb == DROP:
                action = (DROP, raw_action[1])
                yield emit(action, "drop", new_rt)
            elif verb == REEMIT:
                if not daisy.replay_reemit:
                    continue
                m = raw_action[1]
                for tgt in targets:
                    buf = s.a_to_b if tgt == "a_to_b" else s.b_to_a
                    if len(buf) >= CAPACITY:
                        continue
                    action = (REEMIT, tgt, m)
                    change = {tgt: buf + (m,)}
                    yield emit(action, "reemit", new_rt, **change)
    elif kind is AttackerModelKind.ON_PATH:
        if rt.budget_left > 0:
            for direction in ("a_to_b", "b_to_a"):
                buf = s.a_to_b if direction == "a_to_b" else s.b_to_a
                if buf:
                    m = buf[0]
                    action = (STEAL, direction, m)
                    new_rt = replace(rt, budget_left=rt.budget_left - 1)
                    yield emit(action, "steal", new_rt, **{direction: buf[1:]})
                if len(buf) < CAPACITY:
                    for m in daisy.vocab.sendable:
                        action = (INJECT, direction, m)
                        new_rt = replace(rt, budget_left=rt.budget_left - 1)
                        yield emit(action, "inject", new_rt, **{direction: buf + (m,)})

    if daisy.terminate_allowed(rt):
        action = (TERMINATE,)
        new_rt = replace(rt, terminated=True)
        yield emit(action, "terminate", new_rt)


def _flush_replay_memory_on_renewal(
    config: ScenarioConfig, s: SystemState, step: tuple[TransitionLabel, SystemState]
) -> tuple[TransitionLabel, SystemState]:
    """Memorized messages go stale whenever the association's tags do: a
    fresh INIT on the wire (new tags proposed) or a peer reaching CLOSED
    (vtags forgotten at close), regardless of the tapped direction."""
    label, s2 = step
    rt = s2.attacker
    if rt is None or rt.kind is not AttackerModelKind.REPLAY or not rt.memory:
        return step
    flush = False
    for before, after in ((s.a_to_b, s2.a_to_b), (s.b_to_a, s2.b_to_a)):
        if len(after) > len(before) and after[-1].chunk is ChunkType.INIT:
            flush = True
    for i in (0, 1):
        if (
            s.peers[i].state is not PeerStateName.CLOSED
            and s2.peers[i].state is PeerStateName.CLOSED
        ):
            flush = True
    if flush:
        return (label, replace(s2, attacker=replace(rt, memory=())))
    return step


def successors(
    config: ScenarioConfig, s: SystemState
) -> list[tuple[TransitionLabel, SystemState]]:
    """The complete, deterministically ordered list of global successors."""
    out: list[tuple[TransitionLabel, SystemState]] = []
    out.extend(_user_steps(config, s, 0))
    out.extend(_peer_spontaneous_steps(config, s, 0))
    out.extend(_delivery_steps(config, s, 1))  # channel moves a_to_b head into B
    out.extend(_delivery_steps(config, s, 0))  # then b_to_a head into A
    out.extend(_peer_spontaneous_steps(config, s, 1))
    out.extend(_user_steps(config, s, 1))
    out.extend(_attacker_steps(config, s))
    if (
        config.daisy is not None
        and config.daisy.kind is AttackerModelKind.REPLAY
    ):
        out = [_flush_replay_memory_on_renewal(config, s, step) for step in out]
    return out


class Valuation:
    """Atomic proposition assignment for one state. Atoms are tuples:
    ("st", i, PeerStateName), ("ost", i, PeerStateName),
    ("cookie_timer_active", i), ("everAborted",), ("everTimedOut",),
    ("term",)."""

    __slots__ = ("s",)

    def __init__(self, s: SystemState):
        self.s = s

    def __call__(self, atom: tuple) -> bool:
        kind = atom[0]
        s = self.s
        if kind == "st":
            return s.peers[atom[1]].state is atom[2]
        if kind == "ost":
            return s.ost[atom[1]] is atom[2]
        if kind == "unchanged":
            return s.peers[atom[1]].state is s.ost[atom[1]]
        if kind == "cookie_timer_active":
            return s.peers[atom[1]].timers.cookie_timer is TimerStatus.ACTIVE
        if kind == "everAborted":
            return s.ever_aborted
        if kind == "everTimedOut":
            return s.ever_timed_out
        if kind == "term":
            return s.attacker is None or s.attacker.terminated
        raise KeyError(atom)


def atomic_valuation(s: SystemState) -> Valuation:
    return Valuation(s)


@dataclass
class StateGraphSummary:
    state_count: int
    transition_count: int
    deadlocks: list[SystemState] = field(default_factory=list)
    reachable_peer_states: set[PeerStateName] = field(default_factory=set)
    bound_exceeded: bool = False

    @property
    def unreachable_peer_states(self) -> set[PeerStateName]:
        return set(PeerStateName) - self.reachable_peer_states


def explore(
    config: ScenarioConfig,
    cap: int = 5_000_000,
    on_edge: Optional[Callable[[SystemState, TransitionLabel, SystemState], None]] = None,
) -> StateGraphSummary:
    """Exhaustive BFS from the initial state: state count, deadlock states,
    and which peer states were ever occupied."""
    start = initial_state(config)
    seen: set[SystemState] = {start}
    frontier = [start]
    summary = StateGraphSummary(state_count=0, transition_count=0)
    summary.reachable_peer_states.update(p.state for p in start.peers)
    while frontier:
        nxt_frontier: list[SystemState] = []
        for s in frontier:
            succ = successors(config, s)
            summary.transition_count += len(succ)
            if not succ:
                summary.deadlocks.append(s)
            for label, s2 in succ:
                if on_edge is not None:
                    on_edge(s, label, s2)
                if s2 not in seen:
                    if len(seen) >= cap:
                        summary.bound_exceeded = True
                        summary.state_count = len(seen)
                        return summary
                    seen.add(s2)
                    summary.reachable_peer_states.update(p.state for p in s2.peers)
                    nxt_frontier.append(s2)
        frontier = nxt_frontier
    summary.state_count = len(seen)
    return summary
