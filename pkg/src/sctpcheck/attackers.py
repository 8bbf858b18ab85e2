"""The four attacker processes, modeled as terminating nondeterministic
"daisy" gadgets with per-model vocabularies and placements.

Placements:
  Off-Path     injects into the b_to_a buffer; receives nothing.
  Evil-Server  stands in for peer B until it terminates (sends into b_to_a,
               consumes from a_to_b); the honest peer B code runs afterwards.
  Replay       taps one buffer: it can copy the in-flight message into a
               bounded memory, re-emit a memorized message, or silently drop
               one. Observing an INIT flushes the memory (tags changed).
  On-Path      owns the channel: may steal the head of either buffer and
               inject valid messages into either buffer.

Once ``terminated`` is set the daisy contributes nothing further (for
On-Path that means the channel behaves honestly again).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .messages import ChunkType, Message, TagClass, validate_message


class AttackerModelKind(enum.Enum):
    OFF_PATH = "off-path"
    EVIL_SERVER = "evil-server"
    REPLAY = "replay"
    ON_PATH = "on-path"


class Phase(enum.Enum):
    ESTABLISHMENT = "establishment"
    TEARDOWN = "teardown"
    FULL = "full"


_ESTABLISHMENT_CHUNKS = (
    ChunkType.INIT,
    ChunkType.INIT_ACK,
    ChunkType.COOKIE_ECHO,
    ChunkType.COOKIE_ACK,
    ChunkType.ABORT,
)
_TEARDOWN_CHUNKS = (
    ChunkType.SHUTDOWN,
    ChunkType.SHUTDOWN_ACK,
    ChunkType.SHUTDOWN_COMPLETE,
    ChunkType.ABORT,
)


@dataclass(frozen=True)
class Vocabulary:
    sendable: tuple[Message, ...]
    receivable: bool  # may the attacker consume/observe peer traffic
    phase: Phase


class InvalidVocabulary(Exception):
    pass


def _phase_chunks(phase: Phase) -> tuple[ChunkType, ...]:
    if phase is Phase.ESTABLISHMENT:
        return _ESTABLISHMENT_CHUNKS
    if phase is Phase.TEARDOWN:
        return _TEARDOWN_CHUNKS
    seen: list[ChunkType] = list(_ESTABLISHMENT_CHUNKS)
    for c in _TEARDOWN_CHUNKS:
        if c not in seen:
            seen.append(c)
    return tuple(seen)


def _invalid_tag_message(chunk: ChunkType) -> Message:
    """The forged variant of a chunk: no tag class may be E."""
    if chunk is ChunkType.INIT:
        return Message(chunk, TagClass.N, TagClass.U)
    if chunk is ChunkType.INIT_ACK:
        return Message(chunk, TagClass.U, TagClass.U)
    return Message(chunk, TagClass.U, TagClass.N)


def _valid_tag_message(chunk: ChunkType) -> Message:
    """The in-association variant of a chunk, as a knowing peer would send."""
    if chunk is ChunkType.INIT:
        return Message(chunk, TagClass.N, TagClass.E)
    if chunk is ChunkType.INIT_ACK:
        return Message(chunk, TagClass.E, TagClass.E)
    return Message(chunk, TagClass.E, TagClass.N)


def vocab_for(kind: AttackerModelKind, phase: Phase) -> Vocabulary:
    """Phase-restricted sendable set intersected with the model's tag rules.
    Data and CookieError are never sent (they cannot move a peer's state)."""
    chunks = _phase_chunks(phase)
    if kind is AttackerModelKind.OFF_PATH:
        sendable = tuple(_invalid_tag_message(c) for c in chunks)
        return Vocabulary(sendable, receivable=False, phase=phase)
    if kind is AttackerModelKind.REPLAY:
        return Vocabulary((), receivable=True, phase=phase)
    sendable = tuple(_valid_tag_message(c) for c in chunks)
    return Vocabulary(sendable, receivable=True, phase=phase)


def _check_vocab(kind: AttackerModelKind, vocab: Vocabulary) -> None:
    for m in vocab.sendable:
        if not validate_message(m):
            raise InvalidVocabulary(f"grammar-invalid {m}")
        if m.chunk in (ChunkType.DATA, ChunkType.DATA_ACK, ChunkType.COOKIE_ERROR):
            raise InvalidVocabulary(f"{m.chunk} not sendable by any model")
        if kind is AttackerModelKind.OFF_PATH:
            if TagClass.E in (m.vtag, m.itag):
                raise InvalidVocabulary(f"off-path message {m} carries an expected tag")
        elif kind in (AttackerModelKind.EVIL_SERVER, AttackerModelKind.ON_PATH):
            if TagClass.U in (m.vtag, m.itag):
                raise InvalidVocabulary(f"{kind.value} message {m} carries a forged tag")
    if kind is AttackerModelKind.REPLAY and vocab.sendable:
        raise InvalidVocabulary("replay attacker cannot send fresh messages")


@dataclass(frozen=True)
class AttackerRuntime:
    kind: AttackerModelKind
    budget_left: int
    terminated: bool = False
    memory: tuple[Message, ...] = ()  # replay only, kept sorted
    trie_node: int = 0  # -1 once the action history leaves the forbidden trie

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(
            (self.kind, self.budget_left, self.terminated, self.memory,
             self.trie_node)))

    def __hash__(self) -> int:
        return self._hash


# Attacker action encodings, used both as trie keys and trace payloads.
SEND = "send"          # (SEND, direction, msg)       off-path / evil-server
RECV = "recv"          # (RECV, direction, msg)       evil-server consume
CAPTURE = "capture"    # (CAPTURE, direction, msg)    replay peek-copy
REEMIT = "reemit"      # (REEMIT, direction, msg)     replay memory -> wire
DROP = "drop"          # (DROP, msg)                  replay memory discard
STEAL = "steal"        # (STEAL, direction, msg)      on-path remove head
INJECT = "inject"      # (INJECT, direction, msg)     on-path push
TERMINATE = "terminate"

AttackerAction = tuple


@dataclass(frozen=True)
class Daisy:
    """Static description of one attacker process: capabilities, budget,
    and the trie of action sequences already reported as attacks."""

    kind: AttackerModelKind
    vocab: Vocabulary
    budget: int
    replay_capacity: int = 2
    replay_tap: str = "b_to_a"
    replay_cross: bool = False
    replay_reemit: bool = True  # re-emit branch can be disabled for ablation
    # Trie over action tuples: list of (terminal, {action: child_index}).
    forbidden: tuple = ((False, ()),)
    # When set, the daisy is deterministic: it offers exactly script[i] as its
    # i-th action and terminates after the last one (attack replay mode).
    script: Optional[tuple] = None

    def initial_runtime(self) -> AttackerRuntime:
        budget = self.budget if self.script is None else len(self.script)
        return AttackerRuntime(kind=self.kind, budget_left=budget)

    def script_position(self, rt: AttackerRuntime) -> int:
        assert self.script is not None
        return len(self.script) - rt.budget_left

    def advance_trie(self, node: int, action: AttackerAction) -> int:
        if node < 0:
            return -1
        _, edges = self.forbidden[node]
        for key, child in edges:
            if key == action:
                return child
        return -1

    def terminate_allowed(self, rt: AttackerRuntime) -> bool:
        if rt.trie_node < 0:
            return True
        terminal, _ = self.forbidden[rt.trie_node]
        return not terminal


def build_daisy(
    kind: AttackerModelKind,
    vocab: Optional[Vocabulary] = None,
    budget: int = 12,
    replay_capacity: int = 2,
    replay_tap: str = "b_to_a",
    replay_cross: bool = False,
    replay_reemit: bool = True,
    forbidden_sequences: tuple = (),
) -> Daisy:
    if vocab is None:
        vocab = vocab_for(kind, Phase.FULL)
    _check_vocab(kind, vocab)
    if replay_tap not in ("a_to_b", "b_to_a"):
        raise InvalidVocabulary(f"bad replay tap {replay_tap}")
    return Daisy(
        kind=kind,
        vocab=vocab,
        budget=budget,
        replay_capacity=replay_capacity,
        replay_tap=replay_tap,
        replay_cross=replay_cross,
        replay_reemit=replay_reemit,
        forbidden=_build_trie(forbidden_sequences),
    )


def _build_trie(sequences: tuple) -> tuple:
    nodes: list[tuple[bool, list]] = [(False, [])]
    for seq in sequences:
        node = 0
        for action in seq:
            terminal, edges = nodes[node]
            child = None
            for key, idx in edges:
                if key == action:
                    child = idx
                    break
            if child is None:
                nodes.append((False, []))
                child = len(nodes) - 1
                edges.append((action, child))
            node = child
        terminal, edges = nodes[node]
        nodes[node] = (True, edges)
    return tuple((t, tuple(e)) for t, e in nodes)


def _mem_add(memory: tuple[Message, ...], msg: Message) -> tuple[Message, ...]:
    return tuple(sorted(memory + (msg,), key=str))


def _mem_remove(memory: tuple[Message, ...], msg: Message) -> tuple[Message, ...]:
    out = list(memory)
    out.remove(msg)
    return tuple(out)


def replay_step(
    rt: AttackerRuntime,
    observation: Optional[Message],
    capacity: int = 2,
) -> list[tuple[AttackerAction, AttackerRuntime]]:
    """The replay gadget's nondeterministic branches against one tapped
    in-flight message. Capture is a non-consuming peek; seeing an INIT wipes
    the memory because the association tags it relied on are gone."""
    if rt.kind is not AttackerModelKind.REPLAY:
        raise InvalidVocabulary("replay_step on a non-replay runtime")
    if rt.terminated:
        return []
    steps: list[tuple[AttackerAction, AttackerRuntime]] = []
    if rt.budget_left <= 0:
        return steps
    if observation is not None:
        if observation.chunk is ChunkType.INIT:
            if rt.memory:
                steps.append(
                    ((CAPTURE, "flush", observation),
                     replace(rt, memory=(), budget_left=rt.budget_left - 1))
                )
        elif len(rt.memory) < capacity:
            steps.append(
                ((CAPTURE, "tap", observation),
                 replace(rt, memory=_mem_add(rt.memory, observation),
                         budget_left=rt.budget_left - 1))
            )
    seen: set[Message] = set()
    for msg in rt.memory:
        if msg in seen:
            continue
        seen.add(msg)
        shrunk = _mem_remove(rt.memory, msg)
        steps.append(
            ((REEMIT, msg),
             replace(rt, memory=shrunk, budget_left=rt.budget_left - 1))
        )
        steps.append(
            ((DROP, msg),
             replace(rt, memory=shrunk, budget_left=rt.budget_left - 1))
        )
    return steps
