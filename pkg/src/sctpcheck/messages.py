"""Message vocabulary: chunk types, abstract tag classes, and the wire grammar.

Tags are abstracted to three classes: E (the value the receiving side of the
live association expects), U (any other value, including zero where zero is
illegal), and N (the chunk does not carry that tag at all).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

TSN_MAX = 2


class ChunkType(enum.Enum):
    INIT = "Init"
    INIT_ACK = "InitAck"
    COOKIE_ECHO = "CookieEcho"
    COOKIE_ACK = "CookieAck"
    COOKIE_ERROR = "CookieError"
    DATA = "Data"
    DATA_ACK = "DataAck"
    SHUTDOWN = "Shutdown"
    SHUTDOWN_ACK = "ShutdownAck"
    SHUTDOWN_COMPLETE = "ShutdownComplete"
    ABORT = "Abort"


class TagClass(enum.Enum):
    E = "E"  # expected: passes the receiver's tag check
    U = "U"  # unexpected: fails the check (covers zero / stale / forged)
    N = "N"  # chunk does not carry this tag


# Chunks that carry an itag. Everything else carries vtag only.
ITAG_CHUNKS = frozenset({ChunkType.INIT, ChunkType.INIT_ACK})


@dataclass(frozen=True)
class Message:
    """One single-chunk packet, tags abstracted to classes."""

    chunk: ChunkType
    vtag: TagClass
    itag: TagClass
    tsn: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(
            self, "_hash", hash((self.chunk, self.vtag, self.itag, self.tsn))
        )

    def __hash__(self) -> int:  # cached: states hash these heavily
        return self._hash

    def __str__(self) -> str:
        base = f"{self.chunk.value},{self.vtag.value},{self.itag.value}"
        if self.tsn is not None:
            base += f",tsn={self.tsn}"
        return base


def validate_message(msg: Message) -> bool:
    """Grammar check: INIT has (vtag=N, itag in {E,U}); INIT_ACK has both tags
    in {E,U}; every other chunk has (vtag in {E,U}, itag=N). A TSN, when
    present, must lie in [0, TSN_MAX]."""
    if msg.tsn is not None and not (0 <= msg.tsn <= TSN_MAX):
        return False
    if msg.chunk is ChunkType.INIT:
        return msg.vtag is TagClass.N and msg.itag in (TagClass.E, TagClass.U)
    if msg.chunk is ChunkType.INIT_ACK:
        return msg.vtag in (TagClass.E, TagClass.U) and msg.itag in (
            TagClass.E,
            TagClass.U,
        )
    return msg.vtag in (TagClass.E, TagClass.U) and msg.itag is TagClass.N


def all_valid_messages(with_tsn: bool = False) -> list[Message]:
    """Enumerate every grammar-valid Message (TSN-free, or with every legal TSN)."""
    out: list[Message] = []
    tsns: list[Optional[int]] = [None] if not with_tsn else list(range(TSN_MAX + 1))
    for chunk in ChunkType:
        for vtag in TagClass:
            for itag in TagClass:
                for tsn in tsns:
                    m = Message(chunk, vtag, itag, tsn)
                    if validate_message(m):
                        out.append(m)
    return out
