from hypothesis import given
from hypothesis import strategies as st

from sctpcheck.messages import (
    TSN_MAX,
    ChunkType,
    Message,
    TagClass,
    all_valid_messages,
    validate_message,
)

E, U, N = TagClass.E, TagClass.U, TagClass.N


def test_eleven_chunk_variants():
    assert len(ChunkType) == 11


def test_grammar_examples():
    # the final line of the synthesized off-path attack
    assert validate_message(Message(ChunkType.INIT, N, U))
    # the grammar forces vtag=N on INIT
    assert not validate_message(Message(ChunkType.INIT, E, E))
    # teardown chunks carry no itag
    assert validate_message(Message(ChunkType.SHUTDOWN, E, N))
    assert not validate_message(Message(ChunkType.SHUTDOWN, E, E))
    assert validate_message(Message(ChunkType.INIT_ACK, U, U))
    assert not validate_message(Message(ChunkType.INIT_ACK, N, E))
    assert not validate_message(Message(ChunkType.DATA, N, N))


def test_tsn_bounds():
    assert validate_message(Message(ChunkType.DATA, E, N, tsn=0))
    assert validate_message(Message(ChunkType.DATA, E, N, tsn=TSN_MAX))
    assert not validate_message(Message(ChunkType.DATA, E, N, tsn=TSN_MAX + 1))
    assert not validate_message(Message(ChunkType.ABORT, E, N, tsn=-1))


def test_valid_message_count():
    # INIT: 2 itags; INIT_ACK: 4 combos; nine other chunks: 2 vtags each
    assert len(all_valid_messages()) == 2 + 4 + 9 * 2
    with_tsn = all_valid_messages(with_tsn=True)
    assert len(with_tsn) == (2 + 4 + 9 * 2) * (TSN_MAX + 1)


@given(
    chunk=st.sampled_from(list(ChunkType)),
    vtag=st.sampled_from(list(TagClass)),
    itag=st.sampled_from(list(TagClass)),
    tsn=st.one_of(st.none(), st.integers(-2, TSN_MAX + 2)),
)
def test_validate_total_and_consistent(chunk, vtag, itag, tsn):
    m = Message(chunk, vtag, itag, tsn)
    ok = validate_message(m)
    if ok and tsn is not None:
        assert 0 <= tsn <= TSN_MAX
    if chunk is ChunkType.INIT and ok:
        assert vtag is N
    if chunk not in (ChunkType.INIT, ChunkType.INIT_ACK) and ok:
        assert itag is N
