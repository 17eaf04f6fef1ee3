import pytest
from hypothesis import given
from hypothesis import strategies as st

from tonicnet import vocab
from tonicnet.vocab import (
    ALL_TOKENS,
    CHORD_OTHER,
    CHORD_REST,
    END,
    REST,
    VOCAB_SIZE,
    Chord,
    Pitch,
    index_to_token,
    token_to_index,
)


def test_vocabulary_has_98_distinct_tokens():
    assert VOCAB_SIZE == 98
    assert len(ALL_TOKENS) == 98
    assert len(set(ALL_TOKENS)) == 98


def test_layout_anchor_points():
    assert token_to_index(Pitch(36)) == 0
    assert token_to_index(Pitch(81)) == 45
    assert token_to_index(Chord("major", 0)) == 46
    assert token_to_index(Chord("minor", 9)) == 67
    assert token_to_index(CHORD_OTHER) == 94
    assert token_to_index(CHORD_REST) == 95
    assert token_to_index(REST) == 96
    assert token_to_index(END) == 97
    assert index_to_token(0) == Pitch(36)
    assert index_to_token(95) == CHORD_REST
    assert index_to_token(97) == END


def test_bijection_over_all_indices():
    for i in range(VOCAB_SIZE):
        assert token_to_index(index_to_token(i)) == i
    for t in ALL_TOKENS:
        assert index_to_token(token_to_index(t)) == t


def test_pitch_37_exists_despite_absence_from_corpus():
    assert index_to_token(1) == Pitch(37)


def test_out_of_range_index_errors():
    with pytest.raises(ValueError):
        index_to_token(98)
    with pytest.raises(ValueError):
        index_to_token(-1)


def test_invalid_token_constructors():
    with pytest.raises(ValueError):
        Pitch(35)
    with pytest.raises(ValueError):
        Pitch(82)
    with pytest.raises(ValueError):
        Chord("sus4", 0)
    with pytest.raises(ValueError):
        Chord("major", 12)


@given(st.integers(min_value=0, max_value=97))
def test_roundtrip_property(i):
    assert token_to_index(index_to_token(i)) == i


def test_kind_predicates_partition_the_vocabulary():
    for i in range(VOCAB_SIZE):
        kinds = [
            vocab.is_pitch_index(i),
            vocab.is_chord_index(i),
            i == vocab.REST_INDEX,
            i == vocab.END_INDEX,
        ]
        assert sum(kinds) == 1
