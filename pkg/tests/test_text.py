import pytest
from hypothesis import given, strategies as st

from keycap import text
from keycap.errors import DataError
from keycap.text import (
    END_ID,
    PAD_ID,
    SEP_ID,
    START_ID,
    UNK_ID,
    EncodedSequence,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    encode_keywords,
    preprocess,
)


class TestPreprocess:
    def test_strips_punctuation_and_digits(self):
        assert preprocess("Macular Edema, OD-2021") == ["macular", "edema", "od"]

    def test_empty(self):
        assert preprocess("") == []

    def test_case_folding(self):
        assert preprocess("ABC") == ["abc"]

    def test_whitespace_only(self):
        assert preprocess(" \t\n ") == []

    def test_pure_digit_token_dropped(self):
        assert preprocess("grade 3 lesion") == ["grade", "lesion"]

    @given(st.text(max_size=80))
    def test_idempotent(self, s):
        once = preprocess(s)
        assert preprocess(" ".join(once)) == once


class TestVocabulary:
    def test_singleton_excluded(self):
        v = build_vocabulary([["a", "a", "b"]], min_count=2)
        assert "a" in v and "b" not in v

    def test_unknown_maps_to_unk(self):
        v = build_vocabulary([["a", "a"]], min_count=2)
        assert v.lookup("b") == UNK_ID

    def test_order_invariant_build(self):
        c1 = [["x", "y"], ["y", "z", "z"]]
        c2 = [["z", "z", "y"], ["y", "x"]]
        v1 = build_vocabulary(c1, min_count=1)
        v2 = build_vocabulary(c2, min_count=1)
        assert v1.id_to_token == v2.id_to_token

    def test_deterministic_id_order(self):
        # count desc, then lexicographic
        v = build_vocabulary([["b", "b", "b", "c", "c", "a", "a"]], min_count=1)
        assert v.id_to_token[5:] == ["b", "a", "c"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            build_vocabulary([], min_count=2)

    def test_specials_layout(self):
        v = build_vocabulary([["a", "a"]], min_count=2)
        assert v.lookup("<pad>") == PAD_ID
        assert v.lookup("<unk>") == UNK_ID
        assert v.lookup("<start>") == START_ID
        assert v.lookup("<end>") == END_ID
        assert v.lookup("<sep>") == SEP_ID
        assert v.lookup("a") == 5

    def test_text_round_trip(self):
        v = build_vocabulary([["alpha", "alpha", "beta", "beta"]], min_count=2)
        restored = Vocabulary.from_text(v.to_text())
        assert restored.id_to_token == v.id_to_token

    def test_malformed_header_rejected(self):
        with pytest.raises(DataError):
            Vocabulary.from_text("<pad>\n<unk>\nwrong\n<end>\n<sep>\n")


class TestEncode:
    @pytest.fixture
    def vocab(self):
        return build_vocabulary([["a", "a", "b", "b", "c", "c"]], min_count=2)

    def test_bounds_and_padding(self, vocab):
        seq = encode(vocab, ["a"], max_len=4, add_bounds=True)
        assert seq.ids == (START_ID, vocab.lookup("a"), END_ID, PAD_ID)
        assert seq.true_length == 3

    def test_truncation_without_bounds(self, vocab):
        seq = encode(vocab, ["a"] * 60, max_len=50, add_bounds=False)
        assert seq.true_length == 50
        assert len(seq.ids) == 50

    def test_truncation_preserves_start_and_forces_end(self, vocab):
        seq = encode(vocab, ["a"] * 60, max_len=50, add_bounds=True)
        assert seq.true_length == 50
        assert seq.ids[0] == START_ID and seq.ids[-1] == END_ID

    def test_round_trip(self, vocab):
        tokens = ["a", "b", "c", "a"]
        seq = encode(vocab, tokens, max_len=10, add_bounds=True)
        assert decode(vocab, seq.ids) == tokens

    @given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=8))
    def test_round_trip_property(self, tokens):
        vocab = build_vocabulary([["a", "a", "b", "b", "c", "c"]], min_count=2)
        seq = encode(vocab, tokens, max_len=10, add_bounds=True)
        assert decode(vocab, seq.ids) == tokens

    def test_keywords_joined_with_separator(self, vocab):
        seq = encode_keywords(vocab, ["a b", "c"], max_len=8)
        assert seq.ids[: seq.true_length] == (
            vocab.lookup("a"),
            vocab.lookup("b"),
            SEP_ID,
            vocab.lookup("c"),
        )

    def test_encoded_sequence_invariant(self):
        with pytest.raises(AssertionError):
            EncodedSequence((1, 2, PAD_ID), true_length=1)
