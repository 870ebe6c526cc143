import numpy as np
import pytest

from slotie import (
    BadAnnotation,
    EmptyInput,
    Extraction,
    LabelGrid,
    NoTriplet,
    PLACEHOLDER_TOKENS,
    PredictionTensor,
    TokenClass,
    TripletMask,
    grid_from_tuples,
    mask_to_extraction,
    sequence_from_tokens,
    tokenize,
)

B, S, R, O = TokenClass.BACKGROUND, TokenClass.SUBJECT, TokenClass.RELATION, TokenClass.OBJECT


class TestTokenize:
    def test_whitespace_split(self):
        seq = tokenize("Albert Einstein is physicist")
        assert seq.tokens == ("Albert", "Einstein", "is", "physicist")

    def test_placeholders_appended(self):
        seq = tokenize("Obama born in Hawaii", append_placeholders=True)
        assert len(seq) == 7
        assert seq.tokens[-3:] == PLACEHOLDER_TOKENS
        assert seq.char_spans[-1] == (-1, -1)
        assert seq.placeholder_flags == (False,) * 4 + (True,) * 3
        assert seq.body_tokens == ("Obama", "born", "in", "Hawaii")

    def test_punctuation_and_numbers(self):
        # Interior punctuation stays attached; the final period is separate.
        seq = tokenize("Males had a median income of $ 28,750 versus $ 16,250 for females .")
        assert len(seq) == 14
        assert seq.tokens[7] == "28,750"
        assert seq.tokens[-1] == "."

    def test_trailing_punct_split(self):
        seq = tokenize('He said "stop." twice')
        assert seq.tokens == ("He", "said", '"', "stop", ".", '"', "twice")

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            tokenize("   ")

    def test_offsets_are_faithful(self):
        rng = np.random.default_rng(3)
        words = ["alpha", "b,2", "(x)", "Mr.", "co-op", "...", "3.14"]
        for _ in range(50):
            sentence = " ".join(rng.choice(words, size=rng.integers(1, 8)))
            seq = tokenize(sentence)
            rebuilt = "".join(sentence[a:b] for a, b in seq.char_spans)
            assert rebuilt == sentence.replace(" ", "")
            for token, (a, b) in zip(seq.tokens, seq.char_spans):
                assert sentence[a:b] == token

    def test_deterministic(self):
        assert tokenize("a b c.") == tokenize("a b c.")


class TestSequenceFromTokens:
    def test_roundtrip_tokens(self):
        seq = sequence_from_tokens(["The", "cat", "sat"], append_placeholders=True)
        assert seq.tokens[:3] == ("The", "cat", "sat")
        assert seq.has_placeholders

    def test_rejects_bad_token(self):
        with pytest.raises(BadAnnotation):
            sequence_from_tokens(["ok", "not ok"])


class TestMaskToExtraction:
    def test_basic(self):
        seq = tokenize("Albert Einstein is physicist")
        mask = TripletMask((S, S, R, O))
        assert mask_to_extraction(seq, mask) == Extraction("Albert Einstein", "is", "physicist")

    def test_all_background_raises(self):
        seq = tokenize("Albert Einstein is physicist")
        with pytest.raises(NoTriplet):
            mask_to_extraction(seq, TripletMask((B, B, B, B)))

    def test_relation_tokens_joined_in_order(self):
        seq = tokenize("a b c d e f")
        mask = TripletMask((S, B, R, R, O, B))
        ext = mask_to_extraction(seq, mask)
        assert ext.rel == "c d"

    def test_placeholder_surface_preserved(self):
        seq = tokenize("Obama born in Hawaii", append_placeholders=True)
        mask = TripletMask((S, R, R, O, R, B, B))
        ext = mask_to_extraction(seq, mask)
        assert ext.rel == "born in [is]"

    def test_token_multiset_matches_mask(self):
        seq = tokenize("w x y z w")
        mask = TripletMask((S, R, O, O, S))
        ext = mask_to_extraction(seq, mask)
        produced = sorted((ext.arg1 + " " + ext.rel + " " + ext.arg2).split())
        labeled = sorted(t for t, lab in zip(seq.tokens, mask.labels) if lab != B)
        assert produced == labeled


class TestGridFromTuples:
    def test_empty_gold(self):
        seq = tokenize("a b c d")
        grid = grid_from_tuples(seq, [])
        assert grid.n_gold == 0

    def test_single_triplet(self):
        seq = tokenize("a b c d")
        grid = grid_from_tuples(seq, [((0, 1), (2,), (3,))])
        assert grid.masks[0].labels == (S, S, R, O)

    def test_overlapping_triplets_have_independent_masks(self):
        seq = tokenize("a b c d e")
        grid = grid_from_tuples(seq, [((0,), (2,), (3,)), ((1,), (2,), (4,))])
        assert grid.masks[0].labels[2] == R
        assert grid.masks[1].labels[2] == R
        assert grid.masks[0].labels[1] == B

    def test_index_out_of_range(self):
        seq = tokenize("a b")
        with pytest.raises(BadAnnotation):
            grid_from_tuples(seq, [((0,), (1,), (2,))])

    def test_conflicting_labels_rejected(self):
        seq = tokenize("a b c")
        with pytest.raises(BadAnnotation):
            grid_from_tuples(seq, [((0,), (0,), (2,))])

    def test_duplicate_triplets_rejected(self):
        seq = tokenize("a b c")
        with pytest.raises(BadAnnotation):
            grid_from_tuples(seq, [((0,), (1,), (2,)), ((0,), (1,), (2,))])

    def test_mask_roundtrip(self):
        # Index-extraction then grid reconstruction reproduces any mask with
        # at least one token per class.
        rng = np.random.default_rng(11)
        seq = tokenize("t0 t1 t2 t3 t4 t5 t6 t7")
        for _ in range(25):
            labels = [TokenClass(int(c)) for c in rng.integers(0, 4, size=8)]
            for cls, pos in zip((S, R, O), rng.choice(8, size=3, replace=False)):
                labels[pos] = cls
            mask = TripletMask(tuple(labels))
            grid = grid_from_tuples(seq, [mask.token_indices()])
            assert grid.masks[0] == mask


class TestGridAndTensorInvariants:
    def test_grid_slot_budget(self):
        seq = tokenize("a b c")
        with pytest.raises(BadAnnotation):
            LabelGrid((TripletMask((S, R, O)), TripletMask((O, R, S))), n_slots=1)

    def test_prediction_tensor_validation(self):
        good = np.full((2, 3, 4), 0.25)
        PredictionTensor(good)
        with pytest.raises(ValueError):
            PredictionTensor(np.full((2, 3, 4), 0.3))
        with pytest.raises(ValueError):
            PredictionTensor(np.full((2, 3, 5), 0.2))

    def test_extraction_confidence_range(self):
        with pytest.raises(ValueError):
            Extraction("a", "b", "c", confidence=1.5)
