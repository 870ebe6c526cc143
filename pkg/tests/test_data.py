from collections import Counter

import pytest

import slotie as sl
from slotie import (
    BadAnnotation,
    Extraction,
    GenerativeRecord,
    TokenClass,
    TripletPool,
    lcs_align,
    lsoie_convert,
    read_conll,
    synth_generate,
    template_frequencies,
)
from slotie.data import (
    ConfigError,
    ConllRecord,
    FormatError,
    TemplateSpec,
    read_grid_jsonl,
    read_imojie_jsonl,
    read_tuples_tsv,
    tuple_part_tokens,
    write_grid_jsonl,
    write_tuples_tsv,
)

B, S, R, O = TokenClass.BACKGROUND, TokenClass.SUBJECT, TokenClass.RELATION, TokenClass.OBJECT


def letters(mask):
    return "".join("BSRO"[int(lab)] for lab in mask.labels)


class TestTuplePartTokens:
    def test_placeholders_stay_atomic(self):
        assert tuple_part_tokens("[is] born in") == ["[is]", "born", "in"]

    def test_ordinary_brackets_split(self):
        assert tuple_part_tokens("[unusual] text") == ["[", "unusual", "]", "text"]


class TestLcsAlign:
    def test_exact_sentence_tuple(self):
        rec = GenerativeRecord(
            "Albert Einstein is physicist",
            (Extraction("Albert Einstein", "is", "physicist"),),
        )
        aligned = lcs_align(rec)
        assert not aligned.skipped
        assert letters(aligned.grid.masks[0]) == "SSROBBB"

    def test_placeholder_satisfies_missing_is(self):
        rec = GenerativeRecord(
            "Obama born in Hawaii",
            (Extraction("Obama", "[is] born in", "Hawaii"),),
        )
        aligned = lcs_align(rec)
        assert not aligned.skipped
        # Relation covers "born", "in" and the appended [is].
        assert letters(aligned.grid.masks[0]) == "SRRORBB"

    def test_bare_is_also_matches_placeholder(self):
        rec = GenerativeRecord(
            "Obama born in Hawaii",
            (Extraction("Obama", "is born in", "Hawaii"),),
        )
        aligned = lcs_align(rec)
        assert not aligned.skipped
        assert letters(aligned.grid.masks[0]) == "SRRORBB"

    def test_unmatchable_token_skips_tuple(self):
        rec = GenerativeRecord(
            "Obama born in Hawaii",
            (Extraction("Obama", "moved from", "Hawaii"),),
        )
        aligned = lcs_align(rec)
        assert aligned.grid.n_gold == 0
        assert len(aligned.skipped) == 1
        assert aligned.skipped[0].unmatched == ("moved",)

    def test_empty_part_skips_tuple(self):
        rec = GenerativeRecord("a b c", (Extraction("a", "b", ""),))
        aligned = lcs_align(rec)
        assert aligned.skipped[0].reason == "empty arg2"

    def test_longest_run_preferred(self):
        # "the big dog" must match as one run even though "the" also occurs
        # earlier in the sentence.
        rec = GenerativeRecord(
            "the cat chased the big dog",
            (Extraction("the cat", "chased", "the big dog"),),
        )
        aligned = lcs_align(rec)
        assert letters(aligned.grid.masks[0]) == "SSROOOBBB"

    def test_exclusion_forces_disjoint_spans(self):
        # Both parts want "on"; exclusion hands the first occurrence to the
        # relation (processed before arg2) and the second to arg2.
        rec = GenerativeRecord(
            "it sits on the mat on monday",
            (Extraction("it", "sits on", "the mat on monday"),),
        )
        aligned = lcs_align(rec)
        assert not aligned.skipped
        mask = aligned.grid.masks[0]
        counts = Counter(mask.labels)
        assert counts[R] == 2 and counts[O] == 4

    def test_masks_are_class_disjoint_and_sound(self, imojie_fixture_path):
        records = read_imojie_jsonl(imojie_fixture_path)
        for record in records:
            aligned = lcs_align(record)
            accepted = [e for e in record.tuples
                        if e not in [s.extraction for s in aligned.skipped]]
            for mask, ext in zip(aligned.grid.masks, accepted):
                labeled = [
                    tok for tok, lab in zip(aligned.sequence.tokens, mask.labels)
                    if lab != B
                ]
                demand = Counter(
                    t for part in ext.as_tuple() for t in tuple_part_tokens(part)
                )
                # The labeled-token multiset is a sub-multiset of the tuple's
                # tokens (modulo the placeholder-bracket equivalence).
                norm = lambda t: t[1:-1] if t in sl.PLACEHOLDER_TOKENS else t
                got = Counter(norm(t) for t in labeled)
                want = Counter(norm(t) for t in demand.elements())
                assert not got - want


class TestConll:
    def test_parse_sample(self, lsoie_fixture_path):
        records = read_conll(lsoie_fixture_path)
        assert len(records) == 4
        assert records[0].tokens[0] == "The"
        assert len(records[0].role_labels) == 2
        assert len(records[1].role_labels) == 1

    def test_basic_conversion(self):
        rec = ConllRecord(("Rain", "fell", "on", "Monday"),
                          (("A0-B", "P-B", "A1-B", "A1-I"),))
        out = lsoie_convert(rec)
        assert out.accepted
        assert letters(out.grid.masks[0]) == "SROOBBB"

    def test_higher_arguments_merge_into_object(self):
        rec = ConllRecord(
            ("Maria", "sold", "the", "house", "to", "her", "neighbor"),
            (("A0-B", "P-B", "A1-B", "A1-I", "A2-B", "A2-I", "A2-I"),),
        )
        out = lsoie_convert(rec)
        assert letters(out.grid.masks[0]) == "SROOOOOBBB"

    def test_missing_second_argument_rejected(self):
        rec = ConllRecord(("Rain", "fell"), (("A0-B", "P-B"),))
        out = lsoie_convert(rec)
        assert not out.accepted
        assert "fewer than two arguments" in out.rejected[0]

    def test_missing_predicate_rejected(self):
        rec = ConllRecord(("Rain", "fell"), (("A0-B", "A1-B"),))
        out = lsoie_convert(rec)
        assert "no predicate" in out.rejected[0]

    def test_malformed_bi_sequence(self):
        rec = ConllRecord(("a", "b"), (("A0-I", "P-B"),))
        with pytest.raises(BadAnnotation):
            lsoie_convert(rec)

    def test_unknown_tag(self):
        rec = ConllRecord(("a",), (("X-B",),))
        with pytest.raises(BadAnnotation):
            lsoie_convert(rec)

    def test_placeholders_appended_with_background(self):
        rec = ConllRecord(("Rain", "fell", "hard"), (("A0-B", "P-B", "A1-B"),))
        out = lsoie_convert(rec)
        assert out.sequence.tokens[-3:] == sl.PLACEHOLDER_TOKENS
        assert out.grid.masks[0].labels[-3:] == (B, B, B)

    def test_sample_file_end_to_end(self, lsoie_fixture_path):
        records = read_conll(lsoie_fixture_path)
        results = [lsoie_convert(r) for r in records]
        # record 0 layer 1 lacks arguments; record 2 lacks a second argument
        assert results[0].grid.n_gold == 1
        assert results[1].grid.n_gold == 1
        assert not results[2].accepted
        assert results[3].grid.n_gold == 1


class TestSynth:
    def test_forced_single_template(self, pool):
        templates = (TemplateSpec(1.0, "single"),)
        samples = synth_generate(pool, 3, seed=0, templates=templates)
        for s in samples:
            assert s.record.sentence.endswith(" .")
            assert len(s.record.tuples) == 1
            a, r, o = s.record.tuples[0].as_tuple()
            assert s.record.sentence == f"{a} {r} {o} ."

    def test_forced_pair_template(self, pool):
        templates = (TemplateSpec(1.0, "pair"),)
        samples = synth_generate(pool, 5, seed=1, templates=templates,
                                 conjunctions=("while",))
        for s in samples:
            assert " while " in s.record.sentence
            assert len(s.record.tuples) == 2

    def test_arity_matches_template(self, pool):
        samples = synth_generate(pool, 300, seed=2)
        for s in samples:
            n = len(s.record.tuples)
            if s.template == "single":
                assert n == 1
            elif s.template == "pair":
                assert n == 2
            elif s.template == "commas":
                assert 3 <= n <= 5
            else:
                assert 2 <= n <= 9

    def test_template_frequencies(self, pool):
        samples = synth_generate(pool, 10_000, seed=3)
        freqs = template_frequencies(samples)
        assert abs(freqs["single"] - 0.10) < 0.02
        assert abs(freqs["pair"] - 0.20) < 0.02
        assert abs(freqs["commas"] - 0.35) < 0.02
        assert abs(freqs["periods"] - 0.35) < 0.02

    def test_bitwise_reproducible(self, pool):
        a = synth_generate(pool, 50, seed=42)
        b = synth_generate(pool, 50, seed=42)
        assert a == b

    def test_triplets_unique_within_sentence(self, pool):
        samples = synth_generate(pool, 200, seed=4)
        for s in samples:
            tuples = [e.as_tuple() for e in s.record.tuples]
            assert len(set(tuples)) == len(tuples)

    def test_pool_too_small(self):
        small = TripletPool((("a", "b", "c"),) * 8)
        with pytest.raises(ConfigError):
            synth_generate(small, 1, seed=0)

    def test_gold_aligns_perfectly(self, pool):
        samples = synth_generate(pool, 40, seed=5)
        for s in samples:
            aligned = lcs_align(s.record)
            assert not aligned.skipped
            assert aligned.grid.n_gold == len(s.record.tuples)


class TestTuplesTsv:
    def test_roundtrip_identity(self, tmp_path):
        records = [
            GenerativeRecord("alpha beta .", (Extraction("alpha", "beta", "gamma", 0.5),)),
            GenerativeRecord(
                "delta eps .",
                (Extraction("d", "e", "f", 1.0), Extraction("g", "h", "i", 0.25)),
            ),
        ]
        path = tmp_path / "t.tsv"
        write_tuples_tsv(path, records)
        assert read_tuples_tsv(path) == records

    def test_missing_confidence_written_as_one(self, tmp_path):
        path = tmp_path / "t.tsv"
        write_tuples_tsv(path, [GenerativeRecord("s", (Extraction("a", "b", "c"),))])
        line = path.read_text().strip()
        assert line.split("\t")[1] == "1.0"

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("one\ttwo\tthree\n")
        with pytest.raises(FormatError) as err:
            read_tuples_tsv(path)
        assert ":1:" in str(err.value)

    def test_bad_confidence(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("s\thigh\ta\tb\tc\n")
        with pytest.raises(FormatError):
            read_tuples_tsv(path)

    def test_grouping_by_sentence(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text(
            "s1\t1.0\ta\tb\tc\n"
            "s2\t1.0\td\te\tf\n"
            "s1\t0.5\tg\th\ti\n"
        )
        records = read_tuples_tsv(path)
        assert [r.sentence for r in records] == ["s1", "s2"]
        assert len(records[0].tuples) == 2


class TestImojieJsonl:
    def test_read_fixture(self, imojie_fixture_path):
        records = read_imojie_jsonl(imojie_fixture_path)
        assert len(records) == 100
        assert all(r.tuples for r in records)

    def test_extra_parts_append_to_arg2(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"sentence": "s", "tuples": [["a", "r", "b", "c", "d"]]}\n')
        records = read_imojie_jsonl(path)
        assert records[0].tuples[0].arg2 == "b c d"

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text("{nope}\n")
        with pytest.raises(FormatError):
            read_imojie_jsonl(path)


class TestGridJsonl:
    def test_roundtrip(self, tmp_path, pool):
        samples = synth_generate(pool, 10, seed=6)
        aligned = [lcs_align(s.record) for s in samples]
        path = tmp_path / "grids.jsonl"
        write_grid_jsonl(path, aligned)
        loaded = read_grid_jsonl(path)
        assert len(loaded) == len(aligned)
        for (seq, grid), original in zip(loaded, aligned):
            assert seq.tokens == original.sequence.tokens
            assert grid == original.grid

    def test_bad_class_letter(self, tmp_path):
        path = tmp_path / "g.jsonl"
        path.write_text('{"sentence": "s", "tokens": ["a"], "placeholders": 0, "masks": [["Z"]]}\n')
        with pytest.raises(FormatError):
            read_grid_jsonl(path)
