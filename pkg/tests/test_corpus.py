import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpfim.corpus import (
    EOM,
    MID,
    PAD,
    PRE,
    SUF,
    VOCAB_SIZE,
    Document,
    build_splits,
    corpus_fingerprint,
    detokenize,
    fim_example_from_parts,
    ingest_corpus,
    inject_duplicates,
    make_fim_example,
    read_examples,
    tokenize,
    write_examples,
)
from dpfim.errors import ConfigError, MissingInputError
from dpfim.seeding import rng_for
from dpfim.synth import synth_documents


def make_docs(n, length=40):
    return [Document(id=f"d{i}", text=f"{i:03d}" + "x" * (length - 3), origin="-") for i in range(n)]


class TestTokenizer:
    def test_byte_identity(self):
        assert tokenize("ab") == [97, 98]

    def test_empty(self):
        assert tokenize("") == []

    def test_roundtrip_simple(self):
        assert detokenize(tokenize("fun main()")) == "fun main()"

    def test_sentinels_outside_byte_range(self):
        assert {PRE, SUF, MID, EOM, PAD} == set(range(256, 261))
        assert VOCAB_SIZE == 261

    @given(st.binary(max_size=400))
    def test_roundtrip_bytes(self, data):
        assert bytes(tokenize(data)) == data

    @given(st.text(max_size=200))
    def test_roundtrip_text(self, text):
        assert detokenize(tokenize(text)) == text


class TestFimExample:
    def test_layout(self):
        # "abcdef" cut at i=2, j=4
        ex = fim_example_from_parts("x", "ab", "cd", "ef")
        assert ex.sequence == [PRE, 97, 98, SUF, 101, 102, MID, 99, 100, EOM]

    def test_loss_mask_targets_middle_and_eom(self):
        ex = fim_example_from_parts("x", "ab", "cd", "ef")
        # positions whose next-token target is in middle + [EOM]
        mid_pos = ex.sequence.index(MID)
        expected = [mid_pos <= t < len(ex.sequence) - 1 for t in range(len(ex.sequence))]
        assert ex.loss_mask == expected
        assert sum(ex.loss_mask) == len(ex.middle) + 1

    def test_whole_document_as_middle(self):
        ex = fim_example_from_parts("x", "", "abcdef", "")
        assert ex.prefix == [] and ex.suffix == []
        assert detokenize(ex.middle) == "abcdef"
        assert ex.sequence[0] == PRE and ex.sequence[1] == SUF

    def test_too_short_rejected(self):
        doc = Document(id="t", text="ab", origin="-")
        assert make_fim_example(doc, rng_for(0, "fim-cuts"), min_middle=4, max_len=64) is None

    def test_reconstruction(self):
        docs = synth_documents(30, seed=8, target_bytes=70)
        rng = rng_for(8, "fim-cuts")
        for doc in docs:
            ex = make_fim_example(doc, rng, min_middle=4, max_len=256)
            if ex is None:
                continue
            rebuilt = detokenize(ex.prefix) + detokenize(ex.middle) + detokenize(ex.suffix)
            assert rebuilt in doc.text  # a contiguous slice (whole doc if it fits)
            assert len(ex.middle) >= 4
            assert len(ex.sequence) <= 256

    def test_window_respects_max_len(self):
        doc = Document(id="big", text="x" * 500, origin="-")
        ex = make_fim_example(doc, rng_for(1, "fim-cuts"), min_middle=4, max_len=64)
        assert ex is not None
        assert len(ex.sequence) <= 64


class TestIngest:
    def test_sorted_order(self, tmp_path):
        (tmp_path / "b.kt").write_text("bbbb")
        (tmp_path / "a.kt").write_text("aaaa")
        docs = ingest_corpus(tmp_path, {".kt"}, 1024)
        assert [d.id for d in docs] == ["a.kt", "b.kt"]

    def test_empty_dir(self, tmp_path):
        assert ingest_corpus(tmp_path, {".kt"}, 1024) == []

    def test_truncation(self, tmp_path):
        (tmp_path / "big.kt").write_bytes(b"y" * 10240)
        docs = ingest_corpus(tmp_path, {".kt"}, 1024)
        assert len(docs[0].text.encode()) == 1024

    def test_non_utf8_skipped(self, tmp_path, caplog):
        (tmp_path / "bad.kt").write_bytes(b"\xff\xfe\x00bad")
        (tmp_path / "good.kt").write_text("ok content")
        docs = ingest_corpus(tmp_path, {".kt"}, 1024)
        assert [d.id for d in docs] == ["good.kt"]

    def test_extension_filter(self, tmp_path):
        (tmp_path / "a.py").write_text("python")
        (tmp_path / "a.kt").write_text("kotlin")
        docs = ingest_corpus(tmp_path, {".kt"}, 1024)
        assert [d.id for d in docs] == ["a.kt"]

    def test_missing_dir(self, tmp_path):
        with pytest.raises(MissingInputError):
            ingest_corpus(tmp_path / "nope", {".kt"}, 1024)

    def test_truncation_never_splits_utf8(self, tmp_path):
        (tmp_path / "u.kt").write_text("é" * 100, encoding="utf-8")  # 2 bytes each
        docs = ingest_corpus(tmp_path, {".kt"}, 11)
        assert docs[0].text == "é" * 5


class TestSplits:
    def test_partition_sizes(self):
        split = build_splits(make_docs(10), 7, 0.5, 0.3, 0.2, min_middle=4, max_len=128)
        assert (len(split.members), len(split.nonmembers), len(split.eval)) == (5, 3, 2)
        assert len(split.pretrain) == 0

    def test_determinism(self):
        docs = make_docs(20)
        a = build_splits(docs, 7, 0.4, 0.3, 0.2, min_middle=4, max_len=128)
        b = build_splits(docs, 7, 0.4, 0.3, 0.2, min_middle=4, max_len=128)
        for xs, ys in zip(
            (a.members, a.nonmembers, a.eval, a.pretrain),
            (b.members, b.nonmembers, b.eval, b.pretrain),
        ):
            assert [x.id for x in xs] == [y.id for y in ys]
            assert [x.sequence for x in xs] == [y.sequence for y in ys]

    def test_different_seed_changes_assignment(self):
        docs = make_docs(20)
        a = build_splits(docs, 7, 0.4, 0.3, 0.2, min_middle=4, max_len=128)
        b = build_splits(docs, 8, 0.4, 0.3, 0.2, min_middle=4, max_len=128)
        assert [x.id for x in a.members] != [y.id for y in b.members]

    def test_fractions_over_one(self):
        with pytest.raises(ConfigError):
            build_splits(make_docs(10), 7, 0.9, 0.2, 0.0, min_middle=4, max_len=128)

    def test_disjoint_ids(self):
        split = build_splits(make_docs(40), 3, 0.4, 0.3, 0.2, min_middle=4, max_len=128)
        sets = split.id_sets()
        assert sum(len(s) for s in sets) == 40
        assert len(set().union(*sets)) == 40

    def test_empty_split_fatal(self):
        with pytest.raises(ConfigError, match="empty"):
            build_splits(make_docs(2), 7, 0.5, 0.3, 0.2, min_middle=4, max_len=128)

    def test_empty_corpus_fatal(self):
        with pytest.raises(ConfigError):
            build_splits([], 7, 0.5, 0.3, 0.2, min_middle=4, max_len=128)


class TestDuplicates:
    def _members(self, n):
        return [fim_example_from_parts(f"m{i}", "aa", "bbbb", "cc") for i in range(n)]

    def test_counts(self):
        out, ids = inject_duplicates(self._members(100), 5, 0.1, rng_for(0, "duplicates"))
        assert len(out) == 140
        assert len(ids) == 10

    def test_k1_identity(self):
        members = self._members(100)
        out, ids = inject_duplicates(members, 1, 0.5, rng_for(0, "duplicates"))
        assert out == members and ids == []

    def test_fraction_zero_identity(self):
        members = self._members(100)
        out, ids = inject_duplicates(members, 5, 0.0, rng_for(0, "duplicates"))
        assert out == members and ids == []

    def test_flags_and_copies(self):
        out, ids = inject_duplicates(self._members(20), 3, 0.25, rng_for(1, "duplicates"))
        flagged = [e for e in out if e.is_duplicate]
        assert len(ids) == 5
        assert len(flagged) == 5 * 3
        assert len(out) == 20 + 5 * 2


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        docs = synth_documents(12, seed=4, target_bytes=70)
        rng = rng_for(4, "fim-cuts")
        examples = [e for e in (make_fim_example(d, rng, 4, 128) for d in docs) if e]
        examples[0].is_duplicate = True
        path = tmp_path / "x.jsonl"
        write_examples(path, examples)
        back = read_examples(path)
        assert len(back) == len(examples)
        for a, b in zip(examples, back):
            assert (a.id, a.sequence, a.loss_mask, a.is_duplicate) == (
                b.id, b.sequence, b.loss_mask, b.is_duplicate,
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingInputError):
            read_examples(tmp_path / "none.jsonl")

    def test_fingerprint_sensitivity(self):
        docs = make_docs(5)
        fp1 = corpus_fingerprint(docs)
        docs2 = make_docs(5)
        docs2[2] = Document(id="d2", text=docs2[2].text + "!", origin="-")
        assert fp1 != corpus_fingerprint(docs2)
        assert fp1 == corpus_fingerprint(make_docs(5))
