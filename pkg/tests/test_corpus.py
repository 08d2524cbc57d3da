from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stegodetect.corpus import (PAD, PAD_ID, UNK, UNK_ID, LabeledCorpus, ManifestEntry, Sample, Vocabulary,
                                batches, build_vocab, load_tsteg_layout, read_manifest, sentences_from_text,
                                split, tokenize, write_manifest)
from stegodetect.errors import DataError, StorageError, UsageError


def test_tokenize_examples():
    assert tokenize("Hello, World!") == ["hello", "world"]
    assert tokenize("It's mid-week...  ok") == ["it's", "mid-week", "ok"]
    assert tokenize("   ") == []
    assert tokenize("-- !!") == []


@given(st.text(max_size=60))
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks
    assert all(t and t == t.lower() for t in toks)


def test_vocab_reserved_ids_and_ranking():
    v = build_vocab([["b", "a", "b", "c", "a", "b"], ["d"]])
    assert v.to_list()[:2] == [PAD, UNK]
    assert v.to_list()[2:] == ["b", "a", "c", "d"]  # count desc, ties alphabetical
    assert v.id("never") == UNK_ID
    assert v.encode(["b", "zzz"]) == [2, UNK_ID]


def test_vocab_cap_and_min_freq():
    streams = [["w%d" % i] * (i + 1) for i in range(50)]
    v = build_vocab(streams, max_size=12)
    assert len(v) == 12 and v.word(2) == "w49"
    v2 = build_vocab(streams, min_freq=48)
    assert v2.to_list()[2:] == ["w49", "w48", "w47"]
    with pytest.raises(UsageError):
        build_vocab([[]])


def test_vocab_encode_truncates_and_round_trips():
    v = build_vocab([["a", "b", "c"]])
    ids = v.encode(["a"] * 100)
    assert len(ids) == 64
    assert v.decode(v.encode(["c", "a"]) + [PAD_ID]) == ["c", "a"]
    assert Vocabulary.from_list(v.to_list()).to_list() == v.to_list()
    with pytest.raises(DataError):
        Vocabulary.from_list(["x", "y"])


def _layout(tmp_path: Path):
    (tmp_path / "news").mkdir()
    (tmp_path / "news" / "cover.txt").write_text("one line here\ntwo\n\nthree words now\n")
    (tmp_path / "news" / "3bpw.txt").write_text("a b c\nd e f\n")
    (tmp_path / "news" / "1bpw.txt").write_text("x\n")
    (tmp_path / "README").write_text("ignored\n")
    write_manifest(tmp_path / "manifest.tsv", [
        ManifestEntry("news/cover.txt", "news", 0),
        ManifestEntry("news/*bpw.txt", "news", 3),
    ])
    return tmp_path


def test_manifest_loading_first_match_wins(tmp_path):
    root = _layout(tmp_path)
    corpus = load_tsteg_layout(root, root / "manifest.tsv")
    assert corpus.histogram() == {0: 3, 3: 3}
    assert [s.tokens for s in corpus.samples if s.bpw == 0][0] == ["one", "line", "here"]


def test_manifest_errors(tmp_path):
    bad = tmp_path / "m.tsv"
    bad.write_text("# comment\nx\tnews\t9\n")
    with pytest.raises(DataError, match="0..5"):
        read_manifest(bad)
    bad.write_text("x news 1\n")
    with pytest.raises(DataError):
        read_manifest(bad)
    with pytest.raises(StorageError):
        load_tsteg_layout(tmp_path / "missing", [])


def test_binary_and_rate_views():
    samples = [Sample(["w"], b) for b in (0, 0, 1, 3, 3, 5)]
    corpus = LabeledCorpus(samples)
    assert corpus.labels == [0, 0, 1, 3, 3, 5]
    b3 = corpus.binary(3)
    assert b3.labels == [0, 0, 1, 1]
    with pytest.raises(UsageError):
        corpus.binary(2)


def test_split_stratified_ratios_and_determinism():
    labels = [0] * 1000 + [1] * 1000
    s = split(labels, seed=5)
    assert (len(s.train), len(s.val), len(s.test)) == (1600, 200, 200)
    for part in (s.train, s.val, s.test):
        assert sum(labels[i] for i in part) * 2 == len(part)
    assert set(s.train) | set(s.val) | set(s.test) == set(range(2000))
    assert not set(s.train) & set(s.test)
    assert split(labels, seed=5) == s
    assert split(labels, seed=6) != s
    assert s.get("all") == list(range(2000))


def test_split_small_class_errors():
    with pytest.raises(UsageError):
        split([0, 0, 0, 1, 1])
    with pytest.raises(UsageError):
        split([0] * 10, ratios=(0.5, 0.5, 0.5))


def test_batches_keep_remainder_and_cover_split():
    seqs = [[2] * (1 + i % 7) for i in range(130)]
    labels = [i % 2 for i in range(130)]
    out = batches(seqs, labels, range(130), seed=3)
    assert [len(b.index) for b in out] == [128, 2]
    assert sorted(i for b in out for i in b.index.tolist()) == list(range(130))
    b = out[0]
    for row, i in enumerate(b.index):
        assert b.lengths[row] == len(seqs[i])
        assert (b.ids[row, b.lengths[row]:] == PAD_ID).all()
    again = batches(seqs, labels, range(130), seed=3)
    assert [x.index.tolist() for x in again] == [x.index.tolist() for x in out]


def test_empty_sequence_rejected_in_batch():
    with pytest.raises(DataError):
        batches([[]], [0], [0])


def test_sentences_from_text():
    text = "The cat sat down. It ran! Why not go there? ok"
    assert sentences_from_text(text) == [["the", "cat", "sat", "down"], ["why", "not", "go", "there"]]
