import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from stegodetect.errors import DecodeError, UsageError
from stegodetect.numerics import Rng
from stegodetect.stegogen import (BOS, EOS, BitStream, decode, generate, synthesize, synthesize_dataset,
                                  train_lm)

TOY = ["the cat sat on the mat", "the dog sat on the log", "a cat ate the rat", "the cat ran",
       "dogs and cats and rats", "one two three four five six seven eight nine ten"]


def test_bitstream_big_endian_and_padding():
    b = BitStream([1, 0, 1])
    assert b.read(2) == 2 and b.read(1) == 1 and not b.padded
    assert b.read(2) == 0 and b.padded
    w = BitStream()
    w.write(5, 4)
    assert w.bits == [0, 1, 0, 1]
    assert BitStream.from_bytes(b"\x81").bits == [1, 0, 0, 0, 0, 0, 0, 1]


def test_bigram_certain_transition():
    lm = train_lm(["a b"], order=2)
    assert lm.prob("b", ["a"]) == 1.0


def test_counts_match_sliding_window_tally():
    lm = train_lm(TOY, order=3)
    tally = Counter()
    for line in TOY:
        seq = [BOS, BOS] + line.split() + [EOS]
        for i in range(2, len(seq)):
            tally[tuple(seq[i - 2 : i + 1])] += 1
    got = Counter({ctx + (w,): c for ctx, table in lm.tables[2].items() for w, c in table.items()})
    assert got == tally
    uni = Counter(w for line in TOY for w in line.split() + [EOS])
    assert dict(lm.tables[0][()]) == dict(uni)


def test_unseen_context_backs_off_to_unigram():
    lm = train_lm(TOY, order=3)
    uni = lm.tables[0][()]
    assert lm.prob("the", ["zebra", "quux"]) == uni["the"] / sum(uni.values())
    assert lm.ranked(("zebra", "quux"), 4) == lm.unigram_rank[:4]


def test_empty_corpus_rejected():
    with pytest.raises(UsageError):
        train_lm(["", "  "])


def test_index_rule():
    lm = train_lm(TOY, order=3)
    pool = lm.ranked(lm.context_of([]), 4)
    assert len(pool) == 4 and len(set(pool)) == 4
    assert generate(lm, 2, BitStream([1, 0]), 1) == [pool[2]]


def test_pool_order_and_fallback():
    lm = train_lm(TOY, order=3)
    # after "the cat": sat, ran, then backoff "cat" followers, then unigram fill
    pool = lm.ranked(("the", "cat"), 8)
    assert pool[:2] == ["ran", "sat"]
    assert EOS not in pool and len(set(pool)) == 8
    assert pool[2:3] == ["ate"]


def test_capacity_arithmetic():
    lm = train_lm(TOY, order=3)
    bits = BitStream([1, 0, 0, 1, 1, 1, 0, 0])
    out = generate(lm, 2, bits, 4)
    assert len(out) == 4 and bits.consumed == 8 and not bits.padded


def test_vocabulary_smaller_than_pool_is_usage_error():
    with pytest.raises(UsageError):
        generate(train_lm(["a b"]), 3, BitStream([0] * 3), 1)


def test_cover_generation_deterministic_under_seed():
    lm = train_lm(TOY, order=3)
    a = generate(lm, 0, None, 20, Rng(9).substream(1))
    b = generate(lm, 0, None, 20, Rng(9).substream(1))
    assert a == b and len(a) >= 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.lists(st.integers(0, 1), min_size=64, max_size=64))
def test_round_trip_64_bit_payloads(bpw, bits):
    lm = train_lm(TOY * 3 + [" ".join("w%d" % i for i in range(40))], order=3)
    n = math.ceil(64 / bpw)
    payload = BitStream(bits)
    sent = generate(lm, bpw, payload, n)
    assert payload.consumed == bpw * len(sent)
    assert decode(lm, sent, bpw).bits[:64] == bits


def test_decode_bpw_zero_is_empty():
    lm = train_lm(TOY)
    assert len(decode(lm, ["the", "cat"], 0)) == 0


def test_tampered_word_reports_position():
    lm = train_lm(TOY + [" ".join("w%d" % i for i in range(40))], order=3)
    sent = generate(lm, 1, BitStream([0, 1, 1, 0, 1]), 5)
    sent[3] = "w39"
    with pytest.raises(DecodeError) as err:
        decode(lm, sent, 1)
    assert err.value.position == 3


def test_synthesize_balanced_lengths_and_deterministic():
    lm = train_lm(TOY, order=3)
    corpus = synthesize_dataset(lm, 100, [0, 2], seed=4)
    assert len(corpus) == 200 and corpus.histogram() == {0: 100, 2: 100}
    assert all(8 <= len(s.tokens) <= 40 for s in corpus.samples)
    again = synthesize_dataset(lm, 100, [0, 2], seed=4)
    assert [s.tokens for s in again.samples] == [s.tokens for s in corpus.samples]
    for s in synthesize(lm, 10, [3], seed=4):
        assert decode(lm, s.tokens, 3) == s.payload


def test_cover_and_top_rate_unigrams_differ(text_lm):
    corpus = synthesize_dataset(text_lm, 300, [0, 5], seed=11)
    counts = {b: Counter(w for s in corpus.samples if s.bpw == b for w in s.tokens) for b in (0, 5)}
    top = [w for w, _ in (counts[0] + counts[5]).most_common(200)]
    table = np.array([[counts[b][w] for w in top] for b in (0, 5)])
    stat, p, dof, _ = chi2_contingency(table)
    from scipy.stats import chi2
    assert stat > chi2.ppf(0.999, dof)


def test_mean_logprob_non_increasing_over_stego_rates(text_lm):
    per = 1000
    corpus = synthesize_dataset(text_lm, per, [1, 2, 3, 4, 5], seed=21)
    stats = []
    for b in range(1, 6):
        lp = np.array([text_lm.logprob(s.tokens) for s in corpus.samples if s.bpw == b])
        stats.append((lp.mean(), lp.std(ddof=1) / math.sqrt(len(lp))))
    for (m1, s1), (m2, s2) in zip(stats, stats[1:]):
        assert m2 <= m1 + 3 * math.hypot(s1, s2), stats
