"""Cover and stego text synthesis from an n-gram language model.

Stego words are picked by payload bits: at each step the candidate next
words are ranked by conditional probability (count at the longest observed
context, then backed-off counts, ties lexicographic), the top ``2**bpw``
form the pool, and ``bpw`` bits (big-endian) index into it. Cover text
(bpw 0) samples from the add-one-smoothed conditional distribution.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import LabeledCorpus, Sample, tokenize
from .errors import DecodeError, UsageError
from .numerics import Rng

BOS, EOS = "<s>", "</s>"
MAX_BPW = 5


class BitStream:
    """Bits with a read cursor; reads past the end yield 0s and set ``padded``."""

    def __init__(self, bits: Iterable[int] = ()):
        self.bits = [int(b) & 1 for b in bits]
        self.cursor = 0
        self.padded = False

    def __len__(self) -> int:
        return len(self.bits)

    def read(self, n: int) -> int:
        """Read ``n`` bits as a big-endian integer."""
        value = 0
        for _ in range(n):
            if self.cursor < len(self.bits):
                bit = self.bits[self.cursor]
            else:
                bit = 0
                self.padded = True
            self.cursor += 1
            value = (value << 1) | bit
        return value

    def write(self, value: int, n: int) -> None:
        for k in range(n - 1, -1, -1):
            self.bits.append((value >> k) & 1)

    @property
    def consumed(self) -> int:
        return self.cursor

    @classmethod
    def random(cls, n: int, rng: Rng) -> "BitStream":
        return cls(rng.bits(n).tolist())

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitStream":
        return cls(int(c) for byte in data for c in format(byte, "08b"))

    def __eq__(self, other) -> bool:
        return isinstance(other, BitStream) and self.bits == other.bits

    def __repr__(self) -> str:
        return f"BitStream({''.join(map(str, self.bits[:32]))}{'...' if len(self.bits) > 32 else ''}, cursor={self.cursor})"


@dataclass
class NgramLM:
    """Counts for contexts of every length 0..order-1.

    ``tables[k]`` maps a k-word context tuple to a Counter of next words.
    """

    order: int
    tables: list[dict[tuple, Counter]]
    unigram_rank: list[str] = field(default_factory=list)
    _pools: dict = field(default_factory=dict, repr=False)
    _support: dict = field(default_factory=dict, repr=False)
    _ranked_cache: dict = field(default_factory=dict, repr=False)

    @property
    def vocabulary(self) -> list[str]:
        return self.unigram_rank

    def context_of(self, history: Sequence[str]) -> tuple[str, ...]:
        padded = [BOS] * (self.order - 1) + list(history)
        return tuple(padded[len(padded) - (self.order - 1):]) if self.order > 1 else ()

    def _longest(self, ctx: tuple[str, ...]) -> tuple[tuple[str, ...], Counter]:
        for k in range(len(ctx), -1, -1):
            sub = ctx[len(ctx) - k:]
            table = self.tables[k].get(sub)
            if table:
                return sub, table
        raise AssertionError("unigram table is empty")

    def prob(self, word: str, history: Sequence[str]) -> float:
        """Maximum-likelihood P(word | context) at the longest observed context."""
        _, table = self._longest(self.context_of(history))
        return table.get(word, 0) / sum(table.values())

    def smoothed_prob(self, word: str, history: Sequence[str]) -> float:
        """Add-one smoothed over the full vocabulary (plus end marker); never zero."""
        _, table = self._longest(self.context_of(history))
        v = len(self.unigram_rank) + 1
        return (table.get(word, 0) + 1) / (sum(table.values()) + v)

    def logprob(self, sentence: Sequence[str]) -> float:
        """Mean per-word log smoothed probability of a generated sentence."""
        if not sentence:
            return 0.0
        total = sum(math.log(self.smoothed_prob(w, sentence[:i])) for i, w in enumerate(sentence))
        return total / len(sentence)

    def ranked(self, ctx: tuple[str, ...], size: int) -> list[str]:
        """Top ``size`` next words for a context, never including markers.

        Words seen after the full context come first by count, then words
        from successively shorter contexts, finally the global frequency
        list; lexicographic order breaks every tie.
        """
        key = (ctx, size)
        pool = self._pools.get(key)
        if pool is not None:
            return pool
        pool, seen = [], set()
        for k in range(len(ctx), -1, -1):
            for w in self._sorted_followers(ctx[len(ctx) - k:]):
                if w not in seen:
                    pool.append(w)
                    seen.add(w)
                    if len(pool) == size:
                        break
            if len(pool) == size:
                break
        self._pools[key] = pool
        return pool

    def _sorted_followers(self, ctx: tuple[str, ...]) -> list[str]:
        hit = self._ranked_cache.get(ctx)
        if hit is None:
            if not ctx:
                hit = self.unigram_rank
            else:
                table = self.tables[len(ctx)].get(ctx, {})
                hit = [w for w in sorted(table, key=lambda w: (-table[w], w)) if w != EOS]
            self._ranked_cache[ctx] = hit
        return hit

    def sampling_support(self, ctx: tuple[str, ...], allow_end: bool) -> tuple[list[str], np.ndarray]:
        """Add-one-smoothed distribution over the longest observed context's followers."""
        key = (ctx, allow_end)
        hit = self._support.get(key)
        if hit is not None:
            return hit
        _, table = self._longest(ctx)
        words = sorted(w for w in table if allow_end or w != EOS)
        if not words:
            words = [self.unigram_rank[0]]
            counts = np.zeros(1)
        else:
            counts = np.array([table[w] for w in words], dtype=np.float64)
        p = (counts + 1.0) / (counts + 1.0).sum()
        self._support[key] = (words, np.cumsum(p))
        return self._support[key]


def train_lm(lines: Iterable[str | Sequence[str]], order: int = 3) -> NgramLM:
    """Count n-grams with sentence markers; lines may be raw text or token lists."""
    if order < 1:
        raise UsageError("order must be >= 1")
    tables: list[dict[tuple, Counter]] = [defaultdict(Counter) for _ in range(order)]
    uni: Counter = Counter()
    n_lines = 0
    for line in lines:
        toks = tokenize(line) if isinstance(line, str) else list(line)
        if not toks:
            continue
        n_lines += 1
        uni.update(toks)
        seq = [BOS] * (order - 1) + toks + [EOS]
        for pos in range(order - 1, len(seq)):
            word = seq[pos]
            for k in range(order):
                tables[k][tuple(seq[pos - k:pos])][word] += 1
    if n_lines == 0:
        raise UsageError("cannot train a language model on an empty corpus")
    tables = [dict(t) for t in tables]
    rank = sorted(uni, key=lambda w: (-uni[w], w))
    return NgramLM(order=order, tables=tables, unigram_rank=rank)


def generate(lm: NgramLM, bpw: int, bits: BitStream | None, max_len: int, rng: Rng | None = None,
             stop_at_end: bool = True) -> list[str]:
    """One sentence.

    bpw 0 samples cover text (stopping at the end marker when
    ``stop_at_end``); bpw >= 1 emits exactly ``max_len`` stego words, each
    consuming ``bpw`` bits. Pools never contain markers.
    """
    if not 0 <= bpw <= MAX_BPW:
        raise UsageError(f"bpw must be in 0..{MAX_BPW}")
    if max_len < 1:
        raise UsageError("max_len must be >= 1")
    out: list[str] = []
    if bpw == 0:
        if rng is None:
            raise UsageError("cover generation needs an rng")
        while len(out) < max_len:
            words, cdf = lm.sampling_support(lm.context_of(out), stop_at_end)
            w = words[min(int(np.searchsorted(cdf, rng.random(), side="right")), len(words) - 1)]
            if w == EOS:
                break
            out.append(w)
        return out
    if bits is None:
        raise UsageError("stego generation needs a bit stream")
    size = 1 << bpw
    for _ in range(max_len):
        pool = lm.ranked(lm.context_of(out), size)
        if len(pool) < size:
            raise UsageError(f"vocabulary too small for bpw={bpw}: {len(pool)} candidates")
        out.append(pool[bits.read(bpw)])
    return out


def decode(lm: NgramLM, sentence: Sequence[str], bpw: int) -> BitStream:
    """Recover the payload bits from a stego sentence."""
    if not 0 <= bpw <= MAX_BPW:
        raise UsageError(f"bpw must be in 0..{MAX_BPW}")
    out = BitStream()
    if bpw == 0:
        return out
    size = 1 << bpw
    for pos, word in enumerate(sentence):
        pool = lm.ranked(lm.context_of(sentence[:pos]), size)
        try:
            idx = pool.index(word)
        except ValueError:
            raise DecodeError(pos, f"word {word!r} is not in its top-{size} candidate pool") from None
        out.write(idx, bpw)
    return out


@dataclass
class SyntheticSentence:
    tokens: list[str]
    bpw: int
    payload: BitStream | None


def synthesize(lm: NgramLM, per_class: int, bpw_set: Sequence[int], seed: int,
               min_len: int = 8, max_len: int = 40) -> list[SyntheticSentence]:
    """Balanced sentences per bpw, each with its own RNG substream.

    Lengths are drawn uniformly from [min_len, max_len] for every class so
    length carries no label information.
    """
    if per_class < 1:
        raise UsageError("per-class count must be >= 1")
    if not 1 <= min_len <= max_len:
        raise UsageError("need 1 <= min_len <= max_len")
    root = Rng(seed)
    out = []
    for bpw in bpw_set:
        if not 0 <= bpw <= MAX_BPW:
            raise UsageError(f"bpw must be in 0..{MAX_BPW}")
        for i in range(per_class):
            rng = root.substream(bpw, i)
            n = int(rng.integers(min_len, max_len + 1))
            if bpw == 0:
                toks = generate(lm, 0, None, n, rng, stop_at_end=False)
                out.append(SyntheticSentence(toks, 0, None))
            else:
                payload = BitStream.random(bpw * n, rng)
                toks = generate(lm, bpw, payload, n)
                payload.cursor = 0
                out.append(SyntheticSentence(toks, bpw, payload))
    return out


def synthesize_dataset(lm: NgramLM, per_class: int, bpw_set: Sequence[int], seed: int,
                       min_len: int = 8, max_len: int = 40) -> LabeledCorpus:
    sents = synthesize(lm, per_class, bpw_set, seed, min_len, max_len)
    return LabeledCorpus([Sample(s.tokens, s.bpw, "synthetic") for s in sents], "rate")
