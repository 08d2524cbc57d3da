"""Tokenization, vocabulary, corpus ingestion, splits and batching."""

from __future__ import annotations

import fnmatch
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, StorageError, UsageError

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
MAX_SENTENCE_LEN = 64

_PUNCT = "\"'`.,;:!?()[]{}<>«»“”‘’…—–-_*/\\|~#@$%^&+="


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation at token edges.

    Apostrophes and hyphens inside a word survive ("it's", "mid-week").
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


class Vocabulary:
    """Word <-> id map with PAD=0 and UNK=1 reserved."""

    def __init__(self, words: Sequence[str]):
        self.itos = [PAD, UNK] + [w for w in words if w not in (PAD, UNK)]
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise UsageError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi and self.stoi[word] > UNK_ID

    def id(self, word: str) -> int:
        return self.stoi.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, tokens: Iterable[str], max_len: int = MAX_SENTENCE_LEN) -> list[int]:
        ids = [self.stoi.get(t, UNK_ID) for t in tokens]
        return ids[:max_len]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i != PAD_ID]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocabulary":
        if list(itos[:2]) != [PAD, UNK]:
            raise DataError("vocabulary must start with the PAD and UNK entries")
        return cls(itos[2:])


def build_vocab(token_streams: Iterable[Iterable[str]], max_size: int = 10_000, min_freq: int = 1) -> Vocabulary:
    if max_size < 3:
        raise UsageError("max_size must be >= 3 (PAD, UNK and one word)")
    counts: Counter = Counter()
    for stream in token_streams:
        counts.update(stream)
    if not counts:
        raise UsageError("cannot build a vocabulary from an empty token stream")
    ranked = sorted((w for w, c in counts.items() if c >= min_freq), key=lambda w: (-counts[w], w))
    return Vocabulary(ranked[: max_size - 2])


@dataclass
class Sample:
    tokens: list[str]
    bpw: int
    source: str = ""


@dataclass
class LabeledCorpus:
    """Tokenized sentences with their embedding rate.

    ``label_kind`` is ``rate`` (label = bpw class 0-5) or ``binary``
    (label 1 = stego).
    """

    samples: list[Sample]
    label_kind: str = "rate"
    labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = [s.bpw for s in self.samples] if self.label_kind == "rate" else [int(s.bpw > 0) for s in self.samples]
        if len(self.labels) != len(self.samples):
            raise DataError("labels and samples differ in length")

    def __len__(self) -> int:
        return len(self.samples)

    def histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(s.bpw for s in self.samples).items()))

    def binary(self, bpw: int) -> "LabeledCorpus":
        """Cover (bpw 0) against stego at one rate, label 1 = stego."""
        keep = [s for s in self.samples if s.bpw in (0, bpw)]
        if not any(s.bpw == bpw for s in keep) or not any(s.bpw == 0 for s in keep):
            raise UsageError(f"corpus lacks cover or bpw={bpw} samples")
        return LabeledCorpus(keep, "binary")

    def rate(self) -> "LabeledCorpus":
        return LabeledCorpus(list(self.samples), "rate")

    def encode(self, vocab: Vocabulary, max_len: int = MAX_SENTENCE_LEN) -> list[list[int]]:
        return [vocab.encode(s.tokens, max_len) for s in self.samples]


def read_lines(path: Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


@dataclass
class ManifestEntry:
    pattern: str
    format: str
    bpw: int


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse ``glob<TAB>format<TAB>bpw`` lines; ``#`` starts a comment."""
    entries = []
    for lineno, line in enumerate(read_lines(Path(path)), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected glob<TAB>format<TAB>bpw")
        try:
            bpw = int(parts[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bpw {parts[2]!r} is not an integer") from None
        if not 0 <= bpw <= 5:
            raise DataError(f"{path}:{lineno}: bpw must be in 0..5")
        entries.append(ManifestEntry(parts[0], parts[1], bpw))
    return entries


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.pattern}\t{e.format}\t{e.bpw}\n")


def load_tsteg_layout(root: str | Path, manifest: str | Path | Sequence[ManifestEntry],
                      max_len: int = MAX_SENTENCE_LEN) -> LabeledCorpus:
    """Load one-sentence-per-line files mapped by a manifest.

    Each nonempty line is a sample; the first manifest glob matching a file
    (path relative to ``root``) gives its format tag and bpw label. Files
    matched by no glob are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise StorageError(f"corpus root {root} does not exist")
    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    manifest_names = {Path(manifest).name} if isinstance(manifest, (str, Path)) else set()
    samples: list[Sample] = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        entry = next((e for e in entries if fnmatch.fnmatchcase(rel, e.pattern)), None)
        if entry is None:
            if path.name not in manifest_names:
                log.warning("no manifest entry for %s; ignored", rel)
            continue
        for line in read_lines(path):
            toks = tokenize(line)
            if toks:
                samples.append(Sample(toks[:max_len], entry.bpw, entry.format))
    corpus = LabeledCorpus(samples, "rate")
    log.info("loaded %d samples from %s; per-bpw counts %s", len(samples), root, corpus.histogram())
    return corpus


@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]

    def get(self, name: str) -> list[int]:
        if name == "all":
            return sorted(self.train + self.val + self.test)
        if name not in ("train", "val", "test"):
            raise UsageError(f"unknown split {name!r}")
        return getattr(self, name)


def split(labels: Sequence[int], ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> Split:
    """Stratified, seeded train/val/test assignment over sample indices."""
    from .numerics import Rng

    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise UsageError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    by_class: dict[int, list[int]] = {}
    for i, y in enumerate(labels):
        by_class.setdefault(int(y), []).append(i)
    rng = Rng(seed)
    out = Split([], [], [])
    for y in sorted(by_class):
        idx = by_class[y]
        if len(idx) < 3:
            raise UsageError(f"class {y} has {len(idx)} samples; stratification needs at least 3")
        perm = [idx[j] for j in rng.substream(y).permutation(len(idx))]
        n = len(idx)
        n_val = max(1, round(ratios[1] * n)) if ratios[1] > 0 else 0
        n_test = max(1, round(ratios[2] * n)) if ratios[2] > 0 else 0
        n_train = n - n_val - n_test
        out.train += perm[:n_train]
        out.val += perm[n_train : n_train + n_val]
        out.test += perm[n_train + n_val :]
    out.train.sort()
    out.val.sort()
    out.test.sort()
    return out


@dataclass
class Batch:
    ids: np.ndarray       # B x L_max, PAD-padded on the right
    lengths: np.ndarray   # valid_len per row
    labels: np.ndarray
    index: np.ndarray     # corpus positions of the rows


def make_batch(sequences: Sequence[Sequence[int]], labels: Sequence[int], index: Sequence[int]) -> Batch:
    lengths = np.array([len(sequences[i]) for i in index], dtype=np.int64)
    if np.any(lengths < 1):
        raise DataError("empty sequence in batch")
    ids = np.full((len(index), int(lengths.max())), PAD_ID, dtype=np.int64)
    for r, i in enumerate(index):
        ids[r, : lengths[r]] = sequences[i]
    return Batch(ids, lengths, np.array([labels[i] for i in index], dtype=np.int64), np.asarray(index, dtype=np.int64))


def batches(sequences: Sequence[Sequence[int]], labels: Sequence[int], indices: Sequence[int],
            batch_size: int = 128, seed=None) -> list[Batch]:
    """Cut ``indices`` into batches, shuffled by ``seed`` (an int or an Rng; None keeps order).

    The final partial batch is kept.
    """
    from .numerics import Rng

    order = list(indices)
    if seed is not None:
        rng = seed if isinstance(seed, Rng) else Rng(seed)
        order = [order[j] for j in rng.permutation(len(order))]
    return [make_batch(sequences, labels, order[s : s + batch_size]) for s in range(0, len(order), batch_size)]


_SENT_END = re.compile(r"(?<=[.!?])\s+")


def sentences_from_text(text: str, min_tokens: int = 3) -> list[list[str]]:
    """Rough sentence split of free running text into token lists."""
    flat = " ".join(text.split())
    out = []
    for chunk in _SENT_END.split(flat):
        toks = tokenize(chunk)
        if len(toks) >= min_tokens:
            out.append(toks)
    return out
