"""Confusion-matrix metrics, bpw sweeps and feature export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, StorageError, UsageError
from .network import ModelParams, decide, fused_features, predict_proba


class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predictions."""

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or np.any(counts < 0):
            raise UsageError("confusion matrix must be square with non-negative counts")
        self.counts = counts

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def metrics(self, positive: int | None = None) -> "Metrics":
        return Metrics.from_confusion(self, positive)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class Metrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_p: float
    macro_r: float
    macro_f1: float
    confusion: ConfusionMatrix
    positive: int | None = None

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, positive: int | None = None) -> "Metrics":
        c = cm.counts
        tp = np.diag(c)
        p = _ratio(tp, c.sum(axis=0))
        r = _ratio(tp, c.sum(axis=1))
        f1 = _ratio(2 * p * r, p + r)
        acc = float(tp.sum() / c.sum()) if c.sum() else 0.0
        return cls(acc, p, r, f1, float(p.mean()), float(r.mean()), float(f1.mean()), cm, positive)

    def headline(self) -> tuple[float, float, float, float]:
        """(acc, P, R, F1): positive-class figures for binary, macro otherwise."""
        if self.positive is not None:
            k = self.positive
            return self.accuracy, float(self.precision[k]), float(self.recall[k]), float(self.f1[k])
        return self.accuracy, self.macro_p, self.macro_r, self.macro_f1


def evaluate_binary(params: ModelParams, sequences, labels, threshold: float | None = None) -> Metrics:
    """Stego-vs-cover metrics; P/R are reported for the stego class."""
    if params.config.num_classes != 2:
        raise UsageError("evaluate_binary needs a 2-class model")
    if len(sequences) == 0:
        raise UsageError("nothing to evaluate")
    thr = params.config.threshold if threshold is None else threshold
    probs = predict_proba(params, sequences)
    pred = decide(probs[:, 1], thr)
    return ConfusionMatrix.from_predictions(labels, pred, 2).metrics(positive=1)


def evaluate_multiclass(params: ModelParams, sequences, labels) -> Metrics:
    """Argmax predictions (lowest id wins ties), macro-averaged P/R/F1."""
    if len(sequences) == 0:
        raise UsageError("nothing to evaluate")
    probs = predict_proba(params, sequences)
    pred = np.argmax(probs, axis=1)
    return ConfusionMatrix.from_predictions(labels, pred, params.config.num_classes).metrics()


def evaluate(params: ModelParams, sequences, labels) -> Metrics:
    if params.config.num_classes == 2:
        return evaluate_binary(params, sequences, labels)
    return evaluate_multiclass(params, sequences, labels)


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent pairs where the later value is strictly smaller."""
    return sum(1 for a, b in zip(values, values[1:]) if b < a)


@dataclass
class SweepReport:
    rows: list[tuple[int, float, float, float]]
    inversions: int

    def tsv(self) -> str:
        return "".join(f"{b}\t{a:.6f}\t{p:.6f}\t{r:.6f}\n" for b, a, p, r in self.rows)

    def table(self) -> str:
        lines = [f"{'bpw':>4} {'Acc':>7} {'P':>7} {'R':>7}"]
        lines += [f"{b:>4} {a:7.3f} {p:7.3f} {r:7.3f}" for b, a, p, r in self.rows]
        lines.append(f"adjacent Acc inversions: {self.inversions}")
        return "\n".join(lines)


def sweep_bpw(results: Mapping[int, Metrics], bpw_list: Sequence[int]) -> SweepReport:
    """Tabulate per-bpw binary results and count accuracy inversions."""
    missing = [b for b in bpw_list if b not in results]
    if missing:
        raise UsageError(f"no model results for bpw {missing}")
    rows = []
    for b in bpw_list:
        acc, p, r, _ = results[b].headline()
        rows.append((b, acc, p, r))
    return SweepReport(rows, count_inversions([row[1] for row in rows]))


def parse_report(text: str) -> list[tuple[int, float, float, float]]:
    rows = []
    for line in text.splitlines():
        if line.strip():
            b, a, p, r = line.split("\t")
            rows.append((int(b), float(a), float(p), float(r)))
    return rows


def export_features(params: ModelParams, sequences, labels, bpws, path: str | Path) -> int:
    """Write fused features F, one tab-separated record per sample.

    Header ``label<TAB>bpw<TAB>f1..f_h``; values use 9 significant digits,
    which round-trips float32 exactly. Returns the record count.
    """
    if not (len(sequences) == len(labels) == len(bpws)):
        raise DataError("sequences, labels and bpw tags differ in length")
    F = fused_features(params, sequences) if len(sequences) else np.zeros((0, params.config.fused_dim))
    h = params.config.fused_dim
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("label\tbpw\t" + "\t".join(f"f{j}" for j in range(1, h + 1)) + "\n")
            for y, b, row in zip(labels, bpws, F):
                fh.write(f"{int(y)}\t{int(b)}\t" + "\t".join(f"{float(v):.9g}" for v in row) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write features to {path}: {exc}") from exc
    return len(F)


def read_features(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of ``export_features``: (labels, bpws, float32 features)."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            rows = [ln.rstrip("\n").split("\t") for ln in fh if ln.strip()]
    except OSError as exc:
        raise StorageError(f"cannot read features from {path}: {exc}") from exc
    if header[:2] != ["label", "bpw"]:
        raise DataError(f"{path}: not a feature dump")
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    bpws = np.array([int(r[1]) for r in rows], dtype=np.int64)
    F = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float32).reshape(len(rows), len(header) - 2)
    return labels, bpws, F
