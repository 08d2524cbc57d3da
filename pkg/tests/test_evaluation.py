import numpy as np
import pytest

from helpers import tiny_model
from stegodetect.errors import DataError, UsageError
from stegodetect.evaluation import (ConfusionMatrix, count_inversions, evaluate_binary, evaluate_multiclass,
                                    export_features, parse_report, read_features, sweep_bpw)
from stegodetect.network import predict_proba


def test_binary_hand_example():
    cm = ConfusionMatrix([[2, 1], [1, 2]])  # TN FP / FN TP
    acc, p, r, f1 = cm.metrics(positive=1).headline()
    assert acc == pytest.approx(2 / 3) and p == pytest.approx(2 / 3) and r == pytest.approx(2 / 3)
    assert f1 == pytest.approx(2 / 3)


def test_perfect_predictions():
    y = [0, 1, 2, 3, 4, 5] * 3
    m = ConfusionMatrix.from_predictions(y, y, 6).metrics()
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0
    assert ConfusionMatrix.from_predictions([0, 1], [0, 1], 2).metrics(1).headline() == (1.0, 1.0, 1.0, 1.0)


def test_zero_division_gives_zero_and_f1_is_harmonic_mean():
    m = ConfusionMatrix([[3, 0], [2, 0]]).metrics(positive=1)
    assert m.precision[1] == 0.0 and m.f1[1] == 0.0
    rng = np.random.default_rng(0)
    m = ConfusionMatrix(rng.integers(0, 20, (6, 6))).metrics()
    for p, r, f in zip(m.precision, m.recall, m.f1):
        assert f == pytest.approx(0 if p + r == 0 else 2 * p * r / (p + r))
        assert 0 <= p <= 1 and 0 <= r <= 1


def test_constant_predictor_macro_f1():
    K = 6
    y = np.repeat(np.arange(K), 50)
    m = ConfusionMatrix.from_predictions(y, np.full_like(y, 2), K).metrics()
    per_class = (2 / K) / (1 + 1 / K)
    assert m.f1[2] == pytest.approx(per_class, abs=1e-12)
    assert m.macro_f1 == pytest.approx(per_class / K, abs=1e-12)


def test_uniform_random_predictions_macro_f1_near_one_sixth():
    rng = np.random.default_rng(7)
    y = np.repeat(np.arange(6), 2000)
    scores = [ConfusionMatrix.from_predictions(y, rng.integers(0, 6, len(y)), 6).metrics().macro_f1
              for _ in range(20)]
    assert abs(np.mean(scores) - 1 / 6) < 0.005


def test_confusion_total_and_recompute():
    y, pred = [0, 1, 1, 0, 1], [0, 1, 0, 0, 1]
    cm = ConfusionMatrix.from_predictions(y, pred, 2)
    assert cm.total == 5
    again = ConfusionMatrix(cm.counts.tolist()).metrics(1)
    assert again.headline() == cm.metrics(1).headline()
    with pytest.raises(UsageError):
        ConfusionMatrix([[1, -1], [0, 0]])


def test_binary_threshold_half_matches_argmax():
    p = tiny_model(bidirectional=True)
    rng = np.random.default_rng(3)
    seqs = [rng.integers(2, 20, rng.integers(1, 8)).tolist() for _ in range(40)]
    labels = [i % 2 for i in range(40)]
    binary = evaluate_binary(p, seqs, labels)
    argmax = evaluate_multiclass(p, seqs, labels)
    probs = predict_proba(p, seqs)
    if not np.any(probs[:, 0] == probs[:, 1]):
        assert np.array_equal(binary.confusion.counts, argmax.confusion.counts)


def test_inversions():
    assert count_inversions([0.9] * 5) == 0
    assert count_inversions([0.8, 0.85, 0.9, 0.95, 0.99]) == 0
    assert count_inversions([0.8, 0.79, 0.9, 0.89, 0.99]) == 2


def test_sweep_report_and_parse():
    ms = {b: ConfusionMatrix([[10 - b, b], [1, 9]]).metrics(1) for b in (1, 2, 3)}
    rep = sweep_bpw(ms, [1, 2, 3])
    assert rep.inversions == 2
    rows = parse_report(rep.tsv())
    assert [r[0] for r in rows] == [1, 2, 3]
    assert rows[0][1] == pytest.approx(ms[1].accuracy, abs=1e-6)
    assert "inversions: 2" in rep.table()
    with pytest.raises(UsageError):
        sweep_bpw(ms, [1, 4])


def test_feature_export(tmp_path):
    p = tiny_model(bidirectional=True)
    seqs = [[2, 3, 4], [5], [6, 7]]
    n = export_features(p, seqs, [0, 1, 1], [0, 3, 3], tmp_path / "a.tsv")
    assert n == 3
    lines = (tmp_path / "a.tsv").read_text().splitlines()
    assert len(lines) == 4 and all(len(ln.split("\t")) == 2 + 5 for ln in lines)
    export_features(p, seqs, [0, 1, 1], [0, 3, 3], tmp_path / "b.tsv")
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    labels, bpws, F = read_features(tmp_path / "a.tsv")
    from stegodetect.network import fused_features
    assert labels.tolist() == [0, 1, 1] and bpws.tolist() == [0, 3, 3]
    assert np.array_equal(F, fused_features(p, seqs).astype(np.float32))
    with pytest.raises(DataError):
        export_features(p, seqs, [0], [0], tmp_path / "c.tsv")
