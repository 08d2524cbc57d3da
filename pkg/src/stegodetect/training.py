"""Loss, Adam, gradient clipping and the early-stopping epoch loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .corpus import Split, batches
from .errors import DataError, NumericError, UsageError
from .network import ModelParams, backward, cross_entropy_grad, forward, is_regularized

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    dropout: float = 0.5
    l2_coeff: float = 1e-4
    max_epochs: int = 30
    patience: int = 5
    clip_norm: float = 5.0
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise UsageError("learning_rate, batch_size, max_epochs and patience must be positive")
        if self.clip_norm <= 0 or self.l2_coeff < 0:
            raise UsageError("clip_norm must be positive and l2_coeff non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise UsageError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def l2_penalty(params: ModelParams) -> float:
    return 0.5 * sum(float(np.sum(np.square(w, dtype=np.float64)))
                     for name, w in params.tensors.items() if is_regularized(name))


def compute_loss(probs: np.ndarray, labels: Sequence[int], params: ModelParams | None = None,
                 l2_coeff: float = 0.0) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy plus ``l2_coeff/2 * sum(W**2)``.

    Returns the scalar loss and d(error term)/d(logits).
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or len(labels) != probs.shape[0] or len(labels) == 0:
        raise DataError("probabilities and labels disagree in batch size")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise DataError("label outside the class range")
    p_true = probs[np.arange(len(labels)), labels].astype(np.float64)
    if nx.DEBUG and np.any(p_true < PROB_FLOOR):
        log.warning("true-class probability below %g clamped before log", PROB_FLOOR)
    loss = -float(np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))
    if l2_coeff and params is not None:
        loss += l2_coeff * l2_penalty(params)
    return loss, cross_entropy_grad(probs, labels)


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most ``clip_norm``.

    Returns the norm before clipping.
    """
    if clip_norm <= 0:
        raise UsageError("clip_norm must be positive")
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params: ModelParams, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update of every tensor from ``params.grads``."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, w in params.tensors.items():
        g = params.grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        w -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    val_p: float
    val_r: float
    val_f1: float

    def line(self) -> str:
        return (f"{self.epoch}\t{self.train_loss:.6f}\t{self.val_acc:.6f}\t"
                f"{self.val_p:.6f}\t{self.val_r:.6f}\t{self.val_f1:.6f}")


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord]
    best_epoch: int

    def log_text(self) -> str:
        header = "epoch\ttrain_loss\tval_acc\tval_p\tval_r\tval_f1\n"
        return header + "".join(r.line() + "\n" for r in self.log)


def train(params: ModelParams, sequences: Sequence[Sequence[int]], labels: Sequence[int], split: Split,
          config: TrainConfig, on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Fit ``params`` in place; return a copy of the best-validation checkpoint."""
    from .evaluation import evaluate

    if not split.train or not split.val:
        raise UsageError("training needs nonempty train and validation splits")
    params.config.dropout_rate = config.dropout
    root = nx.Rng(config.seed)
    state = AdamState()
    history: list[EpochRecord] = []
    best, best_acc, best_epoch, waited = params.copy(), -1.0, 0, 0
    val_seqs = [sequences[i] for i in split.val]
    val_labels = [labels[i] for i in split.val]

    for epoch in range(1, config.max_epochs + 1):
        total, count = 0.0, 0
        for b, batch in enumerate(batches(sequences, labels, split.train, config.batch_size,
                                          seed=root.substream(1, epoch))):
            params.zero_grad()
            trace = forward(batch.ids, batch.lengths, params, train=True, rng=root.substream(2, epoch, b))
            loss, _ = compute_loss(trace.probs, batch.labels, params, config.l2_coeff)
            if not math.isfinite(loss):
                raise NumericError(f"loss diverged at epoch {epoch}, batch {b}")
            backward(trace, batch.labels, params, config.l2_coeff)
            clip_gradients(params.grads, config.clip_norm)
            adam_step(params, state, config.learning_rate)
            total += loss * len(batch.labels)
            count += len(batch.labels)

        m = evaluate(params, val_seqs, val_labels)
        acc, p, r, f1 = m.headline()
        rec = EpochRecord(epoch, total / count, acc, p, r, f1)
        history.append(rec)
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, rec.train_loss, acc)
        if on_epoch is not None:
            on_epoch(rec)
        if acc > best_acc:
            best, best_acc, best_epoch, waited = params.copy(), acc, epoch, 0
        else:
            waited += 1
            if waited >= config.patience:
                break
    return TrainResult(best, history, best_epoch)
