"""TS-RNN / TS-BiRNN: embedding, stacked LSTMs, splice, fusion, softmax head.

All heavy work runs batched over right-padded id matrices; the
single-sequence functions (``embed_sequence``, ``rnn_forward``, ...) are
thin views over the same code path. Gradients are derived by hand.

Parameter names::

    embedding                      vocab_size x d
    {fwd,bwd}.{l}.W_{i,f,c,o}      (input_dim + units) x units, rows [h_prev; x_t]
    {fwd,bwd}.{l}.b_{i,f,c,o}      units
    fusion.W, fusion.b             m x h, h
    out.W, out.b                   h x num_classes, num_classes
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .corpus import PAD_ID
from .errors import DataError, ShapeError, UsageError

DIRECTIONS = ("fwd", "bwd")
GATES = ("i", "f", "c", "o")


@dataclass
class ModelConfig:
    vocab_size: int
    embedding_dim: int = 256
    bidirectional: bool = False
    num_layers: int | None = None
    units: int | None = None
    fused_dim: int = 128
    num_classes: int = 2
    dropout_rate: float = 0.5
    threshold: float = 0.5

    def __post_init__(self):
        if self.num_layers is None:
            self.num_layers = 2 if self.bidirectional else 3
        if self.units is None:
            self.units = 100 if self.bidirectional else 200
        for name in ("vocab_size", "embedding_dim", "num_layers", "units", "fused_dim", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise UsageError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise UsageError("dropout_rate must lie in [0, 1)")
        if not 0.0 < self.threshold < 1.0:
            raise UsageError("threshold must lie in (0, 1)")

    @property
    def directions(self) -> tuple[str, ...]:
        return DIRECTIONS if self.bidirectional else DIRECTIONS[:1]

    @property
    def feature_dim(self) -> int:
        """Width m of the spliced vector Z."""
        return self.units * len(self.directions)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class LstmLayerParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def units(self) -> int:
        return self.W_i.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[0] - self.units

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        W = np.concatenate([self.W_i, self.W_f, self.W_c, self.W_o], axis=1)
        b = np.concatenate([self.b_i, self.b_f, self.b_c, self.b_o])
        return W, b


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {"embedding": (config.vocab_size, config.embedding_dim)}
    for d in config.directions:
        in_dim = config.embedding_dim
        for l in range(config.num_layers):
            for g in GATES:
                shapes[f"{d}.{l}.W_{g}"] = (in_dim + config.units, config.units)
            for g in GATES:
                shapes[f"{d}.{l}.b_{g}"] = (config.units,)
            in_dim = config.units
    shapes["fusion.W"] = (config.feature_dim, config.fused_dim)
    shapes["fusion.b"] = (config.fused_dim,)
    shapes["out.W"] = (config.fused_dim, config.num_classes)
    shapes["out.b"] = (config.num_classes,)
    return shapes


def is_regularized(name: str) -> bool:
    """Weight matrices except the embedding table carry the L2 penalty."""
    return name != "embedding" and name.rsplit(".", 1)[-1].startswith("W")


class ModelParams:
    """Every trainable tensor plus a same-shaped gradient buffer."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        shapes = expected_shapes(config)
        missing = [k for k in shapes if k not in tensors]
        extra = [k for k in tensors if k not in shapes]
        if missing or extra:
            raise ShapeError(f"parameter set mismatch: missing={missing} unexpected={extra}")
        for name, shape in shapes.items():
            if tuple(tensors[name].shape) != shape:
                raise ShapeError(f"tensor {name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.tensors = {k: np.ascontiguousarray(tensors[k]) for k in shapes}
        self.grads = {k: np.zeros_like(v) for k, v in self.tensors.items()}

    @classmethod
    def initialize(cls, config: ModelConfig, rng: nx.Rng) -> "ModelParams":
        tensors = {}
        for k, (name, shape) in enumerate(expected_shapes(config).items()):
            sub = rng.substream(k)
            if name.endswith(".b_f"):
                tensors[name] = nx.init_weights(shape, sub, "forget")
            elif len(shape) == 1:
                tensors[name] = nx.init_weights(shape, sub, "zeros")
            else:
                tensors[name] = nx.init_weights(shape, sub, "glorot")
        tensors["embedding"][PAD_ID] = 0.0
        return cls(config, tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def layer(self, direction: str, index: int) -> LstmLayerParams:
        p = f"{direction}.{index}."
        return LstmLayerParams(**{k: self.tensors[p + k] for k in
                                  ("W_i", "W_f", "W_c", "W_o", "b_i", "b_f", "b_c", "b_o")})

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


@dataclass
class EmbeddedSequence:
    matrix: np.ndarray  # L x d, rows past valid_len are zero
    valid_len: int


@dataclass
class LayerCache:
    reverse: bool
    inputs: np.ndarray          # L x B x (units + in_dim), the [h_prev, x_t] concatenations
    gates: np.ndarray           # L x B x 4n activated gates (i, f, g, o)
    c_prev: np.ndarray          # L x B x n
    tanh_c: np.ndarray          # L x B x n
    drop_mask: np.ndarray | None = None


@dataclass
class ForwardTrace:
    ids: np.ndarray
    lengths: np.ndarray
    train: bool
    layers: dict[str, list[LayerCache]] = field(default_factory=dict)
    top: dict[str, np.ndarray] = field(default_factory=dict)   # B x L x n per direction
    Z: np.ndarray | None = None
    F: np.ndarray | None = None
    F_mask: np.ndarray | None = None
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None

    def sample(self, i: int) -> dict:
        """Per-sample view of the cached outputs."""
        return {"Z": self.Z[i], "F": self.F[i], "logits": self.logits[i], "probs": self.probs[i]}


# ---------------------------------------------------------------- cell

def _gates(a: np.ndarray, n: int) -> np.ndarray:
    act = np.empty_like(a)
    act[:, : 2 * n] = nx.sigmoid(a[:, : 2 * n])
    act[:, 2 * n : 3 * n] = np.tanh(a[:, 2 * n : 3 * n])
    act[:, 3 * n :] = nx.sigmoid(a[:, 3 * n :])
    return act


def lstm_step(x_t, h_prev, c_prev, layer: LstmLayerParams):
    """One LSTM update on a vector or a batch of row vectors.

    Returns ``(h_t, c_t, cache)``; the cache holds the concatenated input,
    the activated gates ``(i, f, g, o)`` and ``tanh(c_t)``.
    """
    x_t = np.asarray(x_t)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    single = x_t.ndim == 1
    if single:
        x_t, h_prev, c_prev = x_t[None], h_prev[None], c_prev[None]
    n = layer.units
    if x_t.shape[1] != layer.input_dim or h_prev.shape[1] != n or c_prev.shape[1] != n:
        raise ShapeError(
            f"lstm_step: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"vs layer input_dim={layer.input_dim}, units={n}"
        )
    W, b = layer.packed()
    z = np.concatenate([h_prev, x_t], axis=1)
    act = _gates(z @ W + b, n)
    i, f, g, o = act[:, :n], act[:, n : 2 * n], act[:, 2 * n : 3 * n], act[:, 3 * n :]
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    cache = {"z": z, "gates": act, "tanh_c": tc}
    if single:
        return h_t[0], c_t[0], cache
    return h_t, c_t, cache


# ---------------------------------------------------------------- layers

def _layer_forward(inp, valid, W, b, n, reverse, keep):
    B, L, _ = inp.shape
    dtype = inp.dtype
    h = np.zeros((B, n), dtype)
    c = np.zeros((B, n), dtype)
    H = np.empty((B, L, n), dtype)
    cache = None
    if keep:
        cache = LayerCache(
            reverse=reverse,
            inputs=np.empty((L, B, n + inp.shape[2]), dtype),
            gates=np.empty((L, B, 4 * n), dtype),
            c_prev=np.empty((L, B, n), dtype),
            tanh_c=np.empty((L, B, n), dtype),
        )
    for t in (range(L - 1, -1, -1) if reverse else range(L)):
        z = np.concatenate([h, inp[:, t]], axis=1)
        act = _gates(z @ W + b, n)
        cn = act[:, n : 2 * n] * c + act[:, :n] * act[:, 2 * n : 3 * n]
        tc = np.tanh(cn)
        hn = act[:, 3 * n :] * tc
        m = valid[:, t, None]
        if keep:
            cache.inputs[t] = z
            cache.gates[t] = act
            cache.c_prev[t] = c
            cache.tanh_c[t] = tc
        # padded steps leave the state untouched
        h = np.where(m, hn, h)
        c = np.where(m, cn, c)
        H[:, t] = h
    return H, cache


def _layer_backward(cache: LayerCache, dH, valid, W, n):
    L, B, _ = cache.inputs.shape
    dtype = dH.dtype
    dh = np.zeros((B, n), dtype)
    dc = np.zeros((B, n), dtype)
    da_all = np.zeros((L, B, 4 * n), dtype)
    dz_x = np.empty((B, L, cache.inputs.shape[2] - n), dtype)
    Wt = W.T
    for t in (range(L) if cache.reverse else range(L - 1, -1, -1)):
        m = valid[:, t, None]
        dh_tot = dH[:, t] + dh
        dhn = np.where(m, dh_tot, 0.0)
        act = cache.gates[t]
        i, f, g, o = act[:, :n], act[:, n : 2 * n], act[:, 2 * n : 3 * n], act[:, 3 * n :]
        tc = cache.tanh_c[t]
        dcn = np.where(m, dc, 0.0) + dhn * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :n] = dcn * g * i * (1.0 - i)
        da[:, n : 2 * n] = dcn * cache.c_prev[t] * f * (1.0 - f)
        da[:, 2 * n : 3 * n] = dcn * i * (1.0 - g * g)
        da[:, 3 * n :] = dhn * tc * o * (1.0 - o)
        dz = da @ Wt
        dh = dz[:, :n] + np.where(m, 0.0, dh_tot)
        dc = dcn * f + np.where(m, 0.0, dc)
        dz_x[:, t] = dz[:, n:]
    dW = cache.inputs.reshape(L * B, -1).T @ da_all.reshape(L * B, -1)
    db = da_all.reshape(L * B, -1).sum(axis=0)
    return dz_x, dW, db


def _run_stack(X, valid, direction, params: ModelParams, train, rng, keep):
    cfg = params.config
    reverse = direction == "bwd"
    inp = X
    caches = []
    for l in range(cfg.num_layers):
        mask = None
        if l > 0 and train and cfg.dropout_rate > 0.0:
            keep_p = 1.0 - cfg.dropout_rate
            mask = ((rng.random(inp.shape) < keep_p) / keep_p).astype(inp.dtype)
            inp = inp * mask
        W, b = params.layer(direction, l).packed()
        inp, cache = _layer_forward(inp, valid, W, b, cfg.units, reverse, keep)
        if keep:
            cache.drop_mask = mask
            caches.append(cache)
    return inp, caches


# ---------------------------------------------------------------- model

def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    bad = np.argwhere((ids < 0) | (ids >= vocab_size))
    if bad.size:
        pos = tuple(int(v) for v in bad[0])
        raise DataError(f"token id {int(ids[pos])} out of range [0, {vocab_size}) at position {pos}")


def forward(ids, lengths, params: ModelParams, train: bool = False, rng: nx.Rng | None = None) -> ForwardTrace:
    """Run the whole model on a right-padded id matrix.

    ``ids`` is B x L, ``lengths`` the per-row valid length. In train mode the
    trace keeps everything ``backward`` needs and dropout masks are drawn
    from ``rng`` (inverted dropout, so infer mode scales nothing).
    """
    cfg = params.config
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[0] == 0 or ids.shape[1] == 0:
        raise UsageError(f"forward expects a nonempty B x L id matrix, got shape {ids.shape}")
    if lengths.shape != (ids.shape[0],):
        raise ShapeError(f"lengths shape {lengths.shape} does not match batch {ids.shape[0]}")
    if np.any(lengths < 1):
        raise DataError(f"sample {int(np.argmin(lengths))} has no tokens (valid_len 0)")
    if np.any(lengths > ids.shape[1]):
        raise DataError("valid_len exceeds padded length")
    _check_ids(ids, cfg.vocab_size)
    dropout = train and cfg.dropout_rate > 0.0
    if dropout and rng is None:
        raise UsageError("train-mode forward with dropout needs an rng")

    valid = np.arange(ids.shape[1])[None, :] < lengths[:, None]
    X = params["embedding"][ids]
    trace = ForwardTrace(ids=ids, lengths=lengths, train=train)
    parts = []
    for k, d in enumerate(cfg.directions):
        sub = rng.substream(k) if dropout else None
        H, caches = _run_stack(X, valid, d, params, train, sub, keep=train)
        trace.top[d] = H
        trace.layers[d] = caches
        # carried state at L-1 is the state at valid_len; backward ends at t=0
        parts.append(H[:, -1] if d == "fwd" else H[:, 0])
    Z = np.concatenate(parts, axis=1)
    F = Z @ params["fusion.W"] + params["fusion.b"]
    F_used = F
    if dropout:
        keep_p = 1.0 - cfg.dropout_rate
        trace.F_mask = ((rng.substream(len(cfg.directions)).random(F.shape) < keep_p) / keep_p).astype(F.dtype)
        F_used = F * trace.F_mask
    logits = F_used @ params["out.W"] + params["out.b"]
    trace.Z, trace.F, trace.logits = Z, F, logits
    trace.probs = nx.softmax(logits)
    nx._debug_check("forward", trace.probs)
    return trace


def cross_entropy_grad(probs: np.ndarray, labels) -> np.ndarray:
    """d(mean cross-entropy)/d(logits) = (Y - onehot(T)) / N."""
    labels = np.asarray(labels, dtype=np.int64)
    g = probs.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


def backward(trace: ForwardTrace, labels, params: ModelParams, l2_coeff: float = 0.0) -> None:
    """Accumulate d(loss)/d(param) into ``params.grads``.

    The loss is mean cross-entropy plus ``l2_coeff/2 * sum(W**2)`` over the
    regularized weight matrices.
    """
    if not trace.train:
        raise UsageError("backward needs a train-mode trace")
    cfg = params.config
    grads = params.grads
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (trace.ids.shape[0],) or np.any(labels < 0) or np.any(labels >= cfg.num_classes):
        raise DataError("labels do not match the batch or the class count")

    dlogits = cross_entropy_grad(trace.probs, labels).astype(trace.probs.dtype)
    F_used = trace.F if trace.F_mask is None else trace.F * trace.F_mask
    grads["out.W"] += F_used.T @ dlogits
    grads["out.b"] += dlogits.sum(axis=0)
    dF = dlogits @ params["out.W"].T
    if trace.F_mask is not None:
        dF = dF * trace.F_mask
    grads["fusion.W"] += trace.Z.T @ dF
    grads["fusion.b"] += dF.sum(axis=0)
    dZ = dF @ params["fusion.W"].T

    valid = np.arange(trace.ids.shape[1])[None, :] < trace.lengths[:, None]
    n = cfg.units
    dX = None
    for k, d in enumerate(cfg.directions):
        dH = np.zeros_like(trace.top[d])
        if d == "fwd":
            dH[:, -1] = dZ[:, k * n : (k + 1) * n]
        else:
            dH[:, 0] = dZ[:, k * n : (k + 1) * n]
        for l in range(cfg.num_layers - 1, -1, -1):
            cache = trace.layers[d][l]
            W, _ = params.layer(d, l).packed()
            dInp, dW, db = _layer_backward(cache, dH, valid, W, n)
            for j, g in enumerate(GATES):
                grads[f"{d}.{l}.W_{g}"] += dW[:, j * n : (j + 1) * n]
                grads[f"{d}.{l}.b_{g}"] += db[j * n : (j + 1) * n]
            if cache.drop_mask is not None:
                dInp = dInp * cache.drop_mask
            dH = dInp
        dX = dH if dX is None else dX + dH

    np.add.at(grads["embedding"], trace.ids, dX)
    grads["embedding"][PAD_ID] = 0.0

    if l2_coeff:
        for name, w in params.tensors.items():
            if is_regularized(name):
                grads[name] += l2_coeff * w


# ---------------------------------------------------------------- per-sequence views

def embed_sequence(token_ids: Sequence[int], params: ModelParams) -> EmbeddedSequence:
    ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
    _check_ids(ids[None, :], params.config.vocab_size)
    mat = params["embedding"][ids].copy()
    pad = ids == PAD_ID
    mat[pad] = 0.0
    return EmbeddedSequence(matrix=mat, valid_len=int(np.count_nonzero(~pad)))


def rnn_forward(seq: EmbeddedSequence, direction: str, params: ModelParams) -> np.ndarray:
    """Top-layer hidden states (valid_len x units) in infer mode.

    Row t is the state after consuming x_t; for the backward direction
    iteration runs from x_valid_len down to x_1, so row 0 is its final state.
    """
    if direction not in params.config.directions:
        raise UsageError(f"direction {direction!r} not present in this model")
    if seq.valid_len < 1:
        raise DataError("sequence has no valid tokens")
    L = seq.matrix.shape[0]
    valid = (np.arange(L) < seq.valid_len)[None, :]
    H, _ = _run_stack(seq.matrix[None], valid, direction, params, False, None, keep=False)
    return H[0, : seq.valid_len]


def extract_sentence_feature(fwd_states, bwd_states=None, valid_len: int | None = None) -> np.ndarray:
    fwd_states = np.asarray(fwd_states)
    if fwd_states.shape[0] == 0:
        raise UsageError("empty state sequence")
    if valid_len is None:
        valid_len = fwd_states.shape[0]
    z = fwd_states[valid_len - 1]
    if bwd_states is None:
        return z.copy()
    return np.concatenate([z, np.asarray(bwd_states)[0]])


def fuse_features(Z, params: ModelParams) -> np.ndarray:
    W = params["fusion.W"]
    Z = np.asarray(Z)
    if Z.shape[-1] != W.shape[0]:
        raise ShapeError(f"feature width {Z.shape[-1]} does not match fusion matrix {W.shape}")
    return Z @ W + params["fusion.b"]


def classify(F, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    W = params["out.W"]
    F = np.asarray(F)
    if F.shape[-1] != W.shape[0]:
        raise ShapeError(f"fused width {F.shape[-1]} does not match classifier {W.shape}")
    logits = F @ W + params["out.b"]
    return logits, nx.softmax(logits)


def decide(y_stego, threshold: float = 0.5):
    """1 (stego) iff y >= threshold, else 0 (cover)."""
    return (np.asarray(y_stego) >= threshold).astype(np.int64) if np.ndim(y_stego) else int(y_stego >= threshold)


def pad_batch(sequences: Sequence[Sequence[int]], min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    L = max(int(lengths.max()) if len(lengths) else 0, min_len)
    ids = np.full((len(sequences), L), PAD_ID, dtype=np.int64)
    for r, s in enumerate(sequences):
        ids[r, : len(s)] = s
    return ids, lengths


def predict_proba(params: ModelParams, sequences: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
    """Class probabilities for id sequences, infer mode."""
    out = []
    for start in range(0, len(sequences), batch_size):
        ids, lengths = pad_batch(sequences[start : start + batch_size])
        out.append(forward(ids, lengths, params).probs)
    if not out:
        return np.zeros((0, params.config.num_classes), dtype=nx.get_dtype())
    return np.concatenate(out, axis=0)


def fused_features(params: ModelParams, sequences: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(sequences), batch_size):
        ids, lengths = pad_batch(sequences[start : start + batch_size])
        out.append(forward(ids, lengths, params).F)
    return np.concatenate(out, axis=0)
