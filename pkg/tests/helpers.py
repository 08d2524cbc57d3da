"""Shared oracles for the test-suite (independent of the code under test)."""

import math

import numpy as np

from stegodetect import numerics as nx
from stegodetect.network import ModelConfig, ModelParams, backward, forward
from stegodetect.training import compute_loss


def scalar_lstm_step(x, h, c, layer):
    """Direct per-unit evaluation of the five LSTM equations with Python floats."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    z = [float(v) for v in h] + [float(v) for v in x]
    n = len(h)
    h_new, c_new = [], []
    for j in range(n):
        def pre(W, b):
            return sum(float(W[k, j]) * z[k] for k in range(len(z))) + float(b[j])

        i_t = sig(pre(layer.W_i, layer.b_i))
        f_t = sig(pre(layer.W_f, layer.b_f))
        g_t = math.tanh(pre(layer.W_c, layer.b_c))
        o_t = sig(pre(layer.W_o, layer.b_o))
        cj = f_t * float(c[j]) + i_t * g_t
        c_new.append(cj)
        h_new.append(o_t * math.tanh(cj))
    return np.array(h_new), np.array(c_new)


def tiny_model(bidirectional=False, layers=1, units=3, seed=0, dropout=0.0, num_classes=2):
    cfg = ModelConfig(vocab_size=20, embedding_dim=4, bidirectional=bidirectional, num_layers=layers,
                      units=units, fused_dim=5, num_classes=num_classes, dropout_rate=dropout)
    p = ModelParams.initialize(cfg, nx.Rng(seed))
    jitter = nx.Rng(seed + 1000)
    for name, t in p.tensors.items():
        # zero biases would hide bias-gradient mistakes
        if t.ndim == 1:
            t += jitter.substream(len(name)).uniform(-0.5, 0.5, t.shape).astype(t.dtype)
    return p


TINY_IDS = np.array([[2, 5, 7, 3, 0], [4, 9, 1, 0, 0], [11, 12, 13, 14, 15], [6, 0, 0, 0, 0]])
TINY_LENS = np.array([4, 3, 5, 1])


def gradient_check(params, ids=TINY_IDS, lengths=TINY_LENS, labels=None, l2=1e-2, step=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    Relative error is |a - n| / max(|a|, |n|, 1e-6). Dropout masks are
    replayed by reseeding the train-mode rng for every evaluation.
    """
    if labels is None:
        labels = np.arange(len(ids)) % params.config.num_classes

    def loss():
        tr = forward(ids, lengths, params, train=True, rng=nx.Rng(42))
        return compute_loss(tr.probs, labels, params, l2)[0]

    params.zero_grad()
    tr = forward(ids, lengths, params, train=True, rng=nx.Rng(42))
    backward(tr, labels, params, l2)
    worst, where = 0.0, None
    for name, w in params.tensors.items():
        g = params.grads[name]
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            up = loss()
            w[idx] = orig - step
            down = loss()
            w[idx] = orig
            num = (up - down) / (2 * step)
            rel = abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-6)
            if rel > worst:
                worst, where = rel, (name, idx)
    return worst, where
