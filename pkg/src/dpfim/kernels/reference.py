"""NumPy implementations of the fused training kernels.

This is the fallback backend and the semantic reference: the compiled
backend in ``_fused.pyx`` must agree with these functions to float64
round-off. All arrays are C-contiguous float64 unless stated otherwise.
"""

from __future__ import annotations

import math

import numpy as np

GELU_C0 = math.sqrt(2.0 / math.pi)
GELU_C1 = 0.044715


def layernorm_fwd(x, gamma, beta, eps=1e-5):
    """x: (R, D). Returns (y, mean, rstd) with mean/rstd of shape (R,)."""
    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    var = np.mean(xc * xc, axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd[:, None] * gamma + beta
    return y, mean, rstd


def layernorm_bwd(dy, x, gamma, mean, rstd):
    """Returns (dx, dgamma, dbeta)."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgamma, dbeta


def causal_softmax_fwd(scores):
    """Row-wise softmax over (R, T, T) with entries j > i masked out."""
    T = scores.shape[-1]
    mask = np.triu(np.ones((T, T), dtype=bool), k=1)
    s = np.where(mask, -np.inf, scores)
    m = s.max(axis=2, keepdims=True)
    e = np.exp(s - m)  # exp(-inf) = 0 above the diagonal
    return e / e.sum(axis=2, keepdims=True)


def causal_softmax_bwd(dp, p):
    dot = (dp * p).sum(axis=2, keepdims=True)
    return p * (dp - dot)


def gelu_fwd(x):
    """tanh-approximation GELU."""
    u = GELU_C0 * (x + GELU_C1 * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, dy):
    u = GELU_C0 * (x + GELU_C1 * x * x * x)
    t = np.tanh(u)
    du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def masked_ce(logits, targets, mask, grad_scale=None):
    """Per-row softmax cross-entropy restricted to masked rows.

    logits: (R, V); targets: (R,) int64; mask: (R,) bool.
    Returns (nll, dlogits) where nll[r] = 0 on unmasked rows and
    dlogits[r] = grad_scale[r] * (softmax(logits[r]) - onehot(targets[r])).
    dlogits is None when grad_scale is None.
    """
    rows = np.arange(logits.shape[0])
    m = logits.max(axis=1)
    e = np.exp(logits - m[:, None])
    z = e.sum(axis=1)
    lse = m + np.log(z)
    nll = np.where(mask, lse - logits[rows, targets], 0.0)
    if grad_scale is None:
        return nll, None
    dlogits = e / z[:, None]
    dlogits[rows, targets] -= 1.0
    dlogits *= grad_scale[:, None]
    return nll, dlogits


def embedding_bwd(tokens, dy, vocab_size):
    """Scatter-accumulate dy rows into an embedding gradient.

    tokens: (R,) int64; dy: (R, D). Returns (vocab_size, D).
    """
    demb = np.zeros((vocab_size, dy.shape[1]), dtype=dy.dtype)
    np.add.at(demb, tokens, dy)
    return demb
