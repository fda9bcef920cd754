"""Token-sequence downsampling operators applied between encoder stages.

Every operator maps (B, L, d) content tokens to (B, ceil(L/rate), d)
(the convolution variant follows the same formula through its stride).
Classification tokens are never passed through these; the caller strips
and re-attaches them.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ConfigError, ContractError
from .tensor import Parameter, Tensor, concat, gather_tokens, matmul, sigmoid

POOL_KINDS = ("max", "average", "top_k", "convolution", "g_pool")


def _check_length(length: int, rate: int):
    if length < rate:
        raise ContractError(f"cannot pool {length} tokens at rate {rate}")


def _kept_count(length: int, rate: int) -> int:
    return -(-length // rate)


class WindowPool(nn.Module):
    """Non-overlapping window reduction (max or mean); a short trailing
    window is reduced as-is."""

    def __init__(self, rate: int, mode: str):
        super().__init__()
        self.rate = rate
        self.mode = mode

    def forward(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        _check_length(length, self.rate)
        full = (length // self.rate) * self.rate
        head = x[:, :full, :].reshape(b, full // self.rate, self.rate, d)
        head = head.max(axis=2) if self.mode == "max" else head.mean(axis=2)
        if full == length:
            return head
        tail = x[:, full:, :]
        tail = tail.max(axis=1, keepdims=True) if self.mode == "max" else tail.mean(axis=1, keepdims=True)
        return concat([head, tail], axis=1)


class TopKPool(nn.Module):
    """Keep the ceil(L/rate) highest-scoring tokens in original order.

    Scores come from a learned projection; selection is hard, so the
    scorer only shapes which rows survive, not their values.
    """

    def __init__(self, d: int, rate: int, rng):
        super().__init__()
        self.rate = rate
        self.scorer = Parameter(nn.uniform_init(rng, (d, 1), d))

    def _indices(self, scores: np.ndarray, keep: int) -> np.ndarray:
        top = np.argpartition(-scores, keep - 1, axis=1)[:, :keep]
        return np.sort(top, axis=1)

    def forward(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        _check_length(length, self.rate)
        keep = _kept_count(length, self.rate)
        scores = (x.data @ self.scorer.data).reshape(b, length)
        return gather_tokens(x, self._indices(scores, keep))


class GPool(nn.Module):
    """Projection-score pooling: s = x.p / |p|, keep the top ceil(L/rate)
    rows in order, each gated by sigmoid(s)."""

    def __init__(self, d: int, rate: int, rng):
        super().__init__()
        self.rate = rate
        self.proj = Parameter(nn.uniform_init(rng, (d, 1), d))

    def forward(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        _check_length(length, self.rate)
        keep = _kept_count(length, self.rate)
        norm = ((self.proj * self.proj).sum() + 1e-12) ** 0.5
        scores = matmul(x, self.proj) / norm  # (B, L, 1)
        flat = scores.data.reshape(b, length)
        top = np.argpartition(-flat, keep - 1, axis=1)[:, :keep]
        idx = np.sort(top, axis=1)
        return gather_tokens(x, idx) * sigmoid(gather_tokens(scores, idx))


class ConvPool(nn.Module):
    """Strided 1-D convolution over time with same-style padding, so the
    output length is ceil(L/stride)."""

    def __init__(self, d: int, kernel: int, stride: int, rng):
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigError(f"convolution pooling kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.stride = stride
        self.weight = Parameter(nn.uniform_init(rng, (kernel, d, d), kernel * d))
        self.bias = Parameter(np.zeros(d, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        _check_length(length, self.stride)
        pad = (self.kernel - 1) // 2
        zeros = Tensor(np.zeros((b, pad, d), dtype=np.float32))
        padded = concat([zeros, x, zeros], axis=1)
        out_len = (length - 1) // self.stride + 1
        out = None
        for j in range(self.kernel):
            sliced = padded[:, j : j + self.stride * out_len : self.stride, :]
            term = matmul(sliced, self.weight[j])
            out = term if out is None else out + term
        return out + self.bias


def make_pool(kind: str, d: int, rate: int, conv_kernel: int, conv_stride: int, rng) -> nn.Module:
    if kind == "max" or kind == "average":
        return WindowPool(rate, kind)
    if kind == "top_k":
        return TopKPool(d, rate, rng)
    if kind == "g_pool":
        return GPool(d, rate, rng)
    if kind == "convolution":
        return ConvPool(d, conv_kernel, conv_stride, rng)
    raise ConfigError(f"unknown pooling kind {kind!r}; choose from {POOL_KINDS}")
