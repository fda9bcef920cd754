"""Encoder pieces: convolutional sub-sampling, the conformer block
(half-step FFN, self-attention, convolution module, half-step FFN), and
attention-weighted global pooling.

All sub-modules are pre-norm and include their residual add, so a block
is a straight composition of the four of them plus a closing layernorm.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ConfigError, ContractError
from .tensor import Parameter, Tensor, conv2d, depthwise_conv1d, matmul, softmax, swish


class FeedForward(nn.Module):
    """Pre-norm position-wise FFN with a scaled residual.

    y = x + scale * (linear2(dropout(swish(linear1(norm(x))))) with a
    second dropout); scale 0.5 gives the half-step form.
    """

    def __init__(self, d: int, expansion: int, dropout: float, rng, scale: float = 0.5):
        super().__init__()
        self.norm = nn.LayerNorm(d)
        self.lin1 = nn.Linear(d, expansion * d, rng)
        self.lin2 = nn.Linear(expansion * d, d, rng)
        self.drop1 = nn.Dropout(dropout)
        self.drop2 = nn.Dropout(dropout)
        self.scale = scale

    def branch(self, x: Tensor) -> Tensor:
        h = self.drop1(swish(self.lin1(self.norm(x))))
        return self.drop2(self.lin2(h))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.branch(x) * self.scale


class MultiHeadSelfAttention(nn.Module):
    """Pre-norm scaled-dot-product attention over all tokens, residual add.

    Classification tokens participate exactly like content tokens: they
    attend everywhere and everything attends to them.
    """

    def __init__(self, d: int, heads: int, dropout: float, rng):
        super().__init__()
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.heads = heads
        self.d_head = d // heads
        self.norm = nn.LayerNorm(d)
        self.wq = nn.Linear(d, d, rng)
        self.wk = nn.Linear(d, d, rng)
        self.wv = nn.Linear(d, d, rng)
        self.wo = nn.Linear(d, d, rng)
        self.drop = nn.Dropout(dropout)

    def _split(self, x: Tensor, b: int, length: int) -> Tensor:
        return x.reshape(b, length, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def branch(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        h = self.norm(x)
        q = self._split(self.wq(h), b, length)
        k = self._split(self.wk(h), b, length)
        v = self._split(self.wv(h), b, length)
        logits = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.d_head))
        attn = softmax(logits, axis=-1)
        mixed = matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, length, d)
        return self.drop(self.wo(mixed))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.branch(x)


class ConvModule(nn.Module):
    """Pre-norm gated temporal convolution branch with residual add:
    norm -> pointwise d->2d -> GLU -> depthwise (same pad) -> batchnorm
    -> swish -> pointwise d->d -> dropout."""

    def __init__(self, d: int, kernel: int, dropout: float, rng):
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigError(f"depthwise kernel must be odd, got {kernel}")
        self.norm = nn.LayerNorm(d)
        self.pointwise_in = nn.Linear(d, 2 * d, rng)
        self.depthwise = Parameter(nn.uniform_init(rng, (kernel, d), kernel))
        self.bn = nn.BatchNorm1d(d)
        self.pointwise_out = nn.Linear(d, d, rng)
        self.drop = nn.Dropout(dropout)

    def branch(self, x: Tensor) -> Tensor:
        h = nn.glu(self.pointwise_in(self.norm(x)))
        h = swish(self.bn(depthwise_conv1d(h, self.depthwise)))
        return self.drop(self.pointwise_out(h))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.branch(x)


class ConformerBlock(nn.Module):
    """Half-step FFN, attention, convolution, half-step FFN, layernorm."""

    def __init__(self, d: int, heads: int, expansion: int, kernel: int, dropout: float, rng):
        super().__init__()
        self.ffn1 = FeedForward(d, expansion, dropout, rng)
        self.attn = MultiHeadSelfAttention(d, heads, dropout, rng)
        self.conv = ConvModule(d, kernel, dropout, rng)
        self.ffn2 = FeedForward(d, expansion, dropout, rng)
        self.norm = nn.LayerNorm(d)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.ffn2(self.conv(self.attn(self.ffn1(x)))))


class Subsample(nn.Module):
    """Stack of stride-2 3x3 convolutions over the feature map, then a
    linear tokenizer and learned absolute positions.

    A (B, frames, bins) feature batch becomes (B, frames / 2**n, d)
    tokens; positions are added here so later classification tokens stay
    position-free.
    """

    def __init__(self, d: int, n_layers: int, frames: int, bins: int, rng):
        super().__init__()
        if frames % (2**n_layers) or bins % (2**n_layers):
            raise ConfigError(f"{frames}x{bins} features not divisible by 2^{n_layers}")
        if d % 4:
            raise ConfigError(f"model width {d} must be a multiple of 4")
        self.frames = frames
        self.n_layers = n_layers
        channels = d // 4
        self.kernels = nn.ModuleList()
        c_in = 1
        for _ in range(n_layers):
            self.kernels.append(_ConvLayer(c_in, channels, rng))
            c_in = channels
        self.out_tokens = frames // 2**n_layers
        flat = channels * (bins // 2**n_layers)
        self.tokenizer = nn.Linear(flat, d, rng)
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(self.out_tokens, d)).astype(np.float32))

    def forward(self, feats: Tensor) -> Tensor:
        b, t, _ = feats.shape
        if t != self.frames:
            raise ContractError(f"expected {self.frames} frames, got {t}")
        h = feats.reshape(b, 1, t, feats.shape[2])
        for layer in self.kernels:
            h = layer(h)
        # (B, C, T', F') -> (B, T', C*F')
        h = h.transpose(0, 2, 1, 3).reshape(b, self.out_tokens, -1)
        return self.tokenizer(h) + self.pos


class _ConvLayer(nn.Module):
    def __init__(self, c_in: int, c_out: int, rng):
        super().__init__()
        self.weight = Parameter(nn.uniform_init(rng, (c_out, c_in, 3, 3), c_in * 9))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return swish(conv2d(x, self.weight, self.bias, stride=2, padding=1))


class SeqPool(nn.Module):
    """Attention-weighted sum over tokens: a = softmax(x w + b), g = a.x."""

    def __init__(self, d: int, rng):
        super().__init__()
        self.score = nn.Linear(d, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] < 1:
            raise ContractError("cannot pool an empty token sequence")
        weights = softmax(self.score(x), axis=1)  # (B, L, 1)
        return (weights * x).sum(axis=1)
