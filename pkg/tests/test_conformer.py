import numpy as np
import pytest

from antispoof.conformer import (
    ConformerBlock,
    ConvModule,
    FeedForward,
    MultiHeadSelfAttention,
    SeqPool,
    Subsample,
)
from antispoof.errors import ConfigError, ContractError
from antispoof.tensor import Tensor

from conftest import assert_grads_close


def gen(seed=7):
    return np.random.default_rng(seed)


def tokens(rng, b=2, length=6, d=8):
    return Tensor(rng.normal(size=(b, length, d)).astype(np.float32))


# plain-numpy references, kept independent of the tensor library
def naive_ln(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def naive_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def naive_swish(x):
    return x * naive_sigmoid(x)


def naive_depthwise(x, w):
    k, d = w.shape
    pad = k // 2
    b, length, _ = x.shape
    padded = np.zeros((b, length + 2 * pad, d), dtype=x.dtype)
    padded[:, pad : pad + length] = x
    out = np.zeros_like(x)
    for t in range(length):
        for j in range(k):
            out[:, t] += padded[:, t + j] * w[j]
    return out


class TestFeedForward:
    def test_half_step_residual(self):
        ffn = FeedForward(8, 4, 0.0, gen()).eval()
        x = tokens(gen(1))
        out = ffn(x).data
        np.testing.assert_allclose(out, x.data + 0.5 * ffn.branch(x).data, rtol=1e-6)

    def test_matches_numpy_reference(self):
        ffn = FeedForward(8, 4, 0.0, gen()).eval()
        x = tokens(gen(2))
        h = naive_ln(x.data, ffn.norm.gain.data, ffn.norm.bias.data)
        h = naive_swish(h @ ffn.lin1.weight.data + ffn.lin1.bias.data)
        want = x.data + 0.5 * (h @ ffn.lin2.weight.data + ffn.lin2.bias.data)
        np.testing.assert_allclose(ffn(x).data, want, rtol=1e-4, atol=1e-5)

    def test_full_step_scale(self):
        ffn = FeedForward(8, 2, 0.0, gen(), scale=1.0).eval()
        x = tokens(gen(3))
        np.testing.assert_allclose(ffn(x).data, x.data + ffn.branch(x).data, rtol=1e-6)

    def test_grads_reach_all_params(self):
        ffn = FeedForward(4, 2, 0.0, gen())
        x = Tensor(gen(4).normal(size=(2, 3, 4)).astype(np.float32), requires_grad=True)
        assert_grads_close(lambda: (ffn(x) ** 2.0).mean(), [x, ffn.lin1.weight, ffn.lin2.bias])


class TestAttention:
    def test_single_token_attends_to_itself(self):
        # one token: softmax weight is 1, so the branch is wo(wv(norm(x)))
        attn = MultiHeadSelfAttention(8, 2, 0.0, gen()).eval()
        x = tokens(gen(5), b=3, length=1)
        h = naive_ln(x.data, attn.norm.gain.data, attn.norm.bias.data)
        v = h @ attn.wv.weight.data + attn.wv.bias.data
        want = x.data + v @ attn.wo.weight.data + attn.wo.bias.data
        np.testing.assert_allclose(attn(x).data, want, rtol=1e-4, atol=1e-5)

    def test_two_tokens_single_head_oracle(self):
        attn = MultiHeadSelfAttention(4, 1, 0.0, gen()).eval()
        x = tokens(gen(6), b=1, length=2, d=4)
        h = naive_ln(x.data[0], attn.norm.gain.data, attn.norm.bias.data)
        q = h @ attn.wq.weight.data + attn.wq.bias.data
        k = h @ attn.wk.weight.data + attn.wk.bias.data
        v = h @ attn.wv.weight.data + attn.wv.bias.data
        logits = q @ k.T / np.sqrt(4.0)
        w = np.exp(logits - logits.max(axis=-1, keepdims=True))
        w /= w.sum(axis=-1, keepdims=True)
        want = x.data[0] + (w @ v) @ attn.wo.weight.data + attn.wo.bias.data
        np.testing.assert_allclose(attn(x).data[0], want, rtol=1e-4, atol=1e-5)

    def test_zeroed_output_projection_is_identity(self):
        attn = MultiHeadSelfAttention(8, 4, 0.0, gen()).eval()
        attn.wo.weight.data[:] = 0.0
        attn.wo.bias.data[:] = 0.0
        x = tokens(gen(7))
        np.testing.assert_array_equal(attn(x).data, x.data)

    def test_permutation_equivariant(self):
        # no positions inside the block, so shuffling tokens shuffles outputs
        attn = MultiHeadSelfAttention(8, 2, 0.0, gen()).eval()
        x = tokens(gen(8), b=1, length=5)
        perm = gen(9).permutation(5)
        out = attn(x).data[:, perm]
        out_perm = attn(Tensor(x.data[:, perm])).data
        np.testing.assert_allclose(out, out_perm, rtol=1e-5, atol=1e-6)

    def test_indivisible_heads_rejected(self):
        with pytest.raises(ConfigError):
            MultiHeadSelfAttention(8, 3, 0.0, gen())

    def test_grads_reach_all_projections(self):
        attn = MultiHeadSelfAttention(4, 2, 0.0, gen())
        x = Tensor(gen(10).normal(size=(1, 3, 4)).astype(np.float32), requires_grad=True)
        assert_grads_close(
            lambda: (attn(x) ** 2.0).mean(),
            [x, attn.wq.weight, attn.wk.weight, attn.wv.weight, attn.wo.weight],
        )


class TestConvModule:
    def test_matches_numpy_reference_in_eval(self):
        conv = ConvModule(6, 3, 0.0, gen()).eval()
        x = tokens(gen(11), b=2, length=5, d=6)
        h = naive_ln(x.data, conv.norm.gain.data, conv.norm.bias.data)
        h = h @ conv.pointwise_in.weight.data + conv.pointwise_in.bias.data
        h = h[..., :6] * naive_sigmoid(h[..., 6:])
        h = naive_depthwise(h, conv.depthwise.data)
        h = h / np.sqrt(1.0 + 1e-5)  # fresh running stats: mean 0, var 1
        h = naive_swish(h)
        want = x.data + h @ conv.pointwise_out.weight.data + conv.pointwise_out.bias.data
        np.testing.assert_allclose(conv(x).data, want, rtol=1e-4, atol=1e-5)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ConvModule(6, 4, 0.0, gen())

    def test_grads_reach_depthwise_kernel(self):
        conv = ConvModule(4, 3, 0.0, gen())
        x = Tensor(gen(12).normal(size=(2, 5, 4)).astype(np.float32), requires_grad=True)
        assert_grads_close(
            lambda: (conv(x) ** 2.0).mean(),
            [x, conv.depthwise, conv.pointwise_in.weight, conv.pointwise_out.weight],
            rtol=2e-2,
        )


class TestConformerBlock:
    def test_is_composition_of_submodules(self):
        block = ConformerBlock(8, 2, 4, 3, 0.0, gen()).eval()
        x = tokens(gen(13))
        want = block.norm(block.ffn2(block.conv(block.attn(block.ffn1(x))))).data
        np.testing.assert_allclose(block(x).data, want, rtol=1e-6)

    def test_zeroed_branches_reduce_to_layernorm(self):
        block = ConformerBlock(8, 2, 4, 3, 0.0, gen()).eval()
        for lin in (block.ffn1.lin2, block.attn.wo, block.conv.pointwise_out, block.ffn2.lin2):
            lin.weight.data[:] = 0.0
            lin.bias.data[:] = 0.0
        x = tokens(gen(14))
        want = naive_ln(x.data, block.norm.gain.data, block.norm.bias.data)
        np.testing.assert_allclose(block(x).data, want, rtol=1e-5, atol=1e-6)

    def test_preserves_shape(self):
        block = ConformerBlock(8, 2, 2, 3, 0.1, gen()).eval()
        x = tokens(gen(15), b=3, length=7)
        assert block(x).shape == (3, 7, 8)


class TestSubsample:
    def test_output_shape_halves_frames_per_layer(self):
        sub = Subsample(8, 2, 16, 8, gen())
        out = sub(Tensor(gen(16).normal(size=(3, 16, 8)).astype(np.float32)))
        assert out.shape == (3, 4, 8)

    def test_single_layer_shape(self):
        sub = Subsample(8, 1, 10, 6, gen())
        out = sub(Tensor(gen(17).normal(size=(2, 10, 6)).astype(np.float32)))
        assert out.shape == (2, 5, 8)

    def test_zero_input_yields_positions(self):
        # conv biases start at zero and swish(0) = 0, so with the tokenizer
        # bias cleared the tokens are exactly the positional table
        sub = Subsample(8, 2, 16, 8, gen())
        sub.tokenizer.bias.data[:] = 0.0
        out = sub(Tensor(np.zeros((2, 16, 8), dtype=np.float32)))
        np.testing.assert_allclose(out.data, np.broadcast_to(sub.pos.data, (2, 4, 8)), atol=1e-7)

    def test_wrong_frame_count_rejected(self):
        sub = Subsample(8, 2, 16, 8, gen())
        with pytest.raises(ContractError):
            sub(Tensor(np.zeros((1, 12, 8), dtype=np.float32)))

    def test_indivisible_geometry_rejected(self):
        with pytest.raises(ConfigError):
            Subsample(8, 2, 10, 8, gen())
        with pytest.raises(ConfigError):
            Subsample(6, 2, 16, 8, gen())

    def test_grads_reach_convs_and_positions(self):
        sub = Subsample(8, 2, 8, 8, gen())
        x = Tensor(gen(18).normal(size=(2, 8, 8)).astype(np.float32), requires_grad=True)
        assert_grads_close(
            lambda: (sub(x) ** 2.0).mean(),
            [x, sub.kernels[0].weight, sub.kernels[1].weight, sub.tokenizer.weight, sub.pos],
            rtol=2e-2,
        )


class TestSeqPool:
    def test_single_token_passthrough(self):
        pool = SeqPool(4, gen())
        x = tokens(gen(19), b=3, length=1, d=4)
        np.testing.assert_allclose(pool(x).data, x.data[:, 0], rtol=1e-6)

    def test_zero_scorer_gives_mean(self):
        pool = SeqPool(4, gen())
        pool.score.weight.data[:] = 0.0
        pool.score.bias.data[:] = 0.0
        x = tokens(gen(20), b=2, length=5, d=4)
        np.testing.assert_allclose(pool(x).data, x.data.mean(axis=1), rtol=1e-5)

    def test_matches_numpy_reference(self):
        pool = SeqPool(4, gen())
        x = tokens(gen(21), b=2, length=6, d=4)
        s = x.data @ pool.score.weight.data + pool.score.bias.data
        w = np.exp(s - s.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(pool(x).data, (w * x.data).sum(axis=1), rtol=1e-5)

    def test_order_invariant(self):
        pool = SeqPool(4, gen())
        x = tokens(gen(22), b=1, length=7, d=4)
        perm = gen(23).permutation(7)
        np.testing.assert_allclose(pool(x).data, pool(Tensor(x.data[:, perm])).data, rtol=1e-5)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ContractError):
            SeqPool(4, gen())(Tensor(np.zeros((2, 0, 4), dtype=np.float32)))

    def test_grads_flow(self):
        pool = SeqPool(4, gen())
        x = Tensor(gen(24).normal(size=(2, 5, 4)).astype(np.float32), requires_grad=True)
        assert_grads_close(lambda: (pool(x) ** 2.0).mean(), [x, pool.score.weight, pool.score.bias])
