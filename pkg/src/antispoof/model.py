"""The full detector: sub-sampled conformer encoder, per-stage
classification-token extraction with hierarchical pooling between
stages, global attention pooling, and per-embedding scoring heads.

Score slots are ordered e1..eS (one per stage), then the global token,
then the final fused embedding; disabled slots carry None.  The
inference decision always comes from the last slot.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .config import Config
from .conformer import ConformerBlock, SeqPool, Subsample
from .pooling import make_pool
from .tensor import Parameter, Tensor, concat, no_grad, swish


class Classifier(nn.Module):
    """Affine to half width, swish, then an unbiased projection to a scalar."""

    def __init__(self, d: int, rng):
        super().__init__()
        self.lin1 = nn.Linear(d, d // 2, rng)
        self.lin2 = nn.Linear(d // 2, 1, rng, bias=False)

    def forward(self, e: Tensor) -> Tensor:
        return self.lin2(swish(self.lin1(e))).reshape(-1)


class HmConformer(nn.Module):
    def __init__(self, cfg: Config, rng: np.random.Generator):
        super().__init__()
        m = cfg.model
        self.cfg = cfg
        self.stage_ends = list(m.stage_ends)
        self.n_stages = cfg.n_stages
        self.enabled = cfg.enabled_slots()
        self.slot_names = cfg.slot_names()

        self.subsample = Subsample(m.d, m.n_subsample_layers, m.frames, m.feature_dim, rng)
        self.blocks = nn.ModuleList(
            ConformerBlock(m.d, m.heads, m.ffn_expansion, m.depthwise_kernel, m.dropout, rng)
            for _ in range(m.n_blocks)
        )

        # stages whose classification token exists under the ablation mask
        self.cls_stages = [k for k in range(1, self.n_stages + 1) if self.enabled[k - 1]]
        if cfg.mca.enabled and self.cls_stages:
            self.cls_tokens = Parameter(
                rng.normal(0.0, 0.02, size=(len(self.cls_stages), m.d)).astype(np.float32)
            )
            for k in self.cls_stages:
                setattr(self, f"stage_proj_{k}", nn.Linear(m.d, m.d, rng))

        if cfg.pooling.enabled:
            for s in range(1, self.n_stages):
                setattr(
                    self,
                    f"pool_{s}",
                    make_pool(cfg.pooling.kind, m.d, cfg.pooling.rate, cfg.pooling.conv_kernel, cfg.pooling.conv_stride, rng),
                )

        self.global_enabled = self.enabled[self.n_stages]
        if self.global_enabled or not cfg.mca.enabled:
            self.seqpool = SeqPool(m.d, rng)

        if cfg.mca.enabled:
            fused_width = sum(self.enabled[: self.n_stages + 1]) * m.d
            self.final_embed = nn.Linear(fused_width, m.d, rng)

        self._scale_slot: dict[int, int] = {}
        for i, on in enumerate(self.enabled):
            if on:
                self._scale_slot[i] = len(self._scale_slot)
                setattr(self, f"classifier_{self.slot_names[i]}", Classifier(m.d, rng))
        self.oc_scale = Parameter(np.ones(len(self._scale_slot), dtype=np.float32))

    # ---- forward ------------------------------------------------------------

    def forward(self, feats: Tensor) -> tuple[list[Tensor | None], list[Tensor | None]]:
        """Returns (scores, embeddings), both lists over the score slots."""
        cfg = self.cfg
        tokens = self.subsample(feats)
        batch = tokens.shape[0]
        embeddings: list[Tensor | None] = [None] * (self.n_stages + 2)

        n_cls = len(self.cls_stages) if cfg.mca.enabled else 0
        if n_cls:
            cls = self.cls_tokens.reshape(1, n_cls, cfg.model.d) + Tensor(
                np.zeros((batch, n_cls, cfg.model.d), dtype=np.float32)
            )
            tokens = concat([cls, tokens], axis=1)

        stage_ptr = 0
        content = tokens
        for i, block in enumerate(self.blocks, start=1):
            tokens = block(tokens)
            if stage_ptr < self.n_stages and i == self.stage_ends[stage_ptr]:
                stage_k = stage_ptr + 1
                if cfg.mca.enabled and self.enabled[stage_k - 1]:
                    head = tokens[:, 0, :]
                    embeddings[stage_k - 1] = getattr(self, f"stage_proj_{stage_k}")(head)
                    rest_cls = tokens[:, 1:n_cls, :]
                    content = tokens[:, n_cls:, :]
                    n_cls -= 1
                else:
                    rest_cls = tokens[:, :n_cls, :]
                    content = tokens[:, n_cls:, :]
                if i < self.stage_ends[-1]:
                    if cfg.pooling.enabled:
                        content = getattr(self, f"pool_{stage_k}")(content)
                    tokens = concat([rest_cls, content], axis=1) if n_cls else content
                stage_ptr += 1

        if self.global_enabled or not cfg.mca.enabled:
            embeddings[self.n_stages] = self.seqpool(content)

        if cfg.mca.enabled:
            parts = [e for e in embeddings[: self.n_stages + 1] if e is not None]
            fused = parts[0] if len(parts) == 1 else concat(parts, axis=-1)
            embeddings[self.n_stages + 1] = self.final_embed(fused)
        else:
            embeddings[self.n_stages + 1] = embeddings[self.n_stages]
            embeddings[self.n_stages] = None

        scores: list[Tensor | None] = [None] * len(embeddings)
        for i, e in enumerate(embeddings):
            if e is not None and self.enabled[i]:
                scores[i] = getattr(self, f"classifier_{self.slot_names[i]}")(e)
        return scores, embeddings

    # ---- inference helpers -----------------------------------------------------

    def slot_scale(self, slot: int) -> Tensor:
        """Trainable score scale for an enabled slot, as a length-1 view."""
        pos = self._scale_slot[slot]
        return self.oc_scale[pos : pos + 1]

    def decision_scores(self, feats: Tensor) -> np.ndarray:
        """Final-slot scores for a batch, graph-free."""
        with no_grad():
            scores, _ = self.forward(feats)
        return scores[-1].data.copy()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def token_trace(cfg: Config) -> list[int]:
    """Expected total token counts entering each stage boundary."""
    m = cfg.model
    content = m.frames // 2**m.n_subsample_layers
    n_cls = sum(cfg.enabled_slots()[: cfg.n_stages]) if cfg.mca.enabled else 0
    trace = [content + n_cls]
    for s in range(1, cfg.n_stages):
        if cfg.mca.enabled and cfg.enabled_slots()[s - 1]:
            n_cls -= 1
        if cfg.pooling.enabled:
            rate = cfg.pooling.conv_stride if cfg.pooling.kind == "convolution" else cfg.pooling.rate
            content = -(-content // rate)
        trace.append(content + n_cls)
    return trace
