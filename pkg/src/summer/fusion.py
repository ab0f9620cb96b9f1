"""Hierarchical cross-modal fusion built from dynamic multi-head attention.

Each attention block scales every head by a trainable factor phi before the
heads are concatenated and output-projected (phi = 1 recovers vanilla
attention, phi = 0 makes the sublayer an exact identity on its residual
stream). Blocks are pre-norm transformer blocks: attention sublayer then
feed-forward sublayer, each with a residual connection.

A fusion branch anchors one modality: stage 1 cross-attends the anchor to
its first partner modality through L blocks, stage 2 re-anchors the result
against the remaining modality through L more blocks, and stage 3 applies a
final feed-forward sublayer. Branch outputs are averaged; a text-only branch
configuration reproduces the two-stage text/audio/visual cascade exactly.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, ContractError
from .layers import FeedForward, LayerNorm, Linear

BRANCH_PARTNERS = {
    "text": ("audio", "visual"),
    "audio": ("visual", "text"),
    "visual": ("text", "audio"),
}


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, phi: Tensor, heads: int) -> Tensor:
    """Concat over heads of phi_h * softmax(Q_h K_h^T / sqrt(d_head)) V_h."""
    width = q.shape[1]
    if width % heads != 0:
        raise ContractError(f"attention width {width} not divisible by {heads} heads")
    d_head = width // heads
    scale = 1.0 / np.sqrt(d_head)
    outputs = []
    for h in range(heads):
        cols = (slice(None), slice(h * d_head, (h + 1) * d_head))
        scores = (q[cols] @ k[cols].T) * scale
        attended = ag.softmax(scores, axis=-1) @ v[cols]
        outputs.append(phi[h] * attended)
    return ag.concat(outputs, axis=1)


class DynAttnBlock:
    """Pre-norm cross-attention block with per-head trainable scaling."""

    def __init__(self, rng: np.random.Generator, d_s: int, attn_width: int,
                 heads: int, ffn_hidden: int):
        self.heads = heads
        self.ln_q = LayerNorm(d_s)
        self.ln_kv = LayerNorm(d_s)
        self.ln_ffn = LayerNorm(d_s)
        self.w_q = Linear(rng, d_s, attn_width)
        self.w_k = Linear(rng, d_s, attn_width)
        self.w_v = Linear(rng, d_s, attn_width)
        # no bias: with phi = 0 the attention sublayer must be an exact identity
        self.w_o = Linear(rng, attn_width, d_s, bias=False)
        self.phi = Tensor(np.ones(heads), requires_grad=True)
        self.ffn = FeedForward(rng, d_s, ffn_hidden)

    def attention_sublayer(self, query_seq: Tensor, key_seq: Tensor,
                           value_seq: Tensor) -> Tensor:
        if key_seq.shape[0] != value_seq.shape[0]:
            raise ContractError(
                f"key length {key_seq.shape[0]} != value length {value_seq.shape[0]}"
            )
        q = self.w_q(self.ln_q(query_seq))
        k = self.w_k(self.ln_kv(key_seq))
        v = self.w_v(self.ln_kv(value_seq))
        return query_seq + self.w_o(multi_head_attention(q, k, v, self.phi, self.heads))

    def ffn_sublayer(self, x: Tensor) -> Tensor:
        return x + self.ffn(self.ln_ffn(x))

    def __call__(self, query_seq: Tensor, key_seq: Tensor, value_seq: Tensor) -> Tensor:
        return self.ffn_sublayer(self.attention_sublayer(query_seq, key_seq, value_seq))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        params = {f"{prefix}.phi": self.phi}
        for name in ("ln_q", "ln_kv", "ln_ffn", "w_q", "w_k", "w_v", "w_o", "ffn"):
            params.update(getattr(self, name).parameters(f"{prefix}.{name}"))
        return params


def fuse_stage(blocks: list[DynAttnBlock], anchor_seq: Tensor, other_seq: Tensor) -> Tensor:
    """Run the anchor as Query against the other modality through L blocks."""
    out = anchor_seq
    for block in blocks:
        out = block(out, other_seq, other_seq)
    return out


class FusionBranch:
    """One anchored branch: two cross-attention stages plus a final FFN."""

    def __init__(self, rng: np.random.Generator, anchor: str, d_s: int, attn_width: int,
                 heads: int, ffn_hidden: int, layers: int):
        self.anchor = anchor
        self.stage1 = [DynAttnBlock(rng, d_s, attn_width, heads, ffn_hidden)
                       for _ in range(layers)]
        self.stage2 = [DynAttnBlock(rng, d_s, attn_width, heads, ffn_hidden)
                       for _ in range(layers)]
        self.final_ln = LayerNorm(d_s)
        self.final_ffn = FeedForward(rng, d_s, ffn_hidden)

    def __call__(self, sequences: dict[str, Tensor]) -> Tensor:
        partners = [m for m in BRANCH_PARTNERS[self.anchor] if m in sequences]
        out = sequences[self.anchor]
        if not partners:
            return out  # single modality bypasses fusion
        out = fuse_stage(self.stage1, out, sequences[partners[0]])
        if len(partners) > 1:
            out = fuse_stage(self.stage2, out, sequences[partners[1]])
        return out + self.final_ffn(self.final_ln(out))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, block in enumerate(self.stage1):
            params.update(block.parameters(f"{prefix}.s1.{i}"))
        for i, block in enumerate(self.stage2):
            params.update(block.parameters(f"{prefix}.s2.{i}"))
        params.update(self.final_ln.parameters(f"{prefix}.final_ln"))
        params.update(self.final_ffn.parameters(f"{prefix}.final_ffn"))
        return params


class HCMF:
    """Branch-per-anchor hierarchical fusion, averaged across branches."""

    def __init__(self, rng: np.random.Generator, d_s: int, attn_width: int, heads: int,
                 ffn_hidden: int, layers: int,
                 modalities: tuple[str, ...] = ("text", "audio", "visual"),
                 branches: str = "all"):
        if branches not in ("all", "text"):
            raise ConfigError("branches must be 'all' or 'text'")
        self.modalities = tuple(modalities)
        anchors = self.modalities if branches == "all" else ("text",)
        if not set(anchors) <= set(self.modalities):
            raise ConfigError(f"branch anchors {anchors} not all in {self.modalities}")
        self.branches = {
            anchor: FusionBranch(rng, anchor, d_s, attn_width, heads, ffn_hidden, layers)
            for anchor in anchors
        }

    def __call__(self, sequences: dict[str, Tensor]) -> tuple[Tensor, dict[str, Tensor]]:
        missing = set(self.modalities) - set(sequences)
        if missing:
            raise ConfigError(f"missing modality input: {sorted(missing)[0]}")
        outputs = {anchor: branch(sequences) for anchor, branch in self.branches.items()}
        total = None
        for out in outputs.values():
            total = out if total is None else total + out
        fused = total * Tensor(1.0 / len(outputs))
        return fused, outputs

    def parameters(self, prefix: str = "hcmf") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for anchor, branch in self.branches.items():
            params.update(branch.parameters(f"{prefix}.{anchor}"))
        return params


class ConcatFusion:
    """Fusion ablation: per-position concatenation plus a linear projection."""

    def __init__(self, rng: np.random.Generator, d_s: int,
                 modalities: tuple[str, ...] = ("text", "audio", "visual")):
        self.modalities = tuple(modalities)
        self.proj = Linear(rng, d_s * len(self.modalities), d_s)

    def __call__(self, sequences: dict[str, Tensor]) -> tuple[Tensor, dict[str, Tensor]]:
        missing = set(self.modalities) - set(sequences)
        if missing:
            raise ConfigError(f"missing modality input: {sorted(missing)[0]}")
        stacked = ag.concat([sequences[m] for m in self.modalities], axis=1)
        fused = self.proj(stacked)
        return fused, {}

    def parameters(self, prefix: str = "fusion") -> dict[str, Tensor]:
        return self.proj.parameters(f"{prefix}.proj")


def pool_utterance(fused_seq: Tensor) -> Tensor:
    """Arithmetic mean over sequence positions: (length, d_s) -> (d_s,)."""
    if fused_seq.shape[0] < 1:
        raise ContractError("cannot pool an empty sequence")
    return ag.tmean(fused_seq, axis=0)
