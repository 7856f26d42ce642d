"""Contextualized keyword encoder.

A stack of decoder-style blocks turns a keyword token sequence into one
fixed-size representation: token embedding (plus an optional learned
positional table), masked self-attention, layer normalization, a
position-wise feed-forward network, pooling over real (non-PAD) positions,
and a reinforcement stack of fully-connected layers.

The default block is the literal composition FFN(LayerNorm(MaskAtten(x)))
with no residual path; `residual=True` opts into a residual variant.
All weight matrices are stored [out_dim, in_dim]; activations are
row-major [tokens, features].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor
from .text import EncodedSequence

ACTIVATIONS = {"gelu": T.gelu, "tanh": T.tanh, "relu": T.relu}


@dataclass
class EncoderConfig:
    vocab_size: int
    embed_size: int = 64
    hidden_size: int = 64
    num_blocks: int = 2
    num_heads: int = 2
    ffn_inner_size: int = 128
    keyword_repr_size: int = 64
    max_keyword_len: int = 16
    eps: float = 1e-5
    activation: str = "gelu"
    use_positional: bool = True
    residual: bool = False
    pool: str = "mean"  # "mean" over non-PAD positions, or "last"
    reinforce_hidden: int = 0  # 0 -> hidden_size

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        for name in ("vocab_size", "embed_size", "hidden_size", "num_blocks",
                     "num_heads", "ffn_inner_size", "keyword_repr_size", "max_keyword_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.pool not in ("mean", "last"):
            raise ConfigError(f"unknown pool mode {self.pool!r}")
        if self.residual and self.embed_size != self.hidden_size:
            raise ConfigError("residual blocks need embed_size == hidden_size")


@dataclass
class BlockParams:
    """One decoder block: Q/K/V projections, layer norm, and the FFN."""

    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor


@dataclass
class EncoderParams:
    positional: Tensor | None
    blocks: list[BlockParams]
    reinforce: list[tuple[Tensor, Tensor]]  # fully-connected stack ending at F_k


def glorot(rng: T.SeededRng, out_dim: int, in_dim: int) -> Tensor:
    """Scaled-uniform weight init, +-sqrt(6/(fan_in+fan_out))."""
    bound = (6.0 / (in_dim + out_dim)) ** 0.5
    return Tensor(rng.uniform(-bound, bound, (out_dim, in_dim)), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """x [L,in] @ w[out,in]^T (+ bias) -> [L,out]."""
    out = T.matmul(x, T.transpose(w))
    return T.add(out, b) if b is not None else out


def init_block(rng: T.SeededRng, cfg: EncoderConfig, in_dim: int) -> BlockParams:
    h, inner = cfg.hidden_size, cfg.ffn_inner_size
    return BlockParams(
        w_q=glorot(rng, h, in_dim), b_q=zeros(h),
        w_k=glorot(rng, h, in_dim), b_k=zeros(h),
        w_v=glorot(rng, h, in_dim), b_v=zeros(h),
        ln_gain=Tensor(np.ones(h), requires_grad=True),
        ln_bias=zeros(h),
        ffn_w1=glorot(rng, inner, h), ffn_b1=zeros(inner),
        ffn_w2=glorot(rng, h, inner), ffn_b2=zeros(h),
    )


def init_encoder_params(rng: T.SeededRng, cfg: EncoderConfig) -> EncoderParams:
    positional = zeros((cfg.max_keyword_len, cfg.embed_size)) if cfg.use_positional else None
    blocks = []
    in_dim = cfg.embed_size
    for _ in range(cfg.num_blocks):
        blocks.append(init_block(rng, cfg, in_dim))
        in_dim = cfg.hidden_size
    hidden = cfg.reinforce_hidden or cfg.hidden_size
    reinforce = [
        (glorot(rng, hidden, cfg.hidden_size), zeros(hidden)),
        (glorot(rng, cfg.keyword_repr_size, hidden), zeros(cfg.keyword_repr_size)),
    ]
    return EncoderParams(positional=positional, blocks=blocks, reinforce=reinforce)


def embed_tokens(w_e: Tensor, positional: Tensor | None, ids) -> Tensor:
    """Token embeddings for the non-PAD prefix of a sequence.

    `w_e` is the [embed, vocab] table, so row n of the output is column
    ids[n]; the positional row for slot n is added when a table is given.
    """
    if isinstance(ids, EncodedSequence):
        ids = ids.ids[: ids.true_length]
    ids = list(ids)
    if not ids:
        raise DataError("cannot embed an empty token sequence")
    x = T.embedding_lookup(T.transpose(w_e), ids)
    if positional is not None:
        if len(ids) > positional.shape[0]:
            raise ShapeError(
                f"sequence length {len(ids)} exceeds positional table {positional.shape[0]}"
            )
        x = T.add(x, T.slice_rows(positional, 0, len(ids)))
    return x


def masked_self_attention(x: Tensor, p: BlockParams, num_heads: int) -> Tensor:
    """softmax(mask(Q K^T / sqrt(d_k))) V with a causal mask, heads concatenated."""
    length = x.shape[0]
    q = linear(x, p.w_q, p.b_q)
    k = linear(x, p.w_k, p.b_k)
    v = linear(x, p.w_v, p.b_v)
    hidden = q.shape[-1]
    d_k = hidden // num_heads
    keep = T.causal_mask(length)
    heads = []
    for h in range(num_heads):
        lo, hi = h * d_k, (h + 1) * d_k
        qh = T.slice_lastdim(q, lo, hi)
        kh = T.slice_lastdim(k, lo, hi)
        vh = T.slice_lastdim(v, lo, hi)
        scores = T.scale(T.matmul(qh, T.transpose(kh)), 1.0 / d_k**0.5)
        weights = T.softmax_lastdim(T.masked_fill(scores, keep))
        heads.append(T.matmul(weights, vh))
    return heads[0] if num_heads == 1 else T.concat_lastdim(heads)


def block_forward(x: Tensor, p: BlockParams, cfg: EncoderConfig) -> Tensor:
    """One block: attention, layer norm, FFN; residual wiring only if configured."""
    act = ACTIVATIONS[cfg.activation]
    attn = masked_self_attention(x, p, cfg.num_heads)
    if cfg.residual:
        z = T.layer_norm(T.add(x, attn), p.ln_gain, p.ln_bias, cfg.eps)
        ffn = linear(act(linear(z, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2)
        return T.add(z, ffn)
    z = T.layer_norm(attn, p.ln_gain, p.ln_bias, cfg.eps)
    return linear(act(linear(z, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2)


def run_blocks(x: Tensor, params: EncoderParams, cfg: EncoderConfig) -> Tensor:
    for p in params.blocks:
        x = block_forward(x, p, cfg)
    return x


def encode_keywords(cfg: EncoderConfig, params: EncoderParams, w_e: Tensor, seq) -> Tensor:
    """Sequence -> one keyword representation of size keyword_repr_size.

    Embed the non-PAD prefix, run the block stack, pool (mean over real
    positions by default), then apply the reinforcement stack.
    """
    if isinstance(seq, EncodedSequence) and seq.true_length == 0:
        raise DataError("keyword sequence is empty (all PAD)")
    x = embed_tokens(w_e, params.positional, seq)
    x = run_blocks(x, params, cfg)
    length = x.shape[0]
    if cfg.pool == "mean":
        weights = Tensor(np.full((1, length), 1.0 / length))
        pooled = T.matmul(weights, x)
    else:
        pooled = T.slice_rows(x, length - 1, length)
    act = ACTIVATIONS[cfg.activation]
    out = pooled
    for i, (w, b) in enumerate(params.reinforce):
        if i > 0:
            out = act(out)
        out = linear(out, w, b)
    return T.reshape(out, (out.shape[-1],))


def encoder_parameters(params: EncoderParams) -> dict[str, Tensor]:
    """Stable name -> tensor map for checkpointing and optimization."""
    named: dict[str, Tensor] = {}
    if params.positional is not None:
        named["encoder.positional"] = params.positional
    for i, blk in enumerate(params.blocks):
        prefix = f"encoder.block{i}"
        for field_name in ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v",
                           "ln_gain", "ln_bias", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"):
            named[f"{prefix}.{field_name}"] = getattr(blk, field_name)
    for i, (w, b) in enumerate(params.reinforce):
        named[f"encoder.reinforce{i}.w"] = w
        named[f"encoder.reinforce{i}.b"] = b
    return named
