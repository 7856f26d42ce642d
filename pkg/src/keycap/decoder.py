"""Fusion-driven caption generator.

The image feature is projected once per image into the word-embedding
space, concatenated with the keyword representation into a fused context,
and both are re-fed to an LSTM at every timestep together with the
previous word embedding. Training is teacher-forced; when the
bidirectional flag is set, a second LSTM consumes the same teacher-forced
inputs in reverse and its hidden state is concatenated before the output
projection. That backward pathway reads tokens to the right of the
prediction point, so it only exists to strengthen training; inference is
always forward-only with the backward contribution zeroed.

Weight matrices are stored [out_dim, in_dim]; per-step activations are
kept as [1, dim] rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import glorot, linear, zeros
from .errors import ConfigError, DataError
from .tensor import Tensor
from .text import END_ID, START_ID, EncodedSequence


@dataclass
class GeneratorConfig:
    image_feature_size: int
    word_embed_size: int
    lstm_hidden: int = 256
    max_gen_len: int = 50
    bidirectional_training: bool = False
    length_normalize: bool = False  # score beams by log-prob / length instead

    def __post_init__(self):
        for name in ("image_feature_size", "word_embed_size", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_gen_len < 2:
            raise ConfigError("max_gen_len must be >= 2")


@dataclass(frozen=True)
class FusedContext:
    """Concatenation [keyword_repr ; phi_I], built once per sample."""

    k_fused: Tensor


@dataclass(frozen=True)
class BeamHypothesis:
    ids: tuple[int, ...]
    log_prob: float
    finished: bool  # True only when the hypothesis ended on the END token


@dataclass
class LstmParams:
    w: Tensor  # [4H, input + H], gate order i, f, g, o
    b: Tensor  # [4H]


@dataclass
class GeneratorParams:
    w_d: Tensor  # [E, F_img] image projection, no bias
    forward_cell: LstmParams
    backward_cell: LstmParams | None
    w_out: Tensor  # [V, H] forward-only, [V, 2H] bidirectional
    b_out: Tensor  # [V]


def lstm_input_size(cfg: GeneratorConfig, keyword_repr_size: int) -> int:
    """Per-step LSTM input: concat[e_t, k_fused, x_t]."""
    fused = keyword_repr_size + cfg.image_feature_size
    return cfg.word_embed_size + fused + cfg.word_embed_size


def init_generator_params(
    rng: T.SeededRng, cfg: GeneratorConfig, vocab_size: int, keyword_repr_size: int
) -> GeneratorParams:
    h = cfg.lstm_hidden
    d = lstm_input_size(cfg, keyword_repr_size)
    w_d = glorot(rng, cfg.word_embed_size, cfg.image_feature_size)
    forward = LstmParams(w=glorot(rng, 4 * h, d + h), b=zeros(4 * h))
    backward = None
    out_in = h
    if cfg.bidirectional_training:
        backward = LstmParams(w=glorot(rng, 4 * h, d + h), b=zeros(4 * h))
        out_in = 2 * h
    w_out = glorot(rng, vocab_size, out_in)
    return GeneratorParams(
        w_d=w_d, forward_cell=forward, backward_cell=backward,
        w_out=w_out, b_out=zeros(vocab_size),
    )


def generator_parameters(params: GeneratorParams) -> dict[str, Tensor]:
    """Stable name -> tensor map for checkpointing and optimization."""
    named = {
        "generator.w_d": params.w_d,
        "generator.forward.w": params.forward_cell.w,
        "generator.forward.b": params.forward_cell.b,
    }
    if params.backward_cell is not None:
        named["generator.backward.w"] = params.backward_cell.w
        named["generator.backward.b"] = params.backward_cell.b
    named["generator.w_out"] = params.w_out
    named["generator.b_out"] = params.b_out
    return named


def _as_row(t: Tensor) -> Tensor:
    if len(t.shape) == 1:
        return T.reshape(t, (1, t.shape[0]))
    if len(t.shape) == 2 and t.shape[0] == 1:
        return t
    raise ConfigError(f"expected a vector or single row, got shape {t.shape}")


def project_image(w_d: Tensor, phi_i: Tensor) -> Tensor:
    """e = W_d phi(I); constant per image, re-fed at every timestep."""
    row = T.matmul(_as_row(phi_i), T.transpose(w_d))
    return T.reshape(row, (row.shape[-1],))


def fuse(keyword_repr: Tensor, phi_i: Tensor) -> FusedContext:
    kw = keyword_repr if len(keyword_repr.shape) == 1 else T.reshape(keyword_repr, (-1,))
    img = phi_i if len(phi_i.shape) == 1 else T.reshape(phi_i, (-1,))
    return FusedContext(k_fused=T.concat_lastdim([kw, img]))


def lstm_step(cell: LstmParams, x_row: Tensor, h: Tensor, c: Tensor):
    """One cell update; returns (new hidden, new cell state) as [1,H] rows."""
    hidden = h.shape[-1]
    z = linear(T.concat_lastdim([x_row, h]), cell.w, cell.b)
    i = T.sigmoid(T.slice_lastdim(z, 0, hidden))
    f = T.sigmoid(T.slice_lastdim(z, hidden, 2 * hidden))
    g = T.tanh(T.slice_lastdim(z, 2 * hidden, 3 * hidden))
    o = T.sigmoid(T.slice_lastdim(z, 3 * hidden, 4 * hidden))
    c_next = T.add(T.mul(f, c), T.mul(i, g))
    h_next = T.mul(o, T.tanh(c_next))
    return h_next, c_next


def _zero_state(hidden: int):
    return Tensor(np.zeros((1, hidden))), Tensor(np.zeros((1, hidden)))


def _output_features(params: GeneratorParams, h: Tensor) -> Tensor:
    """Inference-side features: backward half is zero when it exists."""
    if params.backward_cell is None:
        return h
    return T.concat_lastdim([h, Tensor(np.zeros(h.shape))])


def decode_step(params: GeneratorParams, e_row: Tensor, kf_row: Tensor,
                x_row: Tensor, state):
    """One inference step: (P over vocab, new LSTM state)."""
    h, c = state
    x = T.concat_lastdim([e_row, kf_row, x_row])
    h_next, c_next = lstm_step(params.forward_cell, x, h, c)
    logits = linear(_output_features(params, h_next), params.w_out, params.b_out)
    return T.softmax_lastdim(logits), (h_next, c_next)


def _context_rows(params: GeneratorParams, phi_i: Tensor, keyword_repr: Tensor):
    e_row = _as_row(project_image(params.w_d, phi_i))
    kf_row = _as_row(fuse(keyword_repr, phi_i).k_fused)
    return e_row, kf_row


def _trim_caption(caption) -> list[int]:
    if isinstance(caption, EncodedSequence):
        return list(caption.ids[: caption.true_length])
    return list(caption)


def teacher_forced_forward(
    cfg: GeneratorConfig,
    params: GeneratorParams,
    w_e: Tensor,
    phi_i: Tensor,
    keyword_repr: Tensor,
    caption,
) -> Tensor:
    """All next-token distributions for one caption, as a [T-1, V] tensor.

    Row t is P(token t+1 | tokens 0..t); a caption of true length T yields
    T-1 predictions. The backward LSTM (when present) consumes the same
    inputs reversed, so its hidden state at row t has read tokens t..T-2.
    """
    ids = _trim_caption(caption)
    if len(ids) < 2:
        raise DataError(f"caption needs at least 2 real tokens, got {len(ids)}")
    e_row, kf_row = _context_rows(params, phi_i, keyword_repr)
    table = T.transpose(w_e)
    inputs = []
    for token in ids[:-1]:
        x_row = T.embedding_lookup(table, [token])
        inputs.append(T.concat_lastdim([e_row, kf_row, x_row]))

    hidden = cfg.lstm_hidden
    h, c = _zero_state(hidden)
    forward_states = []
    for x in inputs:
        h, c = lstm_step(params.forward_cell, x, h, c)
        forward_states.append(h)

    if params.backward_cell is not None:
        h, c = _zero_state(hidden)
        backward_states = []
        for x in reversed(inputs):
            h, c = lstm_step(params.backward_cell, x, h, c)
            backward_states.append(h)
        backward_states.reverse()
        feats = [
            T.concat_lastdim([f, b])
            for f, b in zip(forward_states, backward_states)
        ]
    else:
        feats = forward_states

    stacked = feats[0] if len(feats) == 1 else T.concat_rows(feats)
    logits = linear(stacked, params.w_out, params.b_out)
    return T.softmax_lastdim(logits)


def greedy_decode(cfg: GeneratorConfig, params: GeneratorParams, w_e: Tensor,
                  phi_i: Tensor, keyword_repr: Tensor) -> list[int]:
    """Argmax decoding; ties resolve to the lowest token id."""
    e_row, kf_row = _context_rows(params, phi_i, keyword_repr)
    table = T.transpose(w_e)
    state = _zero_state(cfg.lstm_hidden)
    prev = START_ID
    out: list[int] = []
    for _ in range(cfg.max_gen_len):
        x_row = T.embedding_lookup(table, [prev])
        probs, state = decode_step(params, e_row, kf_row, x_row, state)
        token = int(np.argmax(probs.data[0]))
        out.append(token)
        if token == END_ID:
            break
        prev = token
    return out


def beam_search(cfg: GeneratorConfig, params: GeneratorParams, w_e: Tensor,
                phi_i: Tensor, keyword_repr: Tensor, beams: int):
    """Length-capped beam search over cumulative log-probability.

    Every live hypothesis is expanded over the whole vocabulary, the top
    `beams` children survive, and children that hit END or the length cap
    retire to the candidate pool. Returns (token ids, cumulative log-prob)
    of the best pooled hypothesis; ties prefer the shorter sequence, then
    lexicographically smaller ids.
    """
    if beams < 1:
        raise ConfigError(f"beams must be >= 1, got {beams}")
    e_row, kf_row = _context_rows(params, phi_i, keyword_repr)
    table = T.transpose(w_e)
    start = (BeamHypothesis(ids=(), log_prob=0.0, finished=False),
             _zero_state(cfg.lstm_hidden))
    live = [start]
    pool: list[BeamHypothesis] = []
    for _ in range(cfg.max_gen_len):
        if not live:
            break
        children = []
        for hyp, state in live:
            prev = hyp.ids[-1] if hyp.ids else START_ID
            x_row = T.embedding_lookup(table, [prev])
            probs, new_state = decode_step(params, e_row, kf_row, x_row, state)
            with np.errstate(divide="ignore"):
                logs = np.log(probs.data[0])
            for token, lp in enumerate(logs):
                children.append((hyp.ids + (token,), hyp.log_prob + float(lp), new_state))
        children.sort(key=lambda child: (-child[1], child[0]))
        live = []
        for ids, log_prob, state in children[:beams]:
            ended = ids[-1] == END_ID
            if ended or len(ids) >= cfg.max_gen_len:
                pool.append(BeamHypothesis(ids=ids, log_prob=log_prob, finished=ended))
            else:
                live.append((BeamHypothesis(ids=ids, log_prob=log_prob, finished=False), state))

    def score(hyp: BeamHypothesis) -> float:
        if cfg.length_normalize and hyp.ids:
            return hyp.log_prob / len(hyp.ids)
        return hyp.log_prob

    best = min(pool, key=lambda hyp: (-score(hyp), len(hyp.ids), hyp.ids))
    return list(best.ids), best.log_prob
