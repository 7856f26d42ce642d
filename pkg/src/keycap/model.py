"""Full captioning model: shared embedding, keyword encoder, generator.

The word embedding table serves both the keyword encoder and the caption
generator by default (one vocabulary); a config flag splits them into two
tables of identical shape. Image input is either a precomputed feature
vector or raw flattened pixels routed through a small trainable perceptron.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import decoder as D
from . import encoder as E
from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class ModelConfig:
    encoder: E.EncoderConfig
    generator: D.GeneratorConfig
    share_embeddings: bool = True
    pixel_input_size: int = 0  # >0 enables the pixel perceptron
    pixel_hidden_size: int = 32

    def __post_init__(self):
        if self.encoder.embed_size != self.generator.word_embed_size:
            raise ConfigError(
                "encoder embed_size and generator word_embed_size must match: "
                f"{self.encoder.embed_size} vs {self.generator.word_embed_size}"
            )
        if self.pixel_input_size < 0 or self.pixel_hidden_size < 1:
            raise ConfigError("pixel perceptron sizes must be positive")


class CaptionModel:
    def __init__(self, cfg: ModelConfig, rng: T.SeededRng):
        self.cfg = cfg
        enc, gen = cfg.encoder, cfg.generator
        scale = (1.0 / enc.embed_size) ** 0.5
        self.w_e = Tensor(
            rng.normal(0.0, scale, (enc.embed_size, enc.vocab_size)), requires_grad=True
        )
        self.w_e_decoder = (
            self.w_e
            if cfg.share_embeddings
            else Tensor(rng.normal(0.0, scale, (enc.embed_size, enc.vocab_size)),
                        requires_grad=True)
        )
        self.encoder_params = E.init_encoder_params(rng, enc)
        self.generator_params = D.init_generator_params(
            rng, gen, enc.vocab_size, enc.keyword_repr_size
        )
        self.pixel_mlp = None
        if cfg.pixel_input_size:
            self.pixel_mlp = [
                (E.glorot(rng, cfg.pixel_hidden_size, cfg.pixel_input_size),
                 E.zeros(cfg.pixel_hidden_size)),
                (E.glorot(rng, gen.image_feature_size, cfg.pixel_hidden_size),
                 E.zeros(gen.image_feature_size)),
            ]

    def parameters(self) -> dict[str, Tensor]:
        named = {"embedding.w_e": self.w_e}
        if not self.cfg.share_embeddings:
            named["embedding.w_e_decoder"] = self.w_e_decoder
        named.update(E.encoder_parameters(self.encoder_params))
        named.update(D.generator_parameters(self.generator_params))
        if self.pixel_mlp is not None:
            for i, (w, b) in enumerate(self.pixel_mlp):
                named[f"pixel.layer{i}.w"] = w
                named[f"pixel.layer{i}.b"] = b
        return named

    def zero_grads(self):
        for p in self.parameters().values():
            p.zero_grad()

    def keyword_repr(self, keyword_seq) -> Tensor:
        return E.encode_keywords(self.cfg.encoder, self.encoder_params, self.w_e, keyword_seq)

    def image_feature(self, record_feature=None, pixels=None) -> Tensor:
        """phi(I): passthrough of a precomputed feature, or the pixel path."""
        if (record_feature is None) == (pixels is None):
            raise ConfigError("exactly one of record_feature/pixels must be given")
        if record_feature is not None:
            phi = np.asarray(record_feature, dtype=np.float64)
            if phi.shape != (self.cfg.generator.image_feature_size,):
                raise ShapeError(
                    f"image feature has shape {phi.shape}, expected "
                    f"({self.cfg.generator.image_feature_size},)"
                )
            return Tensor(phi)
        if self.pixel_mlp is None:
            raise ConfigError("pixel input given but pixel_input_size is 0")
        raw = np.asarray(pixels, dtype=np.float64)
        if raw.shape != (self.cfg.pixel_input_size,):
            raise ShapeError(
                f"pixel vector has shape {raw.shape}, expected ({self.cfg.pixel_input_size},)"
            )
        row = Tensor(raw.reshape(1, -1))
        (w1, b1), (w2, b2) = self.pixel_mlp
        hidden = T.tanh(E.linear(row, w1, b1))
        out = E.linear(hidden, w2, b2)
        return T.reshape(out, (out.shape[-1],))

    def caption_probs(self, phi: Tensor, keyword_repr: Tensor, caption) -> Tensor:
        """Teacher-forced next-token distributions, [true_length - 1, V]."""
        return D.teacher_forced_forward(
            self.cfg.generator, self.generator_params, self.w_e_decoder,
            phi, keyword_repr, caption,
        )

    def generate(self, phi: Tensor, keyword_seq, beams: int = 1):
        """Decode one caption; returns (token ids, cumulative log-prob)."""
        kw = self.keyword_repr(keyword_seq)
        if beams == 1:
            ids = D.greedy_decode(
                self.cfg.generator, self.generator_params, self.w_e_decoder, phi, kw
            )
            return ids, None
        return D.beam_search(
            self.cfg.generator, self.generator_params, self.w_e_decoder, phi, kw, beams
        )
