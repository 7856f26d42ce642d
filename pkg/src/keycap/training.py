"""Objective, optimizer, epoch loop, and bit-exact checkpointing.

The loss is categorical cross-entropy over teacher-forced next-token
distributions, computed from probabilities with a 1e-12 floor; a
log-sum-exp logits path exists as a numerically equivalent alternative.
Optimization is standard bias-corrected Adam. Checkpoints are a fixed
binary format (magic "KCAP", version, JSON manifest, little-endian
float64 payload, trailing CRC32) designed to round-trip byte-exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .tensor import Tensor

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
CHECKPOINT_MAGIC = b"KCAP"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 2
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0.0:
            raise ConfigError("grad_clip must be > 0 when set")


# ---------------------------------------------------------------------------
# Loss


def _mask_and_count(n_rows: int, mask):
    if mask is None:
        return None, n_rows
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (n_rows,):
        raise DataError(f"mask shape {mask.shape} does not match {n_rows} rows")
    n_real = int(round(mask.sum()))
    if n_real == 0:
        raise DataError("every row is masked out of the loss")
    return mask, n_real


def categorical_cross_entropy(probs: Tensor, labels, mask=None) -> Tensor:
    """-(1/N) sum log P[i, y_i], over unmasked rows only.

    Probabilities below 1e-12 are clamped (and logged) so a confidently
    wrong model yields a large finite loss instead of an infinity.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2:
        raise DataError(f"expected [N, C] probabilities, got shape {probs.shape}")
    mask_arr, n_real = _mask_and_count(probs.shape[0], mask)
    picked = T.gather_lastdim(probs, labels)
    clipped = int((picked.data < PROB_FLOOR).sum())
    if clipped:
        logger.warning("clamped %d true-label probabilities below %.0e", clipped, PROB_FLOOR)
    lg = T.log(T.clamp_min(picked, PROB_FLOOR))
    if mask_arr is not None:
        lg = T.mul(lg, Tensor(mask_arr))
    return T.scale(T.tsum(lg), -1.0 / n_real)


def cross_entropy_from_logits(logits: Tensor, labels, mask=None) -> Tensor:
    """Same objective computed from raw logits through log-sum-exp."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2:
        raise DataError(f"expected [N, C] logits, got shape {logits.shape}")
    mask_arr, n_real = _mask_and_count(logits.shape[0], mask)
    lg = T.gather_lastdim(T.log_softmax_lastdim(logits), labels)
    if mask_arr is not None:
        lg = T.mul(lg, Tensor(mask_arr))
    return T.scale(T.tsum(lg), -1.0 / n_real)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamMoments:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, Tensor]) -> "AdamMoments":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients by max_norm/norm when the global norm exceeds it."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total

def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              moments: AdamMoments, t: int, cfg: TrainConfig) -> None:
    """One bias-corrected update, in place; t counts from 1."""
    if t < 1:
        raise ConfigError("Adam step counter must be >= 1")
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = moments.m[name]
        v = moments.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        params[name].data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


class Adam:
    """Stateful wrapper tying the step counter and moments to a parameter set."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.moments = AdamMoments.zeros_like(params)
        self.t = 0

    def step(self):
        grads = {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }
        if self.cfg.grad_clip is not None:
            clip_gradients(grads, self.cfg.grad_clip)
        self.t += 1
        adam_step(self.params, grads, self.moments, self.t, self.cfg)


# ---------------------------------------------------------------------------
# Checkpoint format


@dataclass
class Checkpoint:
    version: int
    step: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    vocab_hash: str
    config_echo: dict[str, str]


def vocabulary_hash(vocab) -> str:
    return hashlib.sha256(vocab.to_text().encode("utf-8")).hexdigest()


def _payload_entries(ckpt: Checkpoint):
    for kind, tensors in (("param", ckpt.params), ("adam_m", ckpt.adam_m),
                          ("adam_v", ckpt.adam_v)):
        for name in sorted(tensors):
            yield kind, name, np.ascontiguousarray(tensors[name], dtype="<f8")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries = []
    payload = bytearray()
    for kind, name, arr in _payload_entries(ckpt):
        entries.append({
            "name": name, "kind": kind, "shape": list(arr.shape),
            "offset": len(payload), "count": int(arr.size),
        })
        payload += arr.tobytes()
    manifest = json.dumps(
        {"step": ckpt.step, "vocab_hash": ckpt.vocab_hash,
         "config": ckpt.config_echo, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    body = (CHECKPOINT_MAGIC + struct.pack("<II", ckpt.version, len(manifest))
            + manifest + bytes(payload))
    crc = zlib.crc32(body[len(CHECKPOINT_MAGIC):])
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", crc))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < header + 4:
        raise CheckpointError(f"file truncated at {len(blob)} bytes, header needs {header + 4}")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r} at offset 0")
    version, manifest_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported format version {version}, expected {CHECKPOINT_VERSION}"
        )
    manifest_end = header + manifest_len
    if len(blob) < manifest_end + 4:
        raise CheckpointError(f"manifest truncated at offset {len(blob)}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    actual_crc = zlib.crc32(blob[len(CHECKPOINT_MAGIC):-4])
    if stored_crc != actual_crc:
        raise CheckpointError(
            f"checksum mismatch at offset {len(blob) - 4}: "
            f"stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    try:
        manifest = json.loads(blob[header:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest at offset {header}: {exc}") from exc

    payload = blob[manifest_end:-4]
    buckets = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in manifest["tensors"]:
        start = entry["offset"]
        end = start + entry["count"] * 8
        if end > len(payload):
            raise CheckpointError(
                f"payload truncated: tensor {entry['name']!r} ends at {manifest_end + end}"
            )
        arr = np.frombuffer(payload, dtype="<f8", count=entry["count"], offset=start)
        buckets[entry["kind"]][entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(
        version=version, step=manifest["step"], params=buckets["param"],
        adam_m=buckets["adam_m"], adam_v=buckets["adam_v"],
        vocab_hash=manifest["vocab_hash"], config_echo=dict(manifest["config"]),
    )


def restore_model(model, ckpt: Checkpoint) -> None:
    """Copy checkpoint parameter buffers into a live model, by name."""
    params = model.parameters()
    missing = sorted(set(params) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"parameter names disagree: model-only {missing}, checkpoint-only {extra}"
        )
    for name, p in params.items():
        stored = ckpt.params[name]
        if stored.shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {stored.shape}, model {p.data.shape}"
            )
        p.data[...] = stored


# ---------------------------------------------------------------------------
# Epoch loop


def sample_loss_terms(model, sample):
    """(sum of -log P over the caption, token count) for one encoded sample."""
    phi = model.image_feature(sample.image_feature, sample.pixels)
    kw = model.keyword_repr(sample.keywords_encoded)
    probs = model.caption_probs(phi, kw, sample.caption_encoded)
    caption = sample.caption_encoded
    targets = list(caption.ids[1 : caption.true_length])
    picked = T.gather_lastdim(probs, np.asarray(targets, dtype=np.int64))
    lg = T.log(T.clamp_min(picked, PROB_FLOOR))
    return T.scale(T.tsum(lg), -1.0), len(targets)


def evaluate_loss(model, samples) -> float:
    """Token-weighted mean cross-entropy over a sample list, no gradients."""
    if not samples:
        raise DataError("cannot evaluate on an empty split")
    total, tokens = 0.0, 0
    for sample in samples:
        term, n = sample_loss_terms(model, sample)
        total += term.item()
        tokens += n
    return total / tokens


def _snapshot(params: dict[str, Tensor], opt: Adam):
    return (
        {name: p.data.copy() for name, p in params.items()},
        {name: a.copy() for name, a in opt.moments.m.items()},
        {name: a.copy() for name, a in opt.moments.v.items()},
        opt.t,
    )


def train(model, train_samples, val_samples, cfg: TrainConfig,
          vocab_hash: str = "", config_echo: dict[str, str] | None = None):
    """Seeded epoch loop; returns (best-validation Checkpoint, log records).

    Each log record is a dict: {epoch, batch, loss} per batch and
    {epoch, val_loss} per epoch. Batch loss is the token-weighted mean
    cross-entropy, so its scale is comparable across batch sizes.
    """
    if not train_samples:
        raise DataError("training split is empty")
    if not val_samples:
        raise DataError("validation split is empty")
    rng = T.SeededRng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg)
    best_val = float("inf")
    best = _snapshot(params, opt)
    log: list[dict] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_samples))
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[start : start + cfg.batch_size]]
            model.zero_grads()
            terms = [sample_loss_terms(model, s) for s in batch]
            tokens = sum(n for _, n in terms)
            total = terms[0][0]
            for term, _ in terms[1:]:
                total = T.add(total, term)
            loss = T.scale(total, 1.0 / tokens)
            T.backward(loss)
            opt.step()
            log.append({"epoch": epoch, "batch": start // cfg.batch_size,
                        "loss": loss.item()})
        val = evaluate_loss(model, val_samples)
        log.append({"epoch": epoch, "val_loss": val})
        if val < best_val:
            best_val = val
            best = _snapshot(params, opt)

    best_params, best_m, best_v, best_t = best
    ckpt = Checkpoint(
        version=CHECKPOINT_VERSION, step=best_t, params=best_params,
        adam_m=best_m, adam_v=best_v, vocab_hash=vocab_hash,
        config_echo=dict(config_echo or {}),
    )
    return ckpt, log
