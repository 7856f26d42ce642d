"""Command-line surface: keycap train | generate | evaluate | synth.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import figures
from .config import RunConfig, build_run_config, parse_config_file
from .data import (
    build_vocab_from_records,
    encode_records,
    load_dataset,
    split_records,
    synth_generate,
)
from .errors import (
    ConfigError,
    DataError,
    GraphError,
    NumericError,
    ShapeError,
)
from .metrics import corpus_report
from .model import CaptionModel
from .tensor import SeededRng
from .text import Vocabulary, decode, encode_keywords, preprocess
from .training import (
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train,
    vocabulary_hash,
)

USAGE = """usage: keycap <command> [--config <path>] [--key value ...]

commands:
  train      fit a model on the train split, write checkpoint + log + loss figure
  generate   decode captions for the test split, write <id>\\t<caption> lines
  evaluate   score generated captions against references, write report + figure
  synth      emit a deterministic synthetic dataset

Any configuration key can be overridden on the command line, e.g.
  keycap train --config run.cfg --train.epochs 10 --encoder.num_heads 4
"""

# Keys that determine parameter shapes. A checkpoint trained under one
# value cannot be restored under another, so these are compared before
# any restore is attempted.
SHAPE_KEYS = (
    "encoder.embed_size",
    "encoder.hidden_size",
    "encoder.num_blocks",
    "encoder.num_heads",
    "encoder.ffn_inner_size",
    "encoder.keyword_repr_size",
    "encoder.max_keyword_len",
    "encoder.use_positional",
    "encoder.reinforce_hidden",
    "generator.image_feature_size",
    "generator.word_embed_size",
    "generator.lstm_hidden",
    "generator.bidirectional_training",
    "model.share_embeddings",
    "model.pixel_input_size",
    "model.pixel_hidden_size",
)


def _figure_path(text_path: str) -> str:
    return str(Path(text_path).with_suffix(".png"))


def _load_vocab(cfg: RunConfig) -> Vocabulary:
    path = cfg.path("vocab")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return Vocabulary.from_text(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read vocabulary file {path}: {exc}") from None


def _load_checkpoint_for(cfg: RunConfig):
    path = cfg.path("checkpoint")
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _check_shape_keys(cfg: RunConfig, checkpoint) -> None:
    echo = checkpoint.config_echo or {}
    for key in SHAPE_KEYS:
        if key in echo and echo[key] != cfg[key]:
            raise ConfigError(
                f"checkpoint was trained with {key}={echo[key]} but the "
                f"current config says {key}={cfg[key]}"
            )


def _restore(cfg: RunConfig):
    """Load checkpoint + vocab and rebuild the model they describe."""
    checkpoint = _load_checkpoint_for(cfg)
    vocab = _load_vocab(cfg)
    _check_shape_keys(cfg, checkpoint)
    have_hash = vocabulary_hash(vocab)
    if checkpoint.vocab_hash and checkpoint.vocab_hash != have_hash:
        raise DataError(
            f"vocabulary file {cfg.path('vocab')} does not match the one the "
            f"checkpoint was trained with"
        )
    model_cfg = cfg.model_config(len(vocab))
    generator = dataclasses.replace(model_cfg.generator, max_gen_len=cfg.decode_max_len)
    model_cfg = dataclasses.replace(model_cfg, generator=generator)
    model = CaptionModel(model_cfg, SeededRng(cfg.seed))
    restore_model(model, checkpoint)
    return model, vocab


def _record_phi(model: CaptionModel, record):
    if record.image_feature is not None:
        return model.image_feature(record_feature=record.image_feature)
    return model.image_feature(pixels=record.pixels)


def _decode_test_split(cfg: RunConfig, model: CaptionModel, vocab: Vocabulary):
    """Caption every test record; returns (id, tokens, reference) sorted by id."""
    records = load_dataset(cfg.path("dataset"), split_seed=cfg.seed)
    test_records = split_records(records)["test"]
    if not test_records:
        raise DataError("dataset has no test split records")
    max_kw = cfg["encoder.max_keyword_len"]

    def decode_one(record):
        keyword_seq = encode_keywords(vocab, record.keywords, max_kw)
        phi = _record_phi(model, record)
        ids, _ = model.generate(phi, keyword_seq, beams=cfg.beams)
        return record.id, decode(vocab, ids), preprocess(record.description)

    workers = min(8, os.cpu_count() or 1, len(test_records))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(decode_one, test_records))
    rows.sort(key=lambda row: row[0])
    return rows


def cmd_train(cfg: RunConfig) -> int:
    records = load_dataset(cfg.path("dataset"), split_seed=cfg.seed)
    by_split = split_records(records)
    train_records, val_records = by_split["train"], by_split["val"]
    if not train_records or not val_records:
        raise DataError(
            f"training needs nonempty train and val splits, got "
            f"{len(train_records)} train / {len(val_records)} val"
        )
    vocab = build_vocab_from_records(train_records, min_count=cfg["model.min_count"])
    with open(cfg.path("vocab"), "w", encoding="utf-8") as fh:
        fh.write(vocab.to_text())

    max_caption = cfg["model.max_caption_len"]
    max_kw = cfg["encoder.max_keyword_len"]
    train_enc = encode_records(train_records, vocab, max_caption, max_kw)
    val_enc = encode_records(val_records, vocab, max_caption, max_kw)

    model = CaptionModel(cfg.model_config(len(vocab)), SeededRng(cfg.seed))
    checkpoint, log_records = train(
        model, train_enc, val_enc, cfg.train_config(),
        vocab_hash=vocabulary_hash(vocab), config_echo=cfg.as_dict(),
    )
    save_checkpoint(checkpoint, cfg.path("checkpoint"))

    lines = []
    for record in log_records:
        lines.append(" ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in record.items()))
    log_path = cfg.path("log")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    figures.loss_curve(log_records, _figure_path(log_path))
    print(f"checkpoint written to {cfg.path('checkpoint')} (step {checkpoint.step})")
    return 0


def cmd_generate(cfg: RunConfig) -> int:
    model, vocab = _restore(cfg)
    rows = _decode_test_split(cfg, model, vocab)
    out_path = cfg.path("captions")
    with open(out_path, "w", encoding="utf-8") as fh:
        for record_id, tokens, _ in rows:
            fh.write(f"{record_id}\t{' '.join(tokens)}\n")
    print(f"wrote {len(rows)} captions to {out_path}")
    return 0


def _read_captions_file(path) -> dict[str, list[str]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read captions file {path}: {exc}") from None
    captions: dict[str, list[str]] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        if "\t" not in line:
            raise DataError(f"{path} line {line_no}: expected <id>\\t<caption>")
        record_id, text = line.split("\t", 1)
        if record_id in captions:
            raise DataError(f"{path} line {line_no}: duplicate id {record_id!r}")
        captions[record_id] = text.split()
    if not captions:
        raise DataError(f"captions file {path} is empty")
    return captions


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg["evaluate.from_file"]:
        records = load_dataset(cfg.path("dataset"), split_seed=cfg.seed)
        test_records = split_records(records)["test"]
        if not test_records:
            raise DataError("dataset has no test split records")
        captions = _read_captions_file(cfg.path("captions"))
        pairs = []
        for record in sorted(test_records, key=lambda r: r.id):
            if record.id not in captions:
                raise DataError(f"captions file has no entry for test record {record.id!r}")
            pairs.append((captions[record.id], [preprocess(record.description)]))
    else:
        model, vocab = _restore(cfg)
        rows = _decode_test_split(cfg, model, vocab)
        pairs = [(tokens, [reference]) for _, tokens, reference in rows]

    report = corpus_report(pairs)
    report_path = cfg.path("report")
    blob = report.to_json()
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(blob + "\n")
    figures.metric_bars(report, _figure_path(report_path))
    print(blob)
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    path = cfg.path("dataset")
    synth_generate(cfg["synth.n"], cfg.synth_seed, path)
    print(f"wrote {cfg['synth.n']} synthetic records to {path}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def parse_args(argv: list[str]) -> tuple[str, RunConfig]:
    if not argv:
        raise ConfigError(USAGE)
    command = argv[0]
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}\n\n{USAGE}")
    config_path = None
    cli_overrides: dict[str, str] = {}
    i = 1
    while i < len(argv):
        flag = argv[i]
        if not flag.startswith("--"):
            raise ConfigError(f"expected --flag, got {flag!r}")
        if i + 1 >= len(argv):
            raise ConfigError(f"flag {flag} is missing a value")
        value = argv[i + 1]
        if flag == "--config":
            config_path = value
        else:
            cli_overrides[flag[2:]] = value
        i += 2
    file_overrides = parse_config_file(config_path) if config_path else None
    return command, build_run_config(file_overrides, cli_overrides)


def run(argv: list[str]) -> int:
    if argv and argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0
    try:
        command, cfg = parse_args(argv)
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
