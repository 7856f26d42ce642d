"""Run configuration: flat dotted-key files with CLI overrides.

A config file is plain text, one ``key=value`` per line, ``#`` lines and
blanks ignored. Every key can also be supplied on the command line as
``--key value``; command-line values win over file values, which win over
the built-in defaults. Unknown keys are rejected rather than ignored so a
typo cannot silently fall back to a default.
"""

from dataclasses import dataclass

from .decoder import GeneratorConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

_BOOL_WORDS = {"true": True, "false": False}

# key -> (type tag, default). Sentinel conventions: train.seed and
# synth.seed of -1 mean "use the top-level seed"; train.grad_clip of 0
# disables clipping; decode.max_len of 0 defers to generator.max_gen_len.
DEFAULTS: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "paths.dataset": ("str", "dataset.jsonl"),
    "paths.vocab": ("str", "vocab.txt"),
    "paths.checkpoint": ("str", "model.kcap"),
    "paths.report": ("str", "report.json"),
    "paths.captions": ("str", "captions.tsv"),
    "paths.log": ("str", "train_log.txt"),
    "encoder.embed_size": ("int", 64),
    "encoder.hidden_size": ("int", 64),
    "encoder.num_blocks": ("int", 2),
    "encoder.num_heads": ("int", 2),
    "encoder.ffn_inner_size": ("int", 128),
    "encoder.keyword_repr_size": ("int", 64),
    "encoder.max_keyword_len": ("int", 16),
    "encoder.eps": ("float", 1e-5),
    "encoder.activation": ("str", "gelu"),
    "encoder.use_positional": ("bool", True),
    "encoder.residual": ("bool", False),
    "encoder.pool": ("str", "mean"),
    "encoder.reinforce_hidden": ("int", 0),
    "generator.image_feature_size": ("int", 8),
    "generator.word_embed_size": ("int", 64),
    "generator.lstm_hidden": ("int", 256),
    "generator.max_gen_len": ("int", 50),
    "generator.bidirectional_training": ("bool", False),
    "generator.length_normalize": ("bool", False),
    "model.share_embeddings": ("bool", True),
    "model.pixel_input_size": ("int", 0),
    "model.pixel_hidden_size": ("int", 32),
    "model.min_count": ("int", 1),
    "model.max_caption_len": ("int", 32),
    "train.epochs": ("int", 2),
    "train.batch_size": ("int", 64),
    "train.learning_rate": ("float", 1e-3),
    "train.beta1": ("float", 0.9),
    "train.beta2": ("float", 0.999),
    "train.eps": ("float", 1e-8),
    "train.grad_clip": ("float", 0.0),
    "train.seed": ("int", -1),
    "decode.beams": ("int", 1),
    "decode.max_len": ("int", 0),
    "evaluate.from_file": ("bool", False),
    "synth.n": ("int", 64),
    "synth.seed": ("int", -1),
}


def _coerce(key: str, raw: str):
    kind = DEFAULTS[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        return raw
    except ValueError:
        raise ConfigError(f"config key '{key}' expects {kind}, got {raw!r}") from None


def parse_config_file(path) -> dict[str, str]:
    """Read ``key=value`` lines; values stay raw strings until coercion."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    overrides: dict[str, str] = {}
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path} line {line_no}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


@dataclass(frozen=True)
class RunConfig:
    """Validated flat configuration for one CLI invocation."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def beams(self) -> int:
        return self.values["decode.beams"]

    @property
    def decode_max_len(self) -> int:
        cap = self.values["decode.max_len"]
        return cap if cap > 0 else self.values["generator.max_gen_len"]

    @property
    def train_seed(self) -> int:
        explicit = self.values["train.seed"]
        return self.seed if explicit < 0 else explicit

    @property
    def synth_seed(self) -> int:
        explicit = self.values["synth.seed"]
        return self.seed if explicit < 0 else explicit

    def path(self, name: str) -> str:
        return self.values[f"paths.{name}"]

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        v = self.values
        return EncoderConfig(
            vocab_size=vocab_size,
            embed_size=v["encoder.embed_size"],
            hidden_size=v["encoder.hidden_size"],
            num_blocks=v["encoder.num_blocks"],
            num_heads=v["encoder.num_heads"],
            ffn_inner_size=v["encoder.ffn_inner_size"],
            keyword_repr_size=v["encoder.keyword_repr_size"],
            max_keyword_len=v["encoder.max_keyword_len"],
            eps=v["encoder.eps"],
            activation=v["encoder.activation"],
            use_positional=v["encoder.use_positional"],
            residual=v["encoder.residual"],
            pool=v["encoder.pool"],
            reinforce_hidden=v["encoder.reinforce_hidden"],
        )

    def generator_config(self) -> GeneratorConfig:
        v = self.values
        return GeneratorConfig(
            image_feature_size=v["generator.image_feature_size"],
            word_embed_size=v["generator.word_embed_size"],
            lstm_hidden=v["generator.lstm_hidden"],
            max_gen_len=v["generator.max_gen_len"],
            bidirectional_training=v["generator.bidirectional_training"],
            length_normalize=v["generator.length_normalize"],
        )

    def model_config(self, vocab_size: int) -> ModelConfig:
        v = self.values
        return ModelConfig(
            encoder=self.encoder_config(vocab_size),
            generator=self.generator_config(),
            share_embeddings=v["model.share_embeddings"],
            pixel_input_size=v["model.pixel_input_size"],
            pixel_hidden_size=v["model.pixel_hidden_size"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        clip = v["train.grad_clip"]
        return TrainConfig(
            epochs=v["train.epochs"],
            batch_size=v["train.batch_size"],
            learning_rate=v["train.learning_rate"],
            beta1=v["train.beta1"],
            beta2=v["train.beta2"],
            eps=v["train.eps"],
            seed=self.train_seed,
            grad_clip=None if clip <= 0 else clip,
        )

    def as_dict(self) -> dict:
        return dict(self.values)


def build_run_config(
    file_overrides: dict[str, str] | None = None,
    cli_overrides: dict[str, str] | None = None,
) -> RunConfig:
    values = {key: default for key, (_, default) in DEFAULTS.items()}
    for source, overrides in (("config file", file_overrides), ("command line", cli_overrides)):
        if not overrides:
            continue
        for key, raw in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key '{key}' (from {source})")
            values[key] = _coerce(key, raw)
    if values["decode.beams"] < 1:
        raise ConfigError("decode.beams must be at least 1")
    if values["synth.n"] < 4:
        raise ConfigError("synth.n must be at least 4")
    return RunConfig(values)
