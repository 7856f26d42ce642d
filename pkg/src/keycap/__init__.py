"""keycap: keyword-conditioned multi-modal caption generation.

A small, self-contained captioning engine: reverse-mode autodiff over
numpy arrays, a masked self-attention keyword encoder, an LSTM caption
generator with greedy and beam decoding, Adam training with bit-exact
checkpoints, and the standard caption metrics (BLEU, CIDEr, ROUGE-L,
METEOR).
"""

from .config import RunConfig, build_run_config
from .data import SampleRecord, build_vocab_from_records, load_dataset, synth_generate
from .decoder import BeamHypothesis, FusedContext, GeneratorConfig
from .encoder import EncoderConfig
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GraphError,
    KeycapError,
    NumericError,
    ShapeError,
)
from .metrics import MetricReport, bleu, cider, corpus_report, meteor, rouge_l
from .model import CaptionModel, ModelConfig
from .tensor import SeededRng, Tensor
from .text import EncodedSequence, Vocabulary
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "BeamHypothesis",
    "CaptionModel",
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "EncodedSequence",
    "EncoderConfig",
    "FusedContext",
    "GeneratorConfig",
    "GraphError",
    "KeycapError",
    "MetricReport",
    "ModelConfig",
    "NumericError",
    "RunConfig",
    "SampleRecord",
    "SeededRng",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "bleu",
    "build_run_config",
    "build_vocab_from_records",
    "cider",
    "corpus_report",
    "load_checkpoint",
    "load_dataset",
    "meteor",
    "rouge_l",
    "save_checkpoint",
    "synth_generate",
    "train",
    "__version__",
]
