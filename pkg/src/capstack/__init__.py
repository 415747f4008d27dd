"""Image caption generation with a stacked-LSTM decoder.

Implements two decoding frameworks over per-region annotation vectors —
encoder-decoder (image enters via the initial states) and soft attention
(a per-step context vector) — together with a small reverse-mode tensor
engine, geometric data augmentation, caption metrics, and a CLI.
"""

from .captioner import (
    CaptionModel,
    ModelConfig,
    beam_decode,
    build_model,
    forward_teacher_forced,
    greedy_decode,
    sequence_logprob,
)
from .errors import FormatError
from .estimator import LSTMCaptioner
from .features import FeatureSet, generate_synthetic_dataset, toy_patch_encode
from .metrics import bleu, cider, meteor_lite
from .tensor import Parameter, Tensor, backward, no_grad
from .text import Vocabulary, build_vocab, tokenize
from .train import TrainConfig, checkpoint_load, checkpoint_save, fit_loop

__version__ = "0.1.0"

__all__ = [
    "CaptionModel",
    "FeatureSet",
    "FormatError",
    "LSTMCaptioner",
    "ModelConfig",
    "Parameter",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "backward",
    "beam_decode",
    "bleu",
    "build_model",
    "build_vocab",
    "checkpoint_load",
    "checkpoint_save",
    "cider",
    "fit_loop",
    "forward_teacher_forced",
    "generate_synthetic_dataset",
    "greedy_decode",
    "meteor_lite",
    "no_grad",
    "sequence_logprob",
    "tokenize",
    "toy_patch_encode",
]
