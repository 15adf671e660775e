"""Attention-guided spectrogram-sequence genre classifier and analytics."""

__version__ = "0.1.0"

from .audio import (
    AudioClip,
    SpectrogramConfig,
    SpectrogramImage,
    TokenSequence,
    compute_spectrogram,
    resample,
    tokenize,
)
from .model import ForwardOutput, ModelConfig, ModelParams, forward, init_params
from .tensor import Tape, Tensor, backward

__all__ = [
    "AudioClip",
    "SpectrogramConfig",
    "SpectrogramImage",
    "TokenSequence",
    "compute_spectrogram",
    "resample",
    "tokenize",
    "ForwardOutput",
    "ModelConfig",
    "ModelParams",
    "forward",
    "init_params",
    "Tape",
    "Tensor",
    "backward",
]
