"""Heat-map landmark extractors: architectures, checkpoints, training."""

from .architectures import ARCHITECTURES, build_network
from .core import (
    Checkpoint,
    ExtractorSpec,
    GradientError,
    decode_coords,
    decode_landmarks,
    forward,
    forward_batch,
    init_checkpoint,
    input_gradient,
    predict,
    predict_landmarks,
)
from .training import TrainConfig, evaluate_extractor, train_extractor

__all__ = [
    "ARCHITECTURES",
    "Checkpoint",
    "ExtractorSpec",
    "GradientError",
    "TrainConfig",
    "build_network",
    "decode_coords",
    "decode_landmarks",
    "evaluate_extractor",
    "forward",
    "forward_batch",
    "init_checkpoint",
    "input_gradient",
    "predict",
    "predict_landmarks",
    "train_extractor",
]
